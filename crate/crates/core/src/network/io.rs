//! Weight files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "VNLW"            4 bytes
//! version           u32
//! n_channels_in     u32
//! stage1_depth      u32
//! width_stage1      u32
//! width_trunk       u32
//! trunk_depth       u32
//! out_channels      u32
//! no_patch          u32 (0 or 1)
//! stats_initialized u32 (0 or 1)
//! bn_eps            f64
//! array count       u32
//! per array:        name length u32, name (UTF-8), value count u32, values f32
//! ```
//!
//! Arrays are named `layer{i}.{weight,bias,gamma,beta,running_mean,running_var}`
//! with `i` the position in the layer sequence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Network, NetworkConfig};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"VNLW";
pub const WEIGHTS_VERSION: u32 = 1;

pub fn write_weights(net: &Network<f32>, w: &mut impl Write) -> std::io::Result<()> {
    let cfg = net.config();
    w.write_all(MAGIC)?;
    let header = [
        WEIGHTS_VERSION,
        cfg.n_channels_in as u32,
        cfg.stage1_depth as u32,
        cfg.width_stage1 as u32,
        cfg.width_trunk as u32,
        cfg.trunk_depth as u32,
        cfg.out_channels as u32,
        cfg.no_patch as u32,
        net.stats_initialized() as u32,
    ];
    for v in header {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&cfg.bn_eps.to_le_bytes())?;
    let arrays = net.named_arrays();
    w.write_all(&(arrays.len() as u32).to_le_bytes())?;
    for (name, values) in arrays {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(values.len() as u32).to_le_bytes())?;
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_weights(net: &Network<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_weights(net, &mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn corrupt(m: impl std::fmt::Display) -> Error {
    Error::Corrupt(format!("weight file: {m}"))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| corrupt("truncated"))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_weights(r: &mut impl Read) -> Result<Network<f32>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| corrupt("truncated"))?;
    if &magic != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = read_u32(r)?;
    if version != WEIGHTS_VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let mut h = [0usize; 8];
    for v in h.iter_mut() {
        *v = read_u32(r)? as usize;
    }
    let mut eps = [0u8; 8];
    r.read_exact(&mut eps).map_err(|_| corrupt("truncated"))?;
    let flag = |v: usize, what: &str| match v {
        0 => Ok(false),
        1 => Ok(true),
        _ => Err(corrupt(format!("bad {what} flag {v}"))),
    };
    let cfg = NetworkConfig {
        n_channels_in: h[0],
        stage1_depth: h[1],
        width_stage1: h[2],
        width_trunk: h[3],
        trunk_depth: h[4],
        out_channels: h[5],
        no_patch: flag(h[6], "no_patch")?,
        bn_eps: f64::from_le_bytes(eps),
    };
    let stats = flag(h[7], "statistics")?;
    let mut net = Network::<f32>::zeros(cfg).map_err(corrupt)?;
    net.set_stats_initialized(stats);
    let mut slots = net.named_arrays_mut();
    let count = read_u32(r)? as usize;
    if count != slots.len() {
        return Err(corrupt(format!("expected {} arrays, found {count}", slots.len())));
    }
    for (want, slot) in slots.iter_mut() {
        let len = read_u32(r)? as usize;
        if len > 256 {
            return Err(corrupt("array name too long"));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|_| corrupt("truncated"))?;
        if name != want.as_bytes() {
            return Err(corrupt(format!("expected array {want}, found {}", String::from_utf8_lossy(&name))));
        }
        let n = read_u32(r)? as usize;
        if n != slot.len() {
            return Err(corrupt(format!("array {want} has {n} values, expected {}", slot.len())));
        }
        let mut raw = vec![0u8; 4 * n];
        r.read_exact(&mut raw).map_err(|_| corrupt("truncated"))?;
        for (v, b) in slot.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap());
        }
    }
    drop(slots);
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(corrupt)? != 0 {
        return Err(corrupt("trailing bytes"));
    }
    Ok(net)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Network<f32>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_weights(&mut BufReader::new(file)).map_err(|e| match e {
        Error::Corrupt(m) => Error::Corrupt(format!("{}: {m}", path.display())),
        e => e,
    })
}
