//! Flat binary match-table files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic        4 bytes  "VNLM"
//! version      u32      1
//! frames       u32      frames of the searched video
//! first_frame  u32      first reference frame stored
//! num_frames   u32      number of reference frames stored
//! rows, cols   u32, u32
//! n            u32      entries per pixel
//! mode         u32      0 = free, 1 = one-per-frame
//! entries      num_frames·rows·cols·n × (x i32, y i32, t i32, dist f32)
//! ```
//! Entries are ordered by frame, row, column, then rank.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Match, MatchTable, SearchMode};
use crate::error::{Error, Result};
use crate::video::PixelPos;

const MAGIC: &[u8; 4] = b"VNLM";
const VERSION: u32 = 1;

pub fn write_match_table(table: &MatchTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = [
        VERSION,
        table.video_frames as u32,
        table.first_frame as u32,
        table.num_frames as u32,
        table.rows as u32,
        table.cols as u32,
        table.n as u32,
        match table.mode {
            SearchMode::Free => 0,
            SearchMode::OnePerFrame => 1,
        },
    ];
    let mut write = || -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        for v in header {
            w.write_all(&v.to_le_bytes())?;
        }
        for m in &table.entries {
            w.write_all(&m.pos.x.to_le_bytes())?;
            w.write_all(&m.pos.y.to_le_bytes())?;
            w.write_all(&m.pos.t.to_le_bytes())?;
            w.write_all(&m.dist.to_le_bytes())?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

pub fn read_match_table(path: impl AsRef<Path>) -> Result<MatchTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let truncated = |_| Error::Corrupt(format!("{}: truncated match table", path.display()));

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(truncated)?;
    if &magic != MAGIC {
        return Err(Error::Corrupt(format!("{}: not a match table (bad magic)", path.display())));
    }
    let mut word = [0u8; 4];
    let mut header = [0u32; 8];
    for h in header.iter_mut() {
        r.read_exact(&mut word).map_err(truncated)?;
        *h = u32::from_le_bytes(word);
    }
    let [version, video_frames, first_frame, num_frames, rows, cols, n, mode] = header.map(|v| v as usize);
    if version != VERSION as usize {
        return Err(Error::Corrupt(format!("{}: unsupported match table version {version}", path.display())));
    }
    let mode = match mode {
        0 => SearchMode::Free,
        1 => SearchMode::OnePerFrame,
        m => return Err(Error::Corrupt(format!("{}: unknown search mode {m}", path.display()))),
    };
    if first_frame + num_frames > video_frames || n == 0 {
        return Err(Error::Corrupt(format!("{}: inconsistent header", path.display())));
    }
    let count = num_frames * rows * cols * n;
    let mut raw = vec![0u8; count * 16];
    r.read_exact(&mut raw).map_err(truncated)?;
    let field = |b: &[u8], i: usize| <[u8; 4]>::try_from(&b[4 * i..4 * i + 4]).unwrap();
    let entries = raw
        .chunks_exact(16)
        .map(|b| Match {
            pos: PixelPos::new(
                i32::from_le_bytes(field(b, 0)),
                i32::from_le_bytes(field(b, 1)),
                i32::from_le_bytes(field(b, 2)),
            ),
            dist: f32::from_le_bytes(field(b, 3)),
        })
        .collect();
    Ok(MatchTable { video_frames, first_frame, num_frames, rows, cols, n, mode, entries })
}

#[cfg(test)]
mod tests {
    use super::super::{search_fast, SearchConfig};
    use super::*;
    use crate::video::Video;

    #[test]
    fn round_trip() {
        let v = Video::from_fn(3, 1, 6, 5, |t, _, y, x| ((t * 7 + y * 3 + x * 11) % 17) as f32).unwrap();
        let table = search_fast(&v, &SearchConfig::one_per_frame(3, 3, 3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        write_match_table(&table, &path).unwrap();
        assert_eq!(read_match_table(&path).unwrap(), table);
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len, 36 + 3 * 6 * 5 * 3 * 16);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let v = Video::zeros(1, 1, 3, 3).unwrap();
        let table = search_fast(&v, &SearchConfig::new(1, 3, 1, 2, SearchMode::Free)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        write_match_table(&table, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(read_match_table(&path).is_err());
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_match_table(&path).is_err());
    }
}
