//! PSNR and SSIM with an 8-bit peak of 255.

use std::fmt;

use crate::error::{Error, Result};
use crate::video::Video;

pub const PEAK: f64 = 255.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_len(a: &[f32], b: &[f32]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} samples vs {}", a.len(), b.len())));
    }
    Ok(())
}

pub fn mse(reference: &[f32], test: &[f32]) -> Result<f64> {
    check_len(reference, test)?;
    let sum: f64 = reference
        .iter()
        .zip(test)
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(sum / reference.len() as f64)
}

/// `10·log10(255² / MSE)`; `+inf` when the inputs are identical.
pub fn psnr(reference: &[f32], test: &[f32]) -> Result<f64> {
    let mse = mse(reference, test)?;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / mse).log10())
}

pub fn psnr_frame(reference: &Video, test: &Video, t: usize) -> Result<f64> {
    same_shape(reference, test)?;
    psnr(reference.frame(t), test.frame(t))
}

fn same_shape(a: &Video, b: &Video) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{} vs {}", a.shape(), b.shape())));
    }
    Ok(())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    w.map(|v| v / sum)
}

/// Valid-mode separable filtering of a `rows × cols` plane.
fn filter_valid(src: &[f64], rows: usize, cols: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (or, oc) = (rows - n + 1, cols - n + 1);
    let mut horiz = vec![0.0; rows * oc];
    for y in 0..rows {
        let line = &src[y * cols..(y + 1) * cols];
        for x in 0..oc {
            horiz[y * oc + x] = line[x..x + n].iter().zip(k).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; or * oc];
    for y in 0..or {
        for x in 0..oc {
            out[y * oc + x] = (0..n).map(|i| horiz[(y + i) * oc + x] * k[i]).sum();
        }
    }
    out
}

/// Single-scale SSIM of one plane: 11×11 Gaussian window (σ = 1.5),
/// `K1 = 0.01`, `K2 = 0.03`, `L = 255`, averaged over the window positions
/// that fit entirely inside the plane.
pub fn ssim_plane(reference: &[f32], test: &[f32], rows: usize, cols: usize) -> Result<f64> {
    check_len(reference, test)?;
    if reference.len() != rows * cols {
        return Err(Error::Shape(format!("plane of {} samples is not {rows}x{cols}", reference.len())));
    }
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {rows}x{cols}"
        )));
    }
    let k = gaussian_window();
    let x: Vec<f64> = reference.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = test.iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
    let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter_valid(p, rows, cols, &k));

    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = sxx[i] - ux * ux;
        let vy = syy[i] - uy * uy;
        let cov = sxy[i] - ux * uy;
        total += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
    }
    Ok(total / mx.len() as f64)
}

/// SSIM of frame `t`, averaged over channels.
pub fn ssim_frame(reference: &Video, test: &Video, t: usize) -> Result<f64> {
    same_shape(reference, test)?;
    let mut total = 0.0;
    for c in 0..reference.channels() {
        total += ssim_plane(reference.plane(t, c), test.plane(t, c), reference.rows(), reference.cols())?;
    }
    Ok(total / reference.channels() as f64)
}

/// Per-frame quality of a test sequence against a clean reference.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub psnr: Vec<f64>,
    pub ssim: Vec<f64>,
}

impl MetricReport {
    pub fn compute(reference: &Video, test: &Video) -> Result<Self> {
        same_shape(reference, test)?;
        let frames = 0..reference.frames();
        Ok(MetricReport {
            psnr: frames.clone().map(|t| psnr_frame(reference, test, t)).collect::<Result<_>>()?,
            ssim: frames.map(|t| ssim_frame(reference, test, t)).collect::<Result<_>>()?,
        })
    }

    pub fn mean_psnr(&self) -> f64 {
        self.psnr.iter().sum::<f64>() / self.psnr.len() as f64
    }

    pub fn mean_ssim(&self) -> f64 {
        self.ssim.iter().sum::<f64>() / self.ssim.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,psnr,ssim\n");
        for (t, (p, s)) in self.psnr.iter().zip(&self.ssim).enumerate() {
            out.push_str(&format!("{t},{p:.4},{s:.6}\n"));
        }
        out
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>6}  {:>10}  {:>8}", "frame", "PSNR (dB)", "SSIM")?;
        for (t, (p, s)) in self.psnr.iter().zip(&self.ssim).enumerate() {
            writeln!(f, "{t:>6}  {p:>10.4}  {s:>8.5}")?;
        }
        write!(f, "{:>6}  {:>10.4}  {:>8.5}", "mean", self.mean_psnr(), self.mean_ssim())
    }
}
