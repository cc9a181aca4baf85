//! Seeded noise synthesis: white Gaussian, box-correlated Gaussian, and
//! uniform-replacement salt-and-pepper.
//!
//! Frame `t` always draws from ChaCha stream `t` of the given seed, so the
//! output is independent of how frames are spread across workers. Noisy
//! values are not clamped.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{stream, Gaussian};
use crate::video::{reflect_index, Video};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Awgn { sigma: f64 },
    BoxCorrelated { sigma: f64 },
    SaltPepperUniform { fraction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn awgn(sigma: f64, seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::Awgn { sigma }, seed }
    }

    pub fn box_correlated(sigma: f64, seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::BoxCorrelated { sigma }, seed }
    }

    pub fn salt_pepper(fraction: f64, seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::SaltPepperUniform { fraction }, seed }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        NoiseSpec { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NoiseKind::Awgn { sigma } | NoiseKind::BoxCorrelated { sigma } => check_sigma(sigma),
            NoiseKind::SaltPepperUniform { fraction } => check_fraction(fraction),
        }
    }

    pub fn apply(&self, u: &Video) -> Result<Video> {
        match self.kind {
            NoiseKind::Awgn { sigma } => add_awgn(u, sigma, self.seed),
            NoiseKind::BoxCorrelated { sigma } => add_box_correlated(u, sigma, self.seed),
            NoiseKind::SaltPepperUniform { fraction } => add_salt_pepper_uniform(u, fraction, self.seed),
        }
    }

    /// Noise level in intensity units, used for reporting.
    pub fn sigma(&self) -> Option<f64> {
        match self.kind {
            NoiseKind::Awgn { sigma } | NoiseKind::BoxCorrelated { sigma } => Some(sigma),
            NoiseKind::SaltPepperUniform { .. } => None,
        }
    }
}

impl std::fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.kind {
            NoiseKind::Awgn { sigma } => write!(f, "noise=awgn\nsigma={sigma}\nseed={}", self.seed),
            NoiseKind::BoxCorrelated { sigma } => write!(f, "noise=box\nsigma={sigma}\nseed={}", self.seed),
            NoiseKind::SaltPepperUniform { fraction } => {
                write!(f, "noise=sp\nfraction={fraction}\nseed={}", self.seed)
            }
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma >= 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("noise sigma must be finite and >= 0, got {sigma}")))
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if (0.0..=1.0).contains(&fraction) {
        Ok(())
    } else {
        Err(Error::Config(format!("salt-and-pepper fraction must lie in [0, 1], got {fraction}")))
    }
}

fn per_frame(u: &Video, f: impl Fn(usize, &[f32], &mut [f32]) + Sync) -> Video {
    let mut out = u.clone();
    let frame_len = u.shape().frame_len();
    out.data_mut()
        .par_chunks_mut(frame_len)
        .enumerate()
        .for_each(|(t, dst)| f(t, u.frame(t), dst));
    out
}

/// `u + r` with `r` i.i.d. `N(0, sigma²)`.
pub fn add_awgn(u: &Video, sigma: f64, seed: u64) -> Result<Video> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(u.clone());
    }
    Ok(per_frame(u, |t, src, dst| {
        let mut g = Gaussian::new(stream(seed, t as u64));
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s as f64 + sigma * g.sample()) as f32;
        }
    }))
}

/// Adds white Gaussian noise of deviation `3·sigma` smoothed by the
/// normalized 3×3 box kernel, giving marginal deviation `sigma` away from
/// the frame border.
pub fn add_box_correlated(u: &Video, sigma: f64, seed: u64) -> Result<Video> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(u.clone());
    }
    let (rows, cols) = (u.rows(), u.cols());
    let plane = rows * cols;
    Ok(per_frame(u, |t, src, dst| {
        let mut g = Gaussian::new(stream(seed, t as u64));
        let mut white = vec![0.0f64; plane];
        for (src, dst) in src.chunks_exact(plane).zip(dst.chunks_exact_mut(plane)) {
            for w in white.iter_mut() {
                *w = 3.0 * sigma * g.sample();
            }
            for y in 0..rows {
                for x in 0..cols {
                    let mut acc = 0.0;
                    for dy in -1isize..=1 {
                        let yy = reflect_index(y as isize + dy, rows);
                        for dx in -1isize..=1 {
                            acc += white[yy * cols + reflect_index(x as isize + dx, cols)];
                        }
                    }
                    dst[y * cols + x] = (src[y * cols + x] as f64 + acc / 9.0) as f32;
                }
            }
        }
    }))
}

/// Replaces each pixel, with probability `fraction`, by uniform draws on
/// `[0, 255]` (one per channel).
pub fn add_salt_pepper_uniform(u: &Video, fraction: f64, seed: u64) -> Result<Video> {
    check_fraction(fraction)?;
    if fraction == 0.0 {
        return Ok(u.clone());
    }
    let plane = u.rows() * u.cols();
    let channels = u.channels();
    Ok(per_frame(u, |t, _src, dst| {
        let mut rng = stream(seed, t as u64);
        for i in 0..plane {
            if rng.gen::<f64>() < fraction {
                for c in 0..channels {
                    dst[c * plane + i] = (rng.gen::<f64>() * 255.0) as f32;
                }
            }
        }
    }))
}
