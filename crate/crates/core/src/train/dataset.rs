//! Per-epoch training samples: noisy videos, their match tables, gathered
//! features, and random aligned crops of features and noise.

use std::ops::Range;

use rand::Rng;

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::features::{gather_features, NlFeatures};
use crate::network::Tensor;
use crate::rng::derive_seed;
use crate::search::{search_frames, SearchImpl};
use crate::video::Video;

/// Seed domain tags, so epochs, validation and sampling never share streams.
pub(crate) const TAG_NOISE: u64 = 1;
pub(crate) const TAG_SAMPLE: u64 = 2;
pub(crate) const TAG_VALIDATION: u64 = 3;
pub(crate) const TAG_INIT: u64 = 4;

/// One aligned training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub video: usize,
    pub frame: usize,
    pub y: usize,
    pub x: usize,
    /// `channels × crop × crop` network input.
    pub features: Vec<f32>,
    /// `C × crop × crop` noise target.
    pub noise: Vec<f32>,
}

struct Prepared {
    features: NlFeatures,
    /// Noise realization on the eligible frames, `noisy − clean`.
    noise: Video,
    frames: Range<usize>,
}

/// Everything needed to draw samples for one epoch.
pub struct EpochDataset {
    videos: Vec<Prepared>,
    crop: usize,
    /// Top-left corner range, identical on both axes' lower bound.
    origin_min: usize,
    /// Per video: number of `(frame, y, x)` sites.
    sites: Vec<usize>,
}

/// Frames where the temporal window fits inside the sequence.
pub fn eligible_frames(frames: usize, temporal_window: usize) -> Range<usize> {
    let rt = temporal_window / 2;
    if frames < 2 * rt + 1 {
        return 0..0;
    }
    rt..frames - rt
}

/// Top-left crop corners along an axis of `len` pixels whose crop keeps
/// the full spatial window inside the frame.
fn corner_range(len: usize, crop: usize, radius: usize) -> Range<usize> {
    if len < 2 * radius + crop {
        return 0..0;
    }
    radius..len - radius - crop + 1
}

/// Adds the epoch's noise to every video, searches the eligible frames and
/// gathers features.
pub fn make_epoch_dataset(videos: &[Video], cfg: &TrainConfig, epoch: usize) -> Result<EpochDataset> {
    if videos.is_empty() {
        return Err(Error::Config("no training videos".into()));
    }
    let radius = cfg.search.spatial_radius();
    let mut prepared = Vec::with_capacity(videos.len());
    let mut sites = Vec::with_capacity(videos.len());
    for (i, clean) in videos.iter().enumerate() {
        if clean.channels() != cfg.network.out_channels {
            return Err(Error::Shape(format!(
                "training video {i} has {} channels, network expects {}",
                clean.channels(),
                cfg.network.out_channels
            )));
        }
        let frames = eligible_frames(clean.frames(), cfg.search.temporal_window);
        let ys = corner_range(clean.rows(), cfg.crop_size, radius);
        let xs = corner_range(clean.cols(), cfg.crop_size, radius);
        if frames.is_empty() || ys.is_empty() || xs.is_empty() {
            return Err(Error::Config(format!(
                "training video {i} ({}) has no valid crop positions for crop {} with a {}x{}x{} search window",
                clean.shape(),
                cfg.crop_size,
                cfg.search.spatial_window,
                cfg.search.spatial_window,
                cfg.search.temporal_window
            )));
        }
        let spec = cfg.noise.with_seed(derive_seed(cfg.seed, &[TAG_NOISE, epoch as u64, i as u64]));
        let noisy = spec.apply(clean)?;
        let features = if cfg.network.no_patch {
            NlFeatures::from_frames(&noisy, frames.clone())?
        } else {
            let table = search_frames(&noisy, &cfg.search, frames.clone(), SearchImpl::Fast)?;
            gather_features(&noisy, &table)?
        };
        let noise = noisy.slice_frames(frames.clone())?.sub(&clean.slice_frames(frames.clone())?)?;
        sites.push(frames.len() * ys.len() * xs.len());
        prepared.push(Prepared { features, noise, frames });
    }
    Ok(EpochDataset { videos: prepared, crop: cfg.crop_size, origin_min: radius, sites })
}

impl EpochDataset {
    pub fn num_sites(&self) -> usize {
        self.sites.iter().sum()
    }

    pub fn eligible(&self, video: usize) -> Range<usize> {
        self.videos[video].frames.clone()
    }

    fn span(&self, len: usize) -> usize {
        len - 2 * self.origin_min - self.crop + 1
    }

    /// The crop at a given site.
    pub fn crop(&self, video: usize, frame: usize, y: usize, x: usize) -> Sample {
        let p = &self.videos[video];
        let i = frame - p.frames.start;
        let (rows, cols) = (p.features.rows(), p.features.cols());
        let plane = rows * cols;
        let c = self.crop;
        let copy = |stack: &[f32], channels: usize| {
            let mut out = Vec::with_capacity(channels * c * c);
            for ch in 0..channels {
                for yy in y..y + c {
                    out.extend_from_slice(&stack[ch * plane + yy * cols + x..][..c]);
                }
            }
            out
        };
        Sample {
            video,
            frame,
            y,
            x,
            features: copy(p.features.frame(i), p.features.channels()),
            noise: copy(p.noise.frame(i), p.noise.channels()),
        }
    }

    /// A site drawn uniformly over all eligible (video, frame, position).
    pub fn draw(&self, rng: &mut impl Rng) -> Sample {
        let mut k = rng.gen_range(0..self.num_sites());
        let mut v = 0;
        while k >= self.sites[v] {
            k -= self.sites[v];
            v += 1;
        }
        let p = &self.videos[v];
        let (ny, nx) = (self.span(p.features.rows()), self.span(p.features.cols()));
        let frame = p.frames.start + k / (ny * nx);
        let y = self.origin_min + (k / nx) % ny;
        let x = self.origin_min + k % nx;
        self.crop(v, frame, y, x)
    }

    /// An endless stream of samples.
    pub fn samples<'a, R: Rng + 'a>(&'a self, mut rng: R) -> impl Iterator<Item = Sample> + 'a {
        std::iter::repeat_with(move || self.draw(&mut rng))
    }

    /// A batch of `size` samples as (input, target) tensors.
    pub fn batch(&self, rng: &mut impl Rng, size: usize) -> (Tensor<f32>, Tensor<f32>) {
        let p = &self.videos[0];
        let (cin, cout, c) = (p.features.channels(), p.noise.channels(), self.crop);
        let mut x = Vec::with_capacity(size * cin * c * c);
        let mut t = Vec::with_capacity(size * cout * c * c);
        for _ in 0..size {
            let s = self.draw(rng);
            x.extend(s.features);
            t.extend(s.noise);
        }
        (
            Tensor::from_vec(size, cin, c, c, x).expect("batch shape"),
            Tensor::from_vec(size, cout, c, c, t).expect("batch shape"),
        )
    }
}
