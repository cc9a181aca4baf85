//! Flat `key = value` training configuration files (TOML syntax).
//!
//! ```toml
//! epochs = 20
//! lr_schedule = "0:1e-3,12:1e-4,17:1e-6"
//! noise = "awgn"        # awgn | box | sp
//! sigma = 20
//! mode = "one_per_frame" # or "free"
//! train_dirs = ["clips/a", "clips/b"]
//! val_dirs = ["clips/val"]
//! # or a generated corpus:
//! synthetic_train = 8
//! synthetic_val = 2
//! ```
//!
//! Unset keys take the published protocol values. Relative paths are
//! resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::{synthetic, LrSchedule, TrainConfig};
use crate::error::{Error, Result};
use crate::network::{NetworkConfig, DEFAULT_EPS};
use crate::noise::NoiseSpec;
use crate::rng::derive_seed;
use crate::search::{SearchConfig, SearchMode};
use crate::video::{read_sequence_dir, Video};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainFile {
    pub crop_size: usize,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub epochs: usize,
    pub lr_schedule: String,
    pub seed: u64,

    pub noise: String,
    pub sigma: f64,
    pub fraction: f64,

    pub patch_size: usize,
    pub spatial_window: usize,
    pub temporal_window: usize,
    /// Defaults to the temporal window (one match per frame).
    pub num_neighbors: Option<usize>,
    pub mode: String,

    pub stage1_depth: usize,
    /// Default 32, tripled for color.
    pub width_stage1: Option<usize>,
    /// Default 64, tripled for color.
    pub width_trunk: Option<usize>,
    pub trunk_depth: usize,
    pub no_patch: bool,

    pub train_dirs: Vec<PathBuf>,
    pub val_dirs: Vec<PathBuf>,
    pub synthetic_train: usize,
    pub synthetic_val: usize,
    pub synthetic_frames: usize,
    pub synthetic_rows: usize,
    pub synthetic_cols: usize,
    /// Channel count of synthetic clips.
    pub channels: usize,

    pub weights: PathBuf,
    pub log: PathBuf,
}

impl Default for TrainFile {
    fn default() -> Self {
        TrainFile {
            crop_size: 44,
            batch_size: 128,
            batches_per_epoch: 14000,
            epochs: 20,
            lr_schedule: LrSchedule::paper().to_string(),
            seed: 0,
            noise: "awgn".into(),
            sigma: 20.0,
            fraction: 0.25,
            patch_size: 41,
            spatial_window: 41,
            temporal_window: 15,
            num_neighbors: None,
            mode: "one_per_frame".into(),
            stage1_depth: 4,
            width_stage1: None,
            width_trunk: None,
            trunk_depth: 14,
            no_patch: false,
            train_dirs: Vec::new(),
            val_dirs: Vec::new(),
            synthetic_train: 0,
            synthetic_val: 0,
            synthetic_frames: 16,
            synthetic_rows: 96,
            synthetic_cols: 96,
            channels: 1,
            weights: "weights.vnlw".into(),
            log: "train_log.csv".into(),
        }
    }
}

pub fn parse_mode(s: &str) -> Result<SearchMode> {
    match s {
        "free" => Ok(SearchMode::Free),
        "one_per_frame" | "one-per-frame" => Ok(SearchMode::OnePerFrame),
        _ => Err(Error::Config(format!("unknown search mode `{s}` (expected free or one_per_frame)"))),
    }
}

pub fn parse_noise(kind: &str, sigma: f64, fraction: f64, seed: u64) -> Result<NoiseSpec> {
    let spec = match kind {
        "awgn" => NoiseSpec::awgn(sigma, seed),
        "box" => NoiseSpec::box_correlated(sigma, seed),
        "sp" => NoiseSpec::salt_pepper(fraction, seed),
        _ => return Err(Error::Config(format!("unknown noise `{kind}` (expected awgn, box or sp)"))),
    };
    spec.validate()?;
    Ok(spec)
}

impl TrainFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Reads `path` and resolves its relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut f = Self::parse(&text).map_err(|e| Error::format(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        f.train_dirs.iter_mut().for_each(fix);
        f.val_dirs.iter_mut().for_each(fix);
        fix(&mut f.weights);
        fix(&mut f.log);
        Ok(f)
    }

    /// The training configuration for videos with `channels` channels.
    pub fn train_config(&self, channels: usize) -> Result<TrainConfig> {
        let search = SearchConfig::new(
            self.patch_size,
            self.spatial_window,
            self.temporal_window,
            self.num_neighbors.unwrap_or(self.temporal_window),
            parse_mode(&self.mode)?,
        );
        let scale = if channels == 3 { 3 } else { 1 };
        let mut network = NetworkConfig {
            n_channels_in: search.num_neighbors * channels,
            stage1_depth: self.stage1_depth,
            width_stage1: self.width_stage1.unwrap_or(32 * scale),
            width_trunk: self.width_trunk.unwrap_or(64 * scale),
            trunk_depth: self.trunk_depth,
            out_channels: channels,
            no_patch: false,
            bn_eps: DEFAULT_EPS,
        };
        if self.no_patch {
            network = network.with_no_patch();
        }
        let cfg = TrainConfig {
            crop_size: self.crop_size,
            batch_size: self.batch_size,
            batches_per_epoch: self.batches_per_epoch,
            epochs: self.epochs,
            lr_schedule: self.lr_schedule.parse()?,
            noise: parse_noise(&self.noise, self.sigma, self.fraction, 0)?,
            search,
            network,
            seed: self.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Training and validation clips: sequence directories if given, else
    /// a synthetic corpus.
    pub fn load_videos(&self) -> Result<(Vec<Video>, Vec<Video>)> {
        let read = |dirs: &[PathBuf]| dirs.iter().map(read_sequence_dir).collect::<Result<Vec<_>>>();
        let synth = |count: usize, tag: u64| {
            synthetic::corpus(
                derive_seed(self.seed, &[tag]),
                count,
                self.synthetic_frames,
                self.channels,
                self.synthetic_rows,
                self.synthetic_cols,
            )
        };
        let train = if self.train_dirs.is_empty() { synth(self.synthetic_train, 100)? } else { read(&self.train_dirs)? };
        let val = if self.val_dirs.is_empty() { synth(self.synthetic_val, 200)? } else { read(&self.val_dirs)? };
        if train.is_empty() {
            return Err(Error::Config("no training videos: set train_dirs or synthetic_train".into()));
        }
        Ok((train, val))
    }
}
