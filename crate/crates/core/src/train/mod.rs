//! Training: per-epoch noise and search, random crops, Adam, and a
//! piecewise-constant learning-rate schedule.

mod adam;
mod config;
mod dataset;
pub mod synthetic;

use std::fmt;
use std::str::FromStr;

pub use adam::{adam_step, AdamState, BETA1, BETA2, EPSILON};
pub use config::TrainFile;
pub use dataset::{eligible_frames, make_epoch_dataset, EpochDataset, Sample};

use crate::error::{Error, Result};
use crate::features::{gather_features, NlFeatures};
use crate::metrics::psnr;
use crate::network::{Network, NetworkConfig};
use crate::noise::NoiseSpec;
use crate::rng::{derive_seed, stream};
use crate::search::{search_frames, SearchConfig, SearchImpl};
use crate::video::Video;
use dataset::{TAG_INIT, TAG_SAMPLE, TAG_VALIDATION};

/// Learning rate per epoch: each `(epoch, rate)` entry applies from that
/// epoch until the next entry.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule(Vec<(usize, f64)>);

impl LrSchedule {
    pub fn new(mut entries: Vec<(usize, f64)>) -> Result<Self> {
        entries.sort_by_key(|e| e.0);
        if entries.first().map(|e| e.0) != Some(0) {
            return Err(Error::Config("learning-rate schedule must start at epoch 0".into()));
        }
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Config("learning-rate schedule repeats an epoch".into()));
        }
        if let Some(&(e, r)) = entries.iter().find(|e| !(e.1.is_finite() && e.1 >= 0.0)) {
            return Err(Error::Config(format!("learning rate at epoch {e} must be finite and >= 0, got {r}")));
        }
        Ok(LrSchedule(entries))
    }

    pub fn constant(rate: f64) -> Result<Self> {
        Self::new(vec![(0, rate)])
    }

    /// 1e-3, dropped to 1e-4 at epoch 12 and 1e-6 at epoch 17.
    pub fn paper() -> Self {
        LrSchedule(vec![(0, 1e-3), (12, 1e-4), (17, 1e-6)])
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.0
    }

    pub fn rate(&self, epoch: usize) -> f64 {
        self.0.iter().rev().find(|e| e.0 <= epoch).map_or(self.0[0].1, |e| e.1)
    }
}

impl FromStr for LrSchedule {
    type Err = Error;

    /// `"0:1e-3,12:1e-4,17:1e-6"`
    fn from_str(s: &str) -> Result<Self> {
        let entries = s
            .split(',')
            .map(|part| {
                let (e, r) = part
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("schedule entry `{part}` is not epoch:rate")))?;
                let e = e.trim().parse().map_err(|_| Error::Config(format!("bad epoch in `{part}`")))?;
                let r = r.trim().parse().map_err(|_| Error::Config(format!("bad rate in `{part}`")))?;
                Ok((e, r))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(entries)
    }
}

impl fmt::Display for LrSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|(e, r)| format!("{e}:{r:e}")).collect();
        f.write_str(&parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub crop_size: usize,
    pub batch_size: usize,
    pub batches_per_epoch: usize,
    pub epochs: usize,
    pub lr_schedule: LrSchedule,
    /// Noise model; the seed field is replaced per epoch and video.
    pub noise: NoiseSpec,
    pub search: SearchConfig,
    pub network: NetworkConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// The published protocol: 44×44 crops, batches of 128, 14000 batches
    /// per epoch, 20 epochs.
    pub fn paper(channels: usize, sigma: f64) -> Self {
        let search = SearchConfig::paper_default();
        TrainConfig {
            crop_size: 44,
            batch_size: 128,
            batches_per_epoch: 14000,
            epochs: 20,
            lr_schedule: LrSchedule::paper(),
            noise: NoiseSpec::awgn(sigma, 0),
            network: NetworkConfig::paper(search.num_neighbors, channels),
            search,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        self.network.validate()?;
        self.noise.validate()?;
        if self.crop_size == 0 || self.batch_size == 0 {
            return Err(Error::Config("crop size and batch size must be positive".into()));
        }
        if self.search.oracle_guide.is_some() {
            return Err(Error::Config("training searches the noisy videos; an oracle guide is not supported".into()));
        }
        if !self.network.no_patch && self.network.num_neighbors() != self.search.num_neighbors {
            return Err(Error::Config(format!(
                "network expects {} matches per pixel, search provides {}",
                self.network.num_neighbors(),
                self.search.num_neighbors
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean batch loss over the epoch.
    pub train_loss: f64,
    /// Mean PSNR on the central frame of the validation videos (NaN when
    /// there are none).
    pub val_psnr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,lr,train_loss,val_psnr\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{:e},{:.6},{:.4}\n", e.epoch, e.lr, e.train_loss, e.val_psnr));
        }
        s
    }
}

pub struct Trained {
    pub network: Network<f32>,
    pub log: TrainLog,
}

/// Trains a fresh network on `videos` and scores it on `validation` after
/// every epoch.
pub fn train(videos: &[Video], validation: &[Video], cfg: &TrainConfig) -> Result<Trained> {
    train_with(videos, validation, cfg, |_| {})
}

/// [`train`], calling `on_epoch` after each epoch.
pub fn train_with(
    videos: &[Video],
    validation: &[Video],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Trained> {
    cfg.validate()?;
    let mut net = Network::<f32>::init(cfg.network, derive_seed(cfg.seed, &[TAG_INIT]))?;
    let mut adam = AdamState::for_network(&net);
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_schedule.rate(epoch);
        let data = make_epoch_dataset(videos, cfg, epoch)?;
        let mut rng = stream(derive_seed(cfg.seed, &[TAG_SAMPLE, epoch as u64]), 0);
        let mut total = 0.0;
        for batch in 0..cfg.batches_per_epoch {
            let (x, target) = data.batch(&mut rng, cfg.batch_size);
            let (loss, grads, cache) = net.loss_and_gradients(&x, &target)?;
            if !loss.is_finite() || !grads.max_abs().is_finite() {
                return Err(Error::NonFinite { epoch, batch, lr });
            }
            net.update_running_stats(&cache);
            adam_step(&mut net, &grads, &mut adam, lr)?;
            total += loss;
        }
        let val_psnr = if validation.is_empty() { f64::NAN } else { validation_psnr(&net, validation, cfg)?.0 };
        let entry = EpochLog { epoch, lr, train_loss: total / cfg.batches_per_epoch.max(1) as f64, val_psnr };
        on_epoch(&entry);
        log.epochs.push(entry);
    }
    Ok(Trained { network: net, log })
}

/// Noisy input for validation video `i`: the same realization every epoch.
pub fn validation_noisy(clean: &Video, i: usize, cfg: &TrainConfig) -> Result<Video> {
    cfg.noise.with_seed(derive_seed(cfg.seed, &[TAG_VALIDATION, i as u64])).apply(clean)
}

/// Denoises frame `t` of `noisy`, clamping the result to [0, 255].
pub fn denoise_frame(net: &Network<f32>, noisy: &Video, t: usize, search: &SearchConfig) -> Result<Video> {
    let features = if net.config().no_patch {
        NlFeatures::from_frames(noisy, t..t + 1)?
    } else {
        gather_features(noisy, &search_frames(noisy, search, t..t + 1, SearchImpl::Fast)?)?
    };
    let residual = net.residual(&features)?;
    let frame = noisy.slice_frames(t..t + 1)?;
    frame.zip_with(&residual, |v, r| (v - r).clamp(0.0, 255.0))
}

/// Mean (denoised, noisy) PSNR over the central frames of `videos`.
pub fn validation_psnr(net: &Network<f32>, videos: &[Video], cfg: &TrainConfig) -> Result<(f64, f64)> {
    let (mut den, mut noi) = (0.0, 0.0);
    for (i, clean) in videos.iter().enumerate() {
        let t = clean.frames() / 2;
        let noisy = validation_noisy(clean, i, cfg)?;
        let out = denoise_frame(net, &noisy, t, &cfg.search)?;
        den += psnr(clean.frame(t), out.frame(0))?;
        noi += psnr(clean.frame(t), noisy.frame(t))?;
    }
    Ok((den / videos.len() as f64, noi / videos.len() as f64))
}
