//! Frame-by-frame denoising: search, gather, predict the noise, subtract.

use crate::error::{Error, Result};
use crate::features::{gather_features, nl_pixel_mean, NlFeatures};
use crate::network::Network;
use crate::search::{search_frames, SearchConfig, SearchImpl};
use crate::video::Video;

/// Checks that `net` consumes what `search` produces on `v`.
pub fn check_compatible(net: &Network<f32>, search: &SearchConfig, v: &Video) -> Result<()> {
    let cfg = net.config();
    let provided = if cfg.no_patch { v.channels() } else { search.num_neighbors * v.channels() };
    if provided != cfg.n_channels_in || cfg.out_channels != v.channels() {
        return Err(Error::Config(format!(
            "weights expect {} input channels ({} output), but {} matches of a {}-channel video give {}",
            cfg.n_channels_in,
            cfg.out_channels,
            if cfg.no_patch { 1 } else { search.num_neighbors },
            v.channels(),
            provided
        )));
    }
    Ok(())
}

fn frame_features(noisy: &Video, t: usize, search: &SearchConfig, no_patch: bool) -> Result<NlFeatures> {
    if no_patch {
        NlFeatures::from_frames(noisy, t..t + 1)
    } else {
        gather_features(noisy, &search_frames(noisy, search, t..t + 1, SearchImpl::Fast)?)
    }
}

/// `noisy − residual` for every frame. Values are not clamped.
pub fn denoise_video(net: &Network<f32>, noisy: &Video, search: &SearchConfig) -> Result<Video> {
    denoise_video_with(net, noisy, search, |_| {})
}

/// [`denoise_video`], calling `on_frame(t)` after each frame.
pub fn denoise_video_with(
    net: &Network<f32>,
    noisy: &Video,
    search: &SearchConfig,
    mut on_frame: impl FnMut(usize),
) -> Result<Video> {
    check_compatible(net, search, noisy)?;
    if !net.config().no_patch {
        search.validate_for(noisy)?;
    }
    let mut data = Vec::with_capacity(noisy.data().len());
    for t in 0..noisy.frames() {
        let f = frame_features(noisy, t, search, net.config().no_patch)?;
        let residual = net.residual(&f)?;
        data.extend(noisy.frame(t).iter().zip(residual.data()).map(|(v, r)| v - r));
        on_frame(t);
    }
    Video::new(noisy.frames(), noisy.channels(), noisy.rows(), noisy.cols(), data)
}

/// The Non-Local Pixel Mean of every frame.
pub fn nl_mean_video(noisy: &Video, search: &SearchConfig) -> Result<Video> {
    search.validate_for(noisy)?;
    let mut data = Vec::with_capacity(noisy.data().len());
    for t in 0..noisy.frames() {
        let f = frame_features(noisy, t, search, false)?;
        data.extend(nl_pixel_mean(&f).into_data());
    }
    Video::new(noisy.frames(), noisy.channels(), noisy.rows(), noisy.cols(), data)
}
