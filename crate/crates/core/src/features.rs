//! Non-local feature stacks and the pixel-mean baseline.
//!
//! For each pixel the values of the matched patch centers are stacked as
//! channels in match-major order: all `C` channels of match 0, then of
//! match 1, and so on. In free mode match 0 is the pixel itself, so the
//! first `C` channels reproduce the searched video exactly.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::search::MatchTable;
use crate::video::Video;

#[derive(Debug, Clone, PartialEq)]
pub struct NlFeatures {
    first_frame: usize,
    frames: usize,
    n: usize,
    channels: usize,
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl NlFeatures {
    /// The video itself as a one-match stack (no search).
    pub fn from_video(v: &Video) -> Self {
        NlFeatures {
            first_frame: 0,
            frames: v.frames(),
            n: 1,
            channels: v.channels(),
            rows: v.rows(),
            cols: v.cols(),
            data: v.data().to_vec(),
        }
    }

    /// Frames `range` of the video as a one-match stack, keeping absolute
    /// frame numbering.
    pub fn from_frames(v: &Video, range: std::ops::Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > v.frames() {
            return Err(Error::Shape(format!("frame range {range:?} outside a {}-frame video", v.frames())));
        }
        let len = v.shape().frame_len();
        Ok(NlFeatures {
            first_frame: range.start,
            frames: range.len(),
            n: 1,
            channels: v.channels(),
            rows: v.rows(),
            cols: v.cols(),
            data: v.data()[range.start * len..range.end * len].to_vec(),
        })
    }

    pub fn first_frame(&self) -> usize {
        self.first_frame
    }
    pub fn frames(&self) -> usize {
        self.frames
    }
    pub fn num_matches(&self) -> usize {
        self.n
    }
    /// Channels of the source video.
    pub fn video_channels(&self) -> usize {
        self.channels
    }
    /// Total stacked channels, `n · C`.
    pub fn channels(&self) -> usize {
        self.n * self.channels
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    fn frame_len(&self) -> usize {
        self.channels() * self.rows * self.cols
    }

    /// Stack of frame index `i` (relative to [`first_frame`](Self::first_frame)),
    /// `n·C` planes of `rows × cols`.
    pub fn frame(&self, i: usize) -> &[f32] {
        let len = self.frame_len();
        &self.data[i * len..(i + 1) * len]
    }

    /// Plane `k` of relative frame `i`.
    pub fn plane(&self, i: usize, k: usize) -> &[f32] {
        let plane = self.rows * self.cols;
        &self.frame(i)[k * plane..(k + 1) * plane]
    }
}

/// Gathers, for every pixel of the table's frames, the values of `v` at
/// the matched positions.
pub fn gather_features(v: &Video, m: &MatchTable) -> Result<NlFeatures> {
    if m.video_frames() != v.frames() || m.rows() != v.rows() || m.cols() != v.cols() {
        return Err(Error::Shape(format!(
            "match table covers a {}x{}x{} video but the input is {}",
            m.video_frames(),
            m.rows(),
            m.cols(),
            v.shape()
        )));
    }
    let (n, channels, rows, cols) = (m.num_neighbors(), v.channels(), v.rows(), v.cols());
    let plane = rows * cols;
    let mut f = NlFeatures {
        first_frame: m.frames().start,
        frames: m.frames().len(),
        n,
        channels,
        rows,
        cols,
        data: vec![0.0; m.frames().len() * n * channels * plane],
    };
    let first = f.first_frame;
    let frame_len = f.frame_len();
    f.data.par_chunks_mut(frame_len).enumerate().for_each(|(i, out)| {
        let t = first + i;
        for y in 0..rows {
            for x in 0..cols {
                for (k, hit) in m.matches(t, y, x).iter().enumerate() {
                    let p = hit.pos;
                    for c in 0..channels {
                        out[(k * channels + c) * plane + y * cols + x] =
                            v.get(p.t as usize, c, p.y as usize, p.x as usize);
                    }
                }
            }
        }
    });
    Ok(f)
}

/// Per pixel and channel, the mean of the gathered match values.
pub fn nl_pixel_mean(f: &NlFeatures) -> Video {
    let plane = f.rows * f.cols;
    let mut data = vec![0.0f32; f.frames * f.channels * plane];
    data.par_chunks_mut(f.channels * plane).enumerate().for_each(|(i, out)| {
        let stack = f.frame(i);
        for c in 0..f.channels {
            for p in 0..plane {
                let mut acc = 0.0f64;
                for k in 0..f.n {
                    acc += stack[(k * f.channels + c) * plane + p] as f64;
                }
                out[c * plane + p] = (acc / f.n as f64) as f32;
            }
        }
    });
    Video::new(f.frames, f.channels, f.rows, f.cols, data).expect("feature dimensions are valid")
}
