//! Patch search by shared column sums.
//!
//! For a reference row segment and one search offset `(dt, dy, dx)`, the
//! squared differences between the reference column at `x` and the target
//! column at `x + dx` are summed over the patch height once per column
//! (`D^col`). Every full patch distance in the segment is then an `s`-wide
//! horizontal sum of those column values. A segment of `segment_len`
//! columns yields `segment_len - (s - 1)` distances; consecutive segments
//! overlap by `s - 1` columns.
//!
//! Offsets are visited in `(dt, dy, dx)` order, which for each pixel is the
//! `(t, y, x)` candidate order of the naive search, and each distance goes
//! through the same ordered-table update. Column sums accumulate channel
//! by channel and row by row, and the horizontal sum runs left to right,
//! matching [`patch_distance`](super::patch_distance) operation for
//! operation, so tables agree bit for bit.

use std::ops::Range;

use rayon::prelude::*;

use super::{check_frames, insert_ordered, Match, MatchTable, SearchConfig, SearchMode};
use crate::error::{Error, Result};
use crate::video::{reflect_index, PixelPos, Video};

/// Columns per segment, overlap included.
pub const DEFAULT_SEGMENT_LEN: usize = 128;

/// Frames of the distance source, reflected outward by `pad` samples.
struct PaddedFrames {
    pad: usize,
    channels: usize,
    rows: usize,
    cols: usize,
    frames: Vec<Option<Vec<f32>>>,
}

impl PaddedFrames {
    fn build(src: &Video, pad: usize, needed: &[bool]) -> Self {
        let (rows, cols) = (src.rows() + 2 * pad, src.cols() + 2 * pad);
        let channels = src.channels();
        let build_frame = |t: usize| {
            let mut data = Vec::with_capacity(channels * rows * cols);
            for c in 0..channels {
                let plane = src.plane(t, c);
                for py in 0..rows {
                    let y = reflect_index(py as isize - pad as isize, src.rows());
                    let line = &plane[y * src.cols()..(y + 1) * src.cols()];
                    data.extend((0..cols).map(|px| line[reflect_index(px as isize - pad as isize, src.cols())]));
                }
            }
            data
        };
        let frames = needed
            .par_iter()
            .enumerate()
            .map(|(t, &need)| need.then(|| build_frame(t)))
            .collect();
        PaddedFrames { pad, channels, rows, cols, frames }
    }

    /// `len` samples of row `y`, channel `c`, frame `t`, from column `x`
    /// (unpadded coordinates, may be negative down to `-pad`).
    #[inline]
    fn row(&self, t: usize, c: usize, y: isize, x: isize, len: usize) -> &[f32] {
        let frame = self.frames[t].as_deref().expect("frame was padded");
        let py = (y + self.pad as isize) as usize;
        let px = (x + self.pad as isize) as usize;
        let start = (c * self.rows + py) * self.cols + px;
        &frame[start..start + len]
    }
}

pub struct FastSearch<'a> {
    src: &'a Video,
    cfg: &'a SearchConfig,
    segment_len: usize,
}

impl<'a> FastSearch<'a> {
    pub fn new(v: &'a Video, cfg: &'a SearchConfig) -> Result<Self> {
        cfg.validate_for(v)?;
        Ok(FastSearch { src: cfg.distance_source(v), cfg, segment_len: DEFAULT_SEGMENT_LEN })
    }

    /// Changes the number of columns per segment. Results do not depend on it.
    pub fn with_segment_len(mut self, segment_len: usize) -> Result<Self> {
        if segment_len < self.cfg.patch_size {
            return Err(Error::Config(format!(
                "segment length {segment_len} is shorter than the patch size {}",
                self.cfg.patch_size
            )));
        }
        self.segment_len = segment_len;
        Ok(self)
    }

    /// Pads every frame the reference frames `frames` will touch.
    pub fn prepare(&self, frames: Range<usize>) -> Result<PreparedFast<'a>> {
        check_frames(self.src, &frames)?;
        let mut needed = vec![false; self.src.frames()];
        for t in frames.clone() {
            for (_, tt) in self.cfg.temporal_plan(t, self.src.frames()) {
                needed[tt] = true;
            }
            needed[t] = true;
        }
        Ok(PreparedFast {
            padded: PaddedFrames::build(self.src, self.cfg.patch_radius(), &needed),
            src: self.src,
            cfg: self.cfg,
            frames,
            outputs_per_segment: self.segment_len + 1 - self.cfg.patch_size,
        })
    }

    pub fn run(&self, frames: Range<usize>) -> Result<MatchTable> {
        Ok(self.prepare(frames)?.run())
    }
}

/// A fast search with its padded frames built, ready to process rows.
pub struct PreparedFast<'a> {
    padded: PaddedFrames,
    src: &'a Video,
    cfg: &'a SearchConfig,
    frames: Range<usize>,
    outputs_per_segment: usize,
}

#[derive(Default)]
pub struct Scratch {
    dcol: Vec<f64>,
    boxed: Vec<f64>,
    dist: Vec<f64>,
    pos: Vec<PixelPos>,
}

impl PreparedFast<'_> {
    pub fn run(&self) -> MatchTable {
        let mut table = MatchTable::empty(self.src, self.frames.clone(), self.cfg.num_neighbors, self.cfg.mode);
        let (rows, row_len) = (table.rows, table.row_len());
        let first = self.frames.start;
        table
            .entries
            .par_chunks_mut(row_len)
            .enumerate()
            .for_each_init(Scratch::default, |scratch, (i, out)| {
                self.search_row(first + i / rows, i % rows, out, scratch);
            });
        table
    }

    /// Fills `out` (`cols × n` entries) with the matches of row `y` of frame `t`.
    pub fn search_row(&self, t: usize, y: usize, out: &mut [Match], scratch: &mut Scratch) {
        self.search_span(t, y, 0..self.src.cols(), out, scratch);
    }

    /// Like [`search_row`](Self::search_row) restricted to columns `span`;
    /// `out` holds `span.len() × n` entries.
    pub fn search_span(&self, t: usize, y: usize, span: Range<usize>, out: &mut [Match], scratch: &mut Scratch) {
        assert!(self.frames.contains(&t), "frame {t} was not prepared");
        let n = self.cfg.num_neighbors;
        assert_eq!(out.len(), span.len() * n);
        let mut xs = span.start;
        while xs < span.end {
            let xe = (xs + self.outputs_per_segment).min(span.end);
            let o = (xs - span.start) * n;
            self.segment(t, y, xs, xe, &mut out[o..o + (xe - xs) * n], scratch);
            xs = xe;
        }
    }

    fn segment(&self, t: usize, y: usize, xs: usize, xe: usize, out: &mut [Match], scratch: &mut Scratch) {
        let cfg = self.cfg;
        let n = cfg.num_neighbors;
        let s = cfg.patch_size;
        let r = cfg.patch_radius() as isize;
        let rs = cfg.spatial_radius() as isize;
        let (rows, cols) = (self.src.rows() as isize, self.src.cols() as isize);
        let channels = self.padded.channels;
        let len = xe - xs;
        let free = cfg.mode == SearchMode::Free;
        let center = cfg.temporal_radius();

        let Scratch { dcol, boxed, dist, pos } = scratch;
        dcol.resize(len + s - 1, 0.0);
        boxed.resize(len, 0.0);
        dist.clear();
        dist.resize(len * n, f64::INFINITY);
        pos.clear();
        pos.resize(len * n, PixelPos::default());
        // seed each pixel's table with itself
        let self_slot = if free { 0 } else { center };
        for i in 0..len {
            dist[i * n + self_slot] = 0.0;
            pos[i * n + self_slot] = PixelPos::new((xs + i) as i32, y as i32, t as i32);
        }

        let (xs, xe, y) = (xs as isize, xe as isize, y as isize);
        for (slot, tt) in cfg.temporal_plan(t, self.src.frames()) {
            if !free && slot == center {
                continue;
            }
            for dy in -rs..=rs {
                let yy = y + dy;
                if yy < 0 || yy >= rows {
                    continue;
                }
                for dx in -rs..=rs {
                    if free && tt == t && dy == 0 && dx == 0 {
                        continue;
                    }
                    // outputs whose candidate center x + dx is inside the frame
                    let lo = xs.max(-dx);
                    let hi = xe.min(cols - dx);
                    if lo >= hi {
                        continue;
                    }
                    let m = (hi - lo) as usize + s - 1;
                    let dcol = &mut dcol[..m];
                    dcol.fill(0.0);
                    for c in 0..channels {
                        for h in -r..=r {
                            let a = self.padded.row(t, c, y + h, lo - r, m);
                            let b = self.padded.row(tt, c, yy + h, lo - r + dx, m);
                            for ((acc, &a), &b) in dcol.iter_mut().zip(a).zip(b) {
                                let d = a as f64 - b as f64;
                                *acc += d * d;
                            }
                        }
                    }
                    // horizontal box sum, column offsets outermost so every
                    // output still adds its columns left to right
                    let outputs = (hi - lo) as usize;
                    let boxed = &mut boxed[..outputs];
                    boxed.fill(0.0);
                    for w in 0..s {
                        for (acc, &v) in boxed.iter_mut().zip(&dcol[w..w + outputs]) {
                            *acc += v;
                        }
                    }
                    for (x, &d) in (lo..hi).zip(boxed.iter()) {
                        let i = (x - xs) as usize * n;
                        let q = PixelPos::new((x + dx) as i32, yy as i32, tt as i32);
                        if free {
                            insert_ordered(&mut dist[i..i + n], &mut pos[i..i + n], q, d);
                        } else if d < dist[i + slot] {
                            dist[i + slot] = d;
                            pos[i + slot] = q;
                        }
                    }
                }
            }
        }

        for (o, (&d, &p)) in out.iter_mut().zip(dist.iter().zip(pos.iter())) {
            *o = Match { pos: p, dist: d as f32 };
        }
    }
}
