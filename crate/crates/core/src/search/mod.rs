//! Spatio-temporal patch search.
//!
//! For every pixel of the requested frames the search keeps the `n` best
//! matching patch positions inside a `w_s × w_s × w_t` window of candidate
//! centers. Two implementations share the same scan order and the same
//! ordered-table update, and produce identical tables:
//!
//! * [`search_naive`] evaluates each patch pair directly (`O(s²)` per pair).
//! * [`search_fast`] shares per-column sums of squared differences along a
//!   row segment and finishes each distance with an `s`-wide horizontal
//!   sum (`O(s)` per pair).
//!
//! Candidate centers are clamped to the frame. In [`SearchMode::Free`]
//! the temporal window is clamped to the sequence as well; in
//! [`SearchMode::OnePerFrame`] frames missing at the sequence ends are
//! replaced by their mirror images so every pixel gets `w_t` entries.

mod fast;
mod io;
mod naive;
mod table;

use std::ops::Range;
use std::sync::Arc;

pub use fast::{FastSearch, PreparedFast, Scratch, DEFAULT_SEGMENT_LEN};
pub use io::{read_match_table, write_match_table};
pub use naive::{patch_distance, NaiveSearch};
pub use table::insert_ordered;

use crate::error::{Error, Result};
use crate::video::{reflect_index, PixelPos, Video};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SearchMode {
    /// The `n` closest patches anywhere in the window, by increasing distance.
    Free,
    /// The closest patch of each frame of the window, by frame offset.
    OnePerFrame,
}

impl std::fmt::Display for SearchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SearchMode::Free => "free",
            SearchMode::OnePerFrame => "one-per-frame",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Side of the square patch (odd).
    pub patch_size: usize,
    /// Side of the square region of candidate centers (odd).
    pub spatial_window: usize,
    /// Number of frames in the window, centered on the reference (odd).
    pub temporal_window: usize,
    pub num_neighbors: usize,
    pub mode: SearchMode,
    /// When set, distances are measured on this video instead of the
    /// searched one. Gathered values still come from the searched video.
    pub oracle_guide: Option<Arc<Video>>,
}

impl SearchConfig {
    pub fn new(
        patch_size: usize,
        spatial_window: usize,
        temporal_window: usize,
        num_neighbors: usize,
        mode: SearchMode,
    ) -> Self {
        SearchConfig { patch_size, spatial_window, temporal_window, num_neighbors, mode, oracle_guide: None }
    }

    /// 41×41 patches, 41×41×15 window, one neighbor per frame.
    pub fn paper_default() -> Self {
        Self::new(41, 41, 15, 15, SearchMode::OnePerFrame)
    }

    /// One match per frame of a `temporal_window`-frame window.
    pub fn one_per_frame(patch_size: usize, spatial_window: usize, temporal_window: usize) -> Self {
        Self::new(patch_size, spatial_window, temporal_window, temporal_window, SearchMode::OnePerFrame)
    }

    pub fn with_guide(mut self, guide: Video) -> Self {
        self.oracle_guide = Some(Arc::new(guide));
        self
    }

    pub fn patch_radius(&self) -> usize {
        self.patch_size / 2
    }
    pub fn spatial_radius(&self) -> usize {
        self.spatial_window / 2
    }
    pub fn temporal_radius(&self) -> usize {
        self.temporal_window / 2
    }

    /// Checks the configuration on its own.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("patch size", self.patch_size),
            ("spatial window", self.spatial_window),
            ("temporal window", self.temporal_window),
        ] {
            if v % 2 == 0 {
                return Err(Error::Config(format!("{name} must be odd, got {v}")));
            }
        }
        if self.num_neighbors == 0 {
            return Err(Error::Config("number of neighbors must be at least 1".into()));
        }
        match self.mode {
            SearchMode::Free => {
                let cap = self.spatial_window * self.spatial_window * self.temporal_window;
                if self.num_neighbors > cap {
                    return Err(Error::Config(format!(
                        "{} neighbors requested but the window holds only {cap} candidates",
                        self.num_neighbors
                    )));
                }
            }
            SearchMode::OnePerFrame => {
                if self.num_neighbors != self.temporal_window {
                    return Err(Error::Config(format!(
                        "one-per-frame search needs neighbors = temporal window ({}), got {}",
                        self.temporal_window, self.num_neighbors
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks the configuration against the video it will search.
    pub fn validate_for(&self, v: &Video) -> Result<()> {
        self.validate()?;
        if let Some(g) = &self.oracle_guide {
            if g.shape() != v.shape() {
                return Err(Error::Shape(format!(
                    "oracle guide is {} but the searched video is {}",
                    g.shape(),
                    v.shape()
                )));
            }
        }
        if self.mode == SearchMode::Free {
            let available = self.min_candidates(v);
            if self.num_neighbors > available {
                return Err(Error::Config(format!(
                    "{} neighbors requested but border pixels of a {}x{}x{} video have only {available} candidates",
                    self.num_neighbors,
                    v.frames(),
                    v.rows(),
                    v.cols()
                )));
            }
        }
        Ok(())
    }

    /// Smallest candidate count of any pixel (reached in the corners).
    fn min_candidates(&self, v: &Video) -> usize {
        let r = self.spatial_radius();
        v.cols().min(r + 1) * v.rows().min(r + 1) * v.frames().min(self.temporal_radius() + 1)
    }

    /// Video the distances are measured on.
    pub(crate) fn distance_source<'a>(&'a self, v: &'a Video) -> &'a Video {
        self.oracle_guide.as_deref().unwrap_or(v)
    }

    /// Target frames scanned for reference frame `t`, as `(slot, frame)`
    /// pairs in increasing temporal offset. Slots index table entries in
    /// one-per-frame mode and are unused in free mode.
    pub(crate) fn temporal_plan(&self, t: usize, frames: usize) -> Vec<(usize, usize)> {
        let rt = self.temporal_radius() as isize;
        (-rt..=rt)
            .enumerate()
            .filter_map(|(slot, dt)| {
                let tt = t as isize + dt;
                match self.mode {
                    SearchMode::Free => (0..frames as isize).contains(&tt).then_some((slot, tt as usize)),
                    SearchMode::OnePerFrame => Some((slot, reflect_index(tt, frames))),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub pos: PixelPos,
    pub dist: f32,
}

/// The search result for a contiguous range of reference frames.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchTable {
    pub(crate) video_frames: usize,
    pub(crate) first_frame: usize,
    pub(crate) num_frames: usize,
    pub(crate) rows: usize,
    pub(crate) cols: usize,
    pub(crate) n: usize,
    pub(crate) mode: SearchMode,
    pub(crate) entries: Vec<Match>,
}

impl MatchTable {
    pub(crate) fn empty(v: &Video, frames: Range<usize>, n: usize, mode: SearchMode) -> Self {
        let blank = Match { pos: PixelPos::default(), dist: 0.0 };
        MatchTable {
            video_frames: v.frames(),
            first_frame: frames.start,
            num_frames: frames.len(),
            rows: v.rows(),
            cols: v.cols(),
            n,
            mode,
            entries: vec![blank; frames.len() * v.rows() * v.cols() * n],
        }
    }

    pub fn frames(&self) -> Range<usize> {
        self.first_frame..self.first_frame + self.num_frames
    }
    pub fn video_frames(&self) -> usize {
        self.video_frames
    }
    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn num_neighbors(&self) -> usize {
        self.n
    }
    pub fn mode(&self) -> SearchMode {
        self.mode
    }
    pub fn entries(&self) -> &[Match] {
        &self.entries
    }

    /// The `n` matches of pixel `(x, y)` in absolute frame `t`.
    pub fn matches(&self, t: usize, y: usize, x: usize) -> &[Match] {
        assert!(self.frames().contains(&t), "frame {t} not in table range {:?}", self.frames());
        let i = (((t - self.first_frame) * self.rows + y) * self.cols + x) * self.n;
        &self.entries[i..i + self.n]
    }

    /// Entries of one reference row, `cols × n` matches.
    pub(crate) fn row_len(&self) -> usize {
        self.cols * self.n
    }
}

/// Which search implementation to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchImpl {
    Naive,
    Fast,
}

impl std::fmt::Display for SearchImpl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SearchImpl::Naive => "naive",
            SearchImpl::Fast => "fast",
        })
    }
}

/// Runs the chosen implementation on reference frames `frames`.
pub fn search_frames(v: &Video, cfg: &SearchConfig, frames: Range<usize>, imp: SearchImpl) -> Result<MatchTable> {
    match imp {
        SearchImpl::Naive => NaiveSearch::new(v, cfg)?.run(frames),
        SearchImpl::Fast => FastSearch::new(v, cfg)?.run(frames),
    }
}

/// Brute-force search over every frame.
pub fn search_naive(v: &Video, cfg: &SearchConfig) -> Result<MatchTable> {
    search_frames(v, cfg, 0..v.frames(), SearchImpl::Naive)
}

/// Column-sum search over every frame.
pub fn search_fast(v: &Video, cfg: &SearchConfig) -> Result<MatchTable> {
    search_frames(v, cfg, 0..v.frames(), SearchImpl::Fast)
}

pub(crate) fn check_frames(v: &Video, frames: &Range<usize>) -> Result<()> {
    if frames.start >= frames.end || frames.end > v.frames() {
        return Err(Error::Config(format!("frame range {frames:?} outside 0..{}", v.frames())));
    }
    Ok(())
}
