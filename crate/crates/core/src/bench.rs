//! Per-pixel timing of the naive and fast searches over a grid of patch
//! sizes.
//!
//! The naive search is far too slow to run on whole frames at large patch
//! sizes, so both implementations are timed on a subset of the central
//! frame: the fast one on a band of full rows (its natural unit of work),
//! the naive one on a few pixels spread over that band. Times are reported
//! per pixel.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::search::{FastSearch, Match, NaiveSearch, Scratch, SearchConfig, SearchImpl, SearchMode};
use crate::video::Video;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchGrid {
    pub patch_sizes: Vec<usize>,
    pub spatial_window: usize,
    pub temporal_window: usize,
    pub mode: SearchMode,
    pub repetitions: usize,
    /// Rows of the central frame timed for the fast search.
    pub fast_rows: usize,
    /// Pixels timed for the naive search.
    pub naive_pixels: usize,
    pub implementations: Vec<SearchImpl>,
}

impl Default for BenchGrid {
    fn default() -> Self {
        BenchGrid {
            patch_sizes: vec![9, 21, 41],
            spatial_window: 41,
            temporal_window: 15,
            mode: SearchMode::OnePerFrame,
            repetitions: 1,
            fast_rows: 8,
            naive_pixels: 4,
            implementations: vec![SearchImpl::Fast, SearchImpl::Naive],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchPoint {
    pub implementation: SearchImpl,
    pub patch_size: usize,
    pub pixels: usize,
    /// Fastest of the repetitions.
    pub seconds_per_pixel: f64,
}

fn search_config(grid: &BenchGrid, s: usize) -> SearchConfig {
    let n = match grid.mode {
        SearchMode::OnePerFrame => grid.temporal_window,
        SearchMode::Free => grid.temporal_window.min(15),
    };
    SearchConfig::new(s, grid.spatial_window, grid.temporal_window, n, grid.mode)
}

fn time_fast(v: &Video, cfg: &SearchConfig, rows: std::ops::Range<usize>) -> Result<f64> {
    let t = v.frames() / 2;
    let start = Instant::now();
    let search = FastSearch::new(v, cfg)?;
    let prepared = search.prepare(t..t + 1)?;
    let mut out = vec![Match { pos: Default::default(), dist: 0.0 }; v.cols() * cfg.num_neighbors];
    let mut scratch = Scratch::default();
    for y in rows {
        prepared.search_row(t, y, &mut out, &mut scratch);
    }
    std::hint::black_box(&out);
    Ok(start.elapsed().as_secs_f64())
}

fn time_naive(v: &Video, cfg: &SearchConfig, pixels: &[(usize, usize)]) -> Result<f64> {
    let t = v.frames() / 2;
    let start = Instant::now();
    let search = NaiveSearch::new(v, cfg)?;
    let mut out = vec![Match { pos: Default::default(), dist: 0.0 }; cfg.num_neighbors];
    for &(y, x) in pixels {
        search.pixel(t, y, x, &mut out);
    }
    std::hint::black_box(&out);
    Ok(start.elapsed().as_secs_f64())
}

/// Times both implementations at every patch size of `grid` on `v`.
pub fn run(v: &Video, grid: &BenchGrid) -> Result<Vec<BenchPoint>> {
    run_with(v, grid, |_| {})
}

/// [`run`], calling `on_point` as each measurement completes.
pub fn run_with(v: &Video, grid: &BenchGrid, mut on_point: impl FnMut(&BenchPoint)) -> Result<Vec<BenchPoint>> {
    if grid.repetitions == 0 || grid.fast_rows == 0 || grid.naive_pixels == 0 || grid.patch_sizes.is_empty() || grid.implementations.is_empty() {
        return Err(Error::Config("benchmark grid needs repetitions, rows, pixels, patch sizes and implementations".into()));
    }
    let rows = grid.fast_rows.min(v.rows());
    let y0 = (v.rows() - rows) / 2;
    let band = y0..y0 + rows;
    let pixels: Vec<(usize, usize)> = (0..grid.naive_pixels)
        .map(|i| (y0 + i % rows, (v.cols() * (2 * i + 1)) / (2 * grid.naive_pixels)))
        .collect();
    let mut points = Vec::new();
    for &s in &grid.patch_sizes {
        let cfg = search_config(grid, s);
        cfg.validate_for(v)?;
        for &imp in &grid.implementations {
            let (count, mut best) = match imp {
                SearchImpl::Fast => (rows * v.cols(), f64::INFINITY),
                SearchImpl::Naive => (pixels.len(), f64::INFINITY),
            };
            for _ in 0..grid.repetitions {
                let secs = match imp {
                    SearchImpl::Fast => time_fast(v, &cfg, band.clone())?,
                    SearchImpl::Naive => time_naive(v, &cfg, &pixels)?,
                };
                best = best.min(secs);
            }
            let point = BenchPoint { implementation: imp, patch_size: s, pixels: count, seconds_per_pixel: best / count as f64 };
            on_point(&point);
            points.push(point);
        }
    }
    Ok(points)
}

/// Least-squares slope of `ln(time)` against `ln(s)` for one implementation.
pub fn loglog_slope(points: &[BenchPoint], imp: SearchImpl) -> Option<f64> {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.implementation == imp)
        .map(|p| ((p.patch_size as f64).ln(), p.seconds_per_pixel.ln()))
        .collect();
    slope(&xy)
}

pub fn slope(xy: &[(f64, f64)]) -> Option<f64> {
    if xy.len() < 2 {
        return None;
    }
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx)
}

/// Naive over fast time per pixel at patch size `s`.
pub fn speedup(points: &[BenchPoint], s: usize) -> Option<f64> {
    let get = |imp| points.iter().find(|p| p.implementation == imp && p.patch_size == s).map(|p| p.seconds_per_pixel);
    Some(get(SearchImpl::Naive)? / get(SearchImpl::Fast)?)
}

pub fn to_csv(points: &[BenchPoint]) -> String {
    let mut s = String::from("implementation,patch_size,pixels,seconds_per_pixel\n");
    for p in points {
        s.push_str(&format!("{},{},{},{:e}\n", p.implementation, p.patch_size, p.pixels, p.seconds_per_pixel));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xy: Vec<(f64, f64)> = [9.0f64, 21.0, 41.0].iter().map(|&s| (s.ln(), (3.0 * s * s).ln())).collect();
        assert!((slope(&xy).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(slope(&xy[..1]), None);
    }

    #[test]
    fn single_point_grid() {
        let v = Video::from_fn(3, 1, 12, 12, |t, _, y, x| ((t + y * x) % 7) as f32).unwrap();
        let mut grid = BenchGrid { patch_sizes: vec![3], spatial_window: 5, temporal_window: 3, ..BenchGrid::default() };
        let points = run(&v, &grid).unwrap();
        assert_eq!(points.len(), 2);
        assert!(points.iter().all(|p| p.seconds_per_pixel > 0.0));
        grid.implementations = vec![SearchImpl::Fast];
        let points = run(&v, &grid).unwrap();
        assert_eq!(to_csv(&points).lines().count(), 2);
    }
}
