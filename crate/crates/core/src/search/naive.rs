//! Direct patch-pair evaluation. Serves as the reference for the fast path.

use std::ops::Range;

use rayon::prelude::*;

use super::{check_frames, insert_ordered, Match, MatchTable, SearchConfig, SearchMode};
use crate::error::Result;
use crate::video::{PixelPos, Video};

/// Sum of squared differences between the `s × s` patches centered at `p`
/// and `q`, over all channels. Samples outside the video are reflected.
///
/// Accumulation runs column by column (channel, then row, inside each
/// column) in double precision; the fast search sums in the same order so
/// both produce bit-identical distances.
pub fn patch_distance(v: &Video, p: PixelPos, q: PixelPos, s: usize) -> f64 {
    let r = (s / 2) as isize;
    let (px, py, pt) = (p.x as isize, p.y as isize, p.t as isize);
    let (qx, qy, qt) = (q.x as isize, q.y as isize, q.t as isize);
    let mut total = 0.0f64;
    for w in -r..=r {
        let mut col = 0.0f64;
        for c in 0..v.channels() {
            for h in -r..=r {
                let a = v.sample_extended(px + w, py + h, pt, c) as f64;
                let b = v.sample_extended(qx + w, qy + h, qt, c) as f64;
                let d = a - b;
                col += d * d;
            }
        }
        total += col;
    }
    total
}

pub struct NaiveSearch<'a> {
    src: &'a Video,
    cfg: &'a SearchConfig,
    frames: usize,
}

impl<'a> NaiveSearch<'a> {
    pub fn new(v: &'a Video, cfg: &'a SearchConfig) -> Result<Self> {
        cfg.validate_for(v)?;
        Ok(NaiveSearch { src: cfg.distance_source(v), cfg, frames: v.frames() })
    }

    pub fn run(&self, frames: Range<usize>) -> Result<MatchTable> {
        check_frames(self.src, &frames)?;
        let mut table = MatchTable::empty(self.src, frames.clone(), self.cfg.num_neighbors, self.cfg.mode);
        let (rows, cols, n, row_len) = (table.rows, table.cols, table.n, table.row_len());
        let first = frames.start;
        table.entries.par_chunks_mut(row_len).enumerate().for_each(|(i, row)| {
            let (t, y) = (first + i / rows, i % rows);
            for x in 0..cols {
                self.pixel(t, y, x, &mut row[x * n..(x + 1) * n]);
            }
        });
        Ok(table)
    }

    /// Fills `out` with the matches of pixel `(x, y, t)`.
    pub fn pixel(&self, t: usize, y: usize, x: usize, out: &mut [Match]) {
        let cfg = self.cfg;
        let n = cfg.num_neighbors;
        let s = cfg.patch_size;
        let r = cfg.spatial_radius();
        let me = PixelPos::new(x as i32, y as i32, t as i32);
        let ys = y.saturating_sub(r)..(y + r + 1).min(self.src.rows());
        let xs = x.saturating_sub(r)..(x + r + 1).min(self.src.cols());

        match cfg.mode {
            SearchMode::Free => {
                let mut dist = vec![f64::INFINITY; n];
                let mut pos = vec![PixelPos::default(); n];
                dist[0] = 0.0;
                pos[0] = me;
                for (_, tt) in cfg.temporal_plan(t, self.frames) {
                    for yy in ys.clone() {
                        for xx in xs.clone() {
                            let q = PixelPos::new(xx as i32, yy as i32, tt as i32);
                            if q == me {
                                continue;
                            }
                            insert_ordered(&mut dist, &mut pos, q, patch_distance(self.src, me, q, s));
                        }
                    }
                }
                for (o, (d, p)) in out.iter_mut().zip(dist.into_iter().zip(pos)) {
                    *o = Match { pos: p, dist: d as f32 };
                }
            }
            SearchMode::OnePerFrame => {
                let center = cfg.temporal_radius();
                for (slot, tt) in cfg.temporal_plan(t, self.frames) {
                    if slot == center {
                        out[slot] = Match { pos: me, dist: 0.0 };
                        continue;
                    }
                    let mut best = (f64::INFINITY, PixelPos::default());
                    for yy in ys.clone() {
                        for xx in xs.clone() {
                            let q = PixelPos::new(xx as i32, yy as i32, tt as i32);
                            let d = patch_distance(self.src, me, q, s);
                            if d < best.0 {
                                best = (d, q);
                            }
                        }
                    }
                    out[slot] = Match { pos: best.1, dist: best.0 as f32 };
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_to_self_is_zero() {
        let v = Video::from_fn(2, 3, 6, 7, |t, c, y, x| (t * 13 + c * 7 + y * 3 + x) as f32).unwrap();
        let p = PixelPos::new(0, 5, 1);
        assert_eq!(patch_distance(&v, p, p, 5), 0.0);
    }

    #[test]
    fn single_pixel_patches() {
        let v = Video::new(1, 1, 1, 2, vec![3.0, 7.0]).unwrap();
        assert_eq!(patch_distance(&v, PixelPos::new(0, 0, 0), PixelPos::new(1, 0, 0), 1), 16.0);
    }

    #[test]
    fn distance_is_symmetric() {
        let v = Video::from_fn(3, 1, 9, 9, |t, _, y, x| ((t * 31 + y * 17 + x * 5) % 23) as f32).unwrap();
        let (p, q) = (PixelPos::new(1, 2, 0), PixelPos::new(7, 8, 2));
        assert_eq!(patch_distance(&v, p, q, 5), patch_distance(&v, q, p, 5));
    }

    #[test]
    fn constant_video_keeps_scan_order() {
        let v = Video::filled(2, 1, 5, 5, 9.0).unwrap();
        let cfg = SearchConfig::new(3, 3, 3, 4, SearchMode::Free);
        let table = NaiveSearch::new(&v, &cfg).unwrap().run(0..2).unwrap();
        let m = table.matches(0, 2, 2);
        assert!(m.iter().all(|e| e.dist == 0.0));
        // self, then the first three candidates in (t, y, x) order
        let got: Vec<_> = m.iter().map(|e| e.pos).collect();
        assert_eq!(
            got,
            vec![PixelPos::new(2, 2, 0), PixelPos::new(1, 1, 0), PixelPos::new(2, 1, 0), PixelPos::new(3, 1, 0)]
        );
    }
}
