//! Planar video tensors and boundary extension.
//!
//! A [`Video`] stores `frames × channels × rows × cols` single-precision
//! samples, frame-major then channel-major, so each (frame, channel) plane
//! is one contiguous row-major slice. Values live in the nominal `[0, 255]`
//! intensity range but are never clamped in memory.

mod pnm;

pub use pnm::{list_frames, read_sequence, read_sequence_dir, write_sequence};

use crate::error::{Error, Result};

/// Reflects a signed index into `0..len` without repeating the edge sample
/// (`-1 → 1`, `len → len - 2`). Far out-of-range indices fold repeatedly.
#[inline]
pub fn reflect_index(i: isize, len: usize) -> usize {
    debug_assert!(len > 0);
    if len == 1 {
        return 0;
    }
    if (i as usize) < len && i >= 0 {
        return i as usize;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m >= len as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// A pixel location inside a video: column `x`, row `y`, frame `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PixelPos {
    pub x: i32,
    pub y: i32,
    pub t: i32,
}

impl PixelPos {
    pub const fn new(x: i32, y: i32, t: i32) -> Self {
        PixelPos { x, y, t }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub frames: usize,
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.frames * self.channels * self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane_len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn frame_len(&self) -> usize {
        self.channels * self.rows * self.cols
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}x{}", self.frames, self.channels, self.rows, self.cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    shape: Shape,
    data: Vec<f32>,
}

impl Video {
    pub fn new(frames: usize, channels: usize, rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        let shape = Shape { frames, channels, rows, cols };
        Self::validate(&shape)?;
        if data.len() != shape.len() {
            return Err(Error::Shape(format!(
                "video {shape} needs {} samples, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Video { shape, data })
    }

    pub fn filled(frames: usize, channels: usize, rows: usize, cols: usize, value: f32) -> Result<Self> {
        let shape = Shape { frames, channels, rows, cols };
        Self::validate(&shape)?;
        Ok(Video { data: vec![value; shape.len()], shape })
    }

    pub fn zeros(frames: usize, channels: usize, rows: usize, cols: usize) -> Result<Self> {
        Self::filled(frames, channels, rows, cols, 0.0)
    }

    /// Builds a video by evaluating `f(t, c, y, x)` at every sample.
    pub fn from_fn(
        frames: usize,
        channels: usize,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let shape = Shape { frames, channels, rows, cols };
        Self::validate(&shape)?;
        let mut data = Vec::with_capacity(shape.len());
        for t in 0..frames {
            for c in 0..channels {
                for y in 0..rows {
                    for x in 0..cols {
                        data.push(f(t, c, y, x));
                    }
                }
            }
        }
        Ok(Video { shape, data })
    }

    fn validate(shape: &Shape) -> Result<()> {
        if shape.frames == 0 || shape.rows == 0 || shape.cols == 0 {
            return Err(Error::Shape(format!("video dimensions must be positive, got {shape}")));
        }
        if shape.channels != 1 && shape.channels != 3 {
            return Err(Error::Shape(format!("video must have 1 or 3 channels, got {}", shape.channels)));
        }
        Ok(())
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }
    pub fn frames(&self) -> usize {
        self.shape.frames
    }
    pub fn channels(&self) -> usize {
        self.shape.channels
    }
    pub fn rows(&self) -> usize {
        self.shape.rows
    }
    pub fn cols(&self) -> usize {
        self.shape.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, t: usize, c: usize, y: usize, x: usize) -> usize {
        ((t * self.shape.channels + c) * self.shape.rows + y) * self.shape.cols + x
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(t, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, c: usize, y: usize, x: usize, value: f32) {
        let i = self.index(t, c, y, x);
        self.data[i] = value;
    }

    /// All channels of frame `t`, channel-major.
    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.shape.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f32] {
        let n = self.shape.frame_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn plane(&self, t: usize, c: usize) -> &[f32] {
        let n = self.shape.plane_len();
        let start = (t * self.shape.channels + c) * n;
        &self.data[start..start + n]
    }

    pub fn plane_mut(&mut self, t: usize, c: usize) -> &mut [f32] {
        let n = self.shape.plane_len();
        let start = (t * self.shape.channels + c) * n;
        &mut self.data[start..start + n]
    }

    /// Value at signed coordinates with symmetric reflection on every axis.
    #[inline]
    pub fn sample_extended(&self, x: isize, y: isize, t: isize, c: usize) -> f32 {
        let x = reflect_index(x, self.shape.cols);
        let y = reflect_index(y, self.shape.rows);
        let t = reflect_index(t, self.shape.frames);
        self.get(t, c, y, x)
    }

    pub fn contains(&self, p: PixelPos) -> bool {
        p.x >= 0
            && p.y >= 0
            && p.t >= 0
            && (p.x as usize) < self.shape.cols
            && (p.y as usize) < self.shape.rows
            && (p.t as usize) < self.shape.frames
    }

    /// Copies frames `range` into a new video.
    pub fn slice_frames(&self, range: std::ops::Range<usize>) -> Result<Video> {
        if range.start >= range.end || range.end > self.shape.frames {
            return Err(Error::Shape(format!(
                "frame range {range:?} outside 0..{}",
                self.shape.frames
            )));
        }
        let n = self.shape.frame_len();
        let data = self.data[range.start * n..range.end * n].to_vec();
        Video::new(range.len(), self.shape.channels, self.shape.rows, self.shape.cols, data)
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Video) -> Result<Video> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Elementwise `self + other`.
    pub fn add(&self, other: &Video) -> Result<Video> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn zip_with(&self, other: &Video, f: impl Fn(f32, f32) -> f32) -> Result<Video> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!("{} vs {}", self.shape, other.shape)));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Video { shape: self.shape, data })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Video {
        Video { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_small_cases() {
        assert_eq!(reflect_index(-1, 3), 1);
        assert_eq!(reflect_index(3, 3), 1);
        assert_eq!(reflect_index(4, 3), 0);
        assert_eq!(reflect_index(-2, 3), 2);
        assert_eq!(reflect_index(-5, 3), 1);
        assert_eq!(reflect_index(17, 1), 0);
        assert_eq!(reflect_index(-17, 1), 0);
    }

    #[test]
    fn constant_video_extends_to_constant() {
        let v = Video::filled(2, 1, 3, 4, 7.0).unwrap();
        for &(x, y, t) in &[(-10, 0, 0), (0, -3, 5), (100, 100, -100), (2, 1, 1)] {
            assert_eq!(v.sample_extended(x, y, t, 0), 7.0);
        }
    }

    #[test]
    fn temporal_mirror() {
        let v = Video::from_fn(3, 1, 1, 1, |t, _, _, _| t as f32 * 10.0).unwrap();
        assert_eq!(v.sample_extended(0, 0, -1, 0), 10.0);
        assert_eq!(v.sample_extended(0, 0, 3, 0), 10.0);
    }

    #[test]
    fn spatial_reflection_of_two_by_two() {
        let v = Video::new(1, 1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(v.sample_extended(-1, 0, 0, 0), 2.0);
        assert_eq!(v.sample_extended(0, -1, 0, 0), 3.0);
        assert_eq!(v.sample_extended(2, 1, 0, 0), 3.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Video::zeros(0, 1, 2, 2).is_err());
        assert!(Video::zeros(1, 2, 2, 2).is_err());
        assert!(Video::new(1, 1, 2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn layout_is_frame_then_channel_major() {
        let v = Video::from_fn(2, 3, 2, 2, |t, c, y, x| (t * 1000 + c * 100 + y * 10 + x) as f32).unwrap();
        assert_eq!(v.plane(1, 2), &[1200.0, 1201.0, 1210.0, 1211.0]);
        assert_eq!(v.frame(1)[4], 1100.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn in_range_matches_direct_indexing(
                t in 1usize..4, h in 1usize..6, w in 1usize..6, seed in any::<u64>()
            ) {
                let v = Video::from_fn(t, 1, h, w, |a, _, b, c| ((a * 31 + b * 7 + c) as u64 ^ seed) as f32).unwrap();
                for tt in 0..t { for y in 0..h { for x in 0..w {
                    prop_assert_eq!(v.sample_extended(x as isize, y as isize, tt as isize, 0), v.get(tt, 0, y, x));
                }}}
            }

            #[test]
            fn reflection_is_symmetric_at_depth_one(len in 1usize..20, k in 0isize..20) {
                prop_assume!((k as usize) < len);
                prop_assert_eq!(reflect_index(-k, len), reflect_index(k, len));
            }

            #[test]
            fn reflection_always_lands_in_range(len in 1usize..50, i in -500isize..500) {
                prop_assert!(reflect_index(i, len) < len);
            }
        }
    }
}
