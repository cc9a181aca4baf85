//! 1×1 and 3×3 convolutions with zero padding, lowered to matrix products.
//!
//! A 3×3 layer expands its input into a `(cin·9) × pixels` column matrix,
//! one band of rows at a time so large frames never need the whole
//! expansion in memory.

use rayon::prelude::*;

use super::scalar::{gemm, Op};
use super::{Scalar, Tensor};

/// Upper bound on column-matrix elements per band.
#[cfg(not(test))]
const BAND_ELEMS: usize = 1 << 21;
#[cfg(test)]
const BAND_ELEMS: usize = 1 << 10;

/// Output columns `lo..hi` whose source column `x + dx` is inside `0..w`.
#[inline]
fn valid_span(w: usize, dx: isize) -> (usize, usize) {
    let lo = ((-dx).max(0) as usize).min(w);
    let hi = (w as isize - dx).clamp(0, w as isize) as usize;
    (lo, hi.max(lo))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv<F> {
    pub kernel: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// `out × in × k × k`
    pub weight: Vec<F>,
    pub bias: Option<Vec<F>>,
}

impl<F: Scalar> Conv<F> {
    pub fn zeros(kernel: usize, in_channels: usize, out_channels: usize, bias: bool) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        Conv {
            kernel,
            in_channels,
            out_channels,
            weight: vec![F::zero(); out_channels * in_channels * kernel * kernel],
            bias: bias.then(|| vec![F::zero(); out_channels]),
        }
    }

    fn taps(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn band_rows(&self, h: usize, w: usize) -> usize {
        (BAND_ELEMS / (self.taps() * w)).clamp(1, h)
    }

    /// Column matrix for output rows `y0..y0 + rows`: `taps × (rows·w)`.
    fn im2col(&self, x: &[F], h: usize, w: usize, y0: usize, rows: usize, cols: &mut [F]) {
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let width = rows * w;
        for ci in 0..self.in_channels {
            let plane = &x[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * width..][..width];
                    let dx = kx as isize - pad;
                    for yy in 0..rows {
                        let sy = (y0 + yy) as isize + ky as isize - pad;
                        let dst = &mut row[yy * w..(yy + 1) * w];
                        if sy < 0 || sy >= h as isize {
                            dst.fill(F::zero());
                            continue;
                        }
                        let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                        let (lo, hi) = valid_span(w, dx);
                        dst[..lo].fill(F::zero());
                        dst[lo..hi].copy_from_slice(&src[(lo as isize + dx) as usize..(hi as isize + dx) as usize]);
                        dst[hi..].fill(F::zero());
                    }
                }
            }
        }
    }

    /// Scatter-adds a column-matrix gradient back onto the input gradient.
    fn col2im(&self, dcols: &[F], h: usize, w: usize, y0: usize, rows: usize, dx_out: &mut [F]) {
        let k = self.kernel;
        let pad = (k / 2) as isize;
        let width = rows * w;
        for ci in 0..self.in_channels {
            let plane = &mut dx_out[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &dcols[((ci * k + ky) * k + kx) * width..][..width];
                    let dx = kx as isize - pad;
                    for yy in 0..rows {
                        let sy = (y0 + yy) as isize + ky as isize - pad;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let (lo, hi) = valid_span(w, dx);
                        let src = &row[yy * w + lo..yy * w + hi];
                        let dst = &mut plane[sy as usize * w..][(lo as isize + dx) as usize..(hi as isize + dx) as usize];
                        for (d, &s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }

    fn forward_sample(&self, x: &[F], out: &mut [F], h: usize, w: usize, scratch: &mut Vec<F>) {
        let hw = h * w;
        if self.kernel == 1 {
            gemm(self.out_channels, self.in_channels, hw, &self.weight, Op::N, x, Op::N, F::zero(), out);
        } else {
            let band = self.band_rows(h, w);
            let taps = self.taps();
            let mut y0 = 0;
            while y0 < h {
                let rows = band.min(h - y0);
                let width = rows * w;
                scratch.resize(taps * width + self.out_channels * width, F::zero());
                let (cols, tmp) = scratch.split_at_mut(taps * width);
                self.im2col(x, h, w, y0, rows, cols);
                gemm(self.out_channels, taps, width, &self.weight, Op::N, cols, Op::N, F::zero(), tmp);
                for co in 0..self.out_channels {
                    out[co * hw + y0 * w..][..width].copy_from_slice(&tmp[co * width..(co + 1) * width]);
                }
                y0 += rows;
            }
        }
        if let Some(bias) = &self.bias {
            for (plane, &b) in out.chunks_exact_mut(hw).zip(bias) {
                for v in plane {
                    *v += b;
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<F>) -> Tensor<F> {
        assert_eq!(x.c, self.in_channels, "conv input channels");
        let (h, w) = (x.h, x.w);
        let mut out = Tensor::zeros(x.n, self.out_channels, h, w);
        let len = out.sample_len();
        out.data
            .par_chunks_mut(len)
            .enumerate()
            .for_each_init(Vec::new, |scratch, (i, o)| self.forward_sample(x.sample(i), o, h, w, scratch));
        out
    }

    /// Per-sample weight gradient, and the input gradient when `dx` is given.
    fn backward_sample(&self, x: &[F], dy: &[F], h: usize, w: usize, dx: Option<&mut [F]>, scratch: &mut Vec<F>) -> Vec<F> {
        let hw = h * w;
        let taps = self.taps();
        let mut dw = vec![F::zero(); self.out_channels * taps];
        if self.kernel == 1 {
            gemm(self.out_channels, hw, self.in_channels, dy, Op::N, x, Op::T, F::zero(), &mut dw);
            if let Some(dx) = dx {
                gemm(self.in_channels, self.out_channels, hw, &self.weight, Op::T, dy, Op::N, F::zero(), dx);
            }
            return dw;
        }
        let band = self.band_rows(h, w);
        let mut dx = dx;
        let mut y0 = 0;
        while y0 < h {
            let rows = band.min(h - y0);
            let width = rows * w;
            scratch.resize(2 * taps * width + self.out_channels * width, F::zero());
            let (cols, rest) = scratch.split_at_mut(taps * width);
            let (dcols, g) = rest.split_at_mut(taps * width);
            self.im2col(x, h, w, y0, rows, cols);
            for co in 0..self.out_channels {
                g[co * width..(co + 1) * width].copy_from_slice(&dy[co * hw + y0 * w..][..width]);
            }
            gemm(self.out_channels, width, taps, g, Op::N, cols, Op::T, F::one(), &mut dw);
            if let Some(dx) = dx.as_deref_mut() {
                gemm(taps, self.out_channels, width, &self.weight, Op::T, g, Op::N, F::zero(), dcols);
                self.col2im(dcols, h, w, y0, rows, dx);
            }
            y0 += rows;
        }
        dw
    }

    /// Gradients of the weights, the bias, and (if `need_input_grad`) the input.
    pub fn backward(&self, x: &Tensor<F>, dy: &Tensor<F>, need_input_grad: bool) -> ConvGrads<F> {
        let (h, w) = (x.h, x.w);
        let mut dx = need_input_grad.then(|| Tensor::zeros(x.n, x.c, h, w));
        let partial: Vec<Vec<F>> = match dx.as_mut() {
            Some(dx) => {
                let len = dx.sample_len();
                dx.data
                    .par_chunks_mut(len)
                    .enumerate()
                    .map_init(Vec::new, |scratch, (i, dxs)| {
                        self.backward_sample(x.sample(i), dy.sample(i), h, w, Some(dxs), scratch)
                    })
                    .collect()
            }
            None => (0..x.n)
                .into_par_iter()
                .map_init(Vec::new, |scratch, i| self.backward_sample(x.sample(i), dy.sample(i), h, w, None, scratch))
                .collect(),
        };
        // fixed-order reduction keeps results independent of the worker count
        let mut weight = vec![F::zero(); self.weight.len()];
        for p in &partial {
            for (a, &b) in weight.iter_mut().zip(p) {
                *a += b;
            }
        }
        let bias = self.bias.as_ref().map(|_| {
            let hw = h * w;
            (0..self.out_channels)
                .map(|co| {
                    let mut acc = 0.0f64;
                    for i in 0..dy.n {
                        acc += dy.sample(i)[co * hw..(co + 1) * hw].iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                    F::from_f64_lossy(acc)
                })
                .collect()
        });
        ConvGrads { input: dx, weight, bias }
    }
}

pub struct ConvGrads<F> {
    pub input: Option<Tensor<F>>,
    pub weight: Vec<F>,
    pub bias: Option<Vec<F>>,
}
