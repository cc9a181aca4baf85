//! Per-channel batch normalization.
//!
//! Training mode normalizes with the statistics of the current batch (over
//! samples and pixels); inference mode uses running averages updated with
//! momentum after each training step. Statistics accumulate in `f64`.

use super::{Scalar, Tensor};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<F> {
    pub channels: usize,
    pub eps: f64,
    pub gamma: Vec<F>,
    pub beta: Vec<F>,
    pub running_mean: Vec<F>,
    pub running_var: Vec<F>,
}

/// Values kept from a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnCache<F> {
    pub(crate) xhat: Tensor<F>,
    pub(crate) inv_std: Vec<f64>,
    pub(crate) mean: Vec<f64>,
    /// Unbiased batch variance, for the running estimate.
    pub(crate) var_unbiased: Vec<f64>,
}

impl<F: Scalar> BatchNorm<F> {
    pub fn new(channels: usize, eps: f64) -> Self {
        BatchNorm {
            channels,
            eps,
            gamma: vec![F::one(); channels],
            beta: vec![F::zero(); channels],
            running_mean: vec![F::zero(); channels],
            running_var: vec![F::one(); channels],
        }
    }

    fn channel_values<'a>(x: &'a Tensor<F>, c: usize) -> impl Iterator<Item = &'a [F]> + 'a {
        let hw = x.h * x.w;
        (0..x.n).map(move |i| &x.sample(i)[c * hw..(c + 1) * hw])
    }

    pub fn forward_train(&self, x: &Tensor<F>) -> (Tensor<F>, BnCache<F>) {
        assert_eq!(x.c, self.channels, "batch norm channels");
        let hw = x.h * x.w;
        let count = (x.n * hw) as f64;
        let mut y = Tensor::zeros(x.n, x.c, x.h, x.w);
        let mut xhat = Tensor::zeros(x.n, x.c, x.h, x.w);
        let mut inv_std = Vec::with_capacity(self.channels);
        let mut means = Vec::with_capacity(self.channels);
        let mut var_unbiased = Vec::with_capacity(self.channels);
        for c in 0..self.channels {
            let mut sum = 0.0;
            for plane in Self::channel_values(x, c) {
                sum += plane.iter().map(|v| v.as_f64()).sum::<f64>();
            }
            let mean = sum / count;
            let mut sq = 0.0;
            for plane in Self::channel_values(x, c) {
                sq += plane.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>();
            }
            let var = sq / count;
            let istd = 1.0 / (var + self.eps).sqrt();
            let (g, b) = (self.gamma[c].as_f64(), self.beta[c].as_f64());
            for i in 0..x.n {
                let src = &x.sample(i)[c * hw..(c + 1) * hw];
                let off = i * x.sample_len() + c * hw;
                for (j, &v) in src.iter().enumerate() {
                    let h = (v.as_f64() - mean) * istd;
                    xhat.data[off + j] = F::from_f64_lossy(h);
                    y.data[off + j] = F::from_f64_lossy(g * h + b);
                }
            }
            inv_std.push(istd);
            means.push(mean);
            var_unbiased.push(if count > 1.0 { sq / (count - 1.0) } else { var });
        }
        (y, BnCache { xhat, inv_std, mean: means, var_unbiased })
    }

    pub fn forward_infer(&self, x: &Tensor<F>) -> Tensor<F> {
        assert_eq!(x.c, self.channels, "batch norm channels");
        let hw = x.h * x.w;
        let mut y = x.clone();
        for i in 0..x.n {
            let s = y.sample_mut(i);
            for c in 0..self.channels {
                let istd = 1.0 / (self.running_var[c].as_f64() + self.eps).sqrt();
                let scale = F::from_f64_lossy(self.gamma[c].as_f64() * istd);
                let shift = F::from_f64_lossy(self.beta[c].as_f64() - self.gamma[c].as_f64() * istd * self.running_mean[c].as_f64());
                for v in &mut s[c * hw..(c + 1) * hw] {
                    *v = *v * scale + shift;
                }
            }
        }
        y
    }

    /// Returns `(dx, dgamma, dbeta)`.
    pub fn backward(&self, cache: &BnCache<F>, dy: &Tensor<F>) -> (Tensor<F>, Vec<F>, Vec<F>) {
        let hw = dy.h * dy.w;
        let count = (dy.n * hw) as f64;
        let mut dx = Tensor::zeros(dy.n, dy.c, dy.h, dy.w);
        let mut dgamma = Vec::with_capacity(self.channels);
        let mut dbeta = Vec::with_capacity(self.channels);
        for c in 0..self.channels {
            let g = self.gamma[c].as_f64();
            let (mut sum_dy, mut sum_dy_xhat) = (0.0, 0.0);
            for i in 0..dy.n {
                let off = i * dy.sample_len() + c * hw;
                for j in 0..hw {
                    let d = dy.data[off + j].as_f64();
                    sum_dy += d;
                    sum_dy_xhat += d * cache.xhat.data[off + j].as_f64();
                }
            }
            dgamma.push(F::from_f64_lossy(sum_dy_xhat));
            dbeta.push(F::from_f64_lossy(sum_dy));
            // dx = γ·istd/M · (M·dy − Σdy − x̂·Σ(dy·x̂))
            let k = g * cache.inv_std[c] / count;
            for i in 0..dy.n {
                let off = i * dy.sample_len() + c * hw;
                for j in 0..hw {
                    let d = dy.data[off + j].as_f64();
                    let h = cache.xhat.data[off + j].as_f64();
                    dx.data[off + j] = F::from_f64_lossy(k * (count * d - sum_dy - h * sum_dy_xhat));
                }
            }
        }
        (dx, dgamma, dbeta)
    }

    /// Blends the batch statistics of `cache` into the running estimates;
    /// the first update copies them.
    pub fn update_running(&mut self, cache: &BnCache<F>, first: bool, momentum: f64) {
        for c in 0..self.channels {
            let (m, v) = (cache.mean[c], cache.var_unbiased[c]);
            if first {
                self.running_mean[c] = F::from_f64_lossy(m);
                self.running_var[c] = F::from_f64_lossy(v);
            } else {
                let rm = self.running_mean[c].as_f64();
                let rv = self.running_var[c].as_f64();
                self.running_mean[c] = F::from_f64_lossy((1.0 - momentum) * rm + momentum * m);
                self.running_var[c] = F::from_f64_lossy((1.0 - momentum) * rv + momentum * v);
            }
        }
    }
}
