//! Shared oracles for the integration and acceptance tests.
#![allow(dead_code)]

use vnlnet::network::{loss_mse, Layer, Network, NetworkConfig, Tensor};
use vnlnet::rng::{stream, Gaussian};

pub fn gaussian_tensor(n: usize, c: usize, h: usize, w: usize, seed: u64, scale: f64) -> Tensor<f64> {
    let mut g = Gaussian::new(stream(seed, 0));
    Tensor::from_vec(n, c, h, w, (0..n * c * h * w).map(|_| scale * g.sample()).collect()).unwrap()
}

/// Random weights everywhere, including biases and BN affine terms.
pub fn random_network(cfg: NetworkConfig, seed: u64) -> Network<f64> {
    let mut net = Network::<f64>::init(cfg, seed).unwrap();
    let mut g = Gaussian::new(stream(seed, 1000));
    for layer in net.layers_mut() {
        match layer {
            Layer::Conv(c) => {
                if let Some(b) = c.bias.as_mut() {
                    b.iter_mut().for_each(|v| *v = 0.1 * g.sample());
                }
            }
            Layer::BatchNorm(b) => {
                b.gamma.iter_mut().for_each(|v| *v = 1.0 + 0.2 * g.sample());
                b.beta.iter_mut().for_each(|v| *v = 0.2 * g.sample());
                b.running_mean.iter_mut().for_each(|v| *v = 0.1 * g.sample());
                b.running_var.iter_mut().for_each(|v| *v = 1.0 + 0.3 * g.sample().abs());
            }
            Layer::Relu => {}
        }
    }
    net
}

/// Forward pass written with explicit loops: zero-padded direct
/// convolution, BN from the definition, ReLU.
pub fn direct_forward(net: &Network<f64>, x: &Tensor<f64>, training: bool) -> Tensor<f64> {
    let mut cur = x.clone();
    for layer in net.layers() {
        cur = match layer {
            Layer::Conv(conv) => {
                let k = conv.kernel as isize;
                let p = k / 2;
                let mut out = Tensor::zeros(cur.n, conv.out_channels, cur.h, cur.w);
                for n in 0..cur.n {
                    for co in 0..conv.out_channels {
                        for y in 0..cur.h as isize {
                            for xx in 0..cur.w as isize {
                                let mut acc = conv.bias.as_ref().map_or(0.0, |b| b[co]);
                                for ci in 0..conv.in_channels {
                                    for ky in 0..k {
                                        for kx in 0..k {
                                            let (sy, sx) = (y + ky - p, xx + kx - p);
                                            if sy < 0 || sx < 0 || sy >= cur.h as isize || sx >= cur.w as isize {
                                                continue;
                                            }
                                            let wi = ((co * conv.in_channels + ci) * conv.kernel + ky as usize) * conv.kernel
                                                + kx as usize;
                                            let xi = ((n * cur.c + ci) * cur.h + sy as usize) * cur.w + sx as usize;
                                            acc += conv.weight[wi] * cur.data[xi];
                                        }
                                    }
                                }
                                out.data[((n * conv.out_channels + co) * cur.h + y as usize) * cur.w + xx as usize] = acc;
                            }
                        }
                    }
                }
                out
            }
            Layer::BatchNorm(b) => {
                let hw = cur.h * cur.w;
                let mut out = cur.clone();
                for c in 0..b.channels {
                    let idx: Vec<usize> = (0..cur.n).flat_map(|n| (0..hw).map(move |j| (n * cur.c + c) * hw + j)).collect();
                    let (mean, var) = if training {
                        let m = idx.iter().map(|&i| cur.data[i]).sum::<f64>() / idx.len() as f64;
                        let v = idx.iter().map(|&i| (cur.data[i] - m).powi(2)).sum::<f64>() / idx.len() as f64;
                        (m, v)
                    } else {
                        (b.running_mean[c], b.running_var[c])
                    };
                    for &i in &idx {
                        out.data[i] = b.gamma[c] * (cur.data[i] - mean) / (var + b.eps).sqrt() + b.beta[c];
                    }
                }
                out
            }
            Layer::Relu => {
                let mut out = cur.clone();
                out.data.iter_mut().for_each(|v| *v = v.max(0.0));
                out
            }
        };
    }
    cur
}

/// Sign pattern of every ReLU input in a training-mode pass.
fn relu_pattern(net: &Network<f64>, x: &Tensor<f64>) -> Vec<bool> {
    let mut pattern = Vec::new();
    let mut cur = x.clone();
    for layer in net.layers() {
        cur = match layer {
            Layer::Conv(c) => c.forward(&cur),
            Layer::BatchNorm(b) => b.forward_train(&cur).0,
            Layer::Relu => {
                pattern.extend(cur.data.iter().map(|&v| v > 0.0));
                let mut o = cur.clone();
                o.data.iter_mut().for_each(|v| *v = v.max(0.0));
                o
            }
        };
    }
    pattern
}

#[derive(Debug, Default, Clone, Copy)]
pub struct GradCheck {
    pub checked: usize,
    /// Parameters whose perturbation flips a ReLU, where the loss is not
    /// differentiable at the scale of ε.
    pub skipped_kinks: usize,
    pub max_rel_err: f64,
}

/// Compares every analytic gradient with a central difference of step
/// `eps` (five-point stencil at ±ε, ±2ε). Relative error is `|a − fd| / max(|a|, |fd|, floor)`.
pub fn gradient_check(net: &Network<f64>, x: &Tensor<f64>, target: &Tensor<f64>, eps: f64, floor: f64) -> GradCheck {
    let (_, grads, _) = net.loss_and_gradients(x, target).unwrap();
    let base_pattern = relu_pattern(net, x);
    let mut out = GradCheck::default();
    let sizes: Vec<usize> = net.trainable().iter().map(|a| a.len()).collect();
    for (ai, &len) in sizes.iter().enumerate() {
        for j in 0..len {
            let eval = |delta: f64| {
                let mut p = net.clone();
                p.trainable_mut()[ai][j] += delta;
                let loss = loss_mse(&p.forward_train(x).unwrap().output().clone(), target).unwrap();
                (loss, relu_pattern(&p, x) != base_pattern)
            };
            let (l1p, k1p) = eval(eps);
            let (l1m, k1m) = eval(-eps);
            let (l2p, k2p) = eval(2.0 * eps);
            let (l2m, k2m) = eval(-2.0 * eps);
            if k1p || k1m || k2p || k2m {
                out.skipped_kinks += 1;
                continue;
            }
            // fourth-order central stencil
            let fd = (8.0 * (l1p - l1m) - (l2p - l2m)) / (12.0 * eps);
            let a = grads.arrays[ai][j];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
            out.max_rel_err = out.max_rel_err.max(rel);
            out.checked += 1;
        }
    }
    out
}
