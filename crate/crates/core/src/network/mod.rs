//! The denoising network: a stack of 1×1 convolutions over the non-local
//! feature channels, a trunk of 3×3 conv + batch norm + ReLU layers, and a
//! 3×3 output convolution predicting the noise.
//!
//! The same code runs in `f32` (training, inference) and `f64` (gradient
//! checks) through the [`Scalar`] trait.

mod batchnorm;
mod conv;
mod io;
mod scalar;
mod tensor;

use rayon::prelude::*;

pub use batchnorm::{BatchNorm, BnCache, DEFAULT_EPS, DEFAULT_MOMENTUM};
pub use conv::{Conv, ConvGrads};
pub use io::{load_weights, read_weights, save_weights, write_weights, WEIGHTS_VERSION};
pub use scalar::Scalar;
pub use tensor::Tensor;

use crate::error::{Error, Result};
use crate::features::NlFeatures;
use crate::rng::{stream, Gaussian};
use crate::video::Video;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    /// Input channels, `n·C` (or `C` without the non-local stage).
    pub n_channels_in: usize,
    /// Number of 1×1 conv + ReLU layers.
    pub stage1_depth: usize,
    pub width_stage1: usize,
    pub width_trunk: usize,
    /// Number of 3×3 conv + BN + ReLU layers, not counting the output layer.
    pub trunk_depth: usize,
    pub out_channels: usize,
    /// Single-image baseline: no 1×1 stage, input is the noisy frame only.
    pub no_patch: bool,
    pub bn_eps: f64,
}

impl NetworkConfig {
    /// The published architecture for `n` matches of a `channels`-channel
    /// video: 4 layers of 1×1 convs, a 14 + 1 layer trunk, widths tripled for
    /// color.
    pub fn paper(n: usize, channels: usize) -> Self {
        let scale = if channels == 3 { 3 } else { 1 };
        NetworkConfig {
            n_channels_in: n * channels,
            stage1_depth: 4,
            width_stage1: 32 * scale,
            width_trunk: 64 * scale,
            trunk_depth: 14,
            out_channels: channels,
            no_patch: false,
            bn_eps: DEFAULT_EPS,
        }
    }

    /// The same trunk fed with the noisy frame alone.
    pub fn paper_no_patch(channels: usize) -> Self {
        NetworkConfig { n_channels_in: channels, no_patch: true, ..Self::paper(1, channels) }
    }

    /// A small network with uniform width, for tests and desk-scale runs.
    pub fn tiny(n: usize, channels: usize, stage1_depth: usize, trunk_depth: usize, width: usize) -> Self {
        NetworkConfig {
            n_channels_in: n * channels,
            stage1_depth,
            width_stage1: width,
            width_trunk: width,
            trunk_depth,
            out_channels: channels,
            no_patch: false,
            bn_eps: DEFAULT_EPS,
        }
    }

    pub fn with_no_patch(mut self) -> Self {
        self.no_patch = true;
        self.n_channels_in = self.out_channels;
        self
    }

    /// Number of matches per pixel this network expects.
    pub fn num_neighbors(&self) -> usize {
        if self.no_patch {
            1
        } else {
            self.n_channels_in / self.out_channels.max(1)
        }
    }

    pub fn conv_layers(&self) -> usize {
        let stage1 = if self.no_patch { 0 } else { self.stage1_depth };
        stage1 + self.trunk_depth + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.out_channels == 0 || self.n_channels_in == 0 {
            return bad("network channel counts must be positive".into());
        }
        if self.n_channels_in % self.out_channels != 0 {
            return bad(format!(
                "input channels {} are not a multiple of output channels {}",
                self.n_channels_in, self.out_channels
            ));
        }
        if self.no_patch && self.n_channels_in != self.out_channels {
            return bad(format!(
                "no-patch network takes {} input channels, configured with {}",
                self.out_channels, self.n_channels_in
            ));
        }
        if (!self.no_patch && self.stage1_depth > 0 && self.width_stage1 == 0) || (self.trunk_depth > 0 && self.width_trunk == 0) {
            return bad("layer widths must be positive".into());
        }
        if !(self.bn_eps > 0.0) {
            return bad(format!("batch norm epsilon must be positive, got {}", self.bn_eps));
        }
        Ok(())
    }

    /// The layer sequence, with zero parameters.
    fn layers<F: Scalar>(&self) -> Vec<Layer<F>> {
        let mut layers = Vec::new();
        let mut c = self.n_channels_in;
        if !self.no_patch {
            for _ in 0..self.stage1_depth {
                layers.push(Layer::Conv(Conv::zeros(1, c, self.width_stage1, true)));
                layers.push(Layer::Relu);
                c = self.width_stage1;
            }
        }
        for _ in 0..self.trunk_depth {
            layers.push(Layer::Conv(Conv::zeros(3, c, self.width_trunk, false)));
            layers.push(Layer::BatchNorm(BatchNorm::new(self.width_trunk, self.bn_eps)));
            layers.push(Layer::Relu);
            c = self.width_trunk;
        }
        layers.push(Layer::Conv(Conv::zeros(3, c, self.out_channels, true)));
        layers
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<F> {
    Conv(Conv<F>),
    BatchNorm(BatchNorm<F>),
    Relu,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<F> {
    config: NetworkConfig,
    layers: Vec<Layer<F>>,
    /// Whether BN running statistics have seen a batch yet.
    stats_initialized: bool,
}

/// Activations kept by a training-mode forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<F> {
    /// Input of every layer, then the network output.
    activations: Vec<Tensor<F>>,
    bn: Vec<Option<BnCache<F>>>,
}

impl<F> ForwardCache<F> {
    pub fn output(&self) -> &Tensor<F> {
        self.activations.last().expect("non-empty cache")
    }
}

/// Gradients of every trainable array, in [`Network::trainable_mut`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<F> {
    pub arrays: Vec<Vec<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn scale(&mut self, k: F) {
        for a in &mut self.arrays {
            for v in a {
                *v *= k;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.arrays.iter().flatten().fold(0.0, |m, v| m.max(v.as_f64().abs()))
    }
}

impl<F: Scalar> Network<F> {
    /// All-zero parameters: the residual is identically zero.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        Ok(Network { layers: config.layers(), config, stats_initialized: false })
    }

    /// He-normal weights (variance `2 / (k²·in)`), zero biases, BN γ=1 β=0.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            if let Layer::Conv(conv) = layer {
                let fan_in = (conv.kernel * conv.kernel * conv.in_channels) as f64;
                let std = (2.0 / fan_in).sqrt();
                let mut g = Gaussian::new(stream(seed, i as u64));
                for w in &mut conv.weight {
                    *w = F::from_f64_lossy(std * g.sample());
                }
            }
        }
        Ok(net)
    }

    /// Builds a network from explicit layers, checked against `config`.
    pub fn from_layers(config: NetworkConfig, layers: Vec<Layer<F>>) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        if layers.len() != net.layers.len() {
            return Err(Error::Shape(format!("expected {} layers, got {}", net.layers.len(), layers.len())));
        }
        for (i, (want, got)) in net.layers.iter().zip(&layers).enumerate() {
            let ok = match (want, got) {
                (Layer::Conv(a), Layer::Conv(b)) => {
                    a.kernel == b.kernel
                        && a.in_channels == b.in_channels
                        && a.out_channels == b.out_channels
                        && a.weight.len() == b.weight.len()
                        && a.bias.as_ref().map(Vec::len) == b.bias.as_ref().map(Vec::len)
                }
                (Layer::BatchNorm(a), Layer::BatchNorm(b)) => {
                    a.channels == b.channels
                        && [&b.gamma, &b.beta, &b.running_mean, &b.running_var].iter().all(|v| v.len() == a.channels)
                }
                (Layer::Relu, Layer::Relu) => true,
                _ => false,
            };
            if !ok {
                return Err(Error::Shape(format!("layer {i} does not match the configuration")));
            }
        }
        net.layers = layers;
        Ok(net)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    pub fn stats_initialized(&self) -> bool {
        self.stats_initialized
    }

    pub(crate) fn set_stats_initialized(&mut self, v: bool) {
        self.stats_initialized = v;
    }

    /// Converts the parameters to another scalar type.
    pub fn cast<G: Scalar>(&self) -> Network<G> {
        let v = |a: &[F]| a.iter().map(|x| G::from_f64_lossy(x.as_f64())).collect::<Vec<G>>();
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => Layer::Conv(Conv {
                    kernel: c.kernel,
                    in_channels: c.in_channels,
                    out_channels: c.out_channels,
                    weight: v(&c.weight),
                    bias: c.bias.as_deref().map(v),
                }),
                Layer::BatchNorm(b) => Layer::BatchNorm(BatchNorm {
                    channels: b.channels,
                    eps: b.eps,
                    gamma: v(&b.gamma),
                    beta: v(&b.beta),
                    running_mean: v(&b.running_mean),
                    running_var: v(&b.running_var),
                }),
                Layer::Relu => Layer::Relu,
            })
            .collect();
        Network { config: self.config, layers, stats_initialized: self.stats_initialized }
    }

    fn check_input(&self, x: &Tensor<F>) -> Result<()> {
        if x.c != self.config.n_channels_in {
            return Err(Error::Shape(format!(
                "network expects {} input channels, features have {}",
                self.config.n_channels_in, x.c
            )));
        }
        Ok(())
    }

    /// Inference-mode forward pass: BN uses running statistics.
    pub fn forward(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Conv(c) => c.forward(&cur),
                Layer::BatchNorm(b) => b.forward_infer(&cur),
                Layer::Relu => relu(&cur),
            };
        }
        Ok(cur)
    }

    /// Training-mode forward pass: BN normalizes with batch statistics.
    pub fn forward_train(&self, x: &Tensor<F>) -> Result<ForwardCache<F>> {
        self.check_input(x)?;
        let mut activations = vec![x.clone()];
        let mut bn = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let cur = activations.last().expect("input present");
            let (next, cache) = match layer {
                Layer::Conv(c) => (c.forward(cur), None),
                Layer::BatchNorm(b) => {
                    let (y, cache) = b.forward_train(cur);
                    (y, Some(cache))
                }
                Layer::Relu => (relu(cur), None),
            };
            activations.push(next);
            bn.push(cache);
        }
        Ok(ForwardCache { activations, bn })
    }

    /// Gradients of all trainable parameters given `dout`, the loss gradient
    /// with respect to the network output.
    pub fn backward(&self, cache: &ForwardCache<F>, dout: &Tensor<F>) -> Gradients<F> {
        let mut per_layer: Vec<Vec<Vec<F>>> = vec![Vec::new(); self.layers.len()];
        let mut grad = dout.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.activations[i];
            let need_input = i > 0;
            match layer {
                Layer::Conv(c) => {
                    let g = c.backward(input, &grad, need_input);
                    per_layer[i].push(g.weight);
                    if let Some(b) = g.bias {
                        per_layer[i].push(b);
                    }
                    if let Some(dx) = g.input {
                        grad = dx;
                    }
                }
                Layer::BatchNorm(b) => {
                    let bc = cache.bn[i].as_ref().expect("batch norm cache");
                    let (dx, dgamma, dbeta) = b.backward(bc, &grad);
                    per_layer[i].push(dgamma);
                    per_layer[i].push(dbeta);
                    grad = dx;
                }
                Layer::Relu => {
                    let out = &cache.activations[i + 1];
                    grad.data.par_iter_mut().zip(out.data.par_iter()).for_each(|(g, &o)| {
                        if o <= F::zero() {
                            *g = F::zero();
                        }
                    });
                }
            }
        }
        Gradients { arrays: per_layer.into_iter().flatten().collect() }
    }

    /// Moves BN running statistics toward the batch statistics in `cache`.
    pub fn update_running_stats(&mut self, cache: &ForwardCache<F>) {
        let first = !self.stats_initialized;
        for (layer, bc) in self.layers.iter_mut().zip(&cache.bn) {
            if let (Layer::BatchNorm(b), Some(bc)) = (layer, bc) {
                b.update_running(bc, first, DEFAULT_MOMENTUM);
            }
        }
        self.stats_initialized = true;
    }

    /// Trainable arrays (conv weights and biases, BN γ and β) in a fixed order.
    pub fn trainable_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&mut c.weight);
                    if let Some(b) = c.bias.as_mut() {
                        out.push(b);
                    }
                }
                Layer::BatchNorm(b) => {
                    out.push(&mut b.gamma);
                    out.push(&mut b.beta);
                }
                Layer::Relu => {}
            }
        }
        out
    }

    pub fn trainable(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    out.push(&c.weight);
                    if let Some(b) = c.bias.as_ref() {
                        out.push(b);
                    }
                }
                Layer::BatchNorm(b) => {
                    out.push(&b.gamma);
                    out.push(&b.beta);
                }
                Layer::Relu => {}
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.trainable().iter().map(|a| a.len()).sum()
    }

    /// Every stored array with its name, including BN running statistics.
    pub fn named_arrays(&self) -> Vec<(String, &[F])> {
        let mut out: Vec<(String, &[F])> = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv(c) => {
                    out.push((format!("layer{i}.weight"), &c.weight));
                    if let Some(b) = c.bias.as_ref() {
                        out.push((format!("layer{i}.bias"), b));
                    }
                }
                Layer::BatchNorm(b) => {
                    out.push((format!("layer{i}.gamma"), &b.gamma));
                    out.push((format!("layer{i}.beta"), &b.beta));
                    out.push((format!("layer{i}.running_mean"), &b.running_mean));
                    out.push((format!("layer{i}.running_var"), &b.running_var));
                }
                Layer::Relu => {}
            }
        }
        out
    }

    pub(crate) fn named_arrays_mut(&mut self) -> Vec<(String, &mut Vec<F>)> {
        let mut out: Vec<(String, &mut Vec<F>)> = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Conv(c) => {
                    out.push((format!("layer{i}.weight"), &mut c.weight));
                    if let Some(b) = c.bias.as_mut() {
                        out.push((format!("layer{i}.bias"), b));
                    }
                }
                Layer::BatchNorm(b) => {
                    out.push((format!("layer{i}.gamma"), &mut b.gamma));
                    out.push((format!("layer{i}.beta"), &mut b.beta));
                    out.push((format!("layer{i}.running_mean"), &mut b.running_mean));
                    out.push((format!("layer{i}.running_var"), &mut b.running_var));
                }
                Layer::Relu => {}
            }
        }
        out
    }

    /// MSE between the output for `x` and `target`, with its gradients.
    pub fn loss_and_gradients(&self, x: &Tensor<F>, target: &Tensor<F>) -> Result<(f64, Gradients<F>, ForwardCache<F>)> {
        let cache = self.forward_train(x)?;
        let loss = loss_mse(cache.output(), target)?;
        let dout = loss_mse_grad(cache.output(), target)?;
        let grads = self.backward(&cache, &dout);
        Ok((loss, grads, cache))
    }
}

impl Network<f32> {
    /// Predicted noise for every frame of `f`, one frame per forward pass.
    pub fn residual(&self, f: &NlFeatures) -> Result<Video> {
        let c = self.config.out_channels;
        if f.video_channels() != c {
            return Err(Error::Shape(format!(
                "network outputs {} channels, video has {}",
                c,
                f.video_channels()
            )));
        }
        let (h, w) = (f.rows(), f.cols());
        let mut data = Vec::with_capacity(f.frames() * c * h * w);
        for i in 0..f.frames() {
            let x = features_tensor(f, i, &self.config)?;
            data.extend(self.forward(&x)?.data);
        }
        Video::new(f.frames(), c, h, w, data)
    }
}

/// The network input for frame `i` of `f`. A no-patch network takes the
/// one-match stack of [`NlFeatures::from_video`].
pub fn features_tensor<F: Scalar>(f: &NlFeatures, i: usize, cfg: &NetworkConfig) -> Result<Tensor<F>> {
    if f.channels() != cfg.n_channels_in {
        return Err(Error::Shape(format!(
            "network expects {} input channels, features have {}",
            cfg.n_channels_in,
            f.channels()
        )));
    }
    Tensor::from_f32(1, f.channels(), f.rows(), f.cols(), f.frame(i))
}

fn relu<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    let mut y = x.clone();
    y.data.par_iter_mut().for_each(|v| {
        if *v < F::zero() {
            *v = F::zero();
        }
    });
    y
}

/// Mean over all elements of `(residual − noise)²`, accumulated in `f64`.
pub fn loss_mse<F: Scalar>(residual: &Tensor<F>, noise: &Tensor<F>) -> Result<f64> {
    residual.same_shape(noise)?;
    if residual.is_empty() {
        return Err(Error::Shape("empty tensors".into()));
    }
    let sum: f64 = residual.data.iter().zip(&noise.data).map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2)).sum();
    Ok(sum / residual.len() as f64)
}

/// Gradient of [`loss_mse`] with respect to `residual`.
pub fn loss_mse_grad<F: Scalar>(residual: &Tensor<F>, noise: &Tensor<F>) -> Result<Tensor<F>> {
    residual.same_shape(noise)?;
    let k = 2.0 / residual.len() as f64;
    let data = residual.data.iter().zip(&noise.data).map(|(a, b)| F::from_f64_lossy(k * (a.as_f64() - b.as_f64()))).collect();
    Tensor::from_vec(residual.n, residual.c, residual.h, residual.w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
        let mut g = Gaussian::new(stream(seed, 0));
        Tensor::from_vec(n, c, h, w, (0..n * c * h * w).map(|_| g.sample()).collect()).unwrap()
    }

    #[test]
    fn paper_layer_counts() {
        let gray = NetworkConfig::paper(15, 1);
        assert_eq!(gray.conv_layers(), 4 + 15);
        let color = NetworkConfig::paper(15, 3);
        assert_eq!((color.width_stage1, color.width_trunk), (3 * gray.width_stage1, 3 * gray.width_trunk));
        assert_eq!(color.n_channels_in, 45);
        assert_eq!(NetworkConfig::paper_no_patch(1).conv_layers(), 15);
        let net = Network::<f32>::zeros(gray).unwrap();
        let convs = net.layers().iter().filter(|l| matches!(l, Layer::Conv(_))).count();
        assert_eq!(convs, 19);
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Network::<f64>::zeros(NetworkConfig::tiny(3, 1, 2, 2, 4)).unwrap();
        let y = net.forward(&input(2, 3, 5, 6, 1)).unwrap();
        assert!(y.data.iter().all(|&v| v == 0.0));
        assert_eq!(y.shape(), [2, 1, 5, 6]);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let net = Network::<f64>::zeros(NetworkConfig::tiny(3, 1, 1, 1, 4)).unwrap();
        let err = net.forward(&input(1, 2, 4, 4, 1)).unwrap_err().to_string();
        assert!(err.contains('3') && err.contains('2'), "{err}");
    }

    #[test]
    fn identity_selecting_one_by_one_layer() {
        // single trunk-free network: 1×1 conv picking channel 0, then an
        // output conv with a centered unit tap
        let cfg = NetworkConfig::tiny(3, 1, 1, 0, 1);
        let mut net = Network::<f64>::zeros(cfg).unwrap();
        if let Layer::Conv(c) = &mut net.layers_mut()[0] {
            c.weight[0] = 1.0;
        }
        if let Layer::Conv(c) = &mut net.layers_mut()[2] {
            c.weight[4] = 1.0;
        }
        let mut x = input(1, 3, 4, 5, 2);
        for v in &mut x.data {
            *v = v.abs();
        }
        let y = net.forward(&x).unwrap();
        assert_eq!(y.data, x.sample(0)[..20].to_vec());
    }

    #[test]
    fn loss_closed_forms() {
        let a = input(1, 2, 3, 3, 4);
        assert_eq!(loss_mse(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        for v in &mut b.data {
            *v += 1.0;
        }
        assert!((loss_mse(&b, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!(loss_mse(&a, &input(1, 1, 3, 3, 4)).is_err());
    }

    #[test]
    fn zero_input_and_target_give_zero_gradients() {
        let net = Network::<f64>::init(NetworkConfig::tiny(2, 1, 2, 2, 4), 9).unwrap();
        let x = Tensor::zeros(2, 2, 5, 5);
        let (_, g, _) = net.loss_and_gradients(&x, &Tensor::zeros(2, 1, 5, 5)).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn duplicated_batch_keeps_gradients() {
        let net = Network::<f64>::init(NetworkConfig::tiny(2, 1, 1, 2, 3), 5).unwrap();
        let x = input(1, 2, 6, 6, 7);
        let t = input(1, 1, 6, 6, 8);
        let mut x2 = x.clone();
        x2.n = 2;
        x2.data.extend_from_slice(&x.data);
        let mut t2 = t.clone();
        t2.n = 2;
        t2.data.extend_from_slice(&t.data);
        let (l1, g1, _) = net.loss_and_gradients(&x, &t).unwrap();
        let (l2, g2, _) = net.loss_and_gradients(&x2, &t2).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.arrays.iter().flatten().zip(g2.arrays.iter().flatten()) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-3), "{a} vs {b}");
        }
    }

    #[test]
    fn running_stats_follow_first_batch() {
        let mut net = Network::<f64>::init(NetworkConfig::tiny(2, 1, 1, 1, 3), 3).unwrap();
        let x = input(2, 2, 5, 5, 11);
        let cache = net.forward_train(&x).unwrap();
        net.update_running_stats(&cache);
        assert!(net.stats_initialized());
        for l in net.layers() {
            if let Layer::BatchNorm(b) = l {
                assert!(b.running_var.iter().all(|&v| v > 0.0));
            }
        }
    }
}
