//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::network::{Gradients, Network, Scalar};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    /// First moments, one array per trainable array.
    pub m: Vec<Vec<f64>>,
    /// Second moments.
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(sizes: &[usize]) -> Self {
        AdamState {
            beta1: BETA1,
            beta2: BETA2,
            eps: EPSILON,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_network<F: Scalar>(net: &Network<F>) -> Self {
        Self::new(&net.trainable().iter().map(|a| a.len()).collect::<Vec<_>>())
    }

    /// One update of `params` (parallel to `grads`) at learning rate `rate`.
    pub fn step<F: Scalar>(&mut self, params: &mut [&mut [F]], grads: &[Vec<F>], rate: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} arrays, got {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[i].len() || g.len() != self.m[i].len() {
                return Err(Error::Shape(format!("array {i}: optimizer size {} vs parameter {} / gradient {}", self.m[i].len(), p.len(), g.len())));
            }
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powf(self.step as f64);
        let c2 = 1.0 - self.beta2.powf(self.step as f64);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                let gj = g[j].as_f64();
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let update = rate * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
                p[j] = F::from_f64_lossy(p[j].as_f64() - update);
            }
        }
        Ok(())
    }
}

/// Applies one Adam update to every trainable array of `net`.
pub fn adam_step<F: Scalar>(net: &mut Network<F>, grads: &Gradients<F>, state: &mut AdamState, rate: f64) -> Result<()> {
    let mut params = net.trainable_mut();
    state.step(&mut params, &grads.arrays, rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = AdamState::new(&[3]);
        let mut p = vec![1.0f32, -2.0, 0.5];
        let before = p.clone();
        for _ in 0..5 {
            s.step(&mut [&mut p[..]], &[vec![0.0; 3]], 1e-3).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(s.step, 5);
    }

    #[test]
    fn zero_rate_leaves_parameters() {
        let mut s = AdamState::new(&[2]);
        let mut p = vec![1.0f64, 2.0];
        for k in 0..10 {
            s.step(&mut [&mut p[..]], &[vec![k as f64, -3.0]], 0.0).unwrap();
        }
        assert_eq!(p, vec![1.0, 2.0]);
    }

    #[test]
    fn constant_gradient_moves_by_the_rate() {
        // scalar simulation of the closed-form recursion
        let (g, rate) = (0.37f64, 1e-2);
        let mut s = AdamState::new(&[1]);
        let mut p = vec![0.0f64];
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut want = 0.0;
        for t in 1..=200 {
            m = BETA1 * m + (1.0 - BETA1) * g;
            v = BETA2 * v + (1.0 - BETA2) * g * g;
            let mh = m / (1.0 - BETA1.powi(t));
            let vh = v / (1.0 - BETA2.powi(t));
            want -= rate * mh / (vh.sqrt() + EPSILON);
            let before = p[0];
            s.step(&mut [&mut p[..]], &[vec![g]], rate).unwrap();
            assert!((p[0] - want).abs() < 1e-12);
            // with a constant gradient the bias-corrected step is the rate
            assert!(((before - p[0]) - rate).abs() < 1e-6 * rate);
        }
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let mut s = AdamState::new(&[2]);
        let mut p = vec![0.0f32; 3];
        assert!(s.step(&mut [&mut p[..]], &[vec![0.0; 3]], 1e-3).is_err());
    }
}
