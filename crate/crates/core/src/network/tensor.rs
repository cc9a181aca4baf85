use crate::error::{Error, Result};

use super::Scalar;

/// A batch of planar feature maps, `n × c × h × w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor { n, c, h, w, data: vec![F::zero(); n * c * h * w] }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<F>) -> Result<Self> {
        if data.len() != n * c * h * w {
            return Err(Error::Shape(format!(
                "tensor {n}x{c}x{h}x{w} needs {} values, got {}",
                n * c * h * w,
                data.len()
            )));
        }
        Ok(Tensor { n, c, h, w, data })
    }

    pub fn from_f32(n: usize, c: usize, h: usize, w: usize, data: &[f32]) -> Result<Self> {
        Self::from_vec(n, c, h, w, data.iter().map(|&v| F::from_f64_lossy(v as f64)).collect())
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|v| v.as_f64() as f32).collect()
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn sample(&self, i: usize) -> &[F] {
        let l = self.sample_len();
        &self.data[i * l..(i + 1) * l]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [F] {
        let l = self.sample_len();
        &mut self.data[i * l..(i + 1) * l]
    }

    pub fn same_shape(&self, other: &Tensor<F>) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Shape(format!("tensor {:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(())
    }
}
