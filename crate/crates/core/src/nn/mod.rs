//! Network building blocks: self-attention, dense residual blocks and the
//! composite dense-residual-attention module.
//!
//! Blocks own only their configuration and a parameter-name prefix. Weights
//! live in a [`ParamStore`](crate::params::ParamStore) and reach the graph
//! through [`BoundParams`](crate::params::BoundParams).

mod attention;
mod dense;

pub use attention::{SelfAttention, DEFAULT_ATTENTION_BUDGET};
pub use dense::{DenseResAtt, DenseResBlock};

use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::params::{BoundParams, ParamStore};
use crate::rng::Rng;
use crate::tensor::Scalar;

pub const LEAKY_SLOPE: f64 = 0.2;

/// A `k x k` convolution with bias, stored as `{prefix}.weight` / `{prefix}.bias`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conv {
    pub prefix: String,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv {
    pub fn new(prefix: impl Into<String>, c_in: usize, c_out: usize, kernel: usize, stride: usize) -> Self {
        Self {
            prefix: prefix.into(),
            c_in,
            c_out,
            kernel,
            stride,
        }
    }

    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.prefix)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.prefix)
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut Rng) -> Result<()> {
        let k = self.kernel;
        store.insert_kaiming(self.weight_name(), &[self.c_out, self.c_in, k, k], self.c_in * k * k, rng)?;
        store.insert_zeros(self.bias_name(), &[self.c_out])
    }

    pub fn init_zero<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<()> {
        let k = self.kernel;
        store.insert_zeros(self.weight_name(), &[self.c_out, self.c_in, k, k])?;
        store.insert_zeros(self.bias_name(), &[self.c_out])
    }

    /// Same-size padding for odd kernels.
    pub fn forward<T: Scalar>(&self, g: &Graph<T>, params: &BoundParams, x: Var) -> Result<Var> {
        let w = params.get(&self.weight_name())?;
        let b = params.get(&self.bias_name())?;
        g.conv2d(x, w, Some(b), self.stride, self.kernel / 2)
    }
}
