use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::params::{BoundParams, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Maximum number of score entries (q * q per image) one attention call may
/// materialize before it refuses the input.
pub const DEFAULT_ATTENTION_BUDGET: usize = 1 << 24;

/// Self-attention over all spatial locations with a learnable blend.
///
/// For input `x` with `p` channels and `q = H * W` locations:
///
/// ```text
/// g = W_g x,  h = W_h x,  z = W_z x          (1x1 projections, no bias)
/// rho[j, i] = softmax_i( g(i) . h(j) )       (each row j sums to 1)
/// out(j) = sum_i rho[j, i] z(i)
/// y = sigma * out + x
/// ```
///
/// `W_g`, `W_h` map `p -> a` with `a = max(1, p / 8)`; `W_z` maps `p -> p`;
/// `sigma` is a scalar initialised to zero, so a fresh block is the identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelfAttention {
    pub prefix: String,
    pub channels: usize,
    pub budget: usize,
}

impl SelfAttention {
    pub fn new(prefix: impl Into<String>, channels: usize) -> Self {
        Self {
            prefix: prefix.into(),
            channels,
            budget: DEFAULT_ATTENTION_BUDGET,
        }
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn key_channels(&self) -> usize {
        (self.channels / 8).max(1)
    }

    pub fn name(&self, leaf: &str) -> String {
        format!("{}.{leaf}", self.prefix)
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut Rng) -> Result<()> {
        let (p, a) = (self.channels, self.key_channels());
        store.insert_kaiming(self.name("wg"), &[a, p, 1, 1], p, rng)?;
        store.insert_kaiming(self.name("wh"), &[a, p, 1, 1], p, rng)?;
        store.insert_kaiming(self.name("wz"), &[p, p, 1, 1], p, rng)?;
        store.insert(self.name("sigma"), Tensor::scalar(T::zero()))
    }

    /// Spatial size check against the score-matrix budget.
    pub fn check_budget(&self, q: usize) -> Result<()> {
        let need = q.saturating_mul(q);
        if need > self.budget {
            return Err(Error::AttentionBudget {
                q,
                need,
                budget: self.budget,
            });
        }
        Ok(())
    }

    fn dims<T: Scalar>(&self, g: &Graph<T>, x: Var) -> Result<[usize; 4]> {
        let s = g.shape(x);
        match *s {
            [n, c, h, w] if c == self.channels => Ok([n, c, h, w]),
            [_, c, _, _] => Err(Error::shape(
                "self_attention",
                "channels",
                format!("block expects {}, input has {c}", self.channels),
            )),
            _ => Err(Error::shape("self_attention", "rank", format!("expected [N,C,H,W], got {s:?}"))),
        }
    }

    /// Attention weights `rho` as `[N, q, q]` (row = output location).
    pub fn attention_map<T: Scalar>(&self, g: &Graph<T>, params: &BoundParams, x: Var) -> Result<Var> {
        let [n, _, h, w] = self.dims(g, x)?;
        let q = h * w;
        self.check_budget(q)?;
        let a = self.key_channels();
        let gx = g.conv2d(x, params.get(&self.name("wg"))?, None, 1, 0)?;
        let hx = g.conv2d(x, params.get(&self.name("wh"))?, None, 1, 0)?;
        let gx = g.reshape(gx, &[n, a, q])?;
        let hx = g.reshape(hx, &[n, a, q])?;
        // scores[j, i] = h(j) . g(i)
        let scores = g.bmm(hx, gx, true, false)?;
        g.softmax_rows(scores)
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<T>, params: &BoundParams, x: Var) -> Result<Var> {
        let [n, p, h, w] = self.dims(g, x)?;
        let q = h * w;
        let rho = self.attention_map(g, params, x)?;
        let z = g.conv2d(x, params.get(&self.name("wz"))?, None, 1, 0)?;
        let z = g.reshape(z, &[n, p, q])?;
        // out[:, j] = sum_i rho[j, i] z[:, i]  ==  z rho^T
        let out = g.bmm(z, rho, false, true)?;
        let out = g.reshape(out, &[n, p, h, w])?;
        let scaled = g.mul_scalar_var(out, params.get(&self.name("sigma"))?)?;
        g.add(scaled, x)
    }
}
