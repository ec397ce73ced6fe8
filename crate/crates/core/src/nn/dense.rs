use super::{Conv, SelfAttention, LEAKY_SLOPE};
use crate::autograd::{Graph, Var};
use crate::error::Result;
use crate::params::{BoundParams, ParamStore};
use crate::rng::Rng;
use crate::tensor::Scalar;

/// Densely connected 3x3 conv layers with a 1x1 fusion and a local residual.
///
/// Layer `k` sees the block input concatenated with the outputs of layers
/// `0..k` (`p + k*g` channels) and emits `g` channels. The fusion maps
/// `p + K*g` channels back to `p`, and the block input is added.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseResBlock {
    pub prefix: String,
    pub channels: usize,
    pub growth: usize,
    pub layers: Vec<Conv>,
    pub fuse: Conv,
}

impl DenseResBlock {
    pub fn new(prefix: impl Into<String>, channels: usize, growth: usize, num_layers: usize) -> Self {
        let prefix = prefix.into();
        let layers = (0..num_layers)
            .map(|k| Conv::new(format!("{prefix}.conv{k}"), channels + k * growth, growth, 3, 1))
            .collect();
        let fuse = Conv::new(format!("{prefix}.fuse"), channels + num_layers * growth, channels, 1, 1);
        Self {
            prefix,
            channels,
            growth,
            layers,
            fuse,
        }
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut Rng) -> Result<()> {
        for l in &self.layers {
            l.init(store, rng)?;
        }
        self.fuse.init(store, rng)
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<T>, params: &BoundParams, x: Var) -> Result<Var> {
        let mut features = vec![x];
        for layer in &self.layers {
            let input = if features.len() == 1 { x } else { g.concat_channels(&features)? };
            let y = layer.forward(g, params, input)?;
            features.push(g.leaky_relu(y, LEAKY_SLOPE)?);
        }
        let all = if features.len() == 1 { x } else { g.concat_channels(&features)? };
        let fused = self.fuse.forward(g, params, all)?;
        g.add(fused, x)
    }
}

/// A chain of dense residual blocks, optional self-attention, and a short
/// skip from the module input: `y = attention(blocks(x)) + x`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseResAtt {
    pub prefix: String,
    pub blocks: Vec<DenseResBlock>,
    pub attention: Option<SelfAttention>,
}

impl DenseResAtt {
    pub fn new(
        prefix: impl Into<String>,
        channels: usize,
        num_blocks: usize,
        growth: usize,
        layers_per_block: usize,
        use_attention: bool,
    ) -> Self {
        let prefix = prefix.into();
        let blocks = (0..num_blocks)
            .map(|b| DenseResBlock::new(format!("{prefix}.block{b}"), channels, growth, layers_per_block))
            .collect();
        let attention = use_attention.then(|| SelfAttention::new(format!("{prefix}.att"), channels));
        Self {
            prefix,
            blocks,
            attention,
        }
    }

    pub fn with_attention_budget(mut self, budget: usize) -> Self {
        self.attention = self.attention.map(|a| a.with_budget(budget));
        self
    }

    pub fn init<T: Scalar>(&self, store: &mut ParamStore<T>, rng: &mut Rng) -> Result<()> {
        for b in &self.blocks {
            b.init(store, rng)?;
        }
        if let Some(a) = &self.attention {
            a.init(store, rng)?;
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<T>, params: &BoundParams, x: Var) -> Result<Var> {
        let mut h = x;
        for b in &self.blocks {
            h = b.forward(g, params, h)?;
        }
        if let Some(a) = &self.attention {
            h = a.forward(g, params, h)?;
        }
        g.add(h, x)
    }
}
