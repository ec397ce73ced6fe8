//! The de-quantizing generator and its discriminator.
//!
//! Parameter names are stable and double as checkpoint keys:
//!
//! ```text
//! G: head | enc.{l} | mod{i}.block{b}.conv{k} | mod{i}.block{b}.fuse | mod{i}.att.* | dec.{l} | tail
//! D: stem | down.{s} | att.{s}.* | fc1 | fc2
//! ```

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Conv, DenseResAtt, SelfAttention, DEFAULT_ATTENTION_BUDGET, LEAKY_SLOPE};
use crate::params::{BoundParams, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub base_channels: usize,
    pub num_downscales: usize,
    pub num_modules: usize,
    pub blocks_per_module: usize,
    pub layers_per_block: usize,
    pub growth_rate: usize,
    pub output_channels: usize,
    pub use_attention: bool,
    pub attention_budget: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            base_channels: 64,
            num_downscales: 2,
            num_modules: 4,
            blocks_per_module: 2,
            layers_per_block: 4,
            growth_rate: 32,
            output_channels: 3,
            use_attention: true,
            attention_budget: DEFAULT_ATTENTION_BUDGET,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("generator: {m}")));
        if self.base_channels == 0 || self.growth_rate == 0 || self.layers_per_block == 0 {
            return bad("base_channels, growth_rate and layers_per_block must be positive");
        }
        if self.num_modules == 0 {
            return bad("num_modules must be at least 1");
        }
        if self.blocks_per_module == 0 {
            return bad("blocks_per_module must be at least 1");
        }
        if self.output_channels != 3 {
            return bad("output_channels must be 3");
        }
        if self.num_downscales > 6 {
            return bad("num_downscales above 6 is not supported");
        }
        Ok(())
    }

    /// Spatial factor between input and bottleneck.
    pub fn scale(&self) -> usize {
        1 << self.num_downscales
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.base_channels << self.num_downscales
    }

    /// Checks that an `h x w` input reaches a bottleneck of at least 4x4.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let s = self.scale();
        if h % s != 0 || w % s != 0 {
            return Err(Error::shape(
                "generator",
                "H/W",
                format!("{h}x{w} is not divisible by {s}"),
            ));
        }
        if h / s < 4 || w / s < 4 {
            return Err(Error::shape(
                "generator",
                "H/W",
                format!("{h}x{w} gives a bottleneck below 4x4"),
            ));
        }
        Ok(())
    }

    /// Recovers the architecture from tensor names and shapes.
    pub fn infer<T: Scalar>(params: &ParamStore<T>) -> Result<Self> {
        let dims = |name: &str| params.get(name).map(|t| t.shape().to_vec());
        let head = dims("head.weight")?;
        let base_channels = head[0];
        let num_downscales = (0..).take_while(|l| params.contains(&format!("enc.{l}.weight"))).count();
        let num_modules = (0..).take_while(|i| params.contains(&format!("mod{i}.block0.fuse.weight"))).count();
        let blocks_per_module =
            (0..).take_while(|b| params.contains(&format!("mod0.block{b}.fuse.weight"))).count();
        let layers_per_block =
            (0..).take_while(|k| params.contains(&format!("mod0.block0.conv{k}.weight"))).count();
        if num_modules == 0 || layers_per_block == 0 {
            return Err(Error::MissingParam {
                name: "mod0.block0.conv0.weight".into(),
            });
        }
        let growth_rate = dims("mod0.block0.conv0.weight")?[0];
        let cfg = Self {
            base_channels,
            num_downscales,
            num_modules,
            blocks_per_module,
            layers_per_block,
            growth_rate,
            output_channels: dims("tail.weight")?[0],
            use_attention: params.contains("mod0.att.sigma"),
            attention_budget: DEFAULT_ATTENTION_BUDGET,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// U-net generator: encoder, a chain of dense residual attention modules at
/// the bottleneck, a decoder with concatenated long skips, and a global
/// residual from the input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generator {
    pub config: GeneratorConfig,
    head: Conv,
    enc: Vec<Conv>,
    modules: Vec<DenseResAtt>,
    dec: Vec<Conv>,
    tail: Conv,
}

impl Generator {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let c = config.base_channels;
        let head = Conv::new("head", 3, c, 3, 1);
        let enc = (0..config.num_downscales)
            .map(|l| Conv::new(format!("enc.{l}"), c << l, c << (l + 1), 3, 2))
            .collect();
        let p = config.bottleneck_channels();
        let modules = (0..config.num_modules)
            .map(|i| {
                DenseResAtt::new(
                    format!("mod{i}"),
                    p,
                    config.blocks_per_module,
                    config.growth_rate,
                    config.layers_per_block,
                    config.use_attention,
                )
                .with_attention_budget(config.attention_budget)
            })
            .collect();
        let dec = (0..config.num_downscales)
            .map(|l| Conv::new(format!("dec.{l}"), (c << (l + 1)) + (c << l), c << l, 3, 1))
            .collect();
        let tail = Conv::new("tail", c, config.output_channels, 3, 1);
        Ok(Self {
            config,
            head,
            enc,
            modules,
            dec,
            tail,
        })
    }

    /// Fresh parameters; the tail starts at zero so the network begins as
    /// the identity on its input.
    pub fn init<T: Scalar>(&self, rng: &mut Rng) -> Result<ParamStore<T>> {
        let mut store = ParamStore::new();
        self.head.init(&mut store, rng)?;
        for e in &self.enc {
            e.init(&mut store, rng)?;
        }
        for m in &self.modules {
            m.init(&mut store, rng)?;
        }
        for d in &self.dec {
            d.init(&mut store, rng)?;
        }
        self.tail.init_zero(&mut store)?;
        Ok(store)
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<T>, params: &BoundParams, lbd: Var) -> Result<Var> {
        let shape = g.shape(lbd);
        match *shape {
            [_, 3, h, w] => self.config.check_input(h, w)?,
            _ => return Err(Error::shape("generator", "input", format!("expected [N,3,H,W], got {shape:?}"))),
        }
        let act = |v: Var| g.leaky_relu(v, LEAKY_SLOPE);
        let mut skips = vec![act(self.head.forward(g, params, lbd)?)?];
        for e in &self.enc {
            let prev = *skips.last().expect("non-empty");
            skips.push(act(e.forward(g, params, prev)?)?);
        }
        let mut x = skips.pop().expect("non-empty");
        for m in &self.modules {
            x = m.forward(g, params, x)?;
        }
        for (d, skip) in self.dec.iter().zip(skips).rev() {
            let up = g.upsample_nearest2x(x)?;
            let cat = g.concat_channels(&[up, skip])?;
            x = act(d.forward(g, params, cat)?)?;
        }
        let residual = self.tail.forward(g, params, x)?;
        let out = g.add(lbd, residual)?;
        g.clamp(out, 0.0, 1.0)
    }

    /// Untracked forward pass on a tensor.
    pub fn predict<T: Scalar>(&self, params: &ParamStore<T>, lbd: &Tensor<T>) -> Result<Tensor<T>> {
        let g = Graph::no_grad();
        let bound = params.bind_frozen(&g);
        let x = g.constant(lbd.clone());
        let y = self.forward(&g, &bound, x)?;
        Ok((*g.value(y)).clone())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscriminatorConfig {
    /// Output width of each stride-2 stage; the stem uses the first entry.
    pub ladder: Vec<usize>,
    /// Stage widths followed by a self-attention block.
    pub attention_after: Vec<usize>,
    pub fc_width: usize,
    /// Square input side the fully connected head is sized for.
    pub input_size: usize,
    pub use_attention: bool,
    pub attention_budget: usize,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            ladder: vec![64, 128, 256, 512],
            attention_after: vec![128, 256],
            fc_width: 1024,
            input_size: 64,
            use_attention: true,
            attention_budget: DEFAULT_ATTENTION_BUDGET,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("discriminator: {m}")));
        if self.ladder.is_empty() || self.ladder[0] == 0 {
            return bad("ladder must be non-empty and positive".into());
        }
        if let Some(w) = self.ladder.windows(2).find(|w| w[1] != 2 * w[0]) {
            return bad(format!("ladder must double at every step ({} -> {})", w[0], w[1]));
        }
        if let Some(a) = self.attention_after.iter().find(|a| !self.ladder.contains(a)) {
            return bad(format!("attention point {a} is not a ladder width"));
        }
        if self.fc_width == 0 {
            return bad("fc_width must be positive".into());
        }
        let s = 1usize << self.ladder.len();
        if self.input_size < s || self.input_size % s != 0 {
            return bad(format!("input size {} must be a positive multiple of {s}", self.input_size));
        }
        Ok(())
    }

    fn final_side(&self) -> usize {
        self.input_size >> self.ladder.len()
    }
}

/// Strided conv stack with self-attention and a fully connected head.
/// Produces raw logits `[N,1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Discriminator {
    pub config: DiscriminatorConfig,
    stem: Conv,
    stages: Vec<(Conv, Option<SelfAttention>)>,
    flat: usize,
}

impl Discriminator {
    pub fn new(config: DiscriminatorConfig) -> Result<Self> {
        config.validate()?;
        let stem = Conv::new("stem", 3, config.ladder[0], 3, 1);
        let mut prev = config.ladder[0];
        let stages = config
            .ladder
            .iter()
            .enumerate()
            .map(|(s, &c)| {
                let conv = Conv::new(format!("down.{s}"), prev, c, 3, 2);
                prev = c;
                let att = (config.use_attention && config.attention_after.contains(&c))
                    .then(|| SelfAttention::new(format!("att.{s}"), c).with_budget(config.attention_budget));
                (conv, att)
            })
            .collect();
        let side = config.final_side();
        let flat = prev * side * side;
        Ok(Self {
            config,
            stem,
            stages,
            flat,
        })
    }

    fn fc1(&self) -> (String, String) {
        ("fc1.weight".into(), "fc1.bias".into())
    }

    pub fn init<T: Scalar>(&self, rng: &mut Rng) -> Result<ParamStore<T>> {
        let mut store = ParamStore::new();
        self.stem.init(&mut store, rng)?;
        for (conv, att) in &self.stages {
            conv.init(&mut store, rng)?;
            if let Some(a) = att {
                a.init(&mut store, rng)?;
            }
        }
        let (w1, b1) = self.fc1();
        let fc = self.config.fc_width;
        store.insert_kaiming(w1, &[fc, self.flat], self.flat, rng)?;
        store.insert_zeros(b1, &[fc])?;
        store.insert_kaiming("fc2.weight", &[1, fc], fc, rng)?;
        store.insert_zeros("fc2.bias", &[1])?;
        Ok(store)
    }

    pub fn forward<T: Scalar>(&self, g: &Graph<T>, params: &BoundParams, img: Var) -> Result<Var> {
        let shape = g.shape(img);
        let n = match *shape {
            [n, 3, h, w] if h == self.config.input_size && w == self.config.input_size => n,
            _ => {
                return Err(Error::shape(
                    "discriminator",
                    "input",
                    format!("expected [N,3,{s},{s}], got {shape:?}", s = self.config.input_size),
                ))
            }
        };
        let act = |v: Var| g.leaky_relu(v, LEAKY_SLOPE);
        let mut x = act(self.stem.forward(g, params, img)?)?;
        for (conv, att) in &self.stages {
            x = act(conv.forward(g, params, x)?)?;
            if let Some(a) = att {
                x = a.forward(g, params, x)?;
            }
        }
        let flat = g.reshape(x, &[n, self.flat])?;
        let (w1, b1) = self.fc1();
        let h = g.linear(flat, params.get(&w1)?, Some(params.get(&b1)?))?;
        let h = act(h)?;
        g.linear(h, params.get("fc2.weight")?, Some(params.get("fc2.bias")?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_gen() -> GeneratorConfig {
        GeneratorConfig {
            base_channels: 8,
            num_downscales: 1,
            num_modules: 1,
            blocks_per_module: 1,
            layers_per_block: 2,
            growth_rate: 4,
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn inference_recovers_config() {
        for cfg in [tiny_gen(), GeneratorConfig { use_attention: false, ..tiny_gen() }, GeneratorConfig::default()] {
            let gen = Generator::new(cfg.clone()).unwrap();
            let store: ParamStore<f32> = gen.init(&mut Rng::new(0)).unwrap();
            assert_eq!(GeneratorConfig::infer(&store).unwrap(), cfg);
        }
    }

    #[test]
    fn indivisible_input_rejected() {
        let gen = Generator::new(tiny_gen()).unwrap();
        let store: ParamStore<f64> = gen.init(&mut Rng::new(0)).unwrap();
        let x = Tensor::zeros(&[1, 3, 9, 8]);
        assert!(matches!(gen.predict(&store, &x), Err(Error::Shape { op: "generator", .. })));
        let x = Tensor::zeros(&[1, 3, 6, 8]);
        assert!(gen.predict(&store, &x).is_err());
    }

    #[test]
    fn ladder_must_double() {
        let cfg = DiscriminatorConfig {
            ladder: vec![8, 16, 24],
            ..DiscriminatorConfig::default()
        };
        assert!(matches!(Discriminator::new(cfg), Err(Error::Config(_))));
    }

    #[test]
    fn small_discriminator_input_rejected() {
        let cfg = DiscriminatorConfig {
            input_size: 8,
            ..DiscriminatorConfig::default()
        };
        assert!(Discriminator::new(cfg).is_err());
    }
}
