//! Pixel, feature and adversarial objectives.

use std::path::Path;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::Conv;
use crate::params::{load_checkpoint, ParamStore};
use crate::rng::Rng;
use crate::tensor::Scalar;

pub const DEFAULT_BETA: f64 = 0.5;
pub const DEFAULT_ADV_WEIGHT: f64 = 0.01;
/// Seed of the built-in random feature extractor.
pub const FEATURE_SEED: u64 = 0x5eed_f00d;

fn same_shape<T: Scalar>(g: &Graph<T>, op: &'static str, a: Var, b: Var) -> Result<()> {
    let (sa, sb) = (g.shape(a), g.shape(b));
    if sa != sb {
        return Err(Error::shape(op, "shape", format!("{sa:?} vs {sb:?}")));
    }
    Ok(())
}

/// Mean squared error over every element.
pub fn mse_loss<T: Scalar>(g: &Graph<T>, pred: Var, target: Var) -> Result<Var> {
    same_shape(g, "mse_loss", pred, target)?;
    let d = g.sub(target, pred)?;
    let sq = g.square(d)?;
    g.mean(sq)
}

/// Frozen convolutional feature pyramid used by the perceptual loss.
///
/// Each stage is a 3x3 conv followed by ReLU; stages after the first halve
/// the resolution. Features are read after stage `tap` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureExtractor<T> {
    stages: Vec<Conv>,
    tap: usize,
    params: ParamStore<T>,
}

pub const DEFAULT_FEATURE_WIDTHS: [usize; 3] = [16, 32, 64];
pub const DEFAULT_TAP: usize = 2;

fn stage_convs(widths: &[usize]) -> Vec<Conv> {
    let mut prev = 3;
    widths
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let conv = Conv::new(format!("fx.stage{}", k + 1), prev, c, 3, if k == 0 { 1 } else { 2 });
            prev = c;
            conv
        })
        .collect()
}

impl<T: Scalar> FeatureExtractor<T> {
    /// Random weights drawn from a fixed seed, so every run sees the same features.
    pub fn fixed_seed(tap: usize) -> Result<Self> {
        Self::random(&DEFAULT_FEATURE_WIDTHS, tap, FEATURE_SEED)
    }

    pub fn random(widths: &[usize], tap: usize, seed: u64) -> Result<Self> {
        let stages = stage_convs(widths);
        let mut params = ParamStore::new();
        let mut rng = Rng::new(seed);
        for s in &stages {
            s.init(&mut params, &mut rng)?;
        }
        Self::assemble(stages, tap, params)
    }

    /// Extractor weights exported into the checkpoint format
    /// (`fx.stage{k}.weight` `[C_out, C_in, 3, 3]`, `fx.stage{k}.bias`).
    pub fn from_params(store: ParamStore<f32>, tap: usize) -> Result<Self> {
        let mut widths = Vec::new();
        let mut c_in = 3;
        while let Ok(w) = store.get(&format!("fx.stage{}.weight", widths.len() + 1)) {
            match *w.shape() {
                [o, i, 3, 3] if i == c_in => {
                    widths.push(o);
                    c_in = o;
                }
                _ => {
                    return Err(Error::ShapeMismatch {
                        name: format!("fx.stage{}.weight", widths.len() + 1),
                        expected: vec![0, c_in, 3, 3],
                        found: w.shape().to_vec(),
                    })
                }
            }
        }
        let stages = stage_convs(&widths);
        let mut params = ParamStore::new();
        for s in &stages {
            for name in [s.weight_name(), s.bias_name()] {
                params.insert(name.clone(), store.get(&name)?.cast())?;
            }
        }
        Self::assemble(stages, tap, params)
    }

    pub fn load(path: impl AsRef<Path>, tap: usize) -> Result<Self> {
        Self::from_params(load_checkpoint(path)?, tap)
    }

    fn assemble(stages: Vec<Conv>, tap: usize, mut params: ParamStore<T>) -> Result<Self> {
        if tap == 0 || tap > stages.len() {
            return Err(Error::Config(format!("feature tap {tap} outside 1..={}", stages.len())));
        }
        for (_, t) in params.iter_mut() {
            t.set_requires_grad(false);
        }
        Ok(Self { stages, tap, params })
    }

    pub fn tap(&self) -> usize {
        self.tap
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    /// Features at the tap; the extractor weights enter as constants.
    pub fn features(&self, g: &Graph<T>, x: Var) -> Result<Var> {
        let bound = self.params.bind_frozen(g);
        let mut h = x;
        for s in &self.stages[..self.tap] {
            h = g.relu(s.forward(g, &bound, h)?)?;
        }
        Ok(h)
    }
}

/// Mean squared difference between the features of the target and of the
/// prediction; gradients reach `pred` only.
pub fn perceptual_loss<T: Scalar>(
    g: &Graph<T>,
    fx: &FeatureExtractor<T>,
    pred: Var,
    target: Var,
) -> Result<Var> {
    same_shape(g, "perceptual_loss", pred, target)?;
    let ft = fx.features(g, target)?;
    let fp = fx.features(g, pred)?;
    let d = g.sub(ft, fp)?;
    let sq = g.square(d)?;
    g.mean(sq)
}

/// The content terms of one evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ContentTerms {
    pub mse: Var,
    pub perceptual: Var,
    pub content: Var,
}

pub fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidArgument(format!("beta {beta} outside [0, 1]")));
    }
    Ok(())
}

/// `beta * mse + (1 - beta) * perceptual`, keeping both parts.
pub fn content_terms<T: Scalar>(
    g: &Graph<T>,
    fx: &FeatureExtractor<T>,
    pred: Var,
    target: Var,
    beta: f64,
) -> Result<ContentTerms> {
    check_beta(beta)?;
    let mse = mse_loss(g, pred, target)?;
    let perceptual = perceptual_loss(g, fx, pred, target)?;
    let a = g.scale(mse, beta)?;
    let b = g.scale(perceptual, 1.0 - beta)?;
    let content = g.add(a, b)?;
    Ok(ContentTerms {
        mse,
        perceptual,
        content,
    })
}

pub fn content_loss<T: Scalar>(
    g: &Graph<T>,
    fx: &FeatureExtractor<T>,
    pred: Var,
    target: Var,
    beta: f64,
) -> Result<Var> {
    Ok(content_terms(g, fx, pred, target, beta)?.content)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdvForm {
    #[default]
    Hinge,
    Log,
}

impl std::str::FromStr for AdvForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hinge" => Ok(Self::Hinge),
            "log" => Ok(Self::Log),
            _ => Err(Error::InvalidArgument(format!("adversarial form `{s}` (expected hinge or log)"))),
        }
    }
}

impl std::fmt::Display for AdvForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Hinge => "hinge",
            Self::Log => "log",
        })
    }
}

/// Discriminator objective on raw logits.
///
/// Hinge: `mean(relu(1 - real)) + mean(relu(1 + fake))`.
/// Log: `-mean(log s(real)) - mean(log(1 - s(fake)))`, written with softplus.
pub fn d_loss<T: Scalar>(g: &Graph<T>, real: Var, fake: Var, form: AdvForm) -> Result<Var> {
    let (a, b) = match form {
        AdvForm::Hinge => {
            let nr = g.neg(real)?;
            let r = g.relu(g.add_scalar(nr, 1.0)?)?;
            let f = g.relu(g.add_scalar(fake, 1.0)?)?;
            (r, f)
        }
        AdvForm::Log => (g.softplus(g.neg(real)?)?, g.softplus(fake)?),
    };
    let (a, b) = (g.mean(a)?, g.mean(b)?);
    g.add(a, b)
}

/// Generator objective on the discriminator's logits for generated images.
///
/// Hinge: `-mean(fake)`. Log: `mean(log(1 - s(fake))) = -mean(softplus(fake))`,
/// or `-mean(log s(fake)) = mean(softplus(-fake))` when `non_saturating`.
pub fn g_loss<T: Scalar>(g: &Graph<T>, fake: Var, form: AdvForm, non_saturating: bool) -> Result<Var> {
    match form {
        AdvForm::Hinge => g.neg(g.mean(fake)?),
        AdvForm::Log if non_saturating => g.mean(g.softplus(g.neg(fake)?)?),
        AdvForm::Log => g.neg(g.mean(g.softplus(fake)?)?),
    }
}

pub fn adversarial_losses<T: Scalar>(
    g: &Graph<T>,
    real: Var,
    fake: Var,
    form: AdvForm,
    non_saturating: bool,
) -> Result<(Var, Var)> {
    Ok((d_loss(g, real, fake, form)?, g_loss(g, fake, form, non_saturating)?))
}

pub fn generator_total(content: f64, g_adv: f64) -> f64 {
    content + DEFAULT_ADV_WEIGHT * g_adv
}

/// Scalar summary of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossReport {
    pub mse: f64,
    pub perceptual: f64,
    pub content: f64,
    pub adv_g: f64,
    pub adv_d: f64,
    pub total_g: f64,
    pub total_d: f64,
}

impl LossReport {
    pub const FIELDS: [&'static str; 7] = ["mse", "perceptual", "content", "adv_g", "adv_d", "total_g", "total_d"];

    pub fn values(&self) -> [f64; 7] {
        [
            self.mse,
            self.perceptual,
            self.content,
            self.adv_g,
            self.adv_d,
            self.total_g,
            self.total_d,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }
}
