//! Patch sampling, the alternating discriminator/generator update, and the
//! epoch loop with checkpoints and a loss history.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::autograd::Graph;
use crate::bitdepth::{dequantize_zp, quantize, to_unit, ImageBuffer};
use crate::error::{Error, Result};
use crate::imageio::{list_images, read_image};
use crate::losses::{content_terms, d_loss, g_loss, AdvForm, FeatureExtractor, LossReport};
use crate::model::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use crate::optim::{Adam, AdamConfig};
use crate::params::{save_checkpoint, ParamStore};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

pub const GENERATOR_FILE: &str = "generator.ckpt";
pub const DISCRIMINATOR_FILE: &str = "discriminator.ckpt";
pub const HISTORY_FILE: &str = "history.csv";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub source_dir: PathBuf,
    pub output_dir: PathBuf,
    pub crop_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Patches drawn per epoch; steps per epoch is this over the batch size, rounded up.
    pub patches_per_epoch: usize,
    pub lr0: f64,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub lbd_bits: u8,
    pub beta: f64,
    pub adv_weight: f64,
    pub adv_form: AdvForm,
    pub non_saturating: bool,
    pub seed: u64,
    pub use_discriminator: bool,
    pub use_attention: bool,
    pub base_channels: usize,
    pub num_downscales: usize,
    pub num_modules: usize,
    pub blocks_per_module: usize,
    pub layers_per_block: usize,
    pub growth_rate: usize,
    pub fc_width: usize,
    pub feature_tap: usize,
    /// Extractor weights in checkpoint format; empty selects the fixed-seed extractor.
    pub feature_weights: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let g = GeneratorConfig::default();
        Self {
            source_dir: PathBuf::from("data/corpus"),
            output_dir: PathBuf::from("runs/train"),
            crop_size: 64,
            batch_size: 16,
            epochs: 80,
            patches_per_epoch: 16_000,
            lr0: 1e-4,
            lr_decay_every: 10,
            lr_decay_factor: 0.1,
            lbd_bits: 4,
            beta: crate::losses::DEFAULT_BETA,
            adv_weight: crate::losses::DEFAULT_ADV_WEIGHT,
            adv_form: AdvForm::Hinge,
            non_saturating: false,
            seed: 0,
            use_discriminator: true,
            use_attention: true,
            base_channels: g.base_channels,
            num_downscales: g.num_downscales,
            num_modules: g.num_modules,
            blocks_per_module: g.blocks_per_module,
            layers_per_block: g.layers_per_block,
            growth_rate: g.growth_rate,
            fc_width: DiscriminatorConfig::default().fc_width,
            feature_tap: crate::losses::DEFAULT_TAP,
            feature_weights: PathBuf::new(),
        }
    }
}

fn parse<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

impl TrainConfig {
    /// Reduced configuration for CPU runs: 32px crops, 16 base channels,
    /// 2 modules, batch 4, 200 steps. Not the full-scale setting.
    pub fn desk() -> Self {
        Self {
            crop_size: 32,
            base_channels: 16,
            num_modules: 2,
            batch_size: 4,
            epochs: 2,
            patches_per_epoch: 400,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::default()),
            _ => Err(Error::Config(format!("unknown preset `{name}` (desk, full)"))),
        }
    }

    pub const KEYS: [&'static str; 26] = [
        "source_dir",
        "output_dir",
        "crop_size",
        "batch_size",
        "epochs",
        "patches_per_epoch",
        "lr0",
        "lr_decay_every",
        "lr_decay_factor",
        "lbd_bits",
        "beta",
        "adv_weight",
        "adv_form",
        "non_saturating",
        "seed",
        "use_discriminator",
        "use_attention",
        "base_channels",
        "num_downscales",
        "num_modules",
        "blocks_per_module",
        "layers_per_block",
        "growth_rate",
        "fc_width",
        "feature_tap",
        "feature_weights",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "source_dir" => self.source_dir = PathBuf::from(v),
            "output_dir" => self.output_dir = PathBuf::from(v),
            "crop_size" => self.crop_size = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "patches_per_epoch" => self.patches_per_epoch = parse(key, v)?,
            "lr0" => self.lr0 = parse(key, v)?,
            "lr_decay_every" => self.lr_decay_every = parse(key, v)?,
            "lr_decay_factor" => self.lr_decay_factor = parse(key, v)?,
            "lbd_bits" => self.lbd_bits = parse(key, v)?,
            "beta" => self.beta = parse(key, v)?,
            "adv_weight" => self.adv_weight = parse(key, v)?,
            "adv_form" => self.adv_form = v.parse().map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))?,
            "non_saturating" => self.non_saturating = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "use_discriminator" => self.use_discriminator = parse(key, v)?,
            "use_attention" => self.use_attention = parse(key, v)?,
            "base_channels" => self.base_channels = parse(key, v)?,
            "num_downscales" => self.num_downscales = parse(key, v)?,
            "num_modules" => self.num_modules = parse(key, v)?,
            "blocks_per_module" => self.blocks_per_module = parse(key, v)?,
            "layers_per_block" => self.layers_per_block = parse(key, v)?,
            "growth_rate" => self.growth_rate = parse(key, v)?,
            "fc_width" => self.fc_width = parse(key, v)?,
            "feature_tap" => self.feature_tap = parse(key, v)?,
            "feature_weights" => self.feature_weights = PathBuf::from(v),
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Every field as `(key, value)` in [`Self::KEYS`] order.
    pub fn to_kv(&self) -> Vec<(&'static str, String)> {
        let vals = [
            self.source_dir.display().to_string(),
            self.output_dir.display().to_string(),
            self.crop_size.to_string(),
            self.batch_size.to_string(),
            self.epochs.to_string(),
            self.patches_per_epoch.to_string(),
            self.lr0.to_string(),
            self.lr_decay_every.to_string(),
            self.lr_decay_factor.to_string(),
            self.lbd_bits.to_string(),
            self.beta.to_string(),
            self.adv_weight.to_string(),
            self.adv_form.to_string(),
            self.non_saturating.to_string(),
            self.seed.to_string(),
            self.use_discriminator.to_string(),
            self.use_attention.to_string(),
            self.base_channels.to_string(),
            self.num_downscales.to_string(),
            self.num_modules.to_string(),
            self.blocks_per_module.to_string(),
            self.layers_per_block.to_string(),
            self.growth_rate.to_string(),
            self.fc_width.to_string(),
            self.feature_tap.to_string(),
            self.feature_weights.display().to_string(),
        ];
        Self::KEYS.into_iter().zip(vals).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_kv() {
            writeln!(s, "{k} = {v}").expect("string write");
        }
        s
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig {
            base_channels: self.base_channels,
            num_downscales: self.num_downscales,
            num_modules: self.num_modules,
            blocks_per_module: self.blocks_per_module,
            layers_per_block: self.layers_per_block,
            growth_rate: self.growth_rate,
            use_attention: self.use_attention,
            ..GeneratorConfig::default()
        }
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            fc_width: self.fc_width,
            input_size: self.crop_size,
            use_attention: self.use_attention,
            ..DiscriminatorConfig::default()
        }
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.patches_per_epoch.div_ceil(self.batch_size.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=7).contains(&self.lbd_bits) {
            return bad(format!("lbd_bits {} outside 1..=7", self.lbd_bits));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.patches_per_epoch == 0 {
            return bad("batch_size, epochs and patches_per_epoch must be positive".into());
        }
        if self.lr_decay_every == 0 {
            return bad("lr_decay_every must be positive".into());
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) || !(self.lr_decay_factor > 0.0) {
            return bad("lr0 and lr_decay_factor must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta {} outside [0, 1]", self.beta));
        }
        if !self.adv_weight.is_finite() || self.adv_weight < 0.0 {
            return bad("adv_weight must be a non-negative number".into());
        }
        let g = self.generator_config();
        g.validate()?;
        g.check_input(self.crop_size, self.crop_size)
            .map_err(|_| Error::Config(format!("crop_size {} does not suit {} downscales", self.crop_size, self.num_downscales)))?;
        if self.use_discriminator {
            self.discriminator_config().validate()?;
        }
        Ok(())
    }
}

/// Learning rate for a 0-based epoch: `lr0 * factor^floor(epoch / every)`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.lr_decay_factor.powi((epoch / cfg.lr_decay_every) as i32)
}

/// 8-bit RGB training images.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub images: Vec<(String, ImageBuffer)>,
}

impl Corpus {
    pub fn new(images: Vec<(String, ImageBuffer)>, crop: usize) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Dataset("corpus is empty".into()));
        }
        for (name, img) in &images {
            if img.bit_depth() != 8 {
                return Err(Error::Dataset(format!("{name}: training images must be 8-bit")));
            }
            if img.width() < crop || img.height() < crop {
                return Err(Error::Dataset(format!(
                    "{name}: {}x{} is smaller than the {crop}px crop",
                    img.width(),
                    img.height()
                )));
            }
        }
        let images = images.into_iter().map(|(n, i)| (n, i.to_rgb())).collect();
        Ok(Self { images })
    }

    /// Every image directly inside `dir`, sorted by file name.
    pub fn load(dir: impl AsRef<Path>, crop: usize) -> Result<Self> {
        let files = list_images(dir.as_ref())?;
        let mut images = Vec::with_capacity(files.len());
        for f in files {
            let name = f.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            images.push((name, read_image(&f)?));
        }
        Self::new(images, crop)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Element `t` (0..8) of the symmetry group of the square: `t % 4` quarter
/// turns clockwise, then a horizontal flip when `t >= 4`.
pub fn dihedral(img: &ImageBuffer, t: usize) -> Result<ImageBuffer> {
    let n = img.width();
    if img.height() != n {
        return Err(Error::InvalidArgument("dihedral transforms need a square image".into()));
    }
    let (turns, flip) = (t % 4, t >= 4);
    ImageBuffer::from_fn(n, n, img.channels(), img.bit_depth(), |x, y, c| {
        let x = if flip { n - 1 - x } else { x };
        // inverse of `turns` clockwise quarter turns
        let (sx, sy) = match turns {
            0 => (x, y),
            1 => (y, n - 1 - x),
            2 => (n - 1 - x, n - 1 - y),
            _ => (n - 1 - y, x),
        };
        img.get(sx, sy, c)
    })
}

/// One training pair, `[3, crop, crop]` each.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub hbd: Tensor<T>,
    pub lbd: Tensor<T>,
}

/// The low bit-depth network input for an 8-bit patch: truncate, zero-pad, scale.
pub fn lbd_input<T: Scalar>(hbd: &ImageBuffer, bits: u8) -> Result<Tensor<T>> {
    Ok(to_unit(&dequantize_zp(&quantize(hbd, bits)?, 8)?))
}

fn drop_batch_axis<T: Scalar>(t: Tensor<T>) -> Tensor<T> {
    let s = t.shape()[1..].to_vec();
    t.reshape(&s).expect("same size")
}

/// Draws `cfg.batch_size` samples: uniform image, uniform crop corner,
/// uniform dihedral transform.
pub fn make_batch<T: Scalar>(rng: &mut Rng, corpus: &Corpus, cfg: &TrainConfig) -> Result<Vec<Sample<T>>> {
    if corpus.is_empty() {
        return Err(Error::Dataset("corpus is empty".into()));
    }
    let c = cfg.crop_size;
    (0..cfg.batch_size)
        .map(|_| {
            let (name, img) = &corpus.images[rng.below(corpus.len())];
            if img.width() < c || img.height() < c {
                return Err(Error::Dataset(format!("{name} is smaller than the {c}px crop")));
            }
            let x0 = rng.below(img.width() - c + 1);
            let y0 = rng.below(img.height() - c + 1);
            let t = rng.below(8);
            let patch = dihedral(&img.crop(x0, y0, c, c)?, t)?;
            Ok(Sample {
                hbd: drop_batch_axis(to_unit(&patch)),
                lbd: drop_batch_axis(lbd_input(&patch, cfg.lbd_bits)?),
            })
        })
        .collect()
}

/// Samples stacked along a leading batch axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    pub hbd: Tensor<T>,
    pub lbd: Tensor<T>,
}

impl<T: Scalar> Batch<T> {
    pub fn stack(samples: &[Sample<T>]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let mut shape = vec![samples.len()];
        shape.extend_from_slice(first.hbd.shape());
        let gather = |f: fn(&Sample<T>) -> &Tensor<T>| -> Result<Tensor<T>> {
            let mut data = Vec::with_capacity(first.hbd.len() * samples.len());
            for s in samples {
                data.extend_from_slice(f(s).data());
            }
            Tensor::new(shape.clone(), data)
        };
        Ok(Self {
            hbd: gather(|s| &s.hbd)?,
            lbd: gather(|s| &s.lbd)?,
        })
    }
}

/// Models, optimizer state and the step counter of one run.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub generator: Generator,
    pub discriminator: Option<Discriminator>,
    pub g_params: ParamStore<f32>,
    pub d_params: ParamStore<f32>,
    g_opt: Adam,
    d_opt: Adam,
    fx: FeatureExtractor<f32>,
    step: usize,
}

fn diverged(step: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::NonFinite { op } => Error::Divergence {
            step,
            reason: format!("non-finite value in {op}"),
        },
        other => other,
    }
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::new(cfg.seed);
        let generator = Generator::new(cfg.generator_config())?;
        let g_params = generator.init(&mut rng.fork(1))?;
        let discriminator = if cfg.use_discriminator {
            Some(Discriminator::new(cfg.discriminator_config())?)
        } else {
            None
        };
        let d_params = match &discriminator {
            Some(d) => d.init(&mut rng.fork(2))?,
            None => ParamStore::new(),
        };
        let fx = if cfg.feature_weights.as_os_str().is_empty() {
            FeatureExtractor::fixed_seed(cfg.feature_tap)?
        } else {
            FeatureExtractor::load(&cfg.feature_weights, cfg.feature_tap)?
        };
        Ok(Self {
            g_opt: Adam::new(&g_params, AdamConfig::default()),
            d_opt: Adam::new(&d_params, AdamConfig::default()),
            cfg,
            generator,
            discriminator,
            g_params,
            d_params,
            fx,
            step: 0,
        })
    }

    /// Stream used for patch sampling, independent of the weight init streams.
    pub fn data_rng(&self) -> Rng {
        Rng::new(self.cfg.seed).fork(3)
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    /// One discriminator update (when enabled) followed by one generator update.
    pub fn train_step(&mut self, batch: &Batch<f32>, lr: f64) -> Result<LossReport> {
        self.step += 1;
        let adv_d = match self.discriminator {
            Some(_) => self.d_step(batch, lr)?,
            None => 0.0,
        };
        let mut report = self.g_step(batch, lr)?;
        report.adv_d = adv_d;
        report.total_d = adv_d;
        Ok(report)
    }

    /// Updates only the discriminator, against fakes from an untracked
    /// generator pass. Returns the discriminator loss.
    pub fn d_step(&mut self, batch: &Batch<f32>, lr: f64) -> Result<f64> {
        let step = self.step;
        let map = diverged(step);
        let d = self
            .discriminator
            .as_ref()
            .ok_or_else(|| Error::Config("d_step called with the discriminator disabled".into()))?;
        let fake = self.generator.predict(&self.g_params, &batch.lbd).map_err(&map)?;
        let g = Graph::new();
        let dp = self.d_params.bind(&g);
        let real_logits = d.forward(&g, &dp, g.constant(batch.hbd.clone())).map_err(&map)?;
        let fake_logits = d.forward(&g, &dp, g.constant(fake)).map_err(&map)?;
        let loss = d_loss(&g, real_logits, fake_logits, self.cfg.adv_form).map_err(&map)?;
        let value = g.value(loss).item() as f64;
        if !value.is_finite() {
            return Err(Error::Divergence {
                step,
                reason: "discriminator loss is not finite".into(),
            });
        }
        let mut grads = g.backward(loss).map_err(&map)?;
        self.d_params.accumulate(&dp, &mut grads);
        self.d_opt.step(&mut self.d_params, lr)?;
        Ok(value)
    }

    /// Updates only the generator; the discriminator, when enabled, is bound
    /// frozen. The returned report has no discriminator loss.
    pub fn g_step(&mut self, batch: &Batch<f32>, lr: f64) -> Result<LossReport> {
        let step = self.step;
        let map = diverged(step);
        let mut report = LossReport::default();
        let g = Graph::new();
        let gp = self.g_params.bind(&g);
        let lbd = g.constant(batch.lbd.clone());
        let hbd = g.constant(batch.hbd.clone());
        let pred = self.generator.forward(&g, &gp, lbd).map_err(&map)?;
        let terms = content_terms(&g, &self.fx, pred, hbd, self.cfg.beta).map_err(&map)?;
        let mut total = terms.content;
        if let Some(d) = &self.discriminator {
            let dp = self.d_params.bind_frozen(&g);
            let logits = d.forward(&g, &dp, pred).map_err(&map)?;
            let adv = g_loss(&g, logits, self.cfg.adv_form, self.cfg.non_saturating).map_err(&map)?;
            report.adv_g = g.value(adv).item() as f64;
            let weighted = g.scale(adv, self.cfg.adv_weight).map_err(&map)?;
            total = g.add(total, weighted).map_err(&map)?;
        }
        report.mse = g.value(terms.mse).item() as f64;
        report.perceptual = g.value(terms.perceptual).item() as f64;
        report.content = g.value(terms.content).item() as f64;
        report.total_g = g.value(total).item() as f64;
        if !report.is_finite() {
            return Err(Error::Divergence {
                step,
                reason: "generator loss is not finite".into(),
            });
        }
        let mut grads = g.backward(total).map_err(&map)?;
        self.g_params.accumulate(&gp, &mut grads);
        self.g_opt.step(&mut self.g_params, lr)?;
        Ok(report)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        write_atomic(&dir.join(GENERATOR_FILE), |p| save_checkpoint(&self.g_params, p))?;
        if self.discriminator.is_some() {
            write_atomic(&dir.join(DISCRIMINATOR_FILE), |p| save_checkpoint(&self.d_params, p))?;
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write(&tmp)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn history_header() -> String {
    let mut s = String::from("step,epoch,lr");
    for f in LossReport::FIELDS {
        s.push(',');
        s.push_str(f);
    }
    s
}

fn history_row(step: usize, epoch: usize, lr: f64, r: &LossReport) -> String {
    let mut s = format!("{step},{epoch},{lr}");
    for v in r.values() {
        write!(s, ",{v}").expect("string write");
    }
    s
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub g_params: ParamStore<f32>,
    pub d_params: ParamStore<f32>,
    pub history: Vec<LossReport>,
    pub output_dir: PathBuf,
}

/// Runs `epochs x steps_per_epoch` steps on the corpus in `cfg.source_dir`.
///
/// Checkpoints are rewritten after every epoch, so a divergence leaves the
/// last completed epoch on disk. `log` receives one line per epoch.
pub fn run_training(cfg: &TrainConfig, log: &mut dyn FnMut(&str)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let corpus = Corpus::load(&cfg.source_dir, cfg.crop_size)?;
    run_training_on(cfg, &corpus, log)
}

pub fn run_training_on(cfg: &TrainConfig, corpus: &Corpus, log: &mut dyn FnMut(&str)) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(cfg.clone())?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    fs::write(out.join(CONFIG_FILE), cfg.to_text()).map_err(|e| Error::io(out.join(CONFIG_FILE), e))?;
    let hist_path = out.join(HISTORY_FILE);
    let mut csv = history_header();
    csv.push('\n');
    fs::write(&hist_path, &csv).map_err(|e| Error::io(&hist_path, e))?;

    let mut rng = trainer.data_rng();
    let mut history = Vec::new();
    let steps = cfg.steps_per_epoch();
    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        let mut rows = String::new();
        let mut sum_g = 0.0;
        for _ in 0..steps {
            let batch = Batch::stack(&make_batch(&mut rng, corpus, cfg)?)?;
            let report = trainer.train_step(&batch, lr)?;
            writeln!(rows, "{}", history_row(trainer.steps_done(), epoch, lr, &report)).expect("string write");
            sum_g += report.total_g;
            history.push(report);
        }
        csv.push_str(&rows);
        fs::write(&hist_path, &csv).map_err(|e| Error::io(&hist_path, e))?;
        trainer.save(out)?;
        log(&format!(
            "epoch {}/{} lr {lr:e} steps {} mean total_g {:.6}",
            epoch + 1,
            cfg.epochs,
            trainer.steps_done(),
            sum_g / steps as f64
        ));
    }
    Ok(TrainOutcome {
        g_params: trainer.g_params,
        d_params: trainer.d_params,
        history,
        output_dir: out.clone(),
    })
}
