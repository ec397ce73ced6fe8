use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use dequant::bench::{self, Method, ModelRunner, DEFAULT_OVERLAP, DEFAULT_TILE};
use dequant::bitdepth::{dequantize_mig, dequantize_zp, quantize};
use dequant::imageio::{read_image, read_image_with_bits, write_image};
use dequant::metrics::intensity_histogram;
use dequant::training::{run_training, TrainConfig};
use dequant::{parallel, selfcheck, Error, ErrorClass};

/// Image bit-depth expansion: integer baselines and an attentive GAN de-quantizer.
///
/// Set DEQUANT_THREADS=1 for sequential, bit-reproducible runs.
#[derive(Parser)]
#[command(name = "dequant", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Keep the most significant bits of an 8-bit image.
    Quantize {
        input: PathBuf,
        output: PathBuf,
        /// Target bit depth.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=7))]
        bits: u8,
    },
    /// Expand a low bit-depth image.
    Dequantize(DequantizeArgs),
    /// Train the generator and discriminator.
    Train(TrainArgs),
    /// Score de-quantization methods on a directory of 8-bit images.
    Eval(EvalArgs),
    /// Per-level intensity counts as CSV.
    Hist {
        input: PathBuf,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the gradient-check and oracle suites.
    Selfcheck {
        /// Seeds per suite.
        #[arg(long, default_value_t = 3)]
        trials: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Zp,
    Mig,
    Model,
}

#[derive(Args)]
struct DequantizeArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Generator checkpoint (required for the model method).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Input bit depth; defaults to the depth recorded with the file.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    bits_in: Option<u8>,
    /// Output bit depth.
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u8).range(2..=8))]
    bits_out: u8,
    /// Inference tile size for large images.
    #[arg(long, default_value_t = DEFAULT_TILE)]
    tile: usize,
    /// Overlap between neighbouring tiles.
    #[arg(long, default_value_t = DEFAULT_OVERLAP)]
    overlap: usize,
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of 8-bit reference images.
    #[arg(long)]
    dataset: PathBuf,
    /// Comma-separated methods.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "zp,mig")]
    methods: Vec<MethodArg>,
    /// Generator checkpoint for the model method.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Bit depth the references are truncated to.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u8).range(1..=7))]
    bits: u8,
    /// Write per-image scores as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Inference tile size for large images.
    #[arg(long, default_value_t = DEFAULT_TILE)]
    tile: usize,
    /// Overlap between neighbouring tiles.
    #[arg(long, default_value_t = DEFAULT_OVERLAP)]
    overlap: usize,
}

/// Settings are layered: defaults, then the preset, then the config file,
/// then individual flags.
#[derive(Args)]
struct TrainArgs {
    /// Start from a named preset (desk: reduced CPU-sized run; full).
    #[arg(long)]
    preset: Option<String>,
    /// `key = value` file using the flag names with underscores.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of 8-bit training images.
    #[arg(long)]
    source_dir: Option<PathBuf>,
    /// Where checkpoints, the loss history and the resolved config go.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Square training patch side.
    #[arg(long)]
    crop_size: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Patches per epoch; steps per epoch is this over the batch size, rounded up.
    #[arg(long)]
    patches_per_epoch: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    lr0: Option<f64>,
    /// Epochs between learning-rate decays.
    #[arg(long)]
    lr_decay_every: Option<usize>,
    #[arg(long)]
    lr_decay_factor: Option<f64>,
    /// Bit depth of the network input.
    #[arg(long)]
    lbd_bits: Option<u8>,
    /// Pixel-loss share of the content loss; the rest is perceptual.
    #[arg(long)]
    beta: Option<f64>,
    /// Weight of the adversarial term in the generator loss.
    #[arg(long)]
    adv_weight: Option<f64>,
    /// Adversarial objective: hinge or log.
    #[arg(long)]
    adv_form: Option<String>,
    /// Non-saturating generator objective for the log form.
    #[arg(long)]
    non_saturating: Option<bool>,
    #[arg(long)]
    seed: Option<u64>,
    /// Train against a discriminator (false: content loss only).
    #[arg(long)]
    use_discriminator: Option<bool>,
    /// Self-attention blocks in both networks.
    #[arg(long)]
    use_attention: Option<bool>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    num_downscales: Option<usize>,
    /// Dense residual attention modules at the bottleneck.
    #[arg(long)]
    num_modules: Option<usize>,
    #[arg(long)]
    blocks_per_module: Option<usize>,
    #[arg(long)]
    layers_per_block: Option<usize>,
    #[arg(long)]
    growth_rate: Option<usize>,
    /// Width of the discriminator's hidden fully connected layer.
    #[arg(long)]
    fc_width: Option<usize>,
    /// Feature-extractor stage compared by the perceptual loss.
    #[arg(long)]
    feature_tap: Option<usize>,
    /// Feature-extractor weights (checkpoint format); empty uses fixed random weights.
    #[arg(long)]
    feature_weights: Option<PathBuf>,
}

/// Appends each train flag's default, taken from `TrainConfig::default()`.
fn command() -> clap::Command {
    let defaults = TrainConfig::default().to_kv();
    Cli::command().mut_subcommand("train", |mut sub| {
        for (key, value) in defaults {
            sub = sub.mut_arg(key, |arg| {
                let help = arg.get_help().map(|h| h.to_string()).unwrap_or_default();
                let shown = if value.is_empty() { "\"\"".to_string() } else { value.clone() };
                let sep = if help.is_empty() { "" } else { " " };
                arg.help(format!("{help}{sep}[default: {shown}]"))
            });
        }
        sub
    })
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 2,
        ErrorClass::Divergence => 3,
        ErrorClass::Io => 4,
        ErrorClass::Format => 5,
    }
}

fn write_text(path: &Path, text: &str) -> dequant::Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn train_config(args: &TrainArgs, matches: &ArgMatches) -> dequant::Result<TrainConfig> {
    let mut cfg = match &args.preset {
        Some(p) => TrainConfig::preset(p)?,
        None => TrainConfig::default(),
    };
    if let Some(path) = &args.config {
        cfg.apply_file(path)?;
    }
    for key in TrainConfig::KEYS {
        if let Some(mut raw) = matches.get_raw(key) {
            if let Some(v) = raw.next() {
                cfg.set(key, &v.to_string_lossy())?;
            }
        }
    }
    Ok(cfg)
}

fn model_runner(checkpoint: &Option<PathBuf>, tile: usize, overlap: usize) -> dequant::Result<ModelRunner> {
    let path = checkpoint
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("the model method needs --checkpoint".into()))?;
    ModelRunner::load(path)?.with_tiling(tile, overlap)
}

/// Returns the exit code for runs that completed without an error.
fn run(cli: Cli, matches: &ArgMatches) -> dequant::Result<u8> {
    match cli.command {
        Command::Quantize { input, output, bits } => {
            let img = read_image(&input)?;
            write_image(&output, &quantize(&img, bits)?)?;
            Ok(0)
        }
        Command::Dequantize(a) => {
            let img = match a.bits_in {
                Some(b) => read_image_with_bits(&a.input, b)?,
                None => read_image(&a.input)?,
            };
            let out = match a.method {
                MethodArg::Zp => dequantize_zp(&img, a.bits_out)?,
                MethodArg::Mig => dequantize_mig(&img, a.bits_out)?,
                MethodArg::Model => {
                    if a.bits_out != 8 {
                        return Err(Error::InvalidArgument("the model method produces 8-bit output".into()));
                    }
                    model_runner(&a.checkpoint, a.tile, a.overlap)?.dequantize(&img)?
                }
            };
            write_image(&a.output, &out)?;
            Ok(0)
        }
        Command::Train(a) => {
            let sub = matches.subcommand_matches("train").expect("train subcommand");
            let cfg = train_config(&a, sub)?;
            eprintln!(
                "training {} epochs x {} steps, output in {}",
                cfg.epochs,
                cfg.steps_per_epoch(),
                cfg.output_dir.display()
            );
            let out = run_training(&cfg, &mut |line| eprintln!("{line}"))?;
            let last = out.history.last().map(|r| r.total_g).unwrap_or(f64::NAN);
            println!("wrote {} (final total_g {last:.6})", out.output_dir.display());
            Ok(0)
        }
        Command::Eval(a) => {
            let mut methods = Vec::new();
            for m in &a.methods {
                methods.push(match m {
                    MethodArg::Zp => Method::Zp,
                    MethodArg::Mig => Method::Mig,
                    MethodArg::Model => Method::Model {
                        label: "model".into(),
                        runner: Box::new(model_runner(&a.checkpoint, a.tile, a.overlap)?),
                    },
                });
            }
            let reports = bench::run_benchmark(&a.dataset, &methods, a.bits)?;
            print!("{}", bench::format_table(&reports));
            if let Some(path) = &a.csv {
                write_text(path, &bench::to_csv(&reports))?;
            }
            Ok(0)
        }
        Command::Hist { input, out } => {
            let csv = intensity_histogram(&read_image(&input)?).to_csv();
            match out {
                Some(p) => write_text(&p, &csv)?,
                None => print!("{csv}"),
            }
            Ok(0)
        }
        Command::Selfcheck { trials } => {
            let checks = selfcheck::run(trials)?;
            let mut failed = 0;
            for c in &checks {
                let status = if c.passed() { "ok  " } else { "FAIL" };
                println!("{status} {:<12} {:<28} {:.3e} (limit {:.0e})", c.suite, c.name, c.value, c.tolerance);
                failed += !c.passed() as usize;
            }
            println!("{} checks, {failed} failed", checks.len());
            Ok(if failed > 0 { 1 } else { 0 })
        }
    }
}

fn main() -> ExitCode {
    parallel::init_from_env();
    let matches = match command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    match run(cli, &matches) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
