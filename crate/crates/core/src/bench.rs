//! Dataset benchmark: quantize, de-quantize with each method, score
//! against the original.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::bitdepth::{dequantize_mig, dequantize_zp, from_unit, quantize, to_unit, ImageBuffer};
use crate::error::{Error, Result};
use crate::imageio::{list_images, read_image};
use crate::metrics::{psnr, ssim};
use crate::model::{Generator, GeneratorConfig};
use crate::params::{load_checkpoint, ParamStore};
use crate::parallel;
use crate::tensor::Tensor;

pub const DEFAULT_TILE: usize = 64;
pub const DEFAULT_OVERLAP: usize = 8;

/// A trained generator plus the tiling used at inference.
#[derive(Debug, Clone)]
pub struct ModelRunner {
    pub generator: Generator,
    pub params: ParamStore<f32>,
    pub tile: usize,
    pub overlap: usize,
}

fn tile_starts(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let stride = tile - overlap;
    let mut v: Vec<usize> = (0..).map(|i| i * stride).take_while(|&s| s + tile < len).collect();
    v.push(len - tile);
    v
}

/// Edge-replicating pad of a `[1,C,H,W]` tensor to `[1,C,h,w]`.
fn pad_edge(x: &Tensor<f32>, h: usize, w: usize) -> Tensor<f32> {
    let [_, c, h0, w0] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let d = x.data();
    Tensor::from_fn(&[1, c, h, w], |i| {
        let (ch, yx) = (i / (h * w), i % (h * w));
        let (y, xx) = ((yx / w).min(h0 - 1), (yx % w).min(w0 - 1));
        d[(ch * h0 + y) * w0 + xx]
    })
}

fn window(x: &Tensor<f32>, y0: usize, x0: usize, th: usize, tw: usize) -> Tensor<f32> {
    let [c, h, w] = [x.shape()[1], x.shape()[2], x.shape()[3]];
    let d = x.data();
    Tensor::from_fn(&[1, c, th, tw], |i| {
        let (ch, yx) = (i / (th * tw), i % (th * tw));
        d[(ch * h + y0 + yx / tw) * w + x0 + yx % tw]
    })
}

impl ModelRunner {
    pub fn new(params: ParamStore<f32>) -> Result<Self> {
        let config = GeneratorConfig::infer(&params)?;
        let generator = Generator::new(config)?;
        let fresh: ParamStore<f32> = generator.init(&mut crate::rng::Rng::new(0))?;
        fresh.check_compatible(&params)?;
        Ok(Self {
            generator,
            params,
            tile: DEFAULT_TILE,
            overlap: DEFAULT_OVERLAP,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(load_checkpoint(path)?)
    }

    pub fn with_tiling(mut self, tile: usize, overlap: usize) -> Result<Self> {
        let s = self.generator.config.scale();
        if tile % s != 0 || tile / s < 4 || overlap >= tile {
            return Err(Error::InvalidArgument(format!(
                "tile {tile} must be a multiple of {s}, at least {}, and exceed the overlap {overlap}",
                4 * s
            )));
        }
        self.tile = tile;
        self.overlap = overlap;
        Ok(self)
    }

    fn fits_attention(&self, h: usize, w: usize) -> bool {
        let s = self.generator.config.scale();
        let q = (h / s) * (w / s);
        !self.generator.config.use_attention || q.saturating_mul(q) <= self.generator.config.attention_budget
    }

    /// Runs the generator on a `[1,3,H,W]` unit tensor. Inputs are padded to
    /// a legal size, and split into overlapping tiles (averaged where they
    /// overlap) when attention would exceed its budget.
    pub fn infer(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let [h, w] = [x.shape()[2], x.shape()[3]];
        let s = self.generator.config.scale();
        let legal = |n: usize| n.div_ceil(s).max(4) * s;
        let (hp, wp) = (legal(h), legal(w));
        let padded = if (hp, wp) == (h, w) { x.clone() } else { pad_edge(x, hp, wp) };
        let full = if self.fits_attention(hp, wp) {
            self.generator.predict(&self.params, &padded)?
        } else {
            self.infer_tiled(&padded)?
        };
        if (hp, wp) == (h, w) {
            return Ok(full);
        }
        Ok(window(&full, 0, 0, h, w))
    }

    fn infer_tiled(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let [c, h, w] = [x.shape()[1], x.shape()[2], x.shape()[3]];
        let (th, tw) = (self.tile.min(h), self.tile.min(w));
        let mut sum = vec![0.0f32; c * h * w];
        let mut count = vec![0u32; h * w];
        for &y0 in &tile_starts(h, th, self.overlap) {
            for &x0 in &tile_starts(w, tw, self.overlap) {
                let out = self.generator.predict(&self.params, &window(x, y0, x0, th, tw))?;
                let d = out.data();
                for ch in 0..c {
                    for yy in 0..th {
                        for xx in 0..tw {
                            sum[(ch * h + y0 + yy) * w + x0 + xx] += d[(ch * th + yy) * tw + xx];
                        }
                    }
                }
                for yy in 0..th {
                    for xx in 0..tw {
                        count[(y0 + yy) * w + x0 + xx] += 1;
                    }
                }
            }
        }
        let data = sum
            .iter()
            .enumerate()
            .map(|(i, &v)| v / count[i % (h * w)] as f32)
            .collect();
        Tensor::new(vec![1, c, h, w], data)
    }

    /// De-quantizes a low bit-depth image to 8 bits (RGB output).
    pub fn dequantize(&self, lbd: &ImageBuffer) -> Result<ImageBuffer> {
        let zp = if lbd.bit_depth() < 8 { dequantize_zp(lbd, 8)? } else { lbd.clone() };
        let x = to_unit::<f32>(&zp.to_rgb());
        from_unit(&self.infer(&x)?, 8)
    }
}

pub enum Method {
    Zp,
    Mig,
    Model { label: String, runner: Box<ModelRunner> },
}

impl Method {
    pub fn label(&self) -> &str {
        match self {
            Self::Zp => "zp",
            Self::Mig => "mig",
            Self::Model { label, .. } => label,
        }
    }

    pub fn apply(&self, lbd: &ImageBuffer) -> Result<ImageBuffer> {
        match self {
            Self::Zp => dequantize_zp(lbd, 8),
            Self::Mig => dequantize_mig(lbd, 8),
            Self::Model { runner, .. } => runner.dequantize(lbd),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageScore {
    pub name: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub bits: u8,
    pub images: Vec<ImageScore>,
    pub failures: Vec<(String, String)>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

impl EvalReport {
    pub fn new(method: impl Into<String>, bits: u8, images: Vec<ImageScore>, failures: Vec<(String, String)>) -> Self {
        let n = images.len() as f64;
        let mean = |f: fn(&ImageScore) -> f64| {
            if images.is_empty() {
                f64::NAN
            } else {
                images.iter().map(f).sum::<f64>() / n
            }
        };
        let (mean_psnr, mean_ssim) = (mean(|s| s.psnr), mean(|s| s.ssim));
        Self {
            method: method.into(),
            bits,
            images,
            failures,
            mean_psnr,
            mean_ssim,
        }
    }

    pub fn bit_path(&self) -> String {
        format!("{}->8", self.bits)
    }
}

/// Scores one 8-bit image with one method.
pub fn score_image(img: &ImageBuffer, method: &Method, bits: u8) -> Result<(f64, f64)> {
    let reference = img.to_rgb();
    let out = method.apply(&quantize(&reference, bits)?)?;
    Ok((psnr(&out, &reference)?, ssim(&out, &reference)?))
}

/// Every image of `dir` (sorted by name) scored with each method in turn.
/// Unreadable or unscorable images are listed as failures.
pub fn run_benchmark(dir: impl AsRef<Path>, methods: &[Method], bits: u8) -> Result<Vec<EvalReport>> {
    if !(1..=7).contains(&bits) {
        return Err(Error::InvalidArgument(format!("bits {bits} outside 1..=7")));
    }
    let files = list_images(dir.as_ref())?;
    if files.is_empty() {
        return Err(Error::Dataset(format!("no images in {}", dir.as_ref().display())));
    }
    let loaded: Vec<(String, Result<ImageBuffer>)> = files
        .iter()
        .map(|f| (file_name(f), read_image(f).and_then(check_8bit)))
        .collect();
    Ok(methods
        .iter()
        .map(|m| {
            let results = parallel::map_indices(loaded.len(), |i| match &loaded[i].1 {
                Ok(img) => score_image(img, m, bits).map_err(|e| e.to_string()),
                Err(e) => Err(e.to_string()),
            });
            let mut scores = Vec::new();
            let mut failures = Vec::new();
            for ((name, _), r) in loaded.iter().zip(results) {
                match r {
                    Ok((p, s)) => scores.push(ImageScore {
                        name: name.clone(),
                        psnr: p,
                        ssim: s,
                    }),
                    Err(e) => failures.push((name.clone(), e)),
                }
            }
            EvalReport::new(m.label(), bits, scores, failures)
        })
        .collect())
}

fn check_8bit(img: ImageBuffer) -> Result<ImageBuffer> {
    if img.bit_depth() != 8 {
        return Err(Error::InvalidArgument(format!(
            "reference images must be 8-bit, got {}-bit",
            img.bit_depth()
        )));
    }
    Ok(img)
}

fn file_name(p: &PathBuf) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Human-readable summary, one row per method.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut s = String::new();
    writeln!(s, "{:<16} {:>6} {:>7} {:>12} {:>10} {:>7}", "method", "bits", "images", "PSNR [dB]", "SSIM", "failed").unwrap();
    for r in reports {
        writeln!(
            s,
            "{:<16} {:>6} {:>7} {:>12.4} {:>10.4} {:>7}",
            r.method,
            r.bit_path(),
            r.images.len(),
            r.mean_psnr,
            r.mean_ssim,
            r.failures.len()
        )
        .unwrap();
    }
    for r in reports {
        for (name, e) in &r.failures {
            writeln!(s, "failed [{}] {name}: {e}", r.method).unwrap();
        }
    }
    s
}

/// `filename,method,bits,psnr,ssim`, one row per scored image.
pub fn to_csv(reports: &[EvalReport]) -> String {
    let mut s = String::from("filename,method,bits,psnr,ssim\n");
    for r in reports {
        for img in &r.images {
            writeln!(s, "{},{},{},{},{}", img.name, r.method, r.bits, img.psnr, img.ssim).unwrap();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiles_cover_the_axis() {
        assert_eq!(tile_starts(32, 64, 8), vec![0]);
        assert_eq!(tile_starts(64, 64, 8), vec![0]);
        assert_eq!(tile_starts(100, 64, 8), vec![0, 36]);
        assert_eq!(tile_starts(200, 64, 8), vec![0, 56, 112, 136]);
    }

    #[test]
    fn report_means() {
        let r = EvalReport::new(
            "zp",
            4,
            vec![
                ImageScore { name: "a".into(), psnr: 30.0, ssim: 0.5 },
                ImageScore { name: "b".into(), psnr: 31.0, ssim: 0.7 },
            ],
            vec![],
        );
        assert_eq!(r.mean_psnr, 30.5);
        assert!((r.mean_ssim - 0.6).abs() < 1e-12);
        assert!(to_csv(&[r.clone()]).contains("b,zp,4,31,0.7"));
        assert!(format_table(&[r]).contains("4->8"));
    }
}
