use std::fs;

use dequant::bench::{run_benchmark, score_image, to_csv, Method, ModelRunner};
use dequant::bitdepth::{dequantize_zp, quantize, ImageBuffer};
use dequant::imageio::write_image;
use dequant::model::{Generator, GeneratorConfig};
use dequant::{ParamStore, Rng};

fn small_config() -> GeneratorConfig {
    GeneratorConfig {
        base_channels: 4,
        num_downscales: 2,
        num_modules: 1,
        blocks_per_module: 1,
        layers_per_block: 2,
        growth_rate: 4,
        ..GeneratorConfig::default()
    }
}

fn photo(w: usize, h: usize, seed: u64) -> ImageBuffer {
    let mut rng = Rng::new(seed);
    ImageBuffer::from_fn(w, h, 3, 8, |x, y, c| {
        let v = 40.0 + 1.3 * x as f64 + 0.9 * y as f64 + 20.0 * c as f64 + rng.uniform_in(-6.0, 6.0);
        v.clamp(0.0, 255.0) as u8
    })
    .unwrap()
}

fn zero_tail_runner(budget: usize) -> ModelRunner {
    let cfg = GeneratorConfig { attention_budget: budget, ..small_config() };
    let generator = Generator::new(cfg).unwrap();
    let params: ParamStore<f32> = generator.init(&mut Rng::new(8)).unwrap();
    let runner = ModelRunner::new(params.clone()).unwrap();
    ModelRunner { generator, params, ..runner }
}

#[test]
fn zero_tail_model_scores_exactly_like_zero_padding() {
    let runner = zero_tail_runner(1 << 24);
    let model = Method::Model { label: "model".into(), runner: Box::new(runner) };
    for (i, (w, h)) in [(16, 16), (37, 23), (64, 48), (11, 70)].into_iter().enumerate() {
        let img = photo(w, h, i as u64);
        for bits in [4u8, 6] {
            let (zp_p, zp_s) = score_image(&img, &Method::Zp, bits).unwrap();
            let (m_p, m_s) = score_image(&img, &model, bits).unwrap();
            assert!((zp_p - m_p).abs() < 1e-9, "{w}x{h}: {zp_p} vs {m_p}");
            assert!((zp_s - m_s).abs() < 1e-9);
        }
    }
}

#[test]
fn tiled_inference_matches_zero_padding_on_large_images() {
    // a budget this small forces the tiled path above 8x8 bottleneck
    let runner = zero_tail_runner(64 * 64).with_tiling(32, 8).unwrap();
    let img = photo(100, 75, 3);
    let lbd = quantize(&img, 4).unwrap();
    assert_eq!(runner.dequantize(&lbd).unwrap(), dequantize_zp(&lbd, 8).unwrap());
}

#[test]
fn tiling_arguments_are_validated() {
    let runner = zero_tail_runner(1 << 24);
    assert!(runner.clone().with_tiling(30, 8).is_err());
    assert!(runner.clone().with_tiling(8, 4).is_err());
    assert!(runner.clone().with_tiling(32, 32).is_err());
    assert!(runner.with_tiling(16, 4).is_ok());
}

#[test]
fn benchmark_reports_means_and_failures() {
    let dir = tempfile::tempdir().unwrap();
    for (i, name) in ["c.png", "a.png", "b.ppm"].into_iter().enumerate() {
        write_image(dir.path().join(name), &photo(20 + i, 18, i as u64)).unwrap();
    }
    fs::write(dir.path().join("broken.png"), b"not a png").unwrap();
    let reports = run_benchmark(dir.path(), &[Method::Zp, Method::Mig], 4).unwrap();
    assert_eq!(reports.len(), 2);
    for r in &reports {
        let names: Vec<_> = r.images.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["a.png", "b.ppm", "c.png"]);
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.failures[0].0, "broken.png");
        let mean = r.images.iter().map(|s| s.psnr).sum::<f64>() / 3.0;
        assert!((r.mean_psnr - mean).abs() < 1e-9);
        let mean = r.images.iter().map(|s| s.ssim).sum::<f64>() / 3.0;
        assert!((r.mean_ssim - mean).abs() < 1e-9);
        assert_eq!(r.bit_path(), "4->8");
    }
    assert!(reports[1].mean_psnr > reports[0].mean_psnr);
    let csv = to_csv(&reports);
    assert_eq!(csv.lines().next(), Some("filename,method,bits,psnr,ssim"));
    assert_eq!(csv.lines().count(), 7);
    assert!(run_benchmark(dir.path(), &[Method::Zp], 8).is_err());
}
