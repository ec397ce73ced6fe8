use std::fs;

use dequant::bitdepth::ImageBuffer;
use dequant::imageio::read_image;
use dequant::losses::AdvForm;
use dequant::training::{
    make_batch, run_training_on, Batch, Corpus, Sample, TrainConfig, Trainer, DISCRIMINATOR_FILE, GENERATOR_FILE,
    HISTORY_FILE,
};
use dequant::{Error, ParamStore, Rng};

fn tiny() -> TrainConfig {
    TrainConfig {
        crop_size: 16,
        batch_size: 2,
        epochs: 2,
        patches_per_epoch: 6,
        base_channels: 4,
        num_downscales: 1,
        num_modules: 1,
        blocks_per_module: 1,
        layers_per_block: 2,
        growth_rate: 4,
        fc_width: 16,
        ..TrainConfig::default()
    }
}

fn textured(w: usize, h: usize, seed: u64) -> ImageBuffer {
    let mut rng = Rng::new(seed);
    let phase = rng.uniform() * 6.0;
    ImageBuffer::from_fn(w, h, 3, 8, |x, y, c| {
        let v = 127.5 + 100.0 * ((x as f64 * 0.11 + y as f64 * 0.07 + c as f64 + phase).sin());
        (v + rng.uniform_in(-10.0, 10.0)).clamp(0.0, 255.0) as u8
    })
    .unwrap()
}

fn corpus(n: usize, side: usize) -> Corpus {
    let images = (0..n).map(|i| (format!("img{i}.png"), textured(side, side, i as u64))).collect();
    Corpus::new(images, side.min(16)).unwrap()
}

fn batch(cfg: &TrainConfig, corpus: &Corpus, seed: u64) -> Batch<f32> {
    Batch::stack(&make_batch(&mut Rng::new(seed), corpus, cfg).unwrap()).unwrap()
}

#[test]
fn same_seed_gives_identical_batches() {
    let cfg = tiny();
    let c = corpus(3, 40);
    let a: Vec<Sample<f32>> = make_batch(&mut Rng::new(4), &c, &cfg).unwrap();
    let b: Vec<Sample<f32>> = make_batch(&mut Rng::new(4), &c, &cfg).unwrap();
    assert_eq!(a, b);
    let other: Vec<Sample<f32>> = make_batch(&mut Rng::new(5), &c, &cfg).unwrap();
    assert_ne!(a, other);
}

#[test]
fn lbd_patches_lie_on_the_zero_padding_lattice() {
    for bits in [4u8, 6] {
        let cfg = TrainConfig { lbd_bits: bits, batch_size: 8, ..tiny() };
        let c = corpus(2, 24);
        let step = (1u32 << (8 - bits)) as f64;
        for s in make_batch::<f64>(&mut Rng::new(1), &c, &cfg).unwrap() {
            assert_eq!(s.lbd.shape(), &[3, 16, 16]);
            for (&l, &h) in s.lbd.data().iter().zip(s.hbd.data()) {
                let level = l * 255.0;
                let k = (level / step).round();
                assert!((level - k * step).abs() < 1e-9);
                // the LBD level is the HBD level with its low bits cleared
                assert_eq!(k * step, ((h * 255.0).round() / step).floor() * step);
            }
        }
    }
}

#[test]
fn images_are_chosen_uniformly() {
    let c = corpus(2, 16);
    let cfg = TrainConfig { batch_size: 1, ..tiny() };
    let mut rng = Rng::new(2024);
    let mut first = 0;
    let draws = 10_000;
    for _ in 0..draws {
        let s: Vec<Sample<f32>> = make_batch(&mut rng, &c, &cfg).unwrap();
        // the two synthetic images differ in mean brightness per channel pattern
        let probe = dequant::bitdepth::to_unit::<f32>(&c.images[0].1);
        let m0 = probe.data().iter().sum::<f32>();
        let ms = s[0].hbd.data().iter().sum::<f32>();
        first += ((ms - m0).abs() < 1e-2) as usize;
    }
    let share = first as f64 / draws as f64;
    assert!((share - 0.5).abs() <= 0.02, "share {share}");
}

#[test]
fn crop_larger_than_image_is_rejected() {
    let err = Corpus::new(vec![("small".into(), textured(8, 8, 0))], 16).unwrap_err();
    assert!(matches!(err, Error::Dataset(_)));
}

#[test]
fn generator_step_leaves_discriminator_untouched_and_vice_versa() {
    let cfg = tiny();
    let c = corpus(2, 16);
    let b = batch(&cfg, &c, 9);
    let mut t = Trainer::new(cfg).unwrap();
    let (g0, d0) = (t.g_params.clone(), t.d_params.clone());
    t.g_step(&b, 1e-3).unwrap();
    assert!(t.d_params.bit_identical(&d0));
    assert!(!t.g_params.bit_identical(&g0));
    let g1 = t.g_params.clone();
    t.d_step(&b, 1e-3).unwrap();
    assert!(t.g_params.bit_identical(&g1));
    assert!(!t.d_params.bit_identical(&d0));
}

#[test]
fn without_discriminator_total_is_content() {
    let cfg = TrainConfig { use_discriminator: false, ..tiny() };
    let c = corpus(2, 16);
    let mut t = Trainer::new(cfg.clone()).unwrap();
    assert!(t.discriminator.is_none() && t.d_params.is_empty());
    for s in 0..3 {
        let r = t.train_step(&batch(&cfg, &c, s), 1e-3).unwrap();
        assert_eq!((r.adv_g, r.adv_d, r.total_d), (0.0, 0.0, 0.0));
        assert_eq!(r.total_g, r.content);
        assert!((r.content - (cfg.beta * r.mse + (1.0 - cfg.beta) * r.perceptual)).abs() < 1e-6);
    }
}

#[test]
fn reported_total_combines_content_and_adversarial_terms() {
    for form in [AdvForm::Hinge, AdvForm::Log] {
        let cfg = TrainConfig { adv_form: form, ..tiny() };
        let c = corpus(2, 16);
        let mut t = Trainer::new(cfg.clone()).unwrap();
        let r = t.train_step(&batch(&cfg, &c, 1), 1e-4).unwrap();
        assert!((r.total_g - (r.content + 0.01 * r.adv_g)).abs() < 1e-6);
        assert!(r.adv_d > 0.0);
    }
}

fn overfit(use_discriminator: bool) -> Vec<f64> {
    let cfg = TrainConfig {
        crop_size: 64,
        batch_size: 1,
        use_discriminator,
        ..TrainConfig::desk()
    };
    let c = Corpus::new(vec![("only".into(), textured(64, 64, 77))], 64).unwrap();
    let b = Batch::stack(&make_batch::<f32>(&mut Rng::new(0), &c, &cfg).unwrap()).unwrap();
    let mut t = Trainer::new(cfg.clone()).unwrap();
    (0..50)
        .map(|_| t.train_step(&b, cfg.lr0).unwrap().total_g)
        .collect()
}

#[test]
fn overfitting_one_image_lowers_generator_loss() {
    let h = overfit(false);
    assert!(h[49] < h[0], "step 1 {} step 50 {}", h[0], h[49]);
}

#[test]
fn runs_are_reproducible_and_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(2, 20);
    let mut outs = Vec::new();
    for run in ["a", "b"] {
        let cfg = TrainConfig { output_dir: dir.path().join(run), ..tiny() };
        let out = run_training_on(&cfg, &c, &mut |_| {}).unwrap();
        assert_eq!(out.history.len(), cfg.epochs * cfg.steps_per_epoch());
        outs.push(out);
    }
    assert!(outs[0].g_params.bit_identical(&outs[1].g_params));
    assert!(outs[0].d_params.bit_identical(&outs[1].d_params));
    for f in [GENERATOR_FILE, DISCRIMINATOR_FILE, HISTORY_FILE] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let csv = fs::read_to_string(dir.path().join("a").join(HISTORY_FILE)).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines[0], "step,epoch,lr,mse,perceptual,content,adv_g,adv_d,total_g,total_d");
    assert_eq!(lines.len() - 1, 2 * 3);
    let saved = dequant::params::load_checkpoint(dir.path().join("a").join(GENERATOR_FILE)).unwrap();
    assert!(saved.bit_identical(&outs[0].g_params));
}

#[test]
fn different_seeds_initialize_differently() {
    let a = Trainer::new(tiny()).unwrap();
    let b = Trainer::new(TrainConfig { seed: 1, ..tiny() }).unwrap();
    assert!(!a.g_params.bit_identical(&b.g_params));
    let again = Trainer::new(tiny()).unwrap();
    assert!(a.g_params.bit_identical(&again.g_params));
    assert!(a.d_params.bit_identical(&again.d_params));
}

#[test]
fn untrained_generator_reproduces_its_input() {
    let cfg = tiny();
    let t = Trainer::new(cfg.clone()).unwrap();
    let b = batch(&cfg, &corpus(2, 16), 3);
    let out = t.generator.predict(&t.g_params, &b.lbd).unwrap();
    assert_eq!(out.data(), b.lbd.data());
    let _: &ParamStore<f32> = &t.g_params;
}

#[test]
fn corpus_loads_sorted_rgb_from_directory() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["b.png", "a.png"] {
        dequant::imageio::write_image(dir.path().join(name), &textured(16, 16, 1)).unwrap();
    }
    fs::write(dir.path().join("notes.txt"), "skip").unwrap();
    let c = Corpus::load(dir.path(), 16).unwrap();
    let names: Vec<_> = c.images.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["a.png", "b.png"]);
    assert_eq!(read_image(dir.path().join("a.png")).unwrap(), c.images[0].1);
}
