use dequant::bench::ModelRunner;
use dequant::model::{Discriminator, DiscriminatorConfig, Generator, GeneratorConfig};
use dequant::params::{decode_checkpoint, encode_checkpoint, load_checkpoint_matching, save_checkpoint};
use dequant::training::TrainConfig;
use dequant::{Error, ErrorClass, Graph, ParamStore, Rng, Tensor};

fn count_generator(cfg: GeneratorConfig) -> usize {
    let p: ParamStore<f32> = Generator::new(cfg).unwrap().init(&mut Rng::new(0)).unwrap();
    p.num_elements()
}

// Frozen from a closed-form count of every conv, attention and linear layer.
#[test]
fn parameter_counts() {
    assert_eq!(count_generator(GeneratorConfig::default()), 4_844_551);
    assert_eq!(
        count_generator(GeneratorConfig { use_attention: false, ..GeneratorConfig::default() }),
        4_516_867
    );
    assert_eq!(count_generator(TrainConfig::desk().generator_config()), 634_885);
    let d: ParamStore<f32> = Discriminator::new(DiscriminatorConfig::default())
        .unwrap()
        .init(&mut Rng::new(0))
        .unwrap();
    assert_eq!(d.num_elements(), 10_080_963);
}

#[test]
fn architecture_is_recovered_from_parameters() {
    for cfg in [
        GeneratorConfig::default(),
        GeneratorConfig { use_attention: false, num_modules: 3, ..GeneratorConfig::default() },
        TrainConfig::desk().generator_config(),
    ] {
        let p: ParamStore<f32> = Generator::new(cfg.clone()).unwrap().init(&mut Rng::new(1)).unwrap();
        assert_eq!(GeneratorConfig::infer(&p).unwrap(), cfg);
    }
}

#[test]
fn discriminator_emits_one_logit_per_image() {
    let cfg = DiscriminatorConfig { input_size: 32, fc_width: 8, ..DiscriminatorConfig::default() };
    let d = Discriminator::new(cfg).unwrap();
    let p: ParamStore<f32> = d.init(&mut Rng::new(2)).unwrap();
    let g = Graph::no_grad();
    let bound = p.bind_frozen(&g);
    let x = g.constant(Tensor::full(&[3, 3, 32, 32], 0.5f32));
    let y = d.forward(&g, &bound, x).unwrap();
    assert_eq!(g.shape(y), vec![3, 1]);
    let wrong = g.constant(Tensor::full(&[1, 3, 16, 16], 0.5f32));
    assert!(d.forward(&g, &bound, wrong).is_err());
}

#[test]
fn mismatched_checkpoint_names_the_tensor() {
    let cfg = TrainConfig::desk().generator_config();
    let gen = Generator::new(cfg).unwrap();
    let good: ParamStore<f32> = gen.init(&mut Rng::new(3)).unwrap();
    let mut bad = ParamStore::<f32>::new();
    for (name, t) in good.iter() {
        let t = if name == "mod1.block0.conv2.weight" { Tensor::zeros(&[32, 80, 3, 3]) } else { t.clone() };
        bad.insert(name, t).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.ckpt");
    save_checkpoint(&bad, &path).unwrap();

    let err = load_checkpoint_matching(&path, &good).unwrap_err();
    match &err {
        Error::ShapeMismatch { name, expected, found } => {
            assert_eq!(name, "mod1.block0.conv2.weight");
            assert_eq!(expected, &vec![32, 128, 3, 3]);
            assert_eq!(found, &vec![32, 80, 3, 3]);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(err.class(), ErrorClass::Format);
    assert!(err.to_string().contains("mod1.block0.conv2.weight"));
}

#[test]
fn runner_rejects_inconsistent_checkpoint() {
    let gen = Generator::new(TrainConfig::desk().generator_config()).unwrap();
    let good: ParamStore<f32> = gen.init(&mut Rng::new(4)).unwrap();
    let mut bad = ParamStore::<f32>::new();
    for (name, t) in good.iter() {
        let t = if name == "dec.1.weight" { Tensor::zeros(&[32, 90, 3, 3]) } else { t.clone() };
        bad.insert(name, t).unwrap();
    }
    let err = ModelRunner::new(bad).unwrap_err();
    assert!(matches!(&err, Error::ShapeMismatch { name, .. } if name == "dec.1.weight"), "{err}");
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let gen = Generator::new(TrainConfig::desk().generator_config()).unwrap();
    let p: ParamStore<f32> = gen.init(&mut Rng::new(5)).unwrap();
    let bytes = encode_checkpoint(&p);
    assert!(decode_checkpoint(&bytes).unwrap().bit_identical(&p));

    let mut magic = bytes.clone();
    magic[1] = b'X';
    assert!(matches!(decode_checkpoint(&magic), Err(Error::VersionMismatch(_))));
    let mut version = bytes.clone();
    version[4] = 9;
    assert!(matches!(decode_checkpoint(&version), Err(Error::VersionMismatch(_))));
    for cut in [3, 10, bytes.len() / 2, bytes.len() - 1] {
        let err = decode_checkpoint(&bytes[..cut]).unwrap_err();
        assert!(matches!(err, Error::Truncated { .. }), "cut {cut}: {err}");
        assert_eq!(err.class(), ErrorClass::Format);
    }
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(decode_checkpoint(&trailing).is_err());
}
