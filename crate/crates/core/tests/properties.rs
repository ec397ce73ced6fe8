use dequant::bitdepth::{dequantize_mig, dequantize_zp, from_unit, quantize, to_unit, ImageBuffer};
use dequant::metrics::{psnr, ssim};
use dequant::model::{Generator, GeneratorConfig};
use dequant::params::{decode_checkpoint, encode_checkpoint};
use dequant::{ParamStore, Rng, Tensor};
use proptest::prelude::*;

fn image(max_side: usize) -> impl Strategy<Value = ImageBuffer> {
    (1..=max_side, 1..=max_side, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(|(w, h, c)| {
        proptest::collection::vec(any::<u8>(), w * h * c)
            .prop_map(move |px| ImageBuffer::new(w, h, c, 8, px).unwrap())
    })
}

fn image_pair(min: usize, max: usize) -> impl Strategy<Value = (ImageBuffer, ImageBuffer)> {
    (min..=max, min..=max, prop_oneof![Just(1usize), Just(3usize)]).prop_flat_map(|(w, h, c)| {
        let n = w * h * c;
        (proptest::collection::vec(any::<u8>(), n), proptest::collection::vec(any::<u8>(), n)).prop_map(
            move |(a, b)| (ImageBuffer::new(w, h, c, 8, a).unwrap(), ImageBuffer::new(w, h, c, 8, b).unwrap()),
        )
    })
}

fn small_generator(use_attention: bool) -> Generator {
    Generator::new(GeneratorConfig {
        base_channels: 4,
        num_downscales: 1,
        num_modules: 1,
        blocks_per_module: 1,
        layers_per_block: 2,
        growth_rate: 2,
        use_attention,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn psnr_is_symmetric((a, b) in image_pair(1, 16)) {
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
    }

    #[test]
    fn ssim_is_symmetric_and_bounded((a, b) in image_pair(11, 18)) {
        let s = ssim(&a, &b).unwrap();
        prop_assert!((s - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(s <= 1.0 + 1e-12 && s >= -1.0 - 1e-12);
        prop_assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn quantize_inverts_both_baselines(img in image(12), bits in 1u8..=7) {
        let q = quantize(&img, bits).unwrap();
        prop_assert_eq!(quantize(&dequantize_zp(&q, 8).unwrap(), bits).unwrap(), q.clone());
        prop_assert_eq!(quantize(&dequantize_mig(&q, 8).unwrap(), bits).unwrap(), q.clone());
        let low = (1u8 << (8 - bits)) - 1;
        prop_assert!(dequantize_zp(&q, 8).unwrap().pixels().iter().all(|v| v & low == 0));
    }

    #[test]
    fn unit_round_trip(img in image(12), bits in 1u8..=7) {
        let q = quantize(&img, bits).unwrap();
        prop_assert_eq!(from_unit(&to_unit::<f32>(&q), bits).unwrap(), q.clone());
        prop_assert_eq!(from_unit(&to_unit::<f64>(&img), 8).unwrap(), img);
    }

    #[test]
    fn zero_tail_generator_is_identity(seed in any::<u64>(), side in 1usize..=2, bits in 2u8..=6) {
        let gen = small_generator(true);
        let params: ParamStore<f64> = gen.init(&mut Rng::new(seed)).unwrap();
        let mut rng = Rng::new(seed ^ 1);
        let s = 8 * side;
        let hbd = ImageBuffer::from_fn(s, s, 3, 8, |_, _, _| rng.below(256) as u8).unwrap();
        let lbd = to_unit::<f64>(&dequantize_zp(&quantize(&hbd, bits).unwrap(), 8).unwrap());
        let out = gen.predict(&params, &lbd).unwrap();
        prop_assert_eq!(out.data(), lbd.data());
    }

    #[test]
    fn generator_output_stays_in_unit_range(seed in any::<u64>(), scale in 0.1f64..20.0) {
        let gen = small_generator(true);
        let mut params: ParamStore<f64> = gen.init(&mut Rng::new(seed)).unwrap();
        let mut rng = Rng::new(seed ^ 2);
        for (_, t) in params.iter_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = rng.normal() * scale);
        }
        let x = Tensor::from_fn(&[2, 3, 8, 8], |_| rng.uniform());
        let y = gen.predict(&params, &x).unwrap();
        prop_assert!(y.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn shapes_preserved_without_attention(n in 1usize..=2, h in 4usize..=7, w in 4usize..=7, seed in any::<u64>()) {
        let gen = small_generator(false);
        let params: ParamStore<f64> = gen.init(&mut Rng::new(seed)).unwrap();
        prop_assert!(params.names().all(|name| !name.contains("att")));
        let x = Tensor::from_fn(&[n, 3, 2 * h, 2 * w], |i| (i % 7) as f64 / 7.0);
        let y = gen.predict(&params, &x).unwrap();
        prop_assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(
        tensors in proptest::collection::vec(proptest::collection::vec(-1e30f32..1e30f32, 1..20), 1..5)
    ) {
        let mut store = ParamStore::<f32>::new();
        for (i, d) in tensors.into_iter().enumerate() {
            store.insert(format!("t{i}.weight"), Tensor::new(vec![d.len()], d).unwrap()).unwrap();
        }
        prop_assert!(decode_checkpoint(&encode_checkpoint(&store)).unwrap().bit_identical(&store));
    }
}
