use dequant::losses::{
    adversarial_losses, content_loss, content_terms, mse_loss, perceptual_loss, AdvForm, FeatureExtractor,
};
use dequant::params::save_checkpoint;
use dequant::{reference, Graph, Rng, Tensor};

fn uniform(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.uniform())
}

/// Features computed stage by stage with the loop convolution.
fn loop_features(fx: &FeatureExtractor<f64>, x: &Tensor<f64>) -> Tensor<f64> {
    let mut h = x.clone();
    for k in 1..=fx.tap() {
        let w = fx.params().get(&format!("fx.stage{k}.weight")).unwrap();
        let b = fx.params().get(&format!("fx.stage{k}.bias")).unwrap();
        let y = reference::conv2d(&h, w, Some(b.data()), if k == 1 { 1 } else { 2 }, 1);
        h = Tensor::from_fn(y.shape(), |i| y.data()[i].max(0.0));
    }
    h
}

#[test]
fn mse_matches_loop_oracle() {
    let mut rng = Rng::new(1);
    for _ in 0..20 {
        let shape = [1 + rng.below(3), 3, 2 + rng.below(9), 2 + rng.below(9)];
        let (a, b) = (uniform(&shape, &mut rng), uniform(&shape, &mut rng));
        let g = Graph::no_grad();
        let v = g.value(mse_loss(&g, g.constant(a.clone()), g.constant(b.clone())).unwrap()).item();
        assert!((v - reference::mse(a.data(), b.data())).abs() < 1e-9);
    }
}

#[test]
fn perceptual_matches_two_pass_oracle() {
    let mut rng = Rng::new(2);
    for tap in 1..=3 {
        let fx = FeatureExtractor::<f64>::fixed_seed(tap).unwrap();
        for _ in 0..5 {
            let shape = [2, 3, 8 + 4 * rng.below(3), 8];
            let (p, t) = (uniform(&shape, &mut rng), uniform(&shape, &mut rng));
            let g = Graph::no_grad();
            let v = g.value(perceptual_loss(&g, &fx, g.constant(p.clone()), g.constant(t.clone())).unwrap()).item();
            let want = reference::mse(loop_features(&fx, &p).data(), loop_features(&fx, &t).data());
            assert!((v - want).abs() < 1e-7, "tap {tap}: {v} vs {want}");
        }
        let x = uniform(&[1, 3, 8, 8], &mut rng);
        let g = Graph::no_grad();
        let xv = g.constant(x);
        assert_eq!(g.value(perceptual_loss(&g, &fx, xv, xv).unwrap()).item(), 0.0);
    }
}

#[test]
fn content_loss_is_linear_in_beta() {
    let mut rng = Rng::new(3);
    let fx = FeatureExtractor::<f64>::fixed_seed(2).unwrap();
    for _ in 0..5 {
        let (p, t) = (uniform(&[1, 3, 8, 8], &mut rng), uniform(&[1, 3, 8, 8], &mut rng));
        let g = Graph::no_grad();
        let (pv, tv) = (g.constant(p), g.constant(t));
        let at = |beta: f64| g.value(content_loss(&g, &fx, pv, tv, beta).unwrap()).item();
        let mse = g.value(mse_loss(&g, pv, tv).unwrap()).item();
        let perc = g.value(perceptual_loss(&g, &fx, pv, tv).unwrap()).item();
        assert_eq!(at(1.0), mse);
        assert_eq!(at(0.0), perc);
        assert!((at(0.5) - (0.5 * mse + 0.5 * perc)).abs() < 1e-9);
        assert_eq!(at(0.5), (at(0.0) + at(1.0)) / 2.0);
        let terms = content_terms(&g, &fx, pv, tv, 0.3).unwrap();
        let c = g.value(terms.content).item();
        assert!((c - (0.3 * g.value(terms.mse).item() + 0.7 * g.value(terms.perceptual).item())).abs() < 1e-12);
    }
}

#[test]
fn extractor_is_frozen_and_reproducible() {
    let fx = FeatureExtractor::<f64>::fixed_seed(2).unwrap();
    assert_eq!(fx, FeatureExtractor::<f64>::fixed_seed(2).unwrap());
    let before = fx.params().clone();
    let mut rng = Rng::new(4);
    let g = Graph::new();
    let pred = g.leaf(uniform(&[1, 3, 8, 8], &mut rng).with_requires_grad(true));
    let target = g.constant(uniform(&[1, 3, 8, 8], &mut rng));
    let loss = perceptual_loss(&g, &fx, pred, target).unwrap();
    let grads = g.backward(loss).unwrap();
    assert!(grads.get(pred).is_some());
    assert!(fx.params().bit_identical(&before));
    assert!(fx.params().iter().all(|(_, t)| t.grad().is_none()));
}

#[test]
fn extractor_loads_exported_weights() {
    let fx = FeatureExtractor::<f32>::random(&[8, 8], 2, 99).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fx.ckpt");
    save_checkpoint(fx.params(), &path).unwrap();
    let back = FeatureExtractor::<f32>::load(&path, 2).unwrap();
    assert!(back.params().bit_identical(fx.params()));
    assert!(FeatureExtractor::<f32>::load(&path, 3).is_err());
}

#[test]
fn adversarial_pairs_follow_their_forms() {
    let col = |v: &[f64]| Tensor::new(vec![v.len(), 1], v.to_vec()).unwrap();
    let g = Graph::no_grad();
    let (real, fake) = (g.constant(col(&[0.5, 2.0])), g.constant(col(&[-0.5, 1.0])));
    let (d, gl) = adversarial_losses(&g, real, fake, AdvForm::Hinge, false).unwrap();
    assert!((g.value(d).item() - (0.25 + (0.25 + 1.0))).abs() < 1e-12);
    assert_eq!(g.value(gl).item(), -0.25);
    let (d, gl) = adversarial_losses(&g, real, fake, AdvForm::Log, false).unwrap();
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let want_d = -((sig(0.5).ln() + sig(2.0).ln()) / 2.0) - ((1.0 - sig(-0.5)).ln() + (1.0 - sig(1.0)).ln()) / 2.0;
    assert!((g.value(d).item() - want_d).abs() < 1e-12);
    let want_g = ((1.0 - sig(-0.5)).ln() + (1.0 - sig(1.0)).ln()) / 2.0;
    assert!((g.value(gl).item() - want_g).abs() < 1e-12);
    assert!(g.value(gl).item() <= 0.0);
    assert_eq!("hinge".parse::<AdvForm>().unwrap(), AdvForm::Hinge);
    assert!("wasserstein".parse::<AdvForm>().is_err());
}
