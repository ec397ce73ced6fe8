//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Scalar;

/// Moment estimates shadowing one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state for every tensor of one [`ParamStore`], in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new<T: Scalar>(params: &ParamStore<T>, config: AdamConfig) -> Self {
        Self {
            config,
            states: params.iter().map(|(_, t)| AdamState::new(t.len())).collect(),
        }
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }

    /// One update with learning rate `lr`; gradients are cleared afterwards.
    pub fn step<T: Scalar>(&mut self, params: &mut ParamStore<T>, lr: f64) -> Result<()> {
        adam_step(params, &mut self.states, lr, self.config)
    }
}

/// Applies one Adam update to every tensor in `params`.
///
/// Every tensor must carry a gradient. Nothing is modified when one is
/// missing.
pub fn adam_step<T: Scalar>(
    params: &mut ParamStore<T>,
    states: &mut [AdamState],
    lr: f64,
    cfg: AdamConfig,
) -> Result<()> {
    if states.len() != params.len() {
        return Err(Error::InvalidArgument(format!(
            "adam: {} states for {} parameters",
            states.len(),
            params.len()
        )));
    }
    if let Some((name, _)) = params.iter().find(|(_, t)| t.grad().is_none()) {
        return Err(Error::MissingGrad { name: name.into() });
    }
    for ((_, p), st) in params.iter_mut().zip(states.iter_mut()) {
        let g = p.take_grad().expect("checked above");
        st.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(st.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(st.t as i32);
        for (((w, &gi), m), v) in p.data_mut().iter_mut().zip(&g).zip(&mut st.m).zip(&mut st.v) {
            let gi = gi.as_f64();
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
            let update = lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
            *w = T::lit(w.as_f64() - update);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::full(&[3], v)).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = g, v_hat = g^2 -> update = lr * g / (|g| + eps)
        let mut s = store(1.0);
        let mut opt = Adam::new(&s, AdamConfig::default());
        s.get_mut("w").unwrap().accumulate_grad(&[0.5, -2.0, 1e-3]);
        opt.step(&mut s, 0.01).unwrap();
        let w = s.get("w").unwrap().data().to_vec();
        let expect = |g: f64| 1.0 - 0.01 * g / (g.abs() + 1e-8);
        for (got, g) in w.iter().zip([0.5, -2.0, 1e-3]) {
            assert!((got - expect(g)).abs() < 1e-15, "{got} vs {}", expect(g));
        }
        assert!(s.get("w").unwrap().grad().is_none());
        assert_eq!(opt.states()[0].t, 1);
    }

    #[test]
    fn constant_gradient_moves_against_sign() {
        let mut s = store(0.0);
        let mut opt = Adam::new(&s, AdamConfig::default());
        let mut prev = 0.0;
        for step in 1..=50 {
            s.get_mut("w").unwrap().accumulate_grad(&[1.0, 1.0, 1.0]);
            opt.step(&mut s, 1e-2).unwrap();
            let w = s.get("w").unwrap().data()[0];
            assert!(w < prev, "step {step}");
            prev = w;
            assert_eq!(opt.states()[0].t, step);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut s = store(0.25);
        let mut opt = Adam::new(&s, AdamConfig::default());
        s.get_mut("w").unwrap().accumulate_grad(&[0.0; 3]);
        opt.step(&mut s, 1e-3).unwrap();
        assert_eq!(s.get("w").unwrap().data(), &[0.25; 3]);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut s = store(0.0);
        let mut opt = Adam::new(&s, AdamConfig::default());
        assert!(matches!(opt.step(&mut s, 1e-3), Err(Error::MissingGrad { .. })));
        assert_eq!(opt.states()[0].t, 0);
    }
}
