//! Central finite-difference checks of reverse-mode gradients.

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Worst coordinate found by a gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

fn eval<F>(f: &F, x: &Tensor<f64>) -> Result<f64>
where
    F: Fn(&Graph<f64>, Var) -> Result<Var>,
{
    let g = Graph::no_grad();
    let v = g.constant(x.clone());
    let out = f(&g, v)?;
    let val = g.value(out);
    if val.len() != 1 {
        return Err(Error::NotScalar {
            shape: val.shape().to_vec(),
        });
    }
    Ok(val.item())
}

/// Analytic gradient of a scalar function at `x`.
pub fn analytic_grad<F>(f: &F, x: &Tensor<f64>) -> Result<Vec<f64>>
where
    F: Fn(&Graph<f64>, Var) -> Result<Var>,
{
    let g = Graph::new();
    let v = g.leaf(x.clone().with_requires_grad(true));
    let loss = f(&g, v)?;
    let mut grads = g.backward(loss)?;
    Ok(grads.take(v).unwrap_or_else(|| vec![0.0; x.len()]))
}

/// Compares the analytic gradient against central differences on every
/// coordinate of `x`. Returns the maximum of
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&Graph<f64>, Var) -> Result<Var>,
{
    let all: Vec<usize> = (0..x.len()).collect();
    Ok(grad_check_at(&f, x, eps, &all)?.max_relative_error)
}

/// Like [`grad_check`] but restricted to at most `max_coords` coordinates
/// drawn without replacement from `rng` (all of them if `x` is smaller).
pub fn grad_check_sampled<F>(
    f: F,
    x: &Tensor<f64>,
    eps: f64,
    max_coords: usize,
    rng: &mut Rng,
) -> Result<GradCheckReport>
where
    F: Fn(&Graph<f64>, Var) -> Result<Var>,
{
    let mut idx: Vec<usize> = (0..x.len()).collect();
    if idx.len() > max_coords {
        // partial Fisher-Yates
        for i in 0..max_coords {
            let j = i + rng.below(idx.len() - i);
            idx.swap(i, j);
        }
        idx.truncate(max_coords);
        idx.sort_unstable();
    }
    grad_check_at(&f, x, eps, &idx)
}

pub fn grad_check_at<F>(f: &F, x: &Tensor<f64>, eps: f64, coords: &[usize]) -> Result<GradCheckReport>
where
    F: Fn(&Graph<f64>, Var) -> Result<Var>,
{
    let analytic = analytic_grad(f, x)?;
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: coords.len(),
    };
    let mut probe = x.clone();
    for &i in coords {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = eval(f, &probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = eval(f, &probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
        if err >= report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_passes() {
        let mut rng = Rng::new(3);
        let x = Tensor::from_fn(&[4, 5], |_| rng.normal());
        let err = grad_check(
            |g, x| {
                let s = g.square(x)?;
                g.sum(s)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // relu at exactly 0: analytic subgradient 0, central difference 0.5.
        let x = Tensor::new(vec![1], vec![0.0]).unwrap();
        let err = grad_check(|g, x| { let r = g.relu(x)?; g.sum(r) }, &x, 1e-3).unwrap();
        assert!((err - 0.5).abs() < 1e-9);
    }
}
