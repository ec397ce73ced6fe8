use std::rc::Rc;

use super::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Strides of a row-major shape.
fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

impl<T: Scalar> Graph<T> {
    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let n = xv.len();
        let total: T = xv.data().iter().copied().sum();
        self.push(
            "sum",
            Tensor::scalar(total),
            &[x],
            Box::new(move |g, _| vec![Some(vec![g[0]; n])]),
        )
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&self, x: Var) -> Result<Var> {
        let axes: Vec<usize> = (0..self.shape(x).len()).collect();
        self.reduce_mean(x, &axes)
    }

    /// Arithmetic mean over `axes`; reduced axes are dropped (all reduced
    /// gives shape `[1]`).
    pub fn reduce_mean(&self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x);
        if axes.is_empty() {
            return Err(Error::InvalidArgument("reduce_mean: empty axis set".into()));
        }
        let mut reduced = vec![false; shape.len()];
        for &a in axes {
            if a >= shape.len() || reduced[a] {
                return Err(Error::InvalidArgument(format!(
                    "reduce_mean: invalid or repeated axis {a} for rank {}",
                    shape.len()
                )));
            }
            reduced[a] = true;
        }
        let kept: Vec<usize> = shape
            .iter()
            .zip(&reduced)
            .map(|(&d, &r)| if r { 1 } else { d })
            .collect();
        let out_shape: Vec<usize> = {
            let s: Vec<usize> = shape
                .iter()
                .zip(&reduced)
                .filter(|(_, &r)| !r)
                .map(|(&d, _)| d)
                .collect();
            if s.is_empty() {
                vec![1]
            } else {
                s
            }
        };
        let count: usize = shape.iter().zip(&reduced).filter(|(_, &r)| r).map(|(&d, _)| d).product();
        let inv = T::one() / T::lit(count as f64);
        let in_strides = strides(&shape);
        let kept_strides = strides(&kept);
        // Output flat index for every input element.
        let map: Vec<usize> = (0..shape.iter().product())
            .map(|flat: usize| {
                let mut o = 0;
                for d in 0..shape.len() {
                    let i = (flat / in_strides[d]) % shape[d];
                    if !reduced[d] {
                        o += i * kept_strides[d];
                    }
                }
                o
            })
            .collect();
        let xv = self.value(x);
        let mut out = vec![T::zero(); out_shape.iter().product()];
        for (&v, &o) in xv.data().iter().zip(&map) {
            out[o] = out[o] + v;
        }
        out.iter_mut().for_each(|v| *v = *v * inv);
        let map = Rc::new(map);
        self.push(
            "reduce_mean",
            Tensor::new(out_shape, out)?,
            &[x],
            Box::new(move |g, _| vec![Some(map.iter().map(|&o| g[o] * inv).collect())]),
        )
    }

    /// Softmax along the last axis, using max subtraction.
    pub fn softmax_rows(&self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let shape = xv.shape().to_vec();
        let q = *shape.last().expect("rank >= 1");
        let mut out = vec![T::zero(); xv.len()];
        for (row, dst) in xv.data().chunks(q).zip(out.chunks_mut(q)) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for (d, &v) in dst.iter_mut().zip(row) {
                *d = (v - m).exp();
                z = z + *d;
            }
            dst.iter_mut().for_each(|d| *d = *d / z);
        }
        let y = Rc::new(out.clone());
        self.push(
            "softmax_rows",
            Tensor::new(shape, out)?,
            &[x],
            Box::new(move |g, _| {
                let mut gx = vec![T::zero(); g.len()];
                for ((gr, yr), dst) in g.chunks(q).zip(y.chunks(q)).zip(gx.chunks_mut(q)) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for ((d, &gi), &yi) in dst.iter_mut().zip(gr).zip(yr) {
                        *d = yi * (gi - dot);
                    }
                }
                vec![Some(gx)]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(g: &Graph<f64>, shape: &[usize], data: &[f64]) -> Var {
        g.leaf(Tensor::new(shape.to_vec(), data.to_vec()).unwrap().with_requires_grad(true))
    }

    #[test]
    fn mean_values_and_grad() {
        let g = Graph::new();
        let x = leaf(&g, &[3], &[1.0, 2.0, 3.0]);
        let m = g.mean(x).unwrap();
        assert_eq!(g.value(m).item(), 2.0);
        let grads = g.backward(m).unwrap();
        assert!(grads.get(x).unwrap().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn mean_of_constant_is_constant() {
        let g = Graph::new();
        let x = g.constant(Tensor::full(&[2, 3, 4], 1.25));
        let m = g.mean(x).unwrap();
        assert_eq!(g.value(m).item(), 1.25);
    }

    #[test]
    fn reduce_mean_over_inner_axes() {
        let g = Graph::new();
        let x = leaf(&g, &[2, 2, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let m = g.reduce_mean(x, &[1, 2]).unwrap();
        assert_eq!(g.shape(m), vec![2]);
        assert_eq!(g.value(m).data(), &[2.5, 6.5]);
        let m0 = Graph::new();
        let y = leaf(&m0, &[2, 2, 2], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let r = m0.reduce_mean(y, &[0]).unwrap();
        assert_eq!(m0.value(r).data(), &[3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn reduce_mean_rejects_bad_axes() {
        let g = Graph::new();
        let x = leaf(&g, &[2, 2], &[1.0; 4]);
        assert!(g.reduce_mean(x, &[]).is_err());
        assert!(g.reduce_mean(x, &[2]).is_err());
        assert!(g.reduce_mean(x, &[1, 1]).is_err());
    }

    #[test]
    fn softmax_examples() {
        let g = Graph::new();
        let x = leaf(&g, &[3, 3], &[0.0, 0.0, f64::NAN, 7.0, 7.0, 7.0, 1000.0, 0.0, 0.0]);
        // NaN row would poison the op; use finite rows only.
        assert!(g.softmax_rows(x).is_err());
        let x = leaf(&g, &[3, 2], &[0.0, 0.0, 7.0, 7.0, 1000.0, 0.0]);
        let y = g.softmax_rows(x).unwrap();
        let v = g.value(y);
        assert_eq!(&v.data()[0..2], &[0.5, 0.5]);
        assert_eq!(&v.data()[2..4], &[0.5, 0.5]);
        assert!((v.data()[4] - 1.0).abs() < 1e-15 && v.data()[5] < 1e-300);
        let x3 = leaf(&g, &[1, 3], &[-4.2; 3]);
        let y3 = g.softmax_rows(x3).unwrap();
        assert!(g.value(y3).data().iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }
}
