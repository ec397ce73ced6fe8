use std::rc::Rc;

use super::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Pointwise nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

impl<T: Scalar> Graph<T> {
    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<Vec<usize>> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(Error::shape(op, "operand shape", format!("{sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    /// Unary map with derivative computed from the input value.
    fn unary(
        &self,
        op: &'static str,
        x: Var,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T) -> T + 'static,
    ) -> Result<Var> {
        let xv = self.value(x);
        let out: Vec<T> = xv.data().iter().map(|&v| f(v)).collect();
        let out = Rc::new(Tensor::new(xv.shape().to_vec(), out)?);
        let keep = Rc::clone(&out);
        self.push(
            op,
            (*out).clone(),
            &[x],
            Box::new(move |g, _| {
                let grad = g
                    .iter()
                    .zip(xv.data())
                    .zip(keep.data())
                    .map(|((&g, &x), &y)| g * df(x, y))
                    .collect();
                vec![Some(grad)]
            }),
        )
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("add", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let out = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
        self.push(
            "add",
            Tensor::new(shape, out)?,
            &[a, b],
            Box::new(|g, _| vec![Some(g.to_vec()), Some(g.to_vec())]),
        )
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("sub", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let out = av.data().iter().zip(bv.data()).map(|(&x, &y)| x - y).collect();
        self.push(
            "sub",
            Tensor::new(shape, out)?,
            &[a, b],
            Box::new(|g, needs| {
                let gb = needs[1].then(|| g.iter().map(|&v| -v).collect());
                vec![Some(g.to_vec()), gb]
            }),
        )
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let shape = self.same_shape("mul", a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let out = av.data().iter().zip(bv.data()).map(|(&x, &y)| x * y).collect();
        self.push(
            "mul",
            Tensor::new(shape, out)?,
            &[a, b],
            Box::new(move |g, needs| {
                let ga = needs[0].then(|| g.iter().zip(bv.data()).map(|(&g, &y)| g * y).collect());
                let gb = needs[1].then(|| g.iter().zip(av.data()).map(|(&g, &x)| g * x).collect());
                vec![ga, gb]
            }),
        )
    }

    pub fn square(&self, x: Var) -> Result<Var> {
        self.unary("square", x, |v| v * v, |x, _| x + x)
    }

    pub fn neg(&self, x: Var) -> Result<Var> {
        self.scale(x, -1.0)
    }

    /// `c * x` for a constant `c`.
    pub fn scale(&self, x: Var, c: f64) -> Result<Var> {
        let c = T::lit(c);
        self.unary("scale", x, move |v| v * c, move |_, _| c)
    }

    /// `x + c` for a constant `c`.
    pub fn add_scalar(&self, x: Var, c: f64) -> Result<Var> {
        let c = T::lit(c);
        self.unary("add_scalar", x, move |v| v + c, |_, _| T::one())
    }

    /// `s * x` where `s` is a tracked one-element tensor.
    pub fn mul_scalar_var(&self, x: Var, s: Var) -> Result<Var> {
        let ss = self.shape(s);
        if ss.iter().product::<usize>() != 1 {
            return Err(Error::shape("mul_scalar_var", "scalar operand", format!("{ss:?}")));
        }
        let (xv, sv) = (self.value(x), self.value(s));
        let sval = sv.item();
        let out = xv.data().iter().map(|&v| v * sval).collect();
        self.push(
            "mul_scalar_var",
            Tensor::new(xv.shape().to_vec(), out)?,
            &[x, s],
            Box::new(move |g, needs| {
                let gx = needs[0].then(|| g.iter().map(|&g| g * sval).collect());
                let gs = needs[1].then(|| vec![g.iter().zip(xv.data()).map(|(&g, &x)| g * x).sum()]);
                vec![gx, gs]
            }),
        )
    }

    pub fn activation(&self, x: Var, kind: Activation) -> Result<Var> {
        match kind {
            Activation::Relu => self.unary(
                "relu",
                x,
                |v| v.max(T::zero()),
                |x, _| if x > T::zero() { T::one() } else { T::zero() },
            ),
            Activation::LeakyRelu(slope) => {
                let s = T::lit(slope);
                self.unary(
                    "leaky_relu",
                    x,
                    move |v| if v > T::zero() { v } else { v * s },
                    move |x, _| if x > T::zero() { T::one() } else { s },
                )
            }
            Activation::Sigmoid => self.unary("sigmoid", x, sigmoid, |_, y| y * (T::one() - y)),
            Activation::Tanh => self.unary("tanh", x, |v| v.tanh(), |_, y| T::one() - y * y),
        }
    }

    pub fn relu(&self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Relu)
    }

    pub fn leaky_relu(&self, x: Var, slope: f64) -> Result<Var> {
        self.activation(x, Activation::LeakyRelu(slope))
    }

    pub fn softplus(&self, x: Var) -> Result<Var> {
        self.unary("softplus", x, softplus, |x, _| sigmoid(x))
    }

    /// Clamp to `[lo, hi]`; the gradient passes where `lo <= x <= hi`.
    pub fn clamp(&self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        let (lo, hi) = (T::lit(lo), T::lit(hi));
        self.unary(
            "clamp",
            x,
            move |v| v.max(lo).min(hi),
            move |x, _| if x >= lo && x <= hi { T::one() } else { T::zero() },
        )
    }
}
