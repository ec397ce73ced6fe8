use super::{Graph, Var};
use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::{Scalar, Tensor};

/// Strided read-only matrix view: (data, row stride, col stride).
type View<'a, T> = (&'a [T], isize, isize);

/// View of `op(x)` as a `rows x cols` matrix, where `x` is stored row-major
/// as `rows x cols` (plain) or `cols x rows` (transposed).
fn view<T>(data: &[T], rows: usize, cols: usize, transposed: bool) -> View<'_, T> {
    if transposed {
        (data, 1, rows as isize)
    } else {
        (data, cols as isize, 1)
    }
}

fn flip<T>(v: View<'_, T>) -> View<'_, T> {
    (v.0, v.2, v.1)
}

/// Dense `m x n` product of two strided views.
pub(crate) fn mm<T: Scalar>(m: usize, k: usize, n: usize, a: View<'_, T>, b: View<'_, T>) -> Vec<T> {
    let mut c = vec![T::zero(); m * n];
    T::gemm(m, k, n, T::one(), a, b, T::zero(), (&mut c, n as isize, 1));
    c
}

fn dims3(op: &'static str, s: &[usize]) -> Result<[usize; 3]> {
    match *s {
        [b, r, c] => Ok([b, r, c]),
        _ => Err(Error::shape(op, "rank", format!("expected rank 3, got {s:?}"))),
    }
}

impl<T: Scalar> Graph<T> {
    /// `[M,K] x [K,N] -> [M,N]`.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k) = match *sa {
            [m, k] => (m, k),
            _ => return Err(Error::shape("matmul", "rank", format!("lhs {sa:?}"))),
        };
        let (k2, n) = match *sb {
            [k2, n] => (k2, n),
            _ => return Err(Error::shape("matmul", "rank", format!("rhs {sb:?}"))),
        };
        if k != k2 {
            return Err(Error::shape("matmul", "inner", format!("{sa:?} x {sb:?}")));
        }
        let a3 = self.reshape(a, &[1, m, k])?;
        let b3 = self.reshape(b, &[1, k, n])?;
        let c = self.bmm(a3, b3, false, false)?;
        self.reshape(c, &[m, n])
    }

    /// Batched `op(a) x op(b)`, where `op` optionally swaps the last two axes.
    /// `op(a)` is `[B,M,K]`, `op(b)` is `[B,K,N]`, result `[B,M,N]`.
    pub fn bmm(&self, a: Var, b: Var, trans_a: bool, trans_b: bool) -> Result<Var> {
        let [ba, ra, ca] = dims3("bmm", &self.shape(a))?;
        let [bb, rb, cb] = dims3("bmm", &self.shape(b))?;
        if ba != bb {
            return Err(Error::shape("bmm", "batch", format!("{ba} vs {bb}")));
        }
        let (m, k) = if trans_a { (ca, ra) } else { (ra, ca) };
        let (k2, n) = if trans_b { (cb, rb) } else { (rb, cb) };
        if k != k2 {
            return Err(Error::shape("bmm", "inner", format!("{k} vs {k2}")));
        }
        let (av, bv) = (self.value(a), self.value(b));
        let batch = ba;
        let (sa, sb) = (m * k, k * n);
        let (ad, bd) = (av.data(), bv.data());
        let parts = parallel::map_indices(batch, |i| {
            mm(
                m,
                k,
                n,
                view(&ad[i * sa..(i + 1) * sa], m, k, trans_a),
                view(&bd[i * sb..(i + 1) * sb], k, n, trans_b),
            )
        });
        let out = parts.concat();
        self.push(
            "bmm",
            Tensor::new(vec![batch, m, n], out)?,
            &[a, b],
            Box::new(move |g, needs| {
                let (ad, bd) = (av.data(), bv.data());
                let sc = m * n;
                let ga = needs[0].then(|| {
                    parallel::map_indices(batch, |i| {
                        let gc = view(&g[i * sc..(i + 1) * sc], m, n, false);
                        let opb = view(&bd[i * sb..(i + 1) * sb], k, n, trans_b);
                        if trans_a {
                            // dA [K,M] = op(B) dC^T
                            mm(k, n, m, opb, flip(gc))
                        } else {
                            // dA [M,K] = dC op(B)^T
                            mm(m, n, k, gc, flip(opb))
                        }
                    })
                    .concat()
                });
                let gb = needs[1].then(|| {
                    parallel::map_indices(batch, |i| {
                        let gc = view(&g[i * sc..(i + 1) * sc], m, n, false);
                        let opa = view(&ad[i * sa..(i + 1) * sa], m, k, trans_a);
                        if trans_b {
                            // dB [N,K] = dC^T op(A)
                            mm(n, m, k, flip(gc), opa)
                        } else {
                            // dB [K,N] = op(A)^T dC
                            mm(k, m, n, flip(opa), gc)
                        }
                    })
                    .concat()
                });
                vec![ga, gb]
            }),
        )
    }

    /// Fully connected layer: `x [N,F]`, `w [O,F]`, `b [O]` -> `x w^T + b`.
    pub fn linear(&self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (sx, sw) = (self.shape(x), self.shape(w));
        let (n, f) = match *sx {
            [n, f] => (n, f),
            _ => return Err(Error::shape("linear", "input rank", format!("{sx:?}"))),
        };
        let (o, f2) = match *sw {
            [o, f2] => (o, f2),
            _ => return Err(Error::shape("linear", "weight rank", format!("{sw:?}"))),
        };
        if f != f2 {
            return Err(Error::shape("linear", "in_features", format!("input {f} vs weight {f2}")));
        }
        let xv = self.value(x);
        let wv = self.value(w);
        let mut out = mm(n, f, o, view(xv.data(), n, f, false), view(wv.data(), f, o, true));
        let mut parents = vec![x, w];
        if let Some(b) = b {
            let sb = self.shape(b);
            if sb != [o] {
                return Err(Error::shape("linear", "bias", format!("{sb:?} vs [{o}]")));
            }
            let bv = self.value(b);
            for row in out.chunks_mut(o) {
                row.iter_mut().zip(bv.data()).for_each(|(y, &bb)| *y = *y + bb);
            }
            parents.push(b);
        }
        self.push(
            "linear",
            Tensor::new(vec![n, o], out)?,
            &parents,
            Box::new(move |g, needs| {
                let gc = view(g, n, o, false);
                let gx = needs[0].then(|| mm(n, o, f, gc, view(wv.data(), o, f, false)));
                let gw = needs[1].then(|| mm(o, n, f, flip(gc), view(xv.data(), n, f, false)));
                let mut res = vec![gx, gw];
                if needs.len() == 3 {
                    res.push(needs[2].then(|| {
                        let mut gb = vec![T::zero(); o];
                        for row in g.chunks(o) {
                            gb.iter_mut().zip(row).for_each(|(a, &v)| *a = *a + v);
                        }
                        gb
                    }));
                }
                res
            }),
        )
    }
}
