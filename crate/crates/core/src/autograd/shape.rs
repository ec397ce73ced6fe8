use super::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

fn dims4(op: &'static str, s: &[usize]) -> Result<[usize; 4]> {
    match *s {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(Error::shape(op, "rank", format!("expected [N,C,H,W], got {s:?}"))),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn reshape(&self, x: Var, shape: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        let out = xv.reshape(shape)?;
        self.push("reshape", out, &[x], Box::new(|g, _| vec![Some(g.to_vec())]))
    }

    /// Concatenates `[N,C_k,H,W]` tensors along the channel axis.
    pub fn concat_channels(&self, xs: &[Var]) -> Result<Var> {
        let first = dims4("concat_channels", &self.shape(xs[0]))?;
        let [n, _, h, w] = first;
        let mut chans = Vec::with_capacity(xs.len());
        for &x in xs {
            let [nx, cx, hx, wx] = dims4("concat_channels", &self.shape(x))?;
            if nx != n {
                return Err(Error::shape("concat_channels", "batch", format!("{nx} vs {n}")));
            }
            if (hx, wx) != (h, w) {
                return Err(Error::shape(
                    "concat_channels",
                    "spatial",
                    format!("{hx}x{wx} vs {h}x{w}"),
                ));
            }
            chans.push(cx);
        }
        let total: usize = chans.iter().sum();
        let plane = h * w;
        let mut out = Vec::with_capacity(n * total * plane);
        let vals: Vec<_> = xs.iter().map(|&x| self.value(x)).collect();
        for b in 0..n {
            for (v, &c) in vals.iter().zip(&chans) {
                out.extend_from_slice(&v.data()[b * c * plane..(b + 1) * c * plane]);
            }
        }
        self.push(
            "concat_channels",
            Tensor::new(vec![n, total, h, w], out)?,
            xs,
            Box::new(move |g, needs| {
                let mut grads: Vec<Option<Vec<T>>> = chans
                    .iter()
                    .zip(needs)
                    .map(|(&c, &need)| need.then(|| Vec::with_capacity(n * c * plane)))
                    .collect();
                for b in 0..n {
                    let mut off = b * total * plane;
                    for (slot, &c) in grads.iter_mut().zip(&chans) {
                        if let Some(dst) = slot {
                            dst.extend_from_slice(&g[off..off + c * plane]);
                        }
                        off += c * plane;
                    }
                }
                grads
            }),
        )
    }

    /// Nearest-neighbour 2x spatial upsampling.
    pub fn upsample_nearest2x(&self, x: Var) -> Result<Var> {
        let [n, c, h, w] = dims4("upsample_nearest2x", &self.shape(x))?;
        let xv = self.value(x);
        let (h2, w2) = (2 * h, 2 * w);
        let mut out = vec![T::zero(); n * c * h2 * w2];
        for p in 0..n * c {
            let src = &xv.data()[p * h * w..(p + 1) * h * w];
            let dst = &mut out[p * h2 * w2..(p + 1) * h2 * w2];
            for y in 0..h2 {
                for xx in 0..w2 {
                    dst[y * w2 + xx] = src[(y / 2) * w + xx / 2];
                }
            }
        }
        self.push(
            "upsample_nearest2x",
            Tensor::new(vec![n, c, h2, w2], out)?,
            &[x],
            Box::new(move |g, _| {
                let mut gx = vec![T::zero(); n * c * h * w];
                for p in 0..n * c {
                    let src = &g[p * h2 * w2..(p + 1) * h2 * w2];
                    let dst = &mut gx[p * h * w..(p + 1) * h * w];
                    for y in 0..h2 {
                        for xx in 0..w2 {
                            let d = &mut dst[(y / 2) * w + xx / 2];
                            *d = *d + src[y * w2 + xx];
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Swaps the last two axes of a `[B,M,N]` tensor.
    pub fn transpose_last2(&self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let [b, m, n] = match *s {
            [b, m, n] => [b, m, n],
            _ => return Err(Error::shape("transpose_last2", "rank", format!("expected [B,M,N], got {s:?}"))),
        };
        let xv = self.value(x);
        let out = transpose(xv.data(), b, m, n);
        self.push(
            "transpose_last2",
            Tensor::new(vec![b, n, m], out)?,
            &[x],
            Box::new(move |g, _| vec![Some(transpose(g, b, n, m))]),
        )
    }
}

fn transpose<T: Copy + Default>(src: &[T], b: usize, m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::default(); src.len()];
    for k in 0..b {
        let s = &src[k * m * n..(k + 1) * m * n];
        let d = &mut out[k * m * n..(k + 1) * m * n];
        for i in 0..m {
            for j in 0..n {
                d[j * m + i] = s[i * n + j];
            }
        }
    }
    out
}
