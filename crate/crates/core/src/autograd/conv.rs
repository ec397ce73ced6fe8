use super::linalg::mm;
use super::{Graph, Var};
use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy)]
struct Geometry {
    c_in: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }
}

fn im2col<T: Scalar>(x: &[T], g: &Geometry) -> Vec<T> {
    let (p, plane) = (g.cols(), g.h * g.w);
    let mut cols = vec![T::zero(); g.rows() * p];
    for ci in 0..g.c_in {
        let src = &x[ci * plane..(ci + 1) * plane];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let r = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[r * p..(r + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let row = &src[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[oy * g.ow + ox] = row[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Scalar>(cols: &[T], g: &Geometry) -> Vec<T> {
    let (p, plane) = (g.cols(), g.h * g.w);
    let mut x = vec![T::zero(); g.c_in * plane];
    for ci in 0..g.c_in {
        let dst = &mut x[ci * plane..(ci + 1) * plane];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let r = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[r * p..(r + 1) * p];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            let d = &mut dst[iy as usize * g.w + ix as usize];
                            *d = *d + src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
    x
}

impl<T: Scalar> Graph<T> {
    /// 2-D cross-correlation with zero padding.
    ///
    /// `x [N,C_in,H,W]`, `kernel [C_out,C_in,kH,kW]`, `bias [C_out]`.
    pub fn conv2d(
        &self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let sx = self.shape(x);
        let sk = self.shape(kernel);
        let [n, c_in, h, w] = match *sx {
            [n, c, h, w] => [n, c, h, w],
            _ => return Err(Error::shape("conv2d", "input rank", format!("expected [N,C,H,W], got {sx:?}"))),
        };
        let [c_out, kc, kh, kw] = match *sk {
            [o, c, kh, kw] => [o, c, kh, kw],
            _ => return Err(Error::shape("conv2d", "kernel rank", format!("expected [O,C,kH,kW], got {sk:?}"))),
        };
        if kc != c_in {
            return Err(Error::shape(
                "conv2d",
                "C_in",
                format!("input has {c_in} channels, kernel expects {kc}"),
            ));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d: stride must be positive".into()));
        }
        if h + 2 * padding < kh {
            return Err(Error::shape("conv2d", "H", format!("{h} + 2*{padding} < kernel height {kh}")));
        }
        if w + 2 * padding < kw {
            return Err(Error::shape("conv2d", "W", format!("{w} + 2*{padding} < kernel width {kw}")));
        }
        let geo = Geometry {
            c_in,
            h,
            w,
            kh,
            kw,
            stride,
            pad: padding,
            oh: (h + 2 * padding - kh) / stride + 1,
            ow: (w + 2 * padding - kw) / stride + 1,
        };
        let bias_val = match bias {
            Some(b) => {
                let sb = self.shape(b);
                if sb != [c_out] {
                    return Err(Error::shape("conv2d", "bias", format!("{sb:?} vs [{c_out}]")));
                }
                Some(self.value(b))
            }
            None => None,
        };
        let xv = self.value(x);
        let kv = self.value(kernel);
        let (rows, p) = (geo.rows(), geo.cols());
        let in_sz = c_in * h * w;
        let out_sz = c_out * p;

        let (xd, kd) = (xv.data(), kv.data());
        let bd = bias_val.as_ref().map(|b| b.data());
        let mut out = vec![T::zero(); n * out_sz];
        parallel::for_each_chunk(&mut out, out_sz, |i, dst| {
            let xi = &xd[i * in_sz..(i + 1) * in_sz];
            let owned;
            let cols: &[T] = if geo.is_pointwise() {
                xi
            } else {
                owned = im2col(xi, &geo);
                &owned
            };
            T::gemm(
                c_out,
                rows,
                p,
                T::one(),
                (kd, rows as isize, 1),
                (cols, p as isize, 1),
                T::zero(),
                (dst, p as isize, 1),
            );
            if let Some(bd) = bd {
                for (row, &b) in dst.chunks_mut(p).zip(bd) {
                    row.iter_mut().for_each(|v| *v = *v + b);
                }
            }
        });

        let mut parents = vec![x, kernel];
        if let Some(b) = bias {
            parents.push(b);
        }
        self.push(
            "conv2d",
            Tensor::new(vec![n, c_out, geo.oh, geo.ow], out)?,
            &parents,
            Box::new(move |g, needs| {
                let (xd, kd) = (xv.data(), kv.data());
                let gx = needs[0].then(|| {
                    parallel::map_indices(n, |i| {
                        let gi = &g[i * out_sz..(i + 1) * out_sz];
                        // dcols [rows, P] = K^T [rows, C_out] x dOut [C_out, P]
                        let dcols = mm(rows, c_out, p, (kd, 1, rows as isize), (gi, p as isize, 1));
                        if geo.is_pointwise() {
                            dcols
                        } else {
                            col2im(&dcols, &geo)
                        }
                    })
                    .concat()
                });
                let gk = needs[1].then(|| {
                    let partials = parallel::map_indices(n, |i| {
                        let xi = &xd[i * in_sz..(i + 1) * in_sz];
                        let gi = &g[i * out_sz..(i + 1) * out_sz];
                        let owned;
                        let cols: &[T] = if geo.is_pointwise() {
                            xi
                        } else {
                            owned = im2col(xi, &geo);
                            &owned
                        };
                        // dK [C_out, rows] = dOut [C_out, P] x cols^T [P, rows]
                        mm(c_out, p, rows, (gi, p as isize, 1), (cols, 1, p as isize))
                    });
                    let mut acc = vec![T::zero(); c_out * rows];
                    for part in partials {
                        acc.iter_mut().zip(&part).for_each(|(a, &v)| *a = *a + v);
                    }
                    acc
                });
                let mut res = vec![gx, gk];
                if needs.len() == 3 {
                    res.push(needs[2].then(|| {
                        let mut gb = vec![T::zero(); c_out];
                        for i in 0..n {
                            for (o, acc) in gb.iter_mut().enumerate() {
                                let s = (i * c_out + o) * p;
                                *acc = *acc + g[s..s + p].iter().copied().sum::<T>();
                            }
                        }
                        gb
                    }));
                }
                res
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ones_kernel_counts_overlap() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let k = g.constant(Tensor::full(&[1, 1, 3, 3], 1.0));
        let b = g.constant(Tensor::zeros(&[1]));
        let y = g.conv2d(x, k, Some(b), 1, 1).unwrap();
        let v = g.value(y);
        assert_eq!(v.shape(), &[1, 1, 3, 3]);
        assert_eq!(v.data()[4], 9.0);
        for corner in [0, 2, 6, 8] {
            assert_eq!(v.data()[corner], 4.0);
        }
    }

    #[test]
    fn identity_kernel_copies_input() {
        let g = Graph::<f64>::new();
        let data: Vec<f64> = (0..2 * 5 * 4).map(|i| (i as f64).sin()).collect();
        let x = g.constant(Tensor::new(vec![2, 1, 5, 4], data.clone()).unwrap());
        let k = g.constant(Tensor::full(&[1, 1, 1, 1], 1.0));
        let y = g.conv2d(x, k, None, 1, 0).unwrap();
        assert_eq!(g.value(y).data(), data.as_slice());
    }

    #[test]
    fn stride_two_output_size() {
        let g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(&[1, 2, 8, 6]));
        let k = g.constant(Tensor::zeros(&[4, 2, 3, 3]));
        let y = g.conv2d(x, k, None, 2, 1).unwrap();
        assert_eq!(g.shape(y), vec![1, 4, 4, 3]);
    }

    #[test]
    fn channel_mismatch_names_c_in() {
        let g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(&[1, 2, 4, 4]));
        let k = g.constant(Tensor::zeros(&[1, 3, 3, 3]));
        match g.conv2d(x, k, None, 1, 1) {
            Err(Error::Shape { dim, .. }) => assert_eq!(dim, "C_in"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_small_input_names_dimension() {
        let g = Graph::<f32>::new();
        let x = g.constant(Tensor::zeros(&[1, 1, 2, 8]));
        let k = g.constant(Tensor::zeros(&[1, 1, 3, 3]));
        assert!(matches!(g.conv2d(x, k, None, 1, 0), Err(Error::Shape { dim: "H", .. })));
    }
}
