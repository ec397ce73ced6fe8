//! Slow, loop-per-definition implementations used as oracles for the fast
//! paths. Nothing here shares code with the graph operations.

use crate::bitdepth::ImageBuffer;
use crate::metrics::{gaussian_window, SSIM_K1, SSIM_K2, SSIM_WINDOW};
use crate::tensor::Tensor;

/// Direct 2-D convolution (cross-correlation) with zero padding.
pub fn conv2d(x: &Tensor<f64>, k: &Tensor<f64>, bias: Option<&[f64]>, stride: usize, pad: usize) -> Tensor<f64> {
    let (n, ci, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (co, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let (xd, kd) = (x.data(), k.data());
    let mut out = vec![0.0; n * co * oh * ow];
    for b in 0..n {
        for o in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.map_or(0.0, |bb| bb[o]);
                    for c in 0..ci {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = xd[((b * ci + c) * h + iy as usize) * w + ix as usize];
                                acc += xv * kd[((o * ci + c) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((b * co + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Tensor::new(vec![n, co, oh, ow], out).expect("shape matches")
}

pub fn matmul(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for t in 0..k {
                s += a.data()[i * k + t] * b.data()[t * n + j];
            }
            out[i * n + j] = s;
        }
    }
    Tensor::new(vec![m, n], out).expect("shape matches")
}

fn concat(parts: &[Tensor<f64>]) -> Tensor<f64> {
    let (n, h, w) = (parts[0].shape()[0], parts[0].shape()[2], parts[0].shape()[3]);
    let c_total: usize = parts.iter().map(|p| p.shape()[1]).sum();
    let mut out = Vec::with_capacity(n * c_total * h * w);
    for b in 0..n {
        for p in parts {
            let c = p.shape()[1];
            out.extend_from_slice(&p.data()[b * c * h * w..(b + 1) * c * h * w]);
        }
    }
    Tensor::new(vec![n, c_total, h, w], out).expect("shape matches")
}

fn leaky(t: &Tensor<f64>, slope: f64) -> Tensor<f64> {
    Tensor::from_fn(t.shape(), |i| {
        let v = t.data()[i];
        if v > 0.0 {
            v
        } else {
            slope * v
        }
    })
}

/// Dense residual block with explicit concatenation. `layers[k]` is the
/// `(weight, bias)` of conv layer `k`, `fuse` the 1x1 fusion.
pub fn dense_res_block(
    x: &Tensor<f64>,
    layers: &[(Tensor<f64>, Tensor<f64>)],
    fuse: &(Tensor<f64>, Tensor<f64>),
    slope: f64,
) -> Tensor<f64> {
    let mut feats = vec![x.clone()];
    for (w, b) in layers {
        let input = concat(&feats);
        feats.push(leaky(&conv2d(&input, w, Some(b.data()), 1, 1), slope));
    }
    let fused = conv2d(&concat(&feats), &fuse.0, Some(fuse.1.data()), 1, 0);
    Tensor::from_fn(x.shape(), |i| fused.data()[i] + x.data()[i])
}

/// Self-attention with the `q x q` weight matrix built entry by entry.
/// Returns `(output, rho)` with `rho[b][j][i]`.
pub fn self_attention(
    x: &Tensor<f64>,
    wg: &Tensor<f64>,
    wh: &Tensor<f64>,
    wz: &Tensor<f64>,
    sigma: f64,
) -> (Tensor<f64>, Vec<Vec<Vec<f64>>>) {
    let (n, p, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let q = h * w;
    let a = wg.shape()[0];
    let xd = x.data();
    let at = |b: usize, c: usize, i: usize| xd[(b * p + c) * q + i];
    // row r of a 1x1 projection applied at location i
    let proj = |wt: &Tensor<f64>, b: usize, r: usize, i: usize| -> f64 {
        (0..p).map(|c| wt.data()[r * p + c] * at(b, c, i)).sum()
    };
    let mut out = vec![0.0; n * p * q];
    let mut rhos = Vec::with_capacity(n);
    for b in 0..n {
        let mut rho = vec![vec![0.0; q]; q];
        for (j, row) in rho.iter_mut().enumerate() {
            let scores: Vec<f64> = (0..q)
                .map(|i| (0..a).map(|r| proj(wg, b, r, i) * proj(wh, b, r, j)).sum())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for i in 0..q {
                row[i] = e[i] / z;
            }
        }
        for c in 0..p {
            for j in 0..q {
                let o: f64 = (0..q).map(|i| rho[j][i] * proj(wz, b, c, i)).sum();
                out[(b * p + c) * q + j] = sigma * o + at(b, c, j);
            }
        }
        rhos.push(rho);
    }
    (Tensor::new(x.shape().to_vec(), out).expect("shape matches"), rhos)
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (b[i] - a[i]) * (b[i] - a[i]);
    }
    s / a.len() as f64
}

pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let mut s = 0.0;
    for y in 0..a.height() {
        for x in 0..a.width() {
            for c in 0..a.channels() {
                let d = a.get(x, y, c) as f64 - b.get(x, y, c) as f64;
                s += d * d;
            }
        }
    }
    let m = s / (a.width() * a.height() * a.channels()) as f64;
    if m == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0 * 255.0 / m).log10()
    }
}

/// SSIM with every window's weighted statistics computed from scratch.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let g = gaussian_window();
    let c1 = (SSIM_K1 * 255.0f64).powi(2);
    let c2 = (SSIM_K2 * 255.0f64).powi(2);
    let mut per_channel = 0.0;
    for c in 0..a.channels() {
        let mut total = 0.0;
        let mut count = 0usize;
        for y0 in 0..=a.height() - SSIM_WINDOW {
            for x0 in 0..=a.width() - SSIM_WINDOW {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in 0..SSIM_WINDOW {
                    for dx in 0..SSIM_WINDOW {
                        let wgt = g[dy] * g[dx];
                        let u = a.get(x0 + dx, y0 + dy, c) as f64;
                        let v = b.get(x0 + dx, y0 + dy, c) as f64;
                        mx += wgt * u;
                        my += wgt * v;
                        sxx += wgt * u * u;
                        syy += wgt * v * v;
                        sxy += wgt * u * v;
                    }
                }
                let (vx, vy, cov) = (sxx - mx * mx, syy - my * my, sxy - mx * my);
                total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                count += 1;
            }
        }
        per_channel += total / count as f64;
    }
    per_channel / a.channels() as f64
}
