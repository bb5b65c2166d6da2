//! Layer primitives with hand-written backward passes.
//!
//! Feature maps are `[batch, channel, height, width]`, token sequences are
//! `[batch, tokens, width]`, both row-major in a flat `Vec<f64>`.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape does not match data length"
        );
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dims4(&self) -> (usize, usize, usize, usize) {
        (self.shape[0], self.shape[1], self.shape[2], self.shape[3])
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

fn conv_out(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

/// Output positions `o` with `0 <= o·stride + k - pad < n_in`.
#[inline]
fn valid_range(k: usize, stride: usize, pad: usize, n_in: usize, n_out: usize) -> (usize, usize) {
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    let hi_excl = if n_in + pad > k {
        ((n_in + pad - k - 1) / stride + 1).min(n_out)
    } else {
        0
    };
    (lo, hi_excl.max(lo))
}

/// Cross-correlation without bias. `w` is `[c_out, c_in, k, k]`.
pub fn conv2d(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (b, ci, h, wd) = x.dims4();
    let (co, wci, k, _) = w.dims4();
    assert_eq!(ci, wci, "conv input channels");
    let (oh, ow) = (conv_out(h, k, stride, pad), conv_out(wd, k, stride, pad));
    let mut y = Tensor::zeros(&[b, co, oh, ow]);
    for bi in 0..b {
        for o in 0..co {
            let out = &mut y.data[(bi * co + o) * oh * ow..][..oh * ow];
            for c in 0..ci {
                let inp = &x.data[(bi * ci + c) * h * wd..][..h * wd];
                for ky in 0..k {
                    let (y0, y1) = valid_range(ky, stride, pad, h, oh);
                    for kx in 0..k {
                        let wv = w.data[((o * ci + c) * k + ky) * k + kx];
                        let (x0, x1) = valid_range(kx, stride, pad, wd, ow);
                        for oy in y0..y1 {
                            let iy = oy * stride + ky - pad;
                            let row_in = &inp[iy * wd..][..wd];
                            let row_out = &mut out[oy * ow..][..ow];
                            if stride == 1 {
                                let off = kx as isize - pad as isize;
                                for ox in x0..x1 {
                                    row_out[ox] += wv * row_in[(ox as isize + off) as usize];
                                }
                            } else {
                                for ox in x0..x1 {
                                    row_out[ox] += wv * row_in[ox * stride + kx - pad];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Returns `(dx, dw)`; `dx` is skipped when `need_dx` is false.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    stride: usize,
    pad: usize,
    need_dx: bool,
) -> (Option<Tensor>, Tensor) {
    let (b, ci, h, wd) = x.dims4();
    let (co, _, k, _) = w.dims4();
    let (_, _, oh, ow) = dy.dims4();
    let mut dx = need_dx.then(|| Tensor::zeros(&x.shape));
    let mut dw = Tensor::zeros(&w.shape);
    for bi in 0..b {
        for o in 0..co {
            let g = &dy.data[(bi * co + o) * oh * ow..][..oh * ow];
            for c in 0..ci {
                let base = (bi * ci + c) * h * wd;
                let inp = &x.data[base..][..h * wd];
                for ky in 0..k {
                    let (y0, y1) = valid_range(ky, stride, pad, h, oh);
                    for kx in 0..k {
                        let widx = ((o * ci + c) * k + ky) * k + kx;
                        let wv = w.data[widx];
                        let (x0, x1) = valid_range(kx, stride, pad, wd, ow);
                        let mut acc = 0.0;
                        for oy in y0..y1 {
                            let iy = oy * stride + ky - pad;
                            let grow = &g[oy * ow..][..ow];
                            let row_in = &inp[iy * wd..][..wd];
                            for ox in x0..x1 {
                                acc += grow[ox] * row_in[ox * stride + kx - pad];
                            }
                            if let Some(dx) = dx.as_mut() {
                                let row_dx = &mut dx.data[base + iy * wd..][..wd];
                                for ox in x0..x1 {
                                    row_dx[ox * stride + kx - pad] += wv * grow[ox];
                                }
                            }
                        }
                        dw.data[widx] += acc;
                    }
                }
            }
        }
    }
    (dx, dw)
}

/// Batch normalization state kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    pub train: bool,
}

/// Per-channel batch statistics observed in training mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    /// Unbiased variance, used for the running estimate.
    pub var_unbiased: Vec<f64>,
}

/// Training mode normalizes with batch statistics (biased variance);
/// inference mode with the running estimates.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    eps: f64,
    train: bool,
) -> (Tensor, BnCache, Option<BnStats>) {
    let (b, c, h, w) = x.dims4();
    let hw = h * w;
    let m = (b * hw) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    let mut stats = None;
    if train {
        for ch in 0..c {
            let mut s = 0.0;
            for bi in 0..b {
                s += x.data[(bi * c + ch) * hw..][..hw].iter().sum::<f64>();
            }
            let mu = s / m;
            let mut v = 0.0;
            for bi in 0..b {
                v += x.data[(bi * c + ch) * hw..][..hw]
                    .iter()
                    .map(|a| (a - mu) * (a - mu))
                    .sum::<f64>();
            }
            mean[ch] = mu;
            var[ch] = v / m;
        }
        let var_unbiased = var
            .iter()
            .map(|v| if m > 1.0 { v * m / (m - 1.0) } else { *v })
            .collect();
        stats = Some(BnStats {
            mean: mean.clone(),
            var_unbiased,
        });
    } else {
        mean.copy_from_slice(running_mean);
        var.copy_from_slice(running_var);
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = Tensor::zeros(&x.shape);
    let mut y = Tensor::zeros(&x.shape);
    for bi in 0..b {
        for ch in 0..c {
            let off = (bi * c + ch) * hw;
            for k in off..off + hw {
                let xh = (x.data[k] - mean[ch]) * inv_std[ch];
                xhat.data[k] = xh;
                y.data[k] = gamma[ch] * xh + beta[ch];
            }
        }
    }
    (
        y,
        BnCache {
            xhat,
            inv_std,
            train,
        },
        stats,
    )
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn batch_norm_backward(
    dy: &Tensor,
    gamma: &[f64],
    cache: &BnCache,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let (b, c, h, w) = dy.dims4();
    let hw = h * w;
    let m = (b * hw) as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for bi in 0..b {
        for ch in 0..c {
            let off = (bi * c + ch) * hw;
            for k in off..off + hw {
                dgamma[ch] += dy.data[k] * cache.xhat.data[k];
                dbeta[ch] += dy.data[k];
            }
        }
    }
    let mut dx = Tensor::zeros(&dy.shape);
    for bi in 0..b {
        for ch in 0..c {
            let off = (bi * c + ch) * hw;
            let g = gamma[ch] * cache.inv_std[ch];
            if cache.train {
                let (sd, sdx) = (dbeta[ch] / m, dgamma[ch] / m);
                for k in off..off + hw {
                    dx.data[k] = g * (dy.data[k] - sd - cache.xhat.data[k] * sdx);
                }
            } else {
                for k in off..off + hw {
                    dx.data[k] = g * dy.data[k];
                }
            }
        }
    }
    (dx, dgamma, dbeta)
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| v.max(0.0)).collect(),
    }
}

/// Backward through ReLU given its output.
pub fn relu_backward(y: &Tensor, dy: &Tensor) -> Tensor {
    Tensor {
        shape: y.shape.clone(),
        data: y
            .data
            .iter()
            .zip(&dy.data)
            .map(|(&y, &g)| if y > 0.0 { g } else { 0.0 })
            .collect(),
    }
}

/// 2×2 max pooling with stride 2. Also returns the flat argmax per output.
pub fn max_pool2(x: &Tensor) -> (Tensor, Vec<usize>) {
    let (b, c, h, w) = x.dims4();
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Tensor::zeros(&[b, c, oh, ow]);
    let mut arg = vec![0; b * c * oh * ow];
    for bc in 0..b * c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = bc * h * w + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let k = bc * h * w + (2 * oy + dy) * w + 2 * ox + dx;
                    if x.data[k] > x.data[best] {
                        best = k;
                    }
                }
                let o = (bc * oh + oy) * ow + ox;
                y.data[o] = x.data[best];
                arg[o] = best;
            }
        }
    }
    (y, arg)
}

pub fn max_pool2_backward(x_shape: &[usize], arg: &[usize], dy: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(x_shape);
    for (o, &k) in arg.iter().enumerate() {
        dx.data[k] += dy.data[o];
    }
    dx
}

/// `y = x·Wᵀ + b` over the last axis. `w` is `[out, in]`.
pub fn linear(x: &Tensor, w: &Tensor, b: &[f64]) -> Tensor {
    let din = *x.shape.last().unwrap();
    let (dout, wdin) = (w.shape[0], w.shape[1]);
    assert_eq!(din, wdin, "linear input width");
    let rows = x.len() / din;
    let mut shape = x.shape.clone();
    *shape.last_mut().unwrap() = dout;
    let mut y = Tensor::zeros(&shape);
    for r in 0..rows {
        let xr = &x.data[r * din..][..din];
        let yr = &mut y.data[r * dout..][..dout];
        for (o, yo) in yr.iter_mut().enumerate() {
            let wr = &w.data[o * din..][..din];
            *yo = b[o] + xr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    y
}

/// Returns `(dx, dw, db)`.
pub fn linear_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> (Tensor, Tensor, Vec<f64>) {
    let din = *x.shape.last().unwrap();
    let dout = w.shape[0];
    let rows = x.len() / din;
    let mut dx = Tensor::zeros(&x.shape);
    let mut dw = Tensor::zeros(&w.shape);
    let mut db = vec![0.0; dout];
    for r in 0..rows {
        let xr = &x.data[r * din..][..din];
        let gr = &dy.data[r * dout..][..dout];
        let dxr = &mut dx.data[r * din..][..din];
        for o in 0..dout {
            let g = gr[o];
            if g == 0.0 {
                continue;
            }
            db[o] += g;
            let wr = &w.data[o * din..][..din];
            let dwr = &mut dw.data[o * din..][..din];
            for i in 0..din {
                dxr[i] += g * wr[i];
                dwr[i] += g * xr[i];
            }
        }
    }
    (dx, dw, db)
}

#[derive(Debug, Clone)]
pub struct LnCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
}

/// Layer normalization over the last axis.
pub fn layer_norm(x: &Tensor, gamma: &[f64], beta: &[f64], eps: f64) -> (Tensor, LnCache) {
    let d = *x.shape.last().unwrap();
    let rows = x.len() / d;
    let mut y = Tensor::zeros(&x.shape);
    let mut xhat = Tensor::zeros(&x.shape);
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x.data[r * d..][..d];
        let mu = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + eps).sqrt();
        inv_std[r] = is;
        for i in 0..d {
            let xh = (xr[i] - mu) * is;
            xhat.data[r * d + i] = xh;
            y.data[r * d + i] = gamma[i] * xh + beta[i];
        }
    }
    (y, LnCache { xhat, inv_std })
}

/// Returns `(dx, dgamma, dbeta)`.
pub fn layer_norm_backward(
    dy: &Tensor,
    gamma: &[f64],
    cache: &LnCache,
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let d = *dy.shape.last().unwrap();
    let rows = dy.len() / d;
    let mut dx = Tensor::zeros(&dy.shape);
    let mut dgamma = vec![0.0; d];
    let mut dbeta = vec![0.0; d];
    let mut dxh = vec![0.0; d];
    for r in 0..rows {
        let g = &dy.data[r * d..][..d];
        let xh = &cache.xhat.data[r * d..][..d];
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..d {
            dgamma[i] += g[i] * xh[i];
            dbeta[i] += g[i];
            dxh[i] = g[i] * gamma[i];
            s1 += dxh[i];
            s2 += dxh[i] * xh[i];
        }
        let is = cache.inv_std[r];
        for i in 0..d {
            dx.data[r * d + i] = is * (dxh[i] - s1 / d as f64 - xh[i] * s2 / d as f64);
        }
    }
    (dx, dgamma, dbeta)
}

/// In-place numerically stable softmax over consecutive chunks of `n`.
pub fn softmax_rows(v: &mut [f64], n: usize) {
    for row in v.chunks_mut(n) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for x in row.iter_mut() {
            *x = (*x - m).exp();
            s += *x;
        }
        for x in row.iter_mut() {
            *x /= s;
        }
    }
}

/// Multi-head self-attention state for the backward pass.
#[derive(Debug, Clone)]
pub struct AttnCache {
    pub q: Tensor,
    pub k: Tensor,
    pub v: Tensor,
    /// Attention probabilities `[batch, heads, tokens, tokens]`.
    pub probs: Vec<f64>,
    /// Concatenated head outputs before the output projection.
    pub ctx: Tensor,
}

pub struct AttnWeights<'a> {
    pub wq: &'a Tensor,
    pub bq: &'a [f64],
    pub wk: &'a Tensor,
    pub bk: &'a [f64],
    pub wv: &'a Tensor,
    pub bv: &'a [f64],
    pub wo: &'a Tensor,
    pub bo: &'a [f64],
}

pub struct AttnGrads {
    pub dx: Tensor,
    pub dwq: Tensor,
    pub dbq: Vec<f64>,
    pub dwk: Tensor,
    pub dbk: Vec<f64>,
    pub dwv: Tensor,
    pub dbv: Vec<f64>,
    pub dwo: Tensor,
    pub dbo: Vec<f64>,
}

/// Scaled dot-product self-attention over `[batch, tokens, width]`.
pub fn self_attention(x: &Tensor, p: &AttnWeights, heads: usize) -> (Tensor, AttnCache) {
    let (b, t, d) = (x.shape[0], x.shape[1], x.shape[2]);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let q = linear(x, p.wq, p.bq);
    let k = linear(x, p.wk, p.bk);
    let v = linear(x, p.wv, p.bv);
    let mut probs = vec![0.0; b * heads * t * t];
    let mut ctx = Tensor::zeros(&[b, t, d]);
    for bi in 0..b {
        for hd in 0..heads {
            let pr = &mut probs[(bi * heads + hd) * t * t..][..t * t];
            for i in 0..t {
                let qi = &q.data[(bi * t + i) * d + hd * dh..][..dh];
                for j in 0..t {
                    let kj = &k.data[(bi * t + j) * d + hd * dh..][..dh];
                    pr[i * t + j] = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            softmax_rows(pr, t);
            for i in 0..t {
                let out = &mut ctx.data[(bi * t + i) * d + hd * dh..][..dh];
                for j in 0..t {
                    let a = pr[i * t + j];
                    let vj = &v.data[(bi * t + j) * d + hd * dh..][..dh];
                    for e in 0..dh {
                        out[e] += a * vj[e];
                    }
                }
            }
        }
    }
    let y = linear(&ctx, p.wo, p.bo);
    (
        y,
        AttnCache {
            q,
            k,
            v,
            probs,
            ctx,
        },
    )
}

pub fn self_attention_backward(
    x: &Tensor,
    p: &AttnWeights,
    heads: usize,
    cache: &AttnCache,
    dy: &Tensor,
) -> AttnGrads {
    let (b, t, d) = (x.shape[0], x.shape[1], x.shape[2]);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (dctx, dwo, dbo) = linear_backward(&cache.ctx, p.wo, dy);
    let mut dq = Tensor::zeros(&[b, t, d]);
    let mut dk = Tensor::zeros(&[b, t, d]);
    let mut dv = Tensor::zeros(&[b, t, d]);
    let mut da = vec![0.0; t * t];
    for bi in 0..b {
        for hd in 0..heads {
            let pr = &cache.probs[(bi * heads + hd) * t * t..][..t * t];
            let at = |i: usize| (bi * t + i) * d + hd * dh;
            // dA = dCtx·Vᵀ, dV = Aᵀ·dCtx
            for i in 0..t {
                let gi = &dctx.data[at(i)..][..dh];
                for j in 0..t {
                    let vj = &cache.v.data[at(j)..][..dh];
                    da[i * t + j] = gi.iter().zip(vj).map(|(a, b)| a * b).sum();
                    let a = pr[i * t + j];
                    let dvj = &mut dv.data[(bi * t + j) * d + hd * dh..][..dh];
                    for e in 0..dh {
                        dvj[e] += a * gi[e];
                    }
                }
            }
            // softmax backward, then the scaled dot product
            for i in 0..t {
                let row = &pr[i * t..][..t];
                let dot: f64 = row.iter().zip(&da[i * t..][..t]).map(|(a, g)| a * g).sum();
                for j in 0..t {
                    let ds = row[j] * (da[i * t + j] - dot) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for e in 0..dh {
                        let qi = cache.q.data[(bi * t + i) * d + hd * dh + e];
                        let kj = cache.k.data[(bi * t + j) * d + hd * dh + e];
                        dq.data[(bi * t + i) * d + hd * dh + e] += ds * kj;
                        dk.data[(bi * t + j) * d + hd * dh + e] += ds * qi;
                    }
                }
            }
        }
    }
    let (mut dx, dwq, dbq) = linear_backward(x, p.wq, &dq);
    let (dxk, dwk, dbk) = linear_backward(x, p.wk, &dk);
    let (dxv, dwv, dbv) = linear_backward(x, p.wv, &dv);
    dx.add_assign(&dxk);
    dx.add_assign(&dxv);
    AttnGrads {
        dx,
        dwq,
        dbq,
        dwk,
        dbk,
        dwv,
        dbv,
        dwo,
        dbo,
    }
}

/// Mean cross-entropy of softmax(logits) against class labels, and its
/// gradient with respect to the logits. Rows of `logits` have `k` entries.
pub fn softmax_cross_entropy(
    logits: &[f64],
    labels: &[usize],
    k: usize,
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = labels.len();
    let mut probs = logits.to_vec();
    softmax_rows(&mut probs, k);
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (r, &y) in labels.iter().enumerate() {
        loss -= probs[r * k + y].max(f64::MIN_POSITIVE).ln();
        grad[r * k + y] -= 1.0;
    }
    for g in &mut grad {
        *g /= n as f64;
    }
    (loss / n as f64, grad, probs)
}
