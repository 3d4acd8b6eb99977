//! Batched layer kernels over flat NCHW buffers.

pub(crate) const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Dims {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub fn size(&self) -> usize {
        self.c * self.h * self.w
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub input: Dims,
    pub output: Dims,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    /// Input row/column touched by output position `o` at kernel offset `k`.
    #[inline]
    fn src(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }
}

/// Convolution without bias; `weight` is `[out_c, in_c, k, k]`.
pub(crate) fn conv_forward(input: &[f64], batch: usize, g: &ConvGeom, weight: &[f64]) -> Vec<f64> {
    let (ci, co, k) = (g.input.c, g.output.c, g.kernel);
    let (ih, iw, oh, ow) = (g.input.h, g.input.w, g.output.h, g.output.w);
    let mut out = vec![0.0; batch * g.output.size()];
    for b in 0..batch {
        for o in 0..co {
            let plane = &mut out[(b * co + o) * oh * ow..][..oh * ow];
            for c in 0..ci {
                let src = &input[(b * ci + c) * ih * iw..][..ih * iw];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = weight[((o * ci + c) * k + ky) * k + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        for oy in 0..oh {
                            let Some(iy) = g.src(oy, ky, ih) else { continue };
                            let row = &src[iy * iw..][..iw];
                            let dst = &mut plane[oy * ow..][..ow];
                            for (ox, d) in dst.iter_mut().enumerate() {
                                if let Some(ix) = g.src(ox, kx, iw) {
                                    *d += wv * row[ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates the weight gradient and, if requested, the input gradient.
pub(crate) fn conv_backward(
    input: &[f64],
    dout: &[f64],
    batch: usize,
    g: &ConvGeom,
    weight: &[f64],
    dweight: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let (ci, co, k) = (g.input.c, g.output.c, g.kernel);
    let (ih, iw, oh, ow) = (g.input.h, g.input.w, g.output.h, g.output.w);
    for b in 0..batch {
        for o in 0..co {
            let dplane = &dout[(b * co + o) * oh * ow..][..oh * ow];
            for c in 0..ci {
                let src_off = (b * ci + c) * ih * iw;
                let src = &input[src_off..][..ih * iw];
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((o * ci + c) * k + ky) * k + kx;
                        let wv = weight[widx];
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let Some(iy) = g.src(oy, ky, ih) else { continue };
                            for ox in 0..ow {
                                let Some(ix) = g.src(ox, kx, iw) else { continue };
                                let d = dplane[oy * ow + ox];
                                acc += d * src[iy * iw + ix];
                                if let Some(di) = dinput.as_deref_mut() {
                                    di[src_off + iy * iw + ix] += wv * d;
                                }
                            }
                        }
                        dweight[widx] += acc;
                    }
                }
            }
        }
    }
}

/// `out[b, j] = sum_i weight[j, i] * x[b, i] + bias[j]`.
pub(crate) fn dense_forward(
    x: &[f64],
    batch: usize,
    n_in: usize,
    n_out: usize,
    weight: &[f64],
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let mut out = vec![0.0; batch * n_out];
    for b in 0..batch {
        let xb = &x[b * n_in..][..n_in];
        for j in 0..n_out {
            let wj = &weight[j * n_in..][..n_in];
            let mut s = bias.map_or(0.0, |bb| bb[j]);
            for (w, v) in wj.iter().zip(xb) {
                s += w * v;
            }
            out[b * n_out + j] = s;
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    x: &[f64],
    dout: &[f64],
    batch: usize,
    n_in: usize,
    n_out: usize,
    weight: &[f64],
    dweight: &mut [f64],
    dbias: Option<&mut [f64]>,
) -> Vec<f64> {
    let mut dx = vec![0.0; batch * n_in];
    for b in 0..batch {
        let xb = &x[b * n_in..][..n_in];
        let dxb = &mut dx[b * n_in..][..n_in];
        for j in 0..n_out {
            let d = dout[b * n_out + j];
            if d == 0.0 {
                continue;
            }
            let wj = &weight[j * n_in..][..n_in];
            let dwj = &mut dweight[j * n_in..][..n_in];
            for i in 0..n_in {
                dwj[i] += d * xb[i];
                dxb[i] += d * wj[i];
            }
        }
    }
    if let Some(db) = dbias {
        for b in 0..batch {
            for j in 0..n_out {
                db[j] += dout[b * n_out + j];
            }
        }
    }
    dx
}

/// Per-channel batch statistics over `(batch, spatial)`.
#[derive(Debug, Clone)]
pub(crate) struct BnCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    /// Biased variance.
    pub var: Vec<f64>,
    pub count: usize,
}

pub(crate) fn bn_forward_train(
    x: &[f64],
    batch: usize,
    channels: usize,
    spatial: usize,
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<f64>, BnCache) {
    let count = batch * spatial;
    let mut mean = vec![0.0; channels];
    let mut var = vec![0.0; channels];
    for b in 0..batch {
        for c in 0..channels {
            let s = &x[(b * channels + c) * spatial..][..spatial];
            mean[c] += s.iter().sum::<f64>();
        }
    }
    for m in &mut mean {
        *m /= count as f64;
    }
    for b in 0..batch {
        for c in 0..channels {
            let s = &x[(b * channels + c) * spatial..][..spatial];
            var[c] += s.iter().map(|v| (v - mean[c]) * (v - mean[c])).sum::<f64>();
        }
    }
    for v in &mut var {
        *v /= count as f64;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();

    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * spatial;
            for i in off..off + spatial {
                let h = (x[i] - mean[c]) * inv_std[c];
                xhat[i] = h;
                y[i] = gamma[c] * h + beta[c];
            }
        }
    }
    (
        y,
        BnCache {
            xhat,
            inv_std,
            mean,
            var,
            count,
        },
    )
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn bn_forward_inference(
    x: &[f64],
    batch: usize,
    channels: usize,
    spatial: usize,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for b in 0..batch {
        for c in 0..channels {
            let scale = gamma[c] / (running_var[c] + BN_EPS).sqrt();
            let off = (b * channels + c) * spatial;
            for i in off..off + spatial {
                y[i] = (x[i] - running_mean[c]) * scale + beta[c];
            }
        }
    }
    y
}

/// Returns `dx` and accumulates `dgamma`, `dbeta`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn bn_backward(
    dy: &[f64],
    cache: &BnCache,
    batch: usize,
    channels: usize,
    spatial: usize,
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let m = cache.count as f64;
    let mut sum_dxhat = vec![0.0; channels];
    let mut sum_dxhat_xhat = vec![0.0; channels];
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * spatial;
            for i in off..off + spatial {
                dgamma[c] += dy[i] * cache.xhat[i];
                dbeta[c] += dy[i];
                let dxh = dy[i] * gamma[c];
                sum_dxhat[c] += dxh;
                sum_dxhat_xhat[c] += dxh * cache.xhat[i];
            }
        }
    }
    let mut dx = vec![0.0; dy.len()];
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * spatial;
            let k = cache.inv_std[c] / m;
            for i in off..off + spatial {
                let dxh = dy[i] * gamma[c];
                dx[i] = k * (m * dxh - sum_dxhat[c] - cache.xhat[i] * sum_dxhat_xhat[c]);
            }
        }
    }
    dx
}

pub(crate) fn relu_inplace(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Masks `d` by the positive entries of the ReLU output.
pub(crate) fn relu_backward_inplace(d: &mut [f64], output: &[f64]) {
    for (g, o) in d.iter_mut().zip(output) {
        if *o <= 0.0 {
            *g = 0.0;
        }
    }
}
