//! Batched NCHW kernels with hand-written backward passes.

use matrixmultiply::dgemm;

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    /// 1 for dense convolutions, `cin` for depthwise.
    pub groups: usize,
    pub h_in: usize,
    pub w_in: usize,
}

impl Geometry {
    pub fn h_out(&self) -> usize {
        (self.h_in + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn w_out(&self) -> usize {
        (self.w_in + 2 * self.pad - self.k) / self.stride + 1
    }

    pub fn in_len(&self) -> usize {
        self.cin * self.h_in * self.w_in
    }

    pub fn out_len(&self) -> usize {
        self.cout * self.h_out() * self.w_out()
    }

    pub fn weight_len(&self) -> usize {
        self.cout * (self.cin / self.groups) * self.k * self.k
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1 && self.pad == 0
    }
}

/// `C (m×n) = alpha·A·B + beta·C` with explicit row/column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: callers pass slices large enough for the given shapes and
    // strides; every index touched is `i*rs + j*cs` with i, j in range.
    unsafe {
        dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(g: &Geometry, x: &[f64], col: &mut [f64]) {
    let (ho, wo) = (g.h_out(), g.w_out());
    let hw = ho * wo;
    for c in 0..g.cin {
        let plane = &x[c * g.h_in * g.w_in..(c + 1) * g.h_in * g.w_in];
        for kh in 0..g.k {
            for kw in 0..g.k {
                let row = &mut col[((c * g.k + kh) * g.k + kw) * hw..][..hw];
                for oh in 0..ho {
                    let ih = (oh * g.stride + kh) as isize - g.pad as isize;
                    let dst = &mut row[oh * wo..(oh + 1) * wo];
                    if ih < 0 || ih >= g.h_in as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[ih as usize * g.w_in..(ih as usize + 1) * g.w_in];
                    for (ow, d) in dst.iter_mut().enumerate() {
                        let iw = (ow * g.stride + kw) as isize - g.pad as isize;
                        *d = if iw < 0 || iw >= g.w_in as isize {
                            0.0
                        } else {
                            src[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(g: &Geometry, col: &[f64], dx: &mut [f64]) {
    let (ho, wo) = (g.h_out(), g.w_out());
    let hw = ho * wo;
    for c in 0..g.cin {
        let plane = &mut dx[c * g.h_in * g.w_in..(c + 1) * g.h_in * g.w_in];
        for kh in 0..g.k {
            for kw in 0..g.k {
                let row = &col[((c * g.k + kh) * g.k + kw) * hw..][..hw];
                for oh in 0..ho {
                    let ih = (oh * g.stride + kh) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.h_in as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.w_in..(ih as usize + 1) * g.w_in];
                    for ow in 0..wo {
                        let iw = (ow * g.stride + kw) as isize - g.pad as isize;
                        if iw >= 0 && iw < g.w_in as isize {
                            dst[iw as usize] += row[oh * wo + ow];
                        }
                    }
                }
            }
        }
    }
}

/// Dense or depthwise convolution without bias over a batch.
pub fn conv_forward(g: &Geometry, w: &[f64], x: &[f64], batch: usize) -> Vec<f64> {
    let (il, ol) = (g.in_len(), g.out_len());
    let mut out = vec![0.0; batch * ol];
    if g.groups == 1 {
        let kk = g.cin * g.k * g.k;
        let hw = g.h_out() * g.w_out();
        let mut col = if g.is_pointwise() { Vec::new() } else { vec![0.0; kk * hw] };
        for b in 0..batch {
            let xb = &x[b * il..(b + 1) * il];
            let src: &[f64] = if g.is_pointwise() {
                xb
            } else {
                im2col(g, xb, &mut col);
                &col
            };
            gemm(g.cout, kk, hw, 1.0, w, kk as isize, 1, src, hw as isize, 1, 0.0, &mut out[b * ol..(b + 1) * ol]);
        }
    } else {
        depthwise_forward(g, w, x, batch, &mut out);
    }
    out
}

/// Accumulates the weight gradient into `dw` and returns the input gradient.
pub fn conv_backward(g: &Geometry, w: &[f64], x: &[f64], dy: &[f64], batch: usize, dw: &mut [f64]) -> Vec<f64> {
    let (il, ol) = (g.in_len(), g.out_len());
    let mut dx = vec![0.0; batch * il];
    if g.groups == 1 {
        let kk = g.cin * g.k * g.k;
        let hw = g.h_out() * g.w_out();
        let pointwise = g.is_pointwise();
        let mut col = if pointwise { Vec::new() } else { vec![0.0; kk * hw] };
        let mut dcol = if pointwise { Vec::new() } else { vec![0.0; kk * hw] };
        for b in 0..batch {
            let xb = &x[b * il..(b + 1) * il];
            let dyb = &dy[b * ol..(b + 1) * ol];
            let src: &[f64] = if pointwise {
                xb
            } else {
                im2col(g, xb, &mut col);
                &col
            };
            // dW (cout×kk) += dY (cout×hw) · colᵀ (hw×kk)
            gemm(g.cout, hw, kk, 1.0, dyb, hw as isize, 1, src, 1, hw as isize, 1.0, dw);
            let dxb = &mut dx[b * il..(b + 1) * il];
            if pointwise {
                // dX (cin×hw) = Wᵀ (cin×cout) · dY (cout×hw)
                gemm(g.cin, g.cout, hw, 1.0, w, 1, kk as isize, dyb, hw as isize, 1, 0.0, dxb);
            } else {
                gemm(kk, g.cout, hw, 1.0, w, 1, kk as isize, dyb, hw as isize, 1, 0.0, &mut dcol);
                col2im(g, &dcol, dxb);
            }
        }
    } else {
        depthwise_backward(g, w, x, dy, batch, dw, &mut dx);
    }
    dx
}

fn depthwise_forward(g: &Geometry, w: &[f64], x: &[f64], batch: usize, out: &mut [f64]) {
    let (ho, wo) = (g.h_out(), g.w_out());
    let (hi, wi) = (g.h_in, g.w_in);
    let kk = g.k * g.k;
    for b in 0..batch {
        for c in 0..g.cin {
            let plane = &x[(b * g.cin + c) * hi * wi..][..hi * wi];
            let dst = &mut out[(b * g.cin + c) * ho * wo..][..ho * wo];
            let wc = &w[c * kk..(c + 1) * kk];
            for kh in 0..g.k {
                for kw in 0..g.k {
                    let wv = wc[kh * g.k + kw];
                    for oh in 0..ho {
                        let ih = (oh * g.stride + kh) as isize - g.pad as isize;
                        if ih < 0 || ih >= hi as isize {
                            continue;
                        }
                        let src = &plane[ih as usize * wi..][..wi];
                        let row = &mut dst[oh * wo..(oh + 1) * wo];
                        for (ow, o) in row.iter_mut().enumerate() {
                            let iw = (ow * g.stride + kw) as isize - g.pad as isize;
                            if iw >= 0 && iw < wi as isize {
                                *o += wv * src[iw as usize];
                            }
                        }
                    }
                }
            }
        }
    }
}

fn depthwise_backward(g: &Geometry, w: &[f64], x: &[f64], dy: &[f64], batch: usize, dw: &mut [f64], dx: &mut [f64]) {
    let (ho, wo) = (g.h_out(), g.w_out());
    let (hi, wi) = (g.h_in, g.w_in);
    let kk = g.k * g.k;
    for b in 0..batch {
        for c in 0..g.cin {
            let plane = &x[(b * g.cin + c) * hi * wi..][..hi * wi];
            let dplane = &mut dx[(b * g.cin + c) * hi * wi..][..hi * wi];
            let grad = &dy[(b * g.cin + c) * ho * wo..][..ho * wo];
            for kh in 0..g.k {
                for kw in 0..g.k {
                    let wv = w[c * kk + kh * g.k + kw];
                    let mut acc = 0.0;
                    for oh in 0..ho {
                        let ih = (oh * g.stride + kh) as isize - g.pad as isize;
                        if ih < 0 || ih >= hi as isize {
                            continue;
                        }
                        let base = ih as usize * wi;
                        for ow in 0..wo {
                            let iw = (ow * g.stride + kw) as isize - g.pad as isize;
                            if iw >= 0 && iw < wi as isize {
                                let gv = grad[oh * wo + ow];
                                acc += gv * plane[base + iw as usize];
                                dplane[base + iw as usize] += gv * wv;
                            }
                        }
                    }
                    dw[c * kk + kh * g.k + kw] += acc;
                }
            }
        }
    }
}

/// Cached values of a training-mode batch-norm forward pass.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

/// Batch-norm over `(batch, c, hw)` using batch statistics. Returns the
/// output, the cache and the per-channel batch mean and (biased) variance.
pub fn bn_forward_train(
    x: &[f64],
    batch: usize,
    c: usize,
    hw: usize,
    gamma: &[f64],
    beta: &[f64],
) -> (Vec<f64>, BnCache, Vec<f64>, Vec<f64>) {
    let n = (batch * hw) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for b in 0..batch {
        for ch in 0..c {
            let s: f64 = x[(b * c + ch) * hw..][..hw].iter().sum();
            mean[ch] += s;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    for b in 0..batch {
        for ch in 0..c {
            let m = mean[ch];
            let s: f64 = x[(b * c + ch) * hw..][..hw].iter().map(|v| (v - m) * (v - m)).sum();
            var[ch] += s;
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for b in 0..batch {
        for ch in 0..c {
            let off = (b * c + ch) * hw;
            let (m, is, gm, bt) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
            for i in off..off + hw {
                let h = (x[i] - m) * is;
                xhat[i] = h;
                y[i] = gm * h + bt;
            }
        }
    }
    (y, BnCache { xhat, inv_std }, mean, var)
}

pub fn bn_forward_eval(
    x: &[f64],
    batch: usize,
    c: usize,
    hw: usize,
    gamma: &[f64],
    beta: &[f64],
    mean: &[f64],
    var: &[f64],
) -> Vec<f64> {
    let mut y = vec![0.0; x.len()];
    for b in 0..batch {
        for ch in 0..c {
            let off = (b * c + ch) * hw;
            let scale = gamma[ch] / (var[ch] + BN_EPS).sqrt();
            let shift = beta[ch] - mean[ch] * scale;
            for i in off..off + hw {
                y[i] = x[i] * scale + shift;
            }
        }
    }
    y
}

/// Accumulates `dgamma`, `dbeta` and returns the input gradient.
pub fn bn_backward(
    dy: &[f64],
    cache: &BnCache,
    batch: usize,
    c: usize,
    hw: usize,
    gamma: &[f64],
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let n = (batch * hw) as f64;
    let mut sum_dy = vec![0.0; c];
    let mut sum_dy_xhat = vec![0.0; c];
    for b in 0..batch {
        for ch in 0..c {
            let off = (b * c + ch) * hw;
            for i in off..off + hw {
                sum_dy[ch] += dy[i];
                sum_dy_xhat[ch] += dy[i] * cache.xhat[i];
            }
        }
    }
    for ch in 0..c {
        dgamma[ch] += sum_dy_xhat[ch];
        dbeta[ch] += sum_dy[ch];
    }
    let mut dx = vec![0.0; dy.len()];
    for b in 0..batch {
        for ch in 0..c {
            let off = (b * c + ch) * hw;
            let k = gamma[ch] * cache.inv_std[ch] / n;
            let (sd, sdx) = (sum_dy[ch], sum_dy_xhat[ch]);
            for i in off..off + hw {
                dx[i] = k * (n * dy[i] - sd - cache.xhat[i] * sdx);
            }
        }
    }
    dx
}
