//! Layers with hand-written backward passes. Activations are single samples in
//! channel-major layout; parameters live in one flat vector owned by the model
//! and are addressed by offset.

use matrixmultiply::dgemm;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w, data: vec![0.0; c * h * w] }
    }

    pub fn from_vec(c: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), c * h * w);
        Self { c, h, w, data }
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }
}

/// `C = A * B` (+ `C` when `accumulate`), all row-major.
/// `a_t` / `b_t` read A / B transposed from their stored row-major layout.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, c: &mut [f64], accumulate: bool) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides above describe exactly the buffers whose lengths
    // were checked against m, k and n.
    unsafe {
        dgemm(m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta, c.as_mut_ptr(), n as isize, 1);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub w_off: usize,
    pub b_off: usize,
}

impl Conv {
    pub fn n_weights(&self) -> usize {
        self.cout * self.cin * self.k * self.k
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        ((h + 2 * self.pad - self.k) / self.stride + 1, (w + 2 * self.pad - self.k) / self.stride + 1)
    }

    fn im2col(&self, x: &Tensor) -> (Vec<f64>, usize, usize) {
        let (ho, wo) = self.out_size(x.h, x.w);
        let k = self.k;
        let mut cols = vec![0.0; self.cin * k * k * ho * wo];
        for ci in 0..self.cin {
            let plane = &x.data[ci * x.plane()..(ci + 1) * x.plane()];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &mut cols[((ci * k + ky) * k + kx) * ho * wo..][..ho * wo];
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= x.h as isize {
                            continue;
                        }
                        let src = &plane[iy as usize * x.w..][..x.w];
                        for ox in 0..wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < x.w as isize {
                                row[oy * wo + ox] = src[ix as usize];
                            }
                        }
                    }
                }
            }
        }
        (cols, ho, wo)
    }

    fn col2im(&self, cols: &[f64], h: usize, w: usize, ho: usize, wo: usize) -> Tensor {
        let k = self.k;
        let mut x = Tensor::zeros(self.cin, h, w);
        for ci in 0..self.cin {
            let plane = &mut x.data[ci * h * w..(ci + 1) * h * w];
            for ky in 0..k {
                for kx in 0..k {
                    let row = &cols[((ci * k + ky) * k + kx) * ho * wo..][..ho * wo];
                    for oy in 0..ho {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for ox in 0..wo {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < w as isize {
                                plane[iy as usize * w + ix as usize] += row[oy * wo + ox];
                            }
                        }
                    }
                }
            }
        }
        x
    }

    /// Returns the output and the column buffer needed by [`Conv::backward`].
    pub fn forward(&self, params: &[f64], x: &Tensor) -> (Tensor, Vec<f64>) {
        assert_eq!(x.c, self.cin, "conv input channels");
        let (cols, ho, wo) = self.im2col(x);
        let n = ho * wo;
        let mut y = Tensor::zeros(self.cout, ho, wo);
        let wts = &params[self.w_off..self.w_off + self.n_weights()];
        gemm(self.cout, self.cin * self.k * self.k, n, wts, false, &cols, false, &mut y.data, false);
        let bias = &params[self.b_off..self.b_off + self.cout];
        for (co, b) in bias.iter().enumerate() {
            y.data[co * n..(co + 1) * n].iter_mut().for_each(|v| *v += b);
        }
        (y, cols)
    }

    /// Accumulates weight and bias gradients into `grads`; returns the input gradient.
    pub fn backward(&self, params: &[f64], cols: &[f64], in_h: usize, in_w: usize, dy: &Tensor, grads: &mut [f64]) -> Tensor {
        let (ho, wo) = (dy.h, dy.w);
        let n = ho * wo;
        let kk = self.cin * self.k * self.k;
        gemm(self.cout, n, kk, &dy.data, false, cols, true, &mut grads[self.w_off..self.w_off + self.n_weights()], true);
        for co in 0..self.cout {
            grads[self.b_off + co] += dy.data[co * n..(co + 1) * n].iter().sum::<f64>();
        }
        let wts = &params[self.w_off..self.w_off + self.n_weights()];
        let mut dcols = vec![0.0; kk * n];
        gemm(kk, self.cout, n, wts, true, &dy.data, false, &mut dcols, false);
        self.col2im(&dcols, in_h, in_w, ho, wo)
    }
}

pub const GN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupNorm {
    pub c: usize,
    pub groups: usize,
    pub g_off: usize,
    pub b_off: usize,
}

#[derive(Debug, Clone)]
pub struct GroupNormCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
}

impl GroupNorm {
    /// 32 groups, or 16 when there are fewer than 32 channels.
    pub fn groups_for(channels: usize) -> usize {
        if channels < 32 {
            16
        } else {
            32
        }
    }

    pub fn forward(&self, params: &[f64], x: &Tensor) -> (Tensor, GroupNormCache) {
        let per = self.c / self.groups;
        let n = per * x.plane();
        let mut xhat = vec![0.0; x.data.len()];
        let mut inv_std = Vec::with_capacity(self.groups);
        for g in 0..self.groups {
            let span = g * n..(g + 1) * n;
            let xs = &x.data[span.clone()];
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + GN_EPS).sqrt();
            for (o, v) in xhat[span].iter_mut().zip(xs) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        let mut y = Tensor::from_vec(x.c, x.h, x.w, xhat.clone());
        let p = x.plane();
        for ch in 0..self.c {
            let (gamma, beta) = (params[self.g_off + ch], params[self.b_off + ch]);
            y.data[ch * p..(ch + 1) * p].iter_mut().for_each(|v| *v = *v * gamma + beta);
        }
        (y, GroupNormCache { xhat, inv_std })
    }

    pub fn backward(&self, params: &[f64], cache: &GroupNormCache, dy: &Tensor, grads: &mut [f64]) -> Tensor {
        let p = dy.plane();
        let per = self.c / self.groups;
        let n = per * p;
        let mut dxhat = dy.data.clone();
        for ch in 0..self.c {
            let span = ch * p..(ch + 1) * p;
            let (mut dg, mut db) = (0.0, 0.0);
            for (d, xh) in dy.data[span.clone()].iter().zip(&cache.xhat[span.clone()]) {
                dg += d * xh;
                db += d;
            }
            grads[self.g_off + ch] += dg;
            grads[self.b_off + ch] += db;
            let gamma = params[self.g_off + ch];
            dxhat[span].iter_mut().for_each(|v| *v *= gamma);
        }
        let mut dx = Tensor::zeros(dy.c, dy.h, dy.w);
        for g in 0..self.groups {
            let span = g * n..(g + 1) * n;
            let dh = &dxhat[span.clone()];
            let xh = &cache.xhat[span.clone()];
            let sum: f64 = dh.iter().sum();
            let dot: f64 = dh.iter().zip(xh).map(|(a, b)| a * b).sum();
            let k = cache.inv_std[g] / n as f64;
            for ((o, d), x) in dx.data[span].iter_mut().zip(dh).zip(xh) {
                *o = k * (n as f64 * d - sum - x * dot);
            }
        }
        dx
    }
}

pub fn relu(x: &mut Tensor) {
    x.data.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Gradient through ReLU given its output.
pub fn relu_backward(out: &Tensor, dy: &mut Tensor) {
    for (d, o) in dy.data.iter_mut().zip(&out.data) {
        if *o <= 0.0 {
            *d = 0.0;
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
