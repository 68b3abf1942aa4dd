//! Direct 3×3 convolution, batch normalization and sparse resampling kernels.
//!
//! Every kernel writes disjoint output planes from parallel tasks and reduces
//! in a fixed order, so results do not depend on the thread count.

use rayon::prelude::*;

use super::tensor::{Real, Tensor};

/// `dst[y][x] += weight * src[y + dy][x + dx]` over the valid region.
#[inline]
fn accumulate_shifted<T: Real>(
    dst: &mut [T],
    src: &[T],
    h: usize,
    w: usize,
    dy: isize,
    dx: isize,
    weight: T,
) {
    if weight == T::zero() {
        return;
    }
    let y0 = (-dy).max(0) as usize;
    let y1 = (h as isize - dy).min(h as isize) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx).min(w as isize) as usize;
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let d = &mut dst[y * w + x0..y * w + x1];
        let sx0 = (x0 as isize + dx) as usize;
        let s = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
        for (dv, &sv) in d.iter_mut().zip(s) {
            *dv += weight * sv;
        }
    }
}

/// `Σ a[y][x] * b[y + dy][x + dx]` over the valid region.
#[inline]
fn dot_shifted<T: Real>(a: &[T], b: &[T], h: usize, w: usize, dy: isize, dx: isize) -> T {
    let y0 = (-dy).max(0) as usize;
    let y1 = (h as isize - dy).min(h as isize) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (w as isize - dx).min(w as isize) as usize;
    let mut acc = T::zero();
    if x0 >= x1 {
        return acc;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let ar = &a[y * w + x0..y * w + x1];
        let sx0 = (x0 as isize + dx) as usize;
        let br = &b[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
        let mut row = T::zero();
        for (&av, &bv) in ar.iter().zip(br) {
            row += av * bv;
        }
        acc += row;
    }
    acc
}

#[inline]
fn tap_offset(k: usize) -> (isize, isize) {
    (k as isize / 3 - 1, k as isize % 3 - 1)
}

pub fn conv3x3_forward<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let [n, cin, h, wd] = x.shape();
    let cout = w.shape()[0];
    let plane = h * wd;
    let mut out = Tensor::zeros([n, cout, h, wd]);
    let (xd, wdat, bd) = (x.data(), w.data(), b.data());
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, o)| {
            let (bi, oc) = (idx / cout, idx % cout);
            o.fill(bd[oc]);
            for ic in 0..cin {
                let src = &xd[(bi * cin + ic) * plane..][..plane];
                let kern = &wdat[(oc * cin + ic) * 9..][..9];
                for (k, &kv) in kern.iter().enumerate() {
                    let (dy, dx) = tap_offset(k);
                    accumulate_shifted(o, src, h, wd, dy, dx, kv);
                }
            }
        });
    out
}

/// Returns `(dx, dw, db)`; each is only computed when requested.
pub fn conv3x3_backward<T: Real>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    want: [bool; 3],
) -> (Option<Tensor<T>>, Option<Tensor<T>>, Option<Tensor<T>>) {
    let [n, cin, h, wd] = x.shape();
    let cout = w.shape()[0];
    let plane = h * wd;
    let (xd, wdat, gd) = (x.data(), w.data(), dy.data());

    let dx = want[0].then(|| {
        let mut dx = Tensor::zeros(x.shape());
        dx.data_mut()
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(idx, d)| {
                let (bi, ic) = (idx / cin, idx % cin);
                for oc in 0..cout {
                    let g = &gd[(bi * cout + oc) * plane..][..plane];
                    let kern = &wdat[(oc * cin + ic) * 9..][..9];
                    for (k, &kv) in kern.iter().enumerate() {
                        let (oy, ox) = tap_offset(k);
                        accumulate_shifted(d, g, h, wd, -oy, -ox, kv);
                    }
                }
            });
        dx
    });

    let dw = want[1].then(|| {
        let mut dw = Tensor::zeros(w.shape());
        dw.data_mut()
            .par_chunks_mut(cin * 9)
            .enumerate()
            .for_each(|(oc, d)| {
                for bi in 0..n {
                    let g = &gd[(bi * cout + oc) * plane..][..plane];
                    for ic in 0..cin {
                        let src = &xd[(bi * cin + ic) * plane..][..plane];
                        for k in 0..9 {
                            let (oy, ox) = tap_offset(k);
                            d[ic * 9 + k] += dot_shifted(g, src, h, wd, oy, ox);
                        }
                    }
                }
            });
        dw
    });

    let db = want[2].then(|| {
        let mut db = Tensor::zeros([1, cout, 1, 1]);
        for (oc, slot) in db.data_mut().iter_mut().enumerate() {
            for bi in 0..n {
                *slot += gd[(bi * cout + oc) * plane..][..plane].iter().copied().sum::<T>();
            }
        }
        db
    });
    (dx, dw, db)
}

/// Per-channel mean and biased variance over batch and space.
pub fn channel_moments<T: Real>(x: &Tensor<T>) -> (Vec<T>, Vec<T>) {
    let [n, c, _, _] = x.shape();
    let count = (n * x.plane_len()) as f64;
    (0..c)
        .into_par_iter()
        .map(|ch| {
            let mut s = 0.0f64;
            for b in 0..n {
                s += x.plane(b, ch).iter().map(|v| v.f64()).sum::<f64>();
            }
            let mean = s / count;
            let mut ss = 0.0f64;
            for b in 0..n {
                ss += x
                    .plane(b, ch)
                    .iter()
                    .map(|v| (v.f64() - mean).powi(2))
                    .sum::<f64>();
            }
            (T::of(mean), T::of(ss / count))
        })
        .unzip()
}

/// `y = gamma * (x - mean) * inv_std + beta`, per channel.
pub fn normalize<T: Real>(
    x: &Tensor<T>,
    mean: &[T],
    inv_std: &[T],
    gamma: &[T],
    beta: &[T],
) -> Tensor<T> {
    let c = x.shape()[1];
    let plane = x.plane_len();
    let mut out = Tensor::zeros(x.shape());
    out.data_mut()
        .par_chunks_mut(plane)
        .zip(x.data().par_chunks(plane))
        .enumerate()
        .for_each(|(idx, (o, xi))| {
            let ch = idx % c;
            let scale = gamma[ch] * inv_std[ch];
            let shift = beta[ch] - mean[ch] * scale;
            for (ov, &xv) in o.iter_mut().zip(xi) {
                *ov = xv * scale + shift;
            }
        });
    out
}

/// Batch-statistics backward. Returns `(dx, dgamma, dbeta)`.
pub fn batch_norm_backward<T: Real>(
    x: &Tensor<T>,
    dy: &Tensor<T>,
    mean: &[T],
    inv_std: &[T],
    gamma: &[T],
) -> (Tensor<T>, Vec<T>, Vec<T>) {
    let [n, c, _, _] = x.shape();
    let plane = x.plane_len();
    let count = T::of((n * plane) as f64);
    let (dgamma, dbeta): (Vec<T>, Vec<T>) = (0..c)
        .into_par_iter()
        .map(|ch| {
            let mut sg = 0.0f64;
            let mut sb = 0.0f64;
            for b in 0..n {
                for (&xv, &gv) in x.plane(b, ch).iter().zip(dy.plane(b, ch)) {
                    let xhat = (xv - mean[ch]) * inv_std[ch];
                    sg += (gv * xhat).f64();
                    sb += gv.f64();
                }
            }
            (T::of(sg), T::of(sb))
        })
        .unzip();
    let mut dx = Tensor::zeros(x.shape());
    dx.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(idx, d)| {
            let (b, ch) = (idx / c, idx % c);
            let k = gamma[ch] * inv_std[ch] / count;
            for ((dv, &xv), &gv) in d.iter_mut().zip(x.plane(b, ch)).zip(dy.plane(b, ch)) {
                let xhat = (xv - mean[ch]) * inv_std[ch];
                *dv = k * (count * gv - dbeta[ch] - xhat * dgamma[ch]);
            }
        });
    (dx, dgamma, dbeta)
}

/// Sparse linear resampling: each output pixel is a fixed-size weighted sum
/// of input pixels of the same plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampleMap {
    pub in_height: usize,
    pub in_width: usize,
    pub out_height: usize,
    pub out_width: usize,
    pub taps: usize,
    /// `out_height * out_width * taps` input pixel indices.
    pub index: Vec<u32>,
    /// Matching weights; a zero weight marks an unused tap.
    pub weight: Vec<f64>,
}

impl ResampleMap {
    pub fn out_len(&self) -> usize {
        self.out_height * self.out_width
    }

    pub(crate) fn forward_plane<T: Real>(&self, src: &[T], dst: &mut [T], weights: &[T]) {
        for (o, dv) in dst.iter_mut().enumerate() {
            let base = o * self.taps;
            let mut acc = T::zero();
            for k in base..base + self.taps {
                acc += weights[k] * src[self.index[k] as usize];
            }
            *dv = acc;
        }
    }

    pub(crate) fn backward_plane<T: Real>(&self, grad_out: &[T], grad_in: &mut [T], weights: &[T]) {
        for (o, &g) in grad_out.iter().enumerate() {
            if g == T::zero() {
                continue;
            }
            let base = o * self.taps;
            for k in base..base + self.taps {
                grad_in[self.index[k] as usize] += weights[k] * g;
            }
        }
    }
}
