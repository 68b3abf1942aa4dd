//! Tape-based reverse-mode graph.
//!
//! Nodes are appended in construction order, which is a topological order,
//! so backward is a single reverse sweep. Gradients flowing into a node from
//! several consumers are summed.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernels::{
    batch_norm_backward, channel_moments, conv3x3_backward, conv3x3_forward, normalize, ResampleMap,
};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Batch normalization statistics source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BnMode {
    /// Batch statistics; the caller folds them into the running averages.
    #[default]
    Train,
    /// Running statistics.
    Eval,
    /// Batch statistics without touching the running averages.
    BatchStats,
}

impl BnMode {
    pub fn uses_batch_statistics(self) -> bool {
        !matches!(self, BnMode::Eval)
    }
}

enum Op<T> {
    Leaf,
    Conv3x3 {
        x: Var,
        w: Var,
        b: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        var: Vec<T>,
        inv_std: Vec<T>,
        batch: bool,
    },
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    DepthToSpace(Var, usize),
    SpaceToDepth(Var, usize),
    MaskedLoss {
        pred: Var,
        target: Tensor<T>,
        mask: Tensor<T>,
        p: u8,
        count: f64,
    },
    Resample {
        x: Var,
        maps: Vec<(Arc<ResampleMap>, Vec<T>)>,
    },
    Sum(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// A computation graph over `T` (`f32` or `f64`).
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients of a scalar with respect to every node that requires them.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape_err(msg: String) -> Error {
    Error::Shape(msg)
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input; no gradient is tracked.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Trainable leaf whose gradient is reported by [`Graph::backward`].
    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 4] {
        self.nodes[v.0].value.shape()
    }

    /// Zero-padded, stride-1 3×3 cross-correlation plus bias.
    pub fn conv3x3(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        let bs = self.shape(b);
        if ws[2] != 3 || ws[3] != 3 {
            return Err(shape_err(format!("conv kernel must be 3x3, got {ws:?}")));
        }
        if ws[1] != xs[1] {
            return Err(shape_err(format!(
                "conv expects {} input channels, got {}",
                ws[1], xs[1]
            )));
        }
        if bs != [1, ws[0], 1, 1] {
            return Err(shape_err(format!("conv bias shape {bs:?} for {} outputs", ws[0])));
        }
        let out = conv3x3_forward(self.value(x), self.value(w), self.value(b));
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(out, Op::Conv3x3 { x, w, b }, rg))
    }

    /// Per-channel batch normalization with affine `gamma`, `beta`.
    ///
    /// `running` holds `(mean, var)` and is required in [`BnMode::Eval`].
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode,
        running: Option<(&[T], &[T])>,
        eps: f64,
    ) -> Result<Var> {
        let xs = self.shape(x);
        let c = xs[1];
        if xs[0] == 0 || xs[2] * xs[3] == 0 {
            return Err(shape_err("batch norm on an empty batch".into()));
        }
        for p in [gamma, beta] {
            if self.shape(p) != [1, c, 1, 1] {
                return Err(shape_err(format!(
                    "batch norm affine shape {:?} for {c} channels",
                    self.shape(p)
                )));
            }
        }
        let batch = mode.uses_batch_statistics();
        let (mean, var) = if batch {
            channel_moments(self.value(x))
        } else {
            let (m, v) = running.ok_or_else(|| {
                Error::Parameter("eval-mode batch norm needs running statistics".into())
            })?;
            if m.len() != c || v.len() != c {
                return Err(shape_err("running statistics length mismatch".into()));
            }
            (m.to_vec(), v.to_vec())
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + T::of(eps)).sqrt()).collect();
        let out = normalize(
            self.value(x),
            &mean,
            &inv_std,
            self.value(gamma).data(),
            self.value(beta).data(),
        );
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                var,
                inv_std,
                batch,
            },
            rg,
        ))
    }

    /// Batch mean, biased batch variance and per-channel sample count of a
    /// batch-statistics normalization node.
    pub fn batch_statistics(&self, v: Var) -> Option<(&[T], &[T], usize)> {
        match &self.nodes[v.0].op {
            Op::BatchNorm {
                mean,
                var,
                batch: true,
                x,
                ..
            } => {
                let s = self.shape(*x);
                Some((mean, var, s[0] * s[2] * s[3]))
            }
            _ => None,
        }
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut()
            .par_iter_mut()
            .for_each(|v| *v = v.max(T::zero()));
        let rg = self.rg(x);
        self.push(out, Op::Relu(x), rg)
    }

    fn binary(&mut self, a: Var, b: Var, sign: T) -> Result<Tensor<T>> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(format!(
                "elementwise shapes differ: {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut out = self.value(a).clone();
        for (o, &bv) in out.data_mut().iter_mut().zip(self.value(b).data()) {
            *o += sign * bv;
        }
        Ok(out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, T::one())?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary(a, b, -T::one())?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// `(B, C·r², H, W) -> (B, C, H·r, W·r)`, with
    /// `out[b, c, h·r + i, w·r + j] = in[b, c·r² + i·r + j, h, w]`.
    pub fn depth_to_space(&mut self, x: Var, r: usize) -> Result<Var> {
        let [n, c, h, w] = self.shape(x);
        if r == 0 || c % (r * r) != 0 {
            return Err(shape_err(format!(
                "depth_to_space: {c} channels not divisible by {}",
                r * r
            )));
        }
        let out = shuffle(self.value(x), r, true);
        debug_assert_eq!(out.shape(), [n, c / (r * r), h * r, w * r]);
        let rg = self.rg(x);
        Ok(self.push(out, Op::DepthToSpace(x, r), rg))
    }

    /// Inverse of [`Graph::depth_to_space`].
    pub fn space_to_depth(&mut self, x: Var, r: usize) -> Result<Var> {
        let [_, _, h, w] = self.shape(x);
        if r == 0 || h % r != 0 || w % r != 0 {
            return Err(shape_err(format!("space_to_depth: {h}x{w} not divisible by {r}")));
        }
        let out = shuffle(self.value(x), r, false);
        let rg = self.rg(x);
        Ok(self.push(out, Op::SpaceToDepth(x, r), rg))
    }

    /// `Σ mask·|pred − target|^p / Σ mask` for `p ∈ {1, 2}`; the sign
    /// subgradient at zero is zero.
    pub fn masked_loss(
        &mut self,
        pred: Var,
        target: &Tensor<T>,
        mask: &Tensor<T>,
        p: u8,
    ) -> Result<Var> {
        if p != 1 && p != 2 {
            return Err(Error::Parameter(format!("loss exponent must be 1 or 2, got {p}")));
        }
        let ps = self.shape(pred);
        if target.shape() != ps || mask.shape() != ps {
            return Err(shape_err(format!(
                "loss shapes differ: pred {ps:?}, target {:?}, mask {:?}",
                target.shape(),
                mask.shape()
            )));
        }
        let count: f64 = mask.data().iter().map(|m| m.f64()).sum();
        if count <= 0.0 {
            return Err(Error::DegenerateLoss);
        }
        let mut total = 0.0f64;
        for ((&pv, &tv), &mv) in self.value(pred).data().iter().zip(target.data()).zip(mask.data()) {
            if mv != T::zero() {
                let d = (pv - tv).f64().abs();
                total += mv.f64() * if p == 1 { d } else { d * d };
            }
        }
        let out = Tensor::scalar(T::of(total / count));
        let rg = self.rg(pred);
        Ok(self.push(
            out,
            Op::MaskedLoss {
                pred,
                target: target.clone(),
                mask: mask.clone(),
                p,
                count,
            },
            rg,
        ))
    }

    /// Applies a sparse resampling per plane. `maps` has one entry shared by
    /// the whole batch or one entry per batch element.
    pub fn resample(&mut self, x: Var, maps: &[Arc<ResampleMap>]) -> Result<Var> {
        let [n, c, h, w] = self.shape(x);
        if maps.len() != 1 && maps.len() != n {
            return Err(shape_err(format!(
                "resample needs 1 or {n} maps, got {}",
                maps.len()
            )));
        }
        let (oh, ow) = (maps[0].out_height, maps[0].out_width);
        for m in maps {
            if m.in_height != h || m.in_width != w || m.out_height != oh || m.out_width != ow {
                return Err(shape_err("resample map does not match the input".into()));
            }
        }
        let maps: Vec<(Arc<ResampleMap>, Vec<T>)> = maps
            .iter()
            .map(|m| (m.clone(), m.weight.iter().map(|&v| T::of(v)).collect()))
            .collect();
        let mut out = Tensor::zeros([n, c, oh, ow]);
        let xv = self.value(x);
        out.data_mut()
            .par_chunks_mut(oh * ow)
            .enumerate()
            .for_each(|(idx, o)| {
                let b = idx / c;
                let (m, wts) = &maps[if maps.len() == 1 { 0 } else { b }];
                m.forward_plane(xv.plane(b, idx % c), o, wts);
            });
        let rg = self.rg(x);
        Ok(self.push(out, Op::Resample { x, maps }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().map(|v| v.f64()).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(T::of(s)), Op::Sum(x), rg)
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, root: Var) -> Result<Gradients<T>> {
        if self.value(root).numel() != 1 {
            return Err(shape_err(format!(
                "backward needs a scalar root, got {:?}",
                self.shape(root)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(self.shape(root), T::one()));
        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(&node.op, &node.value, g, &mut grads);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.rg(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .for_each(|(a, &b)| *a += b),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, op: &Op<T>, out: &Tensor<T>, g: Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        match op {
            Op::Leaf => unreachable!("leaves are not propagated"),
            Op::Conv3x3 { x, w, b } => {
                let want = [self.rg(*x), self.rg(*w), self.rg(*b)];
                let (dx, dw, db) = conv3x3_backward(self.value(*x), self.value(*w), &g, want);
                if let Some(dx) = dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dw) = dw {
                    self.accumulate(grads, *w, dw);
                }
                if let Some(db) = db {
                    self.accumulate(grads, *b, db);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                batch,
                ..
            } => {
                let gam = self.value(*gamma).data();
                let c = gam.len();
                let (dx, dgamma, dbeta) = if *batch {
                    batch_norm_backward(self.value(*x), &g, mean, inv_std, gam)
                } else {
                    // Fixed statistics: a per-channel affine map.
                    let xv = self.value(*x);
                    let plane = xv.plane_len();
                    let mut dx = Tensor::zeros(xv.shape());
                    let mut dgamma = vec![T::zero(); c];
                    let mut dbeta = vec![T::zero(); c];
                    for (idx, (d, (xi, gi))) in dx
                        .data_mut()
                        .chunks_mut(plane)
                        .zip(xv.data().chunks(plane).zip(g.data().chunks(plane)))
                        .enumerate()
                    {
                        let ch = idx % c;
                        for ((dv, &xval), &gv) in d.iter_mut().zip(xi).zip(gi) {
                            *dv = gv * gam[ch] * inv_std[ch];
                            dgamma[ch] += gv * (xval - mean[ch]) * inv_std[ch];
                            dbeta[ch] += gv;
                        }
                    }
                    (dx, dgamma, dbeta)
                };
                self.accumulate(grads, *x, dx);
                let as_param = |v: Vec<T>| Tensor::from_vec([1, c, 1, 1], v).expect("channel vector");
                self.accumulate(grads, *gamma, as_param(dgamma));
                self.accumulate(grads, *beta, as_param(dbeta));
            }
            Op::Relu(x) => {
                let mut g = g;
                for (gv, &ov) in g.data_mut().iter_mut().zip(out.data()) {
                    if ov <= T::zero() {
                        *gv = T::zero();
                    }
                }
                self.accumulate(grads, *x, g);
            }
            Op::Add(a, b) => {
                if self.rg(*b) {
                    self.accumulate(grads, *b, g.clone());
                }
                self.accumulate(grads, *a, g);
            }
            Op::Sub(a, b) => {
                if self.rg(*b) {
                    let mut neg = g.clone();
                    neg.data_mut().iter_mut().for_each(|v| *v = -*v);
                    self.accumulate(grads, *b, neg);
                }
                self.accumulate(grads, *a, g);
            }
            Op::DepthToSpace(x, r) => self.accumulate(grads, *x, shuffle(&g, *r, false)),
            Op::SpaceToDepth(x, r) => self.accumulate(grads, *x, shuffle(&g, *r, true)),
            Op::MaskedLoss {
                pred,
                target,
                mask,
                p,
                count,
            } => {
                let scale = g.item().f64() / count;
                let pv = self.value(*pred);
                let data = pv
                    .data()
                    .iter()
                    .zip(target.data())
                    .zip(mask.data())
                    .map(|((&pv, &tv), &mv)| {
                        if mv == T::zero() {
                            return T::zero();
                        }
                        let d = (pv - tv).f64();
                        let local = if *p == 1 {
                            if d > 0.0 {
                                1.0
                            } else if d < 0.0 {
                                -1.0
                            } else {
                                0.0
                            }
                        } else {
                            2.0 * d
                        };
                        T::of(scale * mv.f64() * local)
                    })
                    .collect();
                self.accumulate(grads, *pred, Tensor::from_vec(pv.shape(), data).expect("same shape"));
            }
            Op::Resample { x, maps } => {
                let xs = self.shape(*x);
                let c = xs[1];
                let mut dx = Tensor::zeros(xs);
                let plane = xs[2] * xs[3];
                let gp = g.plane_len();
                dx.data_mut()
                    .par_chunks_mut(plane)
                    .enumerate()
                    .for_each(|(idx, d)| {
                        let b = idx / c;
                        let (m, wts) = &maps[if maps.len() == 1 { 0 } else { b }];
                        m.backward_plane(&g.data()[idx * gp..(idx + 1) * gp], d, wts);
                    });
                self.accumulate(grads, *x, dx);
            }
            Op::Sum(x) => {
                let s = self.shape(*x);
                self.accumulate(grads, *x, Tensor::full(s, g.item()));
            }
        }
    }
}

/// Pixel shuffle (`to_space == true`) or its inverse.
fn shuffle<T: Real>(x: &Tensor<T>, r: usize, to_space: bool) -> Tensor<T> {
    let [n, c, h, w] = x.shape();
    let (oshape, cs) = if to_space {
        ([n, c / (r * r), h * r, w * r], c / (r * r))
    } else {
        ([n, c * r * r, h / r, w / r], c)
    };
    let mut out = Tensor::zeros(oshape);
    // Index arithmetic in terms of the space-side tensor (cs channels, Hs×Ws).
    let (hs, ws) = if to_space { (h * r, w * r) } else { (h, w) };
    let (hd, wd) = (hs / r, ws / r);
    let src = x.data();
    let dst = out.data_mut();
    for b in 0..n {
        for cc in 0..cs {
            for i in 0..r {
                for j in 0..r {
                    let dc = cc * r * r + i * r + j;
                    for yy in 0..hd {
                        for xx in 0..wd {
                            let space = ((b * cs + cc) * hs + yy * r + i) * ws + xx * r + j;
                            let depth = ((b * cs * r * r + dc) * hd + yy) * wd + xx;
                            if to_space {
                                dst[space] = src[depth];
                            } else {
                                dst[depth] = src[space];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}
