//! Training objectives: the mosaic-to-mosaic loss and its supervised
//! counterparts.

use std::sync::Arc;

use rand::Rng;

use super::warp::warp_operator;
use crate::autodiff::{BnMode, Graph, Real, Tensor, Var};
use crate::error::{Error, Result};
use crate::imaging::{cfa_mask, embed, BayerFrame, PlanarImage};
use crate::network::{build_graph, demosaick_inputs, NetGraph, NetParams, NetSpec};
use crate::registration::AffineMap;

/// Two frames of a burst and the map registering `input` onto `target`.
#[derive(Debug, Clone)]
pub struct BurstPair {
    pub input: BayerFrame,
    pub target: BayerFrame,
    /// `input(map(p)) ≈ target(p)`.
    pub map: AffineMap,
    /// Whether the pair passed overlap and determinant screening.
    pub valid: bool,
}

/// Crops of a pair in local coordinates; `input` is larger than `target` by
/// a padding on each side.
#[derive(Debug, Clone)]
pub struct PatchPair {
    pub input: BayerFrame,
    pub target: BayerFrame,
    pub map: AffineMap,
}

fn even_clamp(v: f64, max: usize) -> usize {
    let v = v.round().clamp(0.0, max as f64) as usize;
    v & !1
}

/// Picks an even-aligned `patch × patch` target crop and the
/// `(patch + 2 pad)²` input crop around its preimage under `map`.
pub fn crop_pair<R: Rng>(
    input: &BayerFrame,
    target: &BayerFrame,
    map: &AffineMap,
    patch: usize,
    pad: usize,
    rng: &mut R,
) -> Result<PatchPair> {
    let size = patch + 2 * pad;
    if target.width() < patch || target.height() < patch {
        return Err(Error::Dimension(format!(
            "target {}x{} smaller than the {patch}-pixel patch",
            target.width(),
            target.height()
        )));
    }
    if input.width() < size || input.height() < size {
        return Err(Error::Dimension(format!(
            "input {}x{} smaller than the {size}-pixel padded patch",
            input.width(),
            input.height()
        )));
    }
    let half = (patch as f64 - 1.0) / 2.0;
    let mut pick = || {
        let tx = rng.random_range(0..=(target.width() - patch) / 2) * 2;
        let ty = rng.random_range(0..=(target.height() - patch) / 2) * 2;
        let c = map.apply(tx as f64 + half, ty as f64 + half);
        (tx, ty, c)
    };
    // Prefer patches whose preimage lies inside the input.
    let mut chosen = pick();
    for _ in 0..16 {
        let (_, _, (cx, cy)) = chosen;
        let inside = cx >= half + pad as f64
            && cy >= half + pad as f64
            && cx <= input.width() as f64 - half - pad as f64
            && cy <= input.height() as f64 - half - pad as f64;
        if inside {
            break;
        }
        chosen = pick();
    }
    let (tx, ty, (cx, cy)) = chosen;
    let sz = (size as f64 - 1.0) / 2.0;
    let ix = even_clamp(cx - sz, input.width() - size);
    let iy = even_clamp(cy - sz, input.height() - size);
    let local = AffineMap::translation(-(ix as f64), -(iy as f64))
        .compose(map)
        .compose(&AffineMap::translation(tx as f64, ty as f64));
    Ok(PatchPair {
        input: input.crop(ix, iy, size, size)?,
        target: target.crop(tx, ty, patch, patch)?,
        map: local,
    })
}

/// Target and mask tensors of the mosaic-to-mosaic loss: the target mosaic
/// embedded in 3 channels, and the warp mask intersected with the target's
/// CFA mask.
fn m2m_targets<T: Real>(
    samples: &[&PatchPair],
) -> Result<(Vec<Arc<crate::autodiff::ResampleMap>>, Tensor<T>, Tensor<T>)> {
    let mut ops = Vec::with_capacity(samples.len());
    let mut targets = Vec::with_capacity(samples.len());
    let mut masks = Vec::with_capacity(samples.len());
    for s in samples {
        let (tw, th) = (s.target.width(), s.target.height());
        let (op, warp_mask) = warp_operator(&s.map, s.input.width(), s.input.height(), tw, th)?;
        ops.push(Arc::new(op));
        targets.push(embed(&s.target));
        let mut mask = cfa_mask(tw, th, s.target.pattern());
        for c in 0..3 {
            for (m, &inside) in mask.plane_mut(c).iter_mut().zip(warp_mask.data()) {
                if !inside {
                    *m = 0.0;
                }
            }
        }
        masks.push(mask);
    }
    let t = Tensor::from_images(&targets.iter().collect::<Vec<_>>())?;
    let m = Tensor::from_images(&masks.iter().collect::<Vec<_>>())?;
    Ok((ops, t, m))
}

/// `‖M(T(D(input))) − target‖_p^p` averaged over the samples where the
/// warp is defined and the target's CFA has a sample.
#[allow(clippy::too_many_arguments)]
pub fn m2m_loss_graph<T: Real>(
    g: &mut Graph<T>,
    spec: &NetSpec,
    params: &[Var],
    running: &[crate::network::BnRunning],
    samples: &[&PatchPair],
    p: u8,
    mode: BnMode,
) -> Result<(Var, NetGraph)> {
    let inputs: Vec<&BayerFrame> = samples.iter().map(|s| &s.input).collect();
    let (packed, base) = demosaick_inputs::<T>(&inputs)?;
    let x = g.input(packed);
    let b = g.input(base);
    let net = build_graph(g, spec, params, running, x, Some(b), mode)?;
    let (ops, target, mask) = m2m_targets::<T>(samples)?;
    let warped = g.resample(net.output, &ops)?;
    let loss = g.masked_loss(warped, &target, &mask, p)?;
    Ok((loss, net))
}

/// Supervised demosaicking loss against full RGB targets.
#[allow(clippy::too_many_arguments)]
pub fn rgb_loss_graph<T: Real>(
    g: &mut Graph<T>,
    spec: &NetSpec,
    params: &[Var],
    running: &[crate::network::BnRunning],
    inputs: &[&BayerFrame],
    targets: &[&PlanarImage],
    p: u8,
    mode: BnMode,
) -> Result<(Var, NetGraph)> {
    let (packed, base) = demosaick_inputs::<T>(inputs)?;
    let x = g.input(packed);
    let b = g.input(base);
    let net = build_graph(g, spec, params, running, x, Some(b), mode)?;
    let t = Tensor::from_images(targets)?;
    let mask = Tensor::full(t.shape(), T::one());
    let loss = g.masked_loss(net.output, &t, &mask, p)?;
    Ok((loss, net))
}

/// Denoising loss between `f(inputs)` and `targets`, which may be clean or
/// independently noisy.
#[allow(clippy::too_many_arguments)]
pub fn denoise_loss_graph<T: Real>(
    g: &mut Graph<T>,
    spec: &NetSpec,
    params: &[Var],
    running: &[crate::network::BnRunning],
    inputs: &[&PlanarImage],
    targets: &[&PlanarImage],
    p: u8,
    mode: BnMode,
) -> Result<(Var, NetGraph)> {
    let x = g.input(Tensor::from_images(inputs)?);
    let net = build_graph(g, spec, params, running, x, None, mode)?;
    let t = Tensor::from_images(targets)?;
    let mask = Tensor::full(t.shape(), T::one());
    let loss = g.masked_loss(net.output, &t, &mask, p)?;
    Ok((loss, net))
}

/// Value of the mosaic-to-mosaic loss of `params` on a whole pair.
pub fn m2m_loss(params: &NetParams, pair: &BurstPair, p: u8, mode: BnMode) -> Result<f64> {
    if !pair.valid {
        return Err(Error::Registration("pair failed screening".into()));
    }
    let sample = PatchPair {
        input: pair.input.clone(),
        target: pair.target.clone(),
        map: pair.map,
    };
    let mut g = Graph::<f32>::new();
    let vars: Vec<Var> = params.tensors().iter().map(|t| g.input(t.clone())).collect();
    let (loss, _) = m2m_loss_graph(&mut g, params.spec(), &vars, params.running(), &[&sample], p, mode)?;
    Ok(g.value(loss).item() as f64)
}
