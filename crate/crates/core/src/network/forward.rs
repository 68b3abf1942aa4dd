use super::params::{BnRunning, NetParams, BN_EPS};
use super::spec::{NetKind, NetSpec, Step};
use crate::autodiff::{BnMode, Graph, Real, Tensor, Var};
use crate::error::{Error, Result};
use crate::imaging::{demosaic_bilinear, pack_phases, BayerFrame, PlanarImage};

/// Nodes of one network application inside a graph.
#[derive(Debug, Clone)]
pub struct NetGraph {
    pub output: Var,
    /// Normalization nodes in layer order, for running-statistics updates.
    pub bn_nodes: Vec<Var>,
}

/// Adds every parameter to `g` as a trainable leaf, in [`NetParams`] order.
pub fn param_vars<T: Real>(g: &mut Graph<T>, params: &NetParams) -> Vec<Var> {
    params.tensors().iter().map(|t| g.param(t.cast())).collect()
}

/// Applies the network described by `spec` to `input`.
///
/// For the demosaicking net `input` holds packed phases and `base` the
/// bilinear image that the output is added to; for the denoiser the output
/// is `input` minus the predicted noise and `base` is unused.
pub fn build_graph<T: Real>(
    g: &mut Graph<T>,
    spec: &NetSpec,
    params: &[Var],
    running: &[BnRunning],
    input: Var,
    base: Option<Var>,
    mode: BnMode,
) -> Result<NetGraph> {
    let plan = spec.plan()?;
    let mut it = params.iter().copied();
    let mut next = || {
        it.next()
            .ok_or_else(|| Error::Spec("too few parameter nodes for the plan".into()))
    };
    let mut x = input;
    let mut bn_nodes = Vec::new();
    for step in plan {
        match step {
            Step::DepthToSpace => x = g.depth_to_space(x, 2)?,
            Step::Conv { bn, relu, .. } => {
                let (w, b) = (next()?, next()?);
                x = g.conv3x3(x, w, b)?;
                if bn {
                    let (gamma, beta) = (next()?, next()?);
                    let r = &running[bn_nodes.len()];
                    let m: Vec<T> = r.mean.iter().map(|&v| T::of(v as f64)).collect();
                    let v: Vec<T> = r.var.iter().map(|&v| T::of(v as f64)).collect();
                    x = g.batch_norm(x, gamma, beta, mode, Some((&m, &v)), BN_EPS)?;
                    bn_nodes.push(x);
                }
                if relu {
                    x = g.relu(x);
                }
            }
        }
    }
    let output = match (spec.kind, spec.residual) {
        (_, false) => x,
        (NetKind::Demosaick, true) => {
            let base = base.ok_or_else(|| {
                Error::Spec("residual demosaicking needs the bilinear base".into())
            })?;
            g.add(x, base)?
        }
        (NetKind::Denoise, true) => g.sub(input, x)?,
    };
    Ok(NetGraph { output, bn_nodes })
}

/// Network inputs for a batch of frames: packed phases and bilinear bases.
pub fn demosaick_inputs<T: Real>(frames: &[&BayerFrame]) -> Result<(Tensor<T>, Tensor<T>)> {
    let packed: Vec<PlanarImage> = frames.iter().map(|f| pack_phases(f)).collect();
    let bases: Vec<PlanarImage> = frames.iter().map(|f| demosaic_bilinear(f)).collect();
    Ok((
        Tensor::from_images(&packed.iter().collect::<Vec<_>>())?,
        Tensor::from_images(&bases.iter().collect::<Vec<_>>())?,
    ))
}

/// Folds the batch statistics recorded in `net` into `params`.
pub fn update_running_stats(params: &mut NetParams, g: &Graph<f32>, net: &NetGraph) {
    for (k, &node) in net.bn_nodes.iter().enumerate() {
        if let Some((mean, var, count)) = g.batch_statistics(node) {
            let (mean, var) = (mean.to_vec(), var.to_vec());
            params.update_running(k, &mean, &var, count);
        }
    }
}

fn check_kind(params: &NetParams, kind: NetKind) -> Result<()> {
    if params.spec().kind != kind {
        return Err(Error::Spec(format!(
            "expected a {kind:?} network, got {:?}",
            params.spec().kind
        )));
    }
    Ok(())
}

/// Demosaicks a batch of frames. Outputs are not clipped.
pub fn forward_demosaick_batch(
    params: &NetParams,
    frames: &[&BayerFrame],
    mode: BnMode,
) -> Result<Vec<PlanarImage>> {
    check_kind(params, NetKind::Demosaick)?;
    let (packed, base) = demosaick_inputs::<f32>(frames)?;
    let mut g = Graph::new();
    let vars: Vec<Var> = params.tensors().iter().map(|t| g.input(t.clone())).collect();
    let x = g.input(packed);
    let b = g.input(base);
    let net = build_graph(&mut g, params.spec(), &vars, params.running(), x, Some(b), mode)?;
    let out = g.value(net.output);
    Ok((0..frames.len()).map(|i| out.to_image(i)).collect())
}

pub fn forward_demosaick(params: &NetParams, bayer: &BayerFrame, mode: BnMode) -> Result<PlanarImage> {
    Ok(forward_demosaick_batch(params, &[bayer], mode)?.remove(0))
}

/// Denoises an image whose channel count matches the network. Outputs are
/// not clipped.
pub fn forward_denoise(params: &NetParams, img: &PlanarImage, mode: BnMode) -> Result<PlanarImage> {
    check_kind(params, NetKind::Denoise)?;
    if img.channels() != params.spec().in_channels {
        return Err(Error::Shape(format!(
            "denoiser expects {} channels, got {}",
            params.spec().in_channels,
            img.channels()
        )));
    }
    let mut g = Graph::new();
    let vars: Vec<Var> = params.tensors().iter().map(|t| g.input(t.clone())).collect();
    let x = g.input(Tensor::from_image(img));
    let net = build_graph(&mut g, params.spec(), &vars, params.running(), x, None, mode)?;
    Ok(g.value(net.output).to_image(0))
}
