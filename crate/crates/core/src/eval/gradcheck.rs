//! Gradient checks of every differentiable operator and of the composed
//! mosaic-to-mosaic loss.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::GradcheckConfig;
use crate::autodiff::{grad_check, BnMode, GradCheck, Graph, Probe, Tensor, Var};
use crate::error::Result;
use crate::imaging::{synth, CfaPattern, NoiseSpec};
use crate::network::{NetParams, NetSpec};
use crate::registration::AffineMap;
use crate::train::{crop_pair, m2m_loss_graph, simulate_burst, warp_operator, MotionSpec};

/// Context of the composed check on each side of the target crop.
pub const COMPOSED_PAD: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub probed: usize,
    pub tolerance: f64,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("shape matches")
}

/// Moves entries out of `(-0.05, 0.05)` so central differences do not
/// straddle the kink of ReLU or |·|.
fn off_kink(mut t: Tensor<f64>) -> Tensor<f64> {
    for v in t.data_mut() {
        if v.abs() < 0.05 {
            *v += 0.1;
        }
    }
    t
}

/// Squared distance to a fixed random target, so that non-scalar ops see a
/// generic upstream gradient.
fn project(g: &mut Graph<f64>, x: Var, target: &Tensor<f64>) -> Result<Var> {
    let mask = Tensor::full(target.shape(), 1.0);
    g.masked_loss(x, target, &mask, 2)
}

/// Runs every check. Single operators are probed exhaustively, the composed
/// loss on `cfg.probes_per_tensor` coordinates of every parameter tensor.
pub fn gradient_suite(cfg: &GradcheckConfig, seed: u64) -> Result<Vec<OpCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut record = |name: &str, r: GradCheck, tolerance: f64| {
        out.push(OpCheck {
            name: name.to_string(),
            max_rel_error: r.max_rel_error,
            probed: r.probed,
            tolerance,
        })
    };
    let tol = cfg.op_tolerance;

    let x = random([2, 3, 5, 6], &mut rng);
    let w = random([4, 3, 3, 3], &mut rng);
    let b = random([1, 4, 1, 1], &mut rng);
    let t = random([2, 4, 5, 6], &mut rng);
    let r = grad_check(
        |g, v| {
            let y = g.conv3x3(v[0], v[1], v[2])?;
            project(g, y, &t)
        },
        &[x, w, b],
        Probe::All,
    )?;
    record("conv3x3", r, tol);

    let (mean, var) = (vec![0.1, -0.2, 0.05], vec![0.5, 1.5, 0.9]);
    for (name, mode) in [("batch_norm_train", BnMode::Train), ("batch_norm_eval", BnMode::Eval)] {
        let inputs = [
            random([2, 3, 4, 4], &mut rng),
            random([1, 3, 1, 1], &mut rng),
            random([1, 3, 1, 1], &mut rng),
        ];
        let t = random([2, 3, 4, 4], &mut rng);
        let r = grad_check(
            |g, v| {
                let y = g.batch_norm(v[0], v[1], v[2], mode, Some((&mean, &var)), 1e-5)?;
                project(g, y, &t)
            },
            &inputs,
            Probe::All,
        )?;
        record(name, r, tol);
    }

    let x = off_kink(random([1, 2, 4, 4], &mut rng));
    let t = random([1, 2, 4, 4], &mut rng);
    let r = grad_check(
        |g, v| {
            let y = g.relu(v[0]);
            project(g, y, &t)
        },
        &[x],
        Probe::All,
    )?;
    record("relu", r, tol);

    let (a, b) = (random([1, 2, 4, 4], &mut rng), random([1, 2, 4, 4], &mut rng));
    let t = random([1, 2, 4, 4], &mut rng);
    let r = grad_check(
        |g, v| {
            let y = g.add(v[0], v[1])?;
            project(g, y, &t)
        },
        &[a, b],
        Probe::All,
    )?;
    record("add", r, tol);

    let x = random([2, 8, 3, 2], &mut rng);
    let t = random([2, 2, 6, 4], &mut rng);
    let r = grad_check(
        |g, v| {
            let y = g.depth_to_space(v[0], 2)?;
            project(g, y, &t)
        },
        &[x],
        Probe::All,
    )?;
    record("depth_to_space", r, tol);

    let shape = [2, 3, 4, 4];
    let target = random(shape, &mut rng);
    let mut mask = Tensor::zeros(shape);
    for m in mask.data_mut() {
        *m = if rng.random_bool(0.6) { 1.0 } else { 0.0 };
    }
    for p in [1u8, 2] {
        let mut pred = random(shape, &mut rng);
        for (a, &b) in pred.data_mut().iter_mut().zip(target.data()) {
            if (*a - b).abs() < 0.05 {
                *a += 0.1;
            }
        }
        let r = grad_check(|g, v| g.masked_loss(v[0], &target, &mask, p), &[pred], Probe::All)?;
        record(&format!("masked_loss_l{p}"), r, tol);
    }

    let map = AffineMap::rotation_about(0.05, 5.0, 5.0).compose(&AffineMap::translation(0.3, -0.4));
    let (op, _) = warp_operator(&map, 12, 12, 12, 12)?;
    let op = Arc::new(op);
    let img = Tensor::<f64>::from_image(&synth::natural_scene(12, 12, seed));
    let t = random([1, 3, 12, 12], &mut rng);
    let r = grad_check(
        |g, v| {
            let y = g.resample(v[0], std::slice::from_ref(&op))?;
            project(g, y, &t)
        },
        &[img],
        Probe::All,
    )?;
    record("warp_bicubic", r, tol);

    let r = composed_check(cfg, seed)?;
    record("m2m_loss", r, cfg.loss_tolerance);
    Ok(out)
}

/// The full loss (network, warp, re-mosaicking, masked L2) on one
/// `crop × crop` input with a small network.
fn composed_check(cfg: &GradcheckConfig, seed: u64) -> Result<GradCheck> {
    let spec = NetSpec::demosaick().with_size(2, 6);
    let params = NetParams::init(&spec, seed)?;
    let burst = simulate_burst(
        &synth::natural_scene(48, 48, seed ^ 0x5ce7e),
        2,
        &MotionSpec {
            max_shift: 1.0,
            max_rot: 1.0,
            max_scale: 0.0,
        },
        &NoiseSpec::new(5.0, false, seed),
        CfaPattern::Rggb,
        seed,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patch = cfg.crop - 2 * COMPOSED_PAD;
    let sample = crop_pair(&burst.frames[1], &burst.frames[0], &burst.maps[1], patch, COMPOSED_PAD, &mut rng)?;
    let inputs: Vec<Tensor<f64>> = params.tensors().iter().map(|t| t.cast()).collect();
    grad_check(
        |g, vars| {
            let (loss, _) =
                m2m_loss_graph(g, &spec, vars, params.running(), &[&sample], 2, BnMode::Train)?;
            Ok(loss)
        },
        &inputs,
        Probe::Sample {
            per_input: cfg.probes_per_tensor,
            seed,
        },
    )
}
