use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Finite-difference step.
pub const GRADCHECK_STEP: f64 = 1e-5;

/// Which coordinates of each input are probed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    All,
    /// At most this many coordinates per input, chosen by a seeded RNG.
    Sample { per_input: usize, seed: u64 },
}

/// Outcome of a gradient check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub probed: usize,
}

/// Gradients below this magnitude are compared absolutely; central
/// differences of a step of 1e-5 carry round-off of roughly 1e-11.
pub const GRADCHECK_FLOOR: f64 = 1e-6;

fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(GRADCHECK_FLOOR)
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences at 64-bit precision.
///
/// `f` receives a fresh graph and one trainable leaf per input, and returns
/// the scalar output node.
pub fn grad_check<F>(f: F, inputs: &[Tensor<f64>], probe: Probe) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        Ok(g.value(out).item())
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut rng = ChaCha8Rng::seed_from_u64(match probe {
        Probe::All => 0,
        Probe::Sample { seed, .. } => seed,
    });
    let mut worst = 0.0f64;
    let mut probed = 0;
    let mut vals = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let n = inputs[i].numel();
        let zeros = Tensor::zeros(inputs[i].shape());
        let analytic = grads.get(*var).unwrap_or(&zeros);
        let coords: Vec<usize> = match probe {
            Probe::Sample { per_input, .. } if per_input < n => {
                let mut c = sample(&mut rng, n, per_input).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for k in coords {
            let x0 = inputs[i].data()[k];
            vals[i].data_mut()[k] = x0 + GRADCHECK_STEP;
            let fp = eval(&vals)?;
            vals[i].data_mut()[k] = x0 - GRADCHECK_STEP;
            let fm = eval(&vals)?;
            vals[i].data_mut()[k] = x0;
            let numeric = (fp - fm) / (2.0 * GRADCHECK_STEP);
            let err = rel_error(analytic.data()[k], numeric);
            if !err.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient at input {i}[{k}]")));
            }
            worst = worst.max(err);
            probed += 1;
        }
    }
    Ok(GradCheck {
        max_rel_error: worst,
        probed,
    })
}
