use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{NetSpec, Step};
use crate::autodiff::{Checkpoint, Tensor};
use crate::error::{Error, Result};

/// Running batch-normalization statistics of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnRunning {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
}

/// Running-average momentum.
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Learned parameters of a network, in plan order: for every convolution its
/// weight and bias, followed by gamma and beta when it is normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams {
    spec: NetSpec,
    names: Vec<String>,
    tensors: Vec<Tensor<f32>>,
    running: Vec<BnRunning>,
}

fn layout(spec: &NetSpec) -> Result<(Vec<(String, [usize; 4])>, Vec<usize>)> {
    let mut entries = Vec::new();
    let mut bn_channels = Vec::new();
    let mut conv = 0;
    for step in spec.plan()? {
        if let Step::Conv { cin, cout, bn, .. } = step {
            entries.push((format!("conv{conv}.weight"), [cout, cin, 3, 3]));
            entries.push((format!("conv{conv}.bias"), [1, cout, 1, 1]));
            if bn {
                let k = bn_channels.len();
                entries.push((format!("bn{k}.gamma"), [1, cout, 1, 1]));
                entries.push((format!("bn{k}.beta"), [1, cout, 1, 1]));
                bn_channels.push(cout);
            }
            conv += 1;
        }
    }
    Ok((entries, bn_channels))
}

impl NetParams {
    /// He-uniform convolution weights, zero biases, unit gamma, zero beta.
    /// With `spec.zero_output` the last convolution starts at zero.
    pub fn init(spec: &NetSpec, seed: u64) -> Result<Self> {
        let (entries, bn) = layout(spec)?;
        let last = entries
            .iter()
            .rposition(|(n, _)| n.ends_with(".weight"))
            .expect("at least one convolution");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = entries
            .iter()
            .enumerate()
            .map(|(i, (name, shape))| {
                if name.ends_with(".weight") {
                    let bound = (6.0 / (shape[1] * 9) as f64).sqrt();
                    let n = shape.iter().product();
                    let data: Vec<f32> =
                        (0..n).map(|_| rng.random_range(-bound..bound) as f32).collect();
                    if i == last && spec.zero_output {
                        return Tensor::zeros(*shape);
                    }
                    Tensor::from_vec(*shape, data).expect("planned shape")
                } else if name.ends_with(".gamma") {
                    Tensor::full(*shape, 1.0)
                } else {
                    Tensor::zeros(*shape)
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            names: entries.into_iter().map(|(n, _)| n).collect(),
            tensors,
            running: bn.iter().map(|&c| BnRunning::identity(c)).collect(),
        })
    }

    /// Every learned parameter set to zero; the network reduces to its
    /// analytic baseline.
    pub fn zeroed(spec: &NetSpec) -> Result<Self> {
        let mut p = Self::init(spec, 0)?;
        for t in &mut p.tensors {
            t.data_mut().fill(0.0);
        }
        Ok(p)
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<f32>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<f32>] {
        &mut self.tensors
    }

    pub fn running(&self) -> &[BnRunning] {
        &self.running
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Folds batch statistics into the running averages; `var` is the biased
    /// batch variance over `count` samples.
    pub fn update_running(&mut self, layer: usize, mean: &[f32], var: &[f32], count: usize) {
        let r = &mut self.running[layer];
        let m = BN_MOMENTUM as f32;
        let unbias = if count > 1 {
            count as f32 / (count - 1) as f32
        } else {
            1.0
        };
        for (i, (&bm, &bv)) in mean.iter().zip(var).enumerate() {
            r.mean[i] = (1.0 - m) * r.mean[i] + m * bm;
            r.var[i] = (1.0 - m) * r.var[i] + m * bv * unbias;
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors: Vec<(String, Tensor<f32>)> = self
            .names
            .iter()
            .cloned()
            .zip(self.tensors.iter().cloned())
            .collect();
        for (k, r) in self.running.iter().enumerate() {
            let c = r.mean.len();
            tensors.push((
                format!("bn{k}.running_mean"),
                Tensor::from_vec([1, c, 1, 1], r.mean.clone()).expect("channel vector"),
            ));
            tensors.push((
                format!("bn{k}.running_var"),
                Tensor::from_vec([1, c, 1, 1], r.var.clone()).expect("channel vector"),
            ));
        }
        Checkpoint {
            meta: serde_json::json!({ "spec": self.spec }),
            tensors,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let spec: NetSpec = serde_json::from_value(
            ck.meta
                .get("spec")
                .cloned()
                .ok_or_else(|| Error::Data("checkpoint has no network spec".into()))?,
        )?;
        let (entries, bn) = layout(&spec)?;
        let expected = entries.len() + 2 * bn.len();
        if ck.tensors.len() != expected {
            return Err(Error::Data(format!(
                "checkpoint has {} tensors, spec needs {expected}",
                ck.tensors.len()
            )));
        }
        let mut it = ck.tensors.into_iter();
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, shape) in entries {
            let (n, t) = it.next().expect("counted");
            if n != name || t.shape() != shape {
                return Err(Error::Data(format!(
                    "checkpoint tensor `{n}` {:?} where `{name}` {shape:?} was expected",
                    t.shape()
                )));
            }
            names.push(n);
            tensors.push(t);
        }
        let mut running = Vec::new();
        for (k, c) in bn.into_iter().enumerate() {
            let mut next = |suffix: &str| -> Result<Vec<f32>> {
                let (n, t) = it.next().expect("counted");
                if n != format!("bn{k}.{suffix}") || t.numel() != c {
                    return Err(Error::Data(format!("unexpected checkpoint tensor `{n}`")));
                }
                Ok(t.into_data())
            };
            let mean = next("running_mean")?;
            let var = next("running_var")?;
            running.push(BnRunning { mean, var });
        }
        Ok(Self {
            spec,
            names,
            tensors,
            running,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}

impl BnRunning {
    fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}
