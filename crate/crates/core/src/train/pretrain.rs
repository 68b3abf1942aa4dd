//! Training from scratch on a set of RGB (or grayscale) images.

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{MotionSpec, TrainConfig};
use super::loss::{denoise_loss_graph, m2m_loss_graph, rgb_loss_graph, PatchPair};
use super::simulate::{margin_for, random_affinity, render_views};
use super::trainer::Trainer;
use crate::autodiff::BnMode;
use crate::error::{Error, Result};
use crate::eval::{psnr, DEFAULT_BORDER};
use crate::imaging::{mosaic, AddNoise, BayerFrame, CfaPattern, NoiseSpec, PlanarImage};
use crate::network::{forward_demosaick, forward_denoise, NetKind, NetParams, NetSpec};
use crate::registration::AffineMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PretrainMode {
    /// Supervised by the RGB image.
    Gt,
    /// Supervised by a second mosaicked view under a random affinity.
    M2m,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainOptions {
    pub mode: PretrainMode,
    /// Noise added to every mosaicked input and target.
    pub noise: NoiseSpec,
    pub motion: MotionSpec,
    pub pattern: CfaPattern,
    /// Context around each target patch given to the network.
    pub pad: usize,
    /// Draw a new affinity for every patch instead of one per batch.
    pub affinity_per_patch: bool,
}

impl Default for PretrainOptions {
    fn default() -> Self {
        Self {
            mode: PretrainMode::M2m,
            noise: NoiseSpec::default(),
            motion: MotionSpec::default(),
            pattern: CfaPattern::default(),
            pad: 8,
            affinity_per_patch: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    pub mean_loss: f64,
    pub val_psnr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub initial_val_psnr: Option<f64>,
    pub epochs: Vec<EpochLog>,
}

/// Validation PSNR of a demosaicking net on `rgb` mosaicked with `pattern`
/// and noised with `noise`. The output is clipped before comparison.
pub fn demosaick_psnr(
    params: &NetParams,
    rgb: &PlanarImage,
    pattern: CfaPattern,
    noise: &NoiseSpec,
    mode: BnMode,
) -> Result<f64> {
    let frame = mosaic(rgb, pattern)?.add_noise(noise)?;
    let out = forward_demosaick(params, &frame, mode)?;
    psnr(&out.clipped(), rgb, DEFAULT_BORDER)
}

/// Validation PSNR of a denoiser on a clean image and its noisy version.
pub fn denoise_psnr(
    params: &NetParams,
    clean: &PlanarImage,
    noisy: &PlanarImage,
    mode: BnMode,
) -> Result<f64> {
    let out = forward_denoise(params, noisy, mode)?;
    psnr(&out.clipped(), clean, DEFAULT_BORDER)
}

fn check_dataset(dataset: &[PlanarImage], channels: usize, min_size: usize) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    for (i, img) in dataset.iter().enumerate() {
        if img.channels() != channels {
            return Err(Error::Data(format!(
                "training image {i} has {} channels, expected {channels}",
                img.channels()
            )));
        }
        if img.width() < min_size || img.height() < min_size {
            return Err(Error::Data(format!(
                "training image {i} is {}x{}, needs at least {min_size} per side",
                img.width(),
                img.height()
            )));
        }
    }
    Ok(())
}

fn random_crop<R: Rng>(img: &PlanarImage, size: usize, rng: &mut R) -> Result<PlanarImage> {
    let x = rng.random_range(0..=(img.width() - size) / 2) * 2;
    let y = rng.random_range(0..=(img.height() - size) / 2) * 2;
    img.crop(x, y, size, size)
}

/// Validation normalizes with the running statistics, as a deployed network
/// would.
const EVAL_MODE: BnMode = BnMode::Eval;

/// Trains a demosaicking network from `spec`, initialized from `cfg.seed`.
///
/// Patch selection draws from its own stream, so `Gt` and `M2m` runs with the
/// same seed visit the same image regions.
pub fn pretrain(
    spec: &NetSpec,
    dataset: &[PlanarImage],
    validation: Option<&PlanarImage>,
    cfg: &TrainConfig,
    opts: &PretrainOptions,
) -> Result<(NetParams, TrainLog)> {
    cfg.validate()?;
    opts.motion.validate()?;
    if spec.kind != NetKind::Demosaick {
        return Err(Error::Spec("pretrain expects a demosaicking spec".into()));
    }
    let patch = cfg.patch_size;
    let view = patch + 2 * opts.pad;
    let margin = margin_for(&opts.motion, view, view);
    let region = match opts.mode {
        PretrainMode::Gt => patch,
        PretrainMode::M2m => view + 2 * margin,
    };
    check_dataset(dataset, 3, region)?;

    let params = NetParams::init(spec, cfg.seed)?;
    let mut trainer = Trainer::new(params, cfg.learning_rate, BnMode::Train);
    let mut patch_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xa11ce);
    let mut motion_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xb0b);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xc0ffee);
    let val_noise = opts.noise.with_seed(opts.noise.seed ^ 0x7a1);
    let validate = |p: &NetParams| -> Result<Option<f64>> {
        validation
            .map(|v| demosaick_psnr(p, v, opts.pattern, &val_noise, EVAL_MODE))
            .transpose()
    };

    let mut log = TrainLog {
        initial_val_psnr: validate(&trainer.params)?,
        epochs: Vec::new(),
    };
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        trainer.set_learning_rate(lr);
        let mut total = 0.0;
        for _ in 0..cfg.steps_per_epoch {
            let loss = match opts.mode {
                PretrainMode::Gt => {
                    let mut inputs: Vec<BayerFrame> = Vec::with_capacity(cfg.batch_size);
                    let mut targets = Vec::with_capacity(cfg.batch_size);
                    for _ in 0..cfg.batch_size {
                        let img = &dataset[patch_rng.random_range(0..dataset.len())];
                        let crop = random_crop(img, region, &mut patch_rng)?;
                        let spec = opts.noise.with_seed(noise_rng.random());
                        inputs.push(mosaic(&crop, opts.pattern)?.add_noise(&spec)?);
                        targets.push(crop);
                    }
                    let ins: Vec<&BayerFrame> = inputs.iter().collect();
                    let tgs: Vec<&PlanarImage> = targets.iter().collect();
                    trainer.step(|g, vars, p, mode| {
                        rgb_loss_graph(g, p.spec(), vars, p.running(), &ins, &tgs, cfg.loss_p, mode)
                    })?
                }
                PretrainMode::M2m => {
                    let c = (view as f64 - 1.0) / 2.0;
                    let mut a = random_affinity(&opts.motion, c, c, &mut motion_rng);
                    let mut samples = Vec::with_capacity(cfg.batch_size);
                    for k in 0..cfg.batch_size {
                        if opts.affinity_per_patch && k > 0 {
                            a = random_affinity(&opts.motion, c, c, &mut motion_rng);
                        }
                        let img = &dataset[patch_rng.random_range(0..dataset.len())];
                        let crop = random_crop(img, region, &mut patch_rng)?;
                        let views = render_views(&crop, &[AffineMap::identity(), a], view, view)?;
                        let mut frames = Vec::with_capacity(2);
                        for v in &views {
                            let spec = opts.noise.with_seed(noise_rng.random());
                            frames.push(mosaic(v, opts.pattern)?.add_noise(&spec)?);
                        }
                        let pad = opts.pad;
                        samples.push(PatchPair {
                            target: frames[1].crop(pad, pad, patch, patch)?,
                            input: frames.swap_remove(0),
                            map: a.compose(&AffineMap::translation(pad as f64, pad as f64)),
                        });
                    }
                    let refs: Vec<&PatchPair> = samples.iter().collect();
                    trainer.step(|g, vars, p, mode| {
                        m2m_loss_graph(g, p.spec(), vars, p.running(), &refs, cfg.loss_p, mode)
                    })?
                }
            };
            total += loss;
        }
        let entry = EpochLog {
            epoch,
            learning_rate: lr,
            mean_loss: total / cfg.steps_per_epoch.max(1) as f64,
            val_psnr: validate(&trainer.params)?,
        };
        info!(
            "epoch {epoch}: lr {lr:.2e}, loss {:.5}, val PSNR {:?}",
            entry.mean_loss, entry.val_psnr
        );
        log.epochs.push(entry);
    }
    Ok((trainer.params, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoisePretrainOptions {
    /// Per-patch noise level drawn uniformly from this range (8-bit units).
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Noise level of the validation image.
    pub val_sigma: f64,
}

impl Default for DenoisePretrainOptions {
    fn default() -> Self {
        Self {
            sigma_min: 25.0,
            sigma_max: 25.0,
            val_sigma: 25.0,
        }
    }
}

/// Supervised training of a denoiser on clean single-channel images.
pub fn pretrain_denoiser(
    spec: &NetSpec,
    dataset: &[PlanarImage],
    validation: Option<&PlanarImage>,
    cfg: &TrainConfig,
    opts: &DenoisePretrainOptions,
) -> Result<(NetParams, TrainLog)> {
    cfg.validate()?;
    if spec.kind != NetKind::Denoise {
        return Err(Error::Spec("pretrain_denoiser expects a denoising spec".into()));
    }
    if !(0.0 <= opts.sigma_min && opts.sigma_min <= opts.sigma_max) {
        return Err(Error::config("sigma_min", "need 0 <= sigma_min <= sigma_max"));
    }
    check_dataset(dataset, spec.in_channels, cfg.patch_size)?;
    let mut trainer = Trainer::new(NetParams::init(spec, cfg.seed)?, cfg.learning_rate, BnMode::Train);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd0d0);
    let val = validation
        .map(|v| {
            v.add_noise(&NoiseSpec::new(opts.val_sigma, false, cfg.seed ^ 0x7a1))
                .map(|n| (v, n))
        })
        .transpose()?;
    let validate = |p: &NetParams| -> Result<Option<f64>> {
        val.as_ref()
            .map(|(c, n)| denoise_psnr(p, c, n, EVAL_MODE))
            .transpose()
    };
    let mut log = TrainLog {
        initial_val_psnr: validate(&trainer.params)?,
        epochs: Vec::new(),
    };
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        trainer.set_learning_rate(lr);
        let mut total = 0.0;
        for _ in 0..cfg.steps_per_epoch {
            let mut clean = Vec::with_capacity(cfg.batch_size);
            let mut noisy = Vec::with_capacity(cfg.batch_size);
            for _ in 0..cfg.batch_size {
                let img = &dataset[rng.random_range(0..dataset.len())];
                let crop = random_crop(img, cfg.patch_size, &mut rng)?;
                let sigma = if opts.sigma_max > opts.sigma_min {
                    rng.random_range(opts.sigma_min..opts.sigma_max)
                } else {
                    opts.sigma_min
                };
                noisy.push(crop.add_noise(&NoiseSpec::new(sigma, false, rng.random()))?);
                clean.push(crop);
            }
            let ins: Vec<&PlanarImage> = noisy.iter().collect();
            let tgs: Vec<&PlanarImage> = clean.iter().collect();
            total += trainer.step(|g, vars, p, mode| {
                denoise_loss_graph(g, p.spec(), vars, p.running(), &ins, &tgs, cfg.loss_p, mode)
            })?;
        }
        let entry = EpochLog {
            epoch,
            learning_rate: lr,
            mean_loss: total / cfg.steps_per_epoch.max(1) as f64,
            val_psnr: validate(&trainer.params)?,
        };
        info!(
            "denoiser epoch {epoch}: lr {lr:.2e}, loss {:.5}, val PSNR {:?}",
            entry.mean_loss, entry.val_psnr
        );
        log.epochs.push(entry);
    }
    Ok((trainer.params, log))
}
