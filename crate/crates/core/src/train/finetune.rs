//! Adapting a pretrained network to one burst.

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{FinetuneOptions, TrainConfig};
use super::loss::{crop_pair, denoise_loss_graph, m2m_loss_graph, BurstPair, PatchPair};
use super::schedule::PairSchedule;
use super::trainer::Trainer;
use crate::autodiff::BnMode;
use crate::error::{Error, Result};
use crate::eval::{psnr, DEFAULT_BORDER};
use crate::imaging::{BayerFrame, PlanarImage};
use crate::network::{forward_demosaick, forward_denoise, NetKind, NetParams};
use crate::registration::{estimate_affine_bayer, overlap_fraction, AffineMap, RegistrationConfig};

/// Context around each target patch given to the network during fine-tuning.
pub const FINETUNE_PAD: usize = 8;

/// Registration outcome of one ordered pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisteredPair {
    pub input_idx: usize,
    pub target_idx: usize,
    pub map: AffineMap,
    pub overlap: f64,
    pub valid: bool,
}

/// One row of a PSNR trace: quality of the reference output after the given
/// pair was processed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub pair_index: usize,
    pub input_idx: usize,
    pub target_idx: usize,
    pub psnr_db: f64,
}

#[derive(Debug, Clone)]
pub struct FinetuneResult {
    pub params: NetParams,
    pub pairs: Vec<RegisteredPair>,
    /// PSNR of the reference output before any update.
    pub initial_psnr: Option<f64>,
    pub trace: Vec<TraceRow>,
}

impl FinetuneResult {
    pub fn final_psnr(&self) -> Option<f64> {
        self.trace.last().map(|r| r.psnr_db).or(self.initial_psnr)
    }
}

/// Registers every scheduled pair; pairs that fail are kept with
/// `valid == false`.
pub fn register_pairs(
    burst: &[BayerFrame],
    schedule: &PairSchedule,
    cfg: &RegistrationConfig,
) -> Vec<RegisteredPair> {
    schedule
        .pairs
        .par_iter()
        .map(|&(i, j)| {
            let (w, h) = (burst[i].width(), burst[i].height());
            match estimate_affine_bayer(&burst[i], &burst[j], cfg) {
                Ok(reg) => {
                    let overlap = overlap_fraction(&reg.map, w, h);
                    RegisteredPair {
                        input_idx: i,
                        target_idx: j,
                        map: reg.map,
                        overlap,
                        valid: overlap >= cfg.min_overlap && reg.map.check_det_bounds().is_ok(),
                    }
                }
                Err(e) => {
                    warn!("dropping pair ({i}, {j}): {e}");
                    RegisteredPair {
                        input_idx: i,
                        target_idx: j,
                        map: AffineMap::identity(),
                        overlap: 0.0,
                        valid: false,
                    }
                }
            }
        })
        .collect()
}

/// Quality of the network output on the reference frame.
const EVAL_MODE: BnMode = BnMode::BatchStats;

fn check_burst_len(n: usize, reference: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::Data(format!("a burst needs at least 2 frames, got {n}")));
    }
    if reference >= n {
        return Err(Error::Data(format!("reference {reference} outside a burst of {n}")));
    }
    Ok(())
}

/// Registers all ordered pairs of a mosaicked burst, then fine-tunes with
/// the mosaic-to-mosaic loss along the lexicographic schedule.
///
/// When `clean` (the reference's ground truth) is given, the PSNR of the
/// reference output is traced after every pair.
pub fn finetune_burst(
    params: NetParams,
    burst: &[BayerFrame],
    reference: usize,
    cfg: &TrainConfig,
    opts: &FinetuneOptions,
    clean: Option<&PlanarImage>,
) -> Result<FinetuneResult> {
    check_burst_len(burst.len(), reference)?;
    opts.validate()?;
    let schedule = PairSchedule::lexicographic(burst.len(), reference)?;
    let pairs = register_pairs(burst, &schedule, &opts.registration);
    finetune_registered(params, burst, reference, &pairs, cfg, opts, clean)
}

/// Fine-tunes along `pairs` (in order) with already known maps.
pub fn finetune_registered(
    params: NetParams,
    burst: &[BayerFrame],
    reference: usize,
    pairs: &[RegisteredPair],
    cfg: &TrainConfig,
    opts: &FinetuneOptions,
    clean: Option<&PlanarImage>,
) -> Result<FinetuneResult> {
    check_burst_len(burst.len(), reference)?;
    cfg.validate()?;
    opts.validate()?;
    if params.spec().kind != NetKind::Demosaick {
        return Err(Error::Spec("burst fine-tuning expects a demosaicking net".into()));
    }
    let valid = pairs.iter().filter(|p| p.valid).count();
    if valid == 0 {
        return Err(Error::Registration("no pair of the burst could be registered".into()));
    }
    info!("{valid} of {} pairs usable", pairs.len());

    let evaluate = |p: &NetParams| -> Result<Option<f64>> {
        clean
            .map(|c| {
                let out = forward_demosaick(p, &burst[reference], EVAL_MODE)?;
                psnr(&out.clipped(), c, DEFAULT_BORDER)
            })
            .transpose()
    };
    let initial_psnr = evaluate(&params)?;
    let mut trainer = Trainer::new(params, cfg.learning_rate, opts.bn_mode);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Vec::new();
    let mut pair_index = 0;
    for pass in 0..opts.passes {
        trainer.set_learning_rate(cfg.learning_rate_at(pass));
        for pair in pairs.iter().filter(|p| p.valid) {
            let (input, target) = (&burst[pair.input_idx], &burst[pair.target_idx]);
            for _ in 0..opts.steps_per_pair {
                m2m_step(&mut trainer, input, target, &pair.map, cfg, &mut rng)?;
            }
            if let Some(psnr_db) = evaluate(&trainer.params)? {
                trace.push(TraceRow {
                    pair_index,
                    input_idx: pair.input_idx,
                    target_idx: pair.target_idx,
                    psnr_db,
                });
            }
            pair_index += 1;
        }
    }
    Ok(FinetuneResult {
        params: trainer.params,
        pairs: pairs.to_vec(),
        initial_psnr,
        trace,
    })
}

fn m2m_step<R: Rng>(
    trainer: &mut Trainer,
    input: &BayerFrame,
    target: &BayerFrame,
    map: &AffineMap,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    // Patches whose warp is undefined everywhere are redrawn.
    for _ in 0..8 {
        let samples = (0..cfg.batch_size)
            .map(|_| crop_pair(input, target, map, cfg.patch_size, FINETUNE_PAD, rng))
            .collect::<Result<Vec<PatchPair>>>()?;
        let refs: Vec<&PatchPair> = samples.iter().collect();
        match trainer.step(|g, vars, p, mode| {
            m2m_loss_graph(g, p.spec(), vars, p.running(), &refs, cfg.loss_p, mode)
        }) {
            Err(Error::DegenerateLoss) => continue,
            other => return other,
        }
    }
    Err(Error::DegenerateLoss)
}

/// Fine-tunes a denoiser on a static (motionless) burst: each pair maps one
/// noisy frame onto another with the identity.
pub fn finetune_static(
    params: NetParams,
    frames: &[PlanarImage],
    reference: usize,
    cfg: &TrainConfig,
    opts: &FinetuneOptions,
    clean: Option<&PlanarImage>,
) -> Result<FinetuneResult> {
    check_burst_len(frames.len(), reference)?;
    cfg.validate()?;
    opts.validate()?;
    if params.spec().kind != NetKind::Denoise {
        return Err(Error::Spec("static fine-tuning expects a denoiser".into()));
    }
    let (w, h) = (frames[0].width(), frames[0].height());
    if frames.iter().any(|f| f.width() != w || f.height() != h) {
        return Err(Error::Data("burst frames differ in size".into()));
    }
    let patch = cfg.patch_size.min(w).min(h) & !1;
    let schedule = PairSchedule::lexicographic(frames.len(), reference)?;
    let evaluate = |p: &NetParams| -> Result<Option<f64>> {
        clean
            .map(|c| {
                let out = forward_denoise(p, &frames[reference], EVAL_MODE)?;
                psnr(&out.clipped(), c, DEFAULT_BORDER)
            })
            .transpose()
    };
    let initial_psnr = evaluate(&params)?;
    let mut trainer = Trainer::new(params, cfg.learning_rate, opts.bn_mode);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Vec::new();
    let mut pair_index = 0;
    for pass in 0..opts.passes {
        trainer.set_learning_rate(cfg.learning_rate_at(pass));
        for &(i, j) in &schedule.pairs {
            for _ in 0..opts.steps_per_pair {
                let mut ins = Vec::with_capacity(cfg.batch_size);
                let mut tgs = Vec::with_capacity(cfg.batch_size);
                for _ in 0..cfg.batch_size {
                    let x = rng.random_range(0..=w - patch);
                    let y = rng.random_range(0..=h - patch);
                    ins.push(frames[i].crop(x, y, patch, patch)?);
                    tgs.push(frames[j].crop(x, y, patch, patch)?);
                }
                let ins: Vec<&PlanarImage> = ins.iter().collect();
                let tgs: Vec<&PlanarImage> = tgs.iter().collect();
                trainer.step(|g, vars, p, mode| {
                    denoise_loss_graph(g, p.spec(), vars, p.running(), &ins, &tgs, cfg.loss_p, mode)
                })?;
            }
            if let Some(psnr_db) = evaluate(&trainer.params)? {
                trace.push(TraceRow {
                    pair_index,
                    input_idx: i,
                    target_idx: j,
                    psnr_db,
                });
            }
            pair_index += 1;
        }
    }
    let pairs = schedule
        .pairs
        .iter()
        .map(|&(i, j)| RegisteredPair {
            input_idx: i,
            target_idx: j,
            map: AffineMap::identity(),
            overlap: 1.0,
            valid: true,
        })
        .collect();
    Ok(FinetuneResult {
        params: trainer.params,
        pairs,
        initial_psnr,
        trace,
    })
}

/// Pair-level view of a registered pair, for computing its loss directly.
pub fn burst_pair(burst: &[BayerFrame], pair: &RegisteredPair) -> BurstPair {
    BurstPair {
        input: burst[pair.input_idx].clone(),
        target: burst[pair.target_idx].clone(),
        map: pair.map,
        valid: pair.valid,
    }
}
