//! Bicubic warping, the mosaic-to-mosaic loss, burst simulation, pretraining
//! and burst fine-tuning.

pub mod burst_io;
mod config;
mod finetune;
mod loss;
mod pretrain;
mod schedule;
mod simulate;
mod tnr;
mod trainer;
mod warp;

pub use config::{FinetuneOptions, MotionSpec, TrainConfig};
pub use finetune::{
    burst_pair, finetune_burst, finetune_registered, finetune_static, register_pairs,
    FinetuneResult, RegisteredPair, TraceRow, FINETUNE_PAD,
};
pub use loss::{
    crop_pair, denoise_loss_graph, m2m_loss, m2m_loss_graph, rgb_loss_graph, BurstPair, PatchPair,
};
pub use pretrain::{
    demosaick_psnr, denoise_psnr, pretrain, pretrain_denoiser, DenoisePretrainOptions, EpochLog,
    PretrainMode, PretrainOptions, TrainLog,
};
pub use schedule::PairSchedule;
pub use simulate::{
    margin_for, random_affinity, render_views, simulate_burst, static_burst, SimulatedBurst,
};
pub use tnr::{temporal_mean, tnr_baselines, TnrReport};
pub use warp::{cubic_kernel, warp_image, warp_operator, WarpMask, CUBIC_A};

#[cfg(test)]
mod tests;
