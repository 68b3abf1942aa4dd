//! Temporal-averaging baselines for a static burst.

use serde::{Deserialize, Serialize};

use crate::autodiff::BnMode;
use crate::error::{Error, Result};
use crate::eval::psnr;
use crate::imaging::PlanarImage;
use crate::network::{forward_denoise, NetParams};

/// PSNRs (dB) of the temporal-noise-reduction baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TnrReport {
    /// The reference frame as captured.
    pub noisy: f64,
    /// The denoiser applied to the reference frame.
    pub single_denoised: f64,
    /// Plain temporal mean.
    pub mean: f64,
    /// The denoiser applied to the temporal mean.
    pub mean_denoised: f64,
}

/// Pixelwise mean of same-sized frames.
pub fn temporal_mean(frames: &[PlanarImage]) -> Result<PlanarImage> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Data("empty burst".into()))?;
    let mut acc = vec![0.0f64; first.data().len()];
    for f in frames {
        if !f.same_shape(first) {
            return Err(Error::Data("burst frames differ in shape".into()));
        }
        for (a, &v) in acc.iter_mut().zip(f.data()) {
            *a += v as f64;
        }
    }
    let n = frames.len() as f64;
    PlanarImage::from_data(
        first.width(),
        first.height(),
        first.channels(),
        acc.into_iter().map(|v| (v / n) as f32).collect(),
    )
}

/// Compares single-frame denoising, temporal averaging and denoising of the
/// average on a pre-aligned burst. Denoised outputs are clipped; the noisy
/// frame and the plain mean are compared as they are.
pub fn tnr_baselines(
    burst: &[PlanarImage],
    reference: usize,
    clean: &PlanarImage,
    denoiser: &NetParams,
    border: usize,
) -> Result<TnrReport> {
    let frame = burst
        .get(reference)
        .ok_or_else(|| Error::Data(format!("reference {reference} outside the burst")))?;
    let mean = temporal_mean(burst)?;
    let mode = BnMode::BatchStats;
    Ok(TnrReport {
        noisy: psnr(frame, clean, border)?,
        single_denoised: psnr(&forward_denoise(denoiser, frame, mode)?.clipped(), clean, border)?,
        mean: psnr(&mean, clean, border)?,
        mean_denoised: psnr(&forward_denoise(denoiser, &mean, mode)?.clipped(), clean, border)?,
    })
}
