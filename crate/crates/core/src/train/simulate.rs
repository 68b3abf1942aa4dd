//! Synthetic bursts: several views of one RGB scene under random affinities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::MotionSpec;
use super::warp::warp_image;
use crate::error::{Error, Result};
use crate::imaging::{mosaic, AddNoise, BayerFrame, CfaPattern, NoiseSpec, PlanarImage};
use crate::registration::AffineMap;

/// A simulated burst with its ground truth.
#[derive(Debug, Clone)]
pub struct SimulatedBurst {
    pub frames: Vec<BayerFrame>,
    /// `maps[i]` registers frame `i` onto the reference: `frame_i(T p) ≈ frame_ref(p)`.
    pub maps: Vec<AffineMap>,
    /// Noise-free RGB of the reference view.
    pub clean: PlanarImage,
    pub reference: usize,
}

/// `p -> c + L (p - c) + t` with rotation, scale/shear and translation drawn
/// uniformly within `motion`.
pub fn random_affinity<R: Rng>(motion: &MotionSpec, cx: f64, cy: f64, rng: &mut R) -> AffineMap {
    let mut sym = |b: f64| if b > 0.0 { rng.random_range(-b..=b) } else { 0.0 };
    let theta = sym(motion.max_rot).to_radians();
    let (sx, sy, sh) = (sym(motion.max_scale), sym(motion.max_scale), sym(motion.max_scale));
    let (tx, ty) = (sym(motion.max_shift), sym(motion.max_shift));
    let (s, c) = theta.sin_cos();
    // R(θ) · [[1 + sx, sh], [0, 1 + sy]]
    let a = [c * (1.0 + sx), c * sh - s * (1.0 + sy), s * (1.0 + sx), s * sh + c * (1.0 + sy)];
    AffineMap::translation(cx + tx, cy + ty)
        .compose(&AffineMap::new(a, [0.0, 0.0]))
        .compose(&AffineMap::translation(-cx, -cy))
}

/// Even border that keeps every bicubic footprint inside a `w × h` source
/// for any affinity within `motion` about the center of the cropped grid.
pub fn margin_for(motion: &MotionSpec, w: usize, h: usize) -> usize {
    let r = ((w * w + h * h) as f64).sqrt() / 2.0;
    let lin = 2.0 * (motion.max_rot.to_radians() / 2.0).sin() + 3f64.sqrt() * motion.max_scale;
    let m = (motion.max_shift + lin * r).ceil() as usize + 3;
    m + m % 2
}

/// Renders `view_k(p) = rgb(o + A_k p)` on an `out_w × out_h` grid with `o`
/// the centered even offset.
pub fn render_views(
    rgb: &PlanarImage,
    affinities: &[AffineMap],
    out_w: usize,
    out_h: usize,
) -> Result<Vec<PlanarImage>> {
    if out_w > rgb.width() || out_h > rgb.height() {
        return Err(Error::Dimension("views larger than the source".into()));
    }
    let ox = ((rgb.width() - out_w) / 2) & !1;
    let oy = ((rgb.height() - out_h) / 2) & !1;
    let shift = AffineMap::translation(ox as f64, oy as f64);
    affinities
        .iter()
        .map(|a| {
            let (view, mask) = warp_image(rgb, &shift.compose(a), out_w, out_h)?;
            if mask.count() != out_w * out_h {
                return Err(Error::Dimension(
                    "motion exceeds the source margin; use a larger image".into(),
                ));
            }
            Ok(view)
        })
        .collect()
}

/// Simulates `n` mosaicked, noisy views of `rgb`; frame 0 is the reference.
///
/// Frames are cropped by [`margin_for`] on every side so that all pixels are
/// defined.
pub fn simulate_burst(
    rgb: &PlanarImage,
    n: usize,
    motion: &MotionSpec,
    noise: &NoiseSpec,
    pattern: CfaPattern,
    seed: u64,
) -> Result<SimulatedBurst> {
    if n < 2 {
        return Err(Error::Parameter(format!("a burst needs n >= 2, got {n}")));
    }
    if rgb.channels() != 3 {
        return Err(Error::Dimension("burst simulation needs an RGB image".into()));
    }
    motion.validate()?;
    noise.validate()?;
    let m = margin_for(motion, rgb.width(), rgb.height());
    let (w, h) = (
        rgb.width().saturating_sub(2 * m) & !1,
        rgb.height().saturating_sub(2 * m) & !1,
    );
    if w < 8 || h < 8 {
        return Err(Error::Dimension(format!(
            "{}x{} image too small for a {m}-pixel motion margin",
            rgb.width(),
            rgb.height()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let mut affinities = vec![AffineMap::identity()];
    for _ in 1..n {
        affinities.push(random_affinity(motion, cx, cy, &mut rng));
    }
    let views = render_views(rgb, &affinities, w, h)?;
    let mut frames = Vec::with_capacity(n);
    for view in &views {
        let spec = noise.with_seed(noise.seed ^ rng.random::<u64>());
        frames.push(mosaic(view, pattern)?.add_noise(&spec)?);
    }
    let maps = affinities
        .iter()
        .map(|a| a.inverse())
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulatedBurst {
        frames,
        maps,
        clean: views.into_iter().next().expect("n >= 2"),
        reference: 0,
    })
}

/// `n` independently noised copies of a static image.
pub fn static_burst(clean: &PlanarImage, n: usize, noise: &NoiseSpec) -> Result<Vec<PlanarImage>> {
    if n < 2 {
        return Err(Error::Parameter(format!("a burst needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    (0..n)
        .map(|_| clean.add_noise(&noise.with_seed(rng.random())))
        .collect()
}
