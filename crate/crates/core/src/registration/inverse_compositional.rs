//! Inverse compositional Gauss-Newton alignment of affine warps.
//!
//! The template (destination) gradients and steepest-descent images are
//! computed once per pyramid level. Each iteration samples the source at the
//! current warp, accumulates the normal equations over the pixels whose
//! warped position is inside the source, and composes the current warp with
//! the inverse of the incremental one.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use super::affine::{overlap_fraction, upscale_map, AffineMap};
use super::pyramid::build_pyramid;
use crate::error::{Error, Result};
use crate::imaging::{pack_phases, BayerFrame, PlanarImage};

const PYRAMID_SIGMA: f32 = 1.0;
/// Coarsest pyramid level must keep at least this many pixels per side.
const MIN_LEVEL_SIZE: usize = 16;
pub const MIN_REGISTRATION_SIZE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegistrationConfig {
    pub pyramid_levels: usize,
    pub max_iters_per_level: usize,
    pub convergence_eps: f64,
    pub min_overlap: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            pyramid_levels: 4,
            max_iters_per_level: 50,
            convergence_eps: 1e-6,
            min_overlap: 0.5,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels < 1 {
            return Err(Error::config("registration.pyramid_levels", "must be >= 1"));
        }
        if !(self.min_overlap > 0.0 && self.min_overlap <= 1.0) {
            return Err(Error::config("registration.min_overlap", "must lie in (0, 1]"));
        }
        if !(self.convergence_eps > 0.0) {
            return Err(Error::config("registration.convergence_eps", "must be > 0"));
        }
        Ok(())
    }
}

/// Result of an alignment. `converged == false` means the finest level hit
/// its iteration cap and `map` is the lowest-error iterate seen there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Registration {
    pub map: AffineMap,
    pub converged: bool,
    pub iterations: usize,
}

struct Template {
    width: usize,
    height: usize,
    cx: f64,
    cy: f64,
    /// Per sample: pixel (x, y), channel value, steepest-descent row.
    samples: Vec<TemplateSample>,
}

struct TemplateSample {
    x: f64,
    y: f64,
    values: Vec<f64>,
    sd: Vec<[f64; 6]>,
}

impl Template {
    fn new(dst: &PlanarImage) -> Self {
        let (w, h) = (dst.width(), dst.height());
        let cx = (w as f64 - 1.0) / 2.0;
        let cy = (h as f64 - 1.0) / 2.0;
        let mut samples = Vec::with_capacity((w - 2) * (h - 2));
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let (u, v) = (x as f64 - cx, y as f64 - cy);
                let mut values = Vec::with_capacity(dst.channels());
                let mut sd = Vec::with_capacity(dst.channels());
                for c in 0..dst.channels() {
                    let gx = 0.5 * (dst.get(c, y, x + 1) as f64 - dst.get(c, y, x - 1) as f64);
                    let gy = 0.5 * (dst.get(c, y + 1, x) as f64 - dst.get(c, y - 1, x) as f64);
                    values.push(dst.get(c, y, x) as f64);
                    sd.push([gx * u, gy * u, gx * v, gy * v, gx, gy]);
                }
                samples.push(TemplateSample {
                    x: x as f64,
                    y: y as f64,
                    values,
                    sd,
                });
            }
        }
        Self {
            width: w,
            height: h,
            cx,
            cy,
            samples,
        }
    }

    fn to_centered(&self, m: &AffineMap) -> AffineMap {
        AffineMap::translation(-self.cx, -self.cy)
            .compose(m)
            .compose(&AffineMap::translation(self.cx, self.cy))
    }

    fn from_centered(&self, m: &AffineMap) -> AffineMap {
        AffineMap::translation(self.cx, self.cy)
            .compose(m)
            .compose(&AffineMap::translation(-self.cx, -self.cy))
    }
}

#[inline]
fn bilinear(img: &PlanarImage, c: usize, x: f64, y: f64) -> f64 {
    let (w, h) = (img.width(), img.height());
    let x0 = (x.floor() as usize).min(w - 2);
    let y0 = (y.floor() as usize).min(h - 2);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let p = img.plane(c);
    let v00 = p[y0 * w + x0] as f64;
    let v01 = p[y0 * w + x0 + 1] as f64;
    let v10 = p[(y0 + 1) * w + x0] as f64;
    let v11 = p[(y0 + 1) * w + x0 + 1] as f64;
    (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11)
}

/// Solves the symmetric 6×6 system by Gaussian elimination with partial
/// pivoting. Returns `None` when the matrix is numerically singular.
fn solve6(mut a: [[f64; 6]; 6], mut b: [f64; 6]) -> Option<[f64; 6]> {
    let scale = (0..6).map(|i| a[i][i].abs()).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    for col in 0..6 {
        let piv = (col..6).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 * scale {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..6 {
            let f = a[row][col] / a[col][col];
            for k in col..6 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 6];
    for row in (0..6).rev() {
        let s: f64 = (row + 1..6).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

struct LevelOutcome {
    map: AffineMap,
    converged: bool,
    iterations: usize,
}

fn align_level(
    src: &PlanarImage,
    tpl: &Template,
    init: AffineMap,
    cfg: &RegistrationConfig,
) -> Result<LevelOutcome> {
    let (xm, ym) = ((src.width() - 1) as f64, (src.height() - 1) as f64);
    let mut warp = tpl.to_centered(&init);
    let mut best = (f64::INFINITY, warp);
    for iter in 0..cfg.max_iters_per_level {
        let mut hess = [[0.0f64; 6]; 6];
        let mut rhs = [0.0f64; 6];
        let mut sse = 0.0;
        let mut count = 0usize;
        for s in &tpl.samples {
            let (u, v) = warp.apply(s.x - tpl.cx, s.y - tpl.cy);
            let (xs, ys) = (u + tpl.cx, v + tpl.cy);
            if !(0.0..=xm).contains(&xs) || !(0.0..=ym).contains(&ys) {
                continue;
            }
            for (c, sd) in s.sd.iter().enumerate() {
                let e = bilinear(src, c, xs, ys) - s.values[c];
                sse += e * e;
                count += 1;
                for i in 0..6 {
                    rhs[i] += sd[i] * e;
                    for j in i..6 {
                        hess[i][j] += sd[i] * sd[j];
                    }
                }
            }
        }
        if count < 6 * src.channels() * 4 {
            return Err(Error::Overlap {
                found: count as f64 / (tpl.samples.len() * src.channels()).max(1) as f64,
                required: cfg.min_overlap,
            });
        }
        let mse = sse / count as f64;
        if mse < best.0 {
            best = (mse, warp);
        }
        for i in 0..6 {
            for j in 0..i {
                hess[i][j] = hess[j][i];
            }
        }
        let dp = solve6(hess, rhs).ok_or_else(|| {
            Error::Convergence(format!(
                "singular Hessian on {}x{} level",
                tpl.width, tpl.height
            ))
        })?;
        let delta = AffineMap::new([1.0 + dp[0], dp[2], dp[1], 1.0 + dp[3]], [dp[4], dp[5]]);
        warp = warp.compose(&delta.inverse()?);
        if !warp.is_finite() {
            return Err(Error::Convergence("warp diverged".into()));
        }
        let norm = dp.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < cfg.convergence_eps {
            return Ok(LevelOutcome {
                map: tpl.from_centered(&warp),
                converged: true,
                iterations: iter + 1,
            });
        }
    }
    Ok(LevelOutcome {
        map: tpl.from_centered(&best.1),
        converged: false,
        iterations: cfg.max_iters_per_level,
    })
}

/// Estimates `T` such that `src(T(p)) ≈ dst(p)`, coarse to fine.
///
/// All channels contribute additively to the normal equations.
pub fn estimate_affine(
    src: &PlanarImage,
    dst: &PlanarImage,
    cfg: &RegistrationConfig,
) -> Result<Registration> {
    cfg.validate()?;
    if !src.same_shape(dst) {
        return Err(Error::Dimension(format!(
            "registration inputs differ: {}x{}x{} vs {}x{}x{}",
            src.width(),
            src.height(),
            src.channels(),
            dst.width(),
            dst.height(),
            dst.channels()
        )));
    }
    if src.width() < MIN_REGISTRATION_SIZE || src.height() < MIN_REGISTRATION_SIZE {
        return Err(Error::Dimension(format!(
            "registration needs at least {0}x{0} pixels, got {1}x{2}",
            MIN_REGISTRATION_SIZE,
            src.width(),
            src.height()
        )));
    }
    let mut levels = 1;
    while levels < cfg.pyramid_levels
        && src.width().min(src.height()) >> levels >= MIN_LEVEL_SIZE
    {
        levels += 1;
    }
    let src_pyr = build_pyramid(src, levels, PYRAMID_SIGMA);
    let dst_pyr = build_pyramid(dst, levels, PYRAMID_SIGMA);

    let mut map = AffineMap::identity();
    let mut outcome = None;
    let mut total_iters = 0;
    for lvl in (0..levels).rev() {
        if lvl + 1 < levels {
            map = upscale_map(&map, 2.0);
        }
        let tpl = Template::new(&dst_pyr[lvl]);
        let out = align_level(&src_pyr[lvl], &tpl, map, cfg)?;
        debug!(
            "level {lvl}: {} iterations, converged {}",
            out.iterations, out.converged
        );
        total_iters += out.iterations;
        map = out.map;
        outcome = Some(out);
    }
    let outcome = outcome.expect("at least one level");
    map.check_det_bounds()?;
    let overlap = overlap_fraction(&map, src.width(), src.height());
    if overlap < cfg.min_overlap {
        return Err(Error::Overlap {
            found: overlap,
            required: cfg.min_overlap,
        });
    }
    if !outcome.converged {
        warn!(
            "registration hit the iteration cap; returning best iterate ({} iterations)",
            total_iters
        );
    }
    Ok(Registration {
        map,
        converged: outcome.converged,
        iterations: total_iters,
    })
}

/// Registers two Bayer frames on their packed half-resolution phases and
/// returns the map in full-resolution coordinates.
///
/// A half-resolution sample `u` stands for the 2×2 tile whose center is at
/// full-resolution `2u + 0.5`, so the upscaled map is conjugated by that
/// half-pixel shift.
pub fn estimate_affine_bayer(
    src: &BayerFrame,
    dst: &BayerFrame,
    cfg: &RegistrationConfig,
) -> Result<Registration> {
    if src.pattern() != dst.pattern() {
        return Err(Error::Parameter(format!(
            "CFA patterns differ: {} vs {}",
            src.pattern(),
            dst.pattern()
        )));
    }
    let reg = estimate_affine(&pack_phases(src), &pack_phases(dst), cfg)?;
    Ok(Registration {
        map: half_res_to_full(&reg.map),
        ..reg
    })
}

/// Maps a transform between packed phase grids to full-resolution pixels.
pub fn half_res_to_full(map: &AffineMap) -> AffineMap {
    AffineMap::translation(0.5, 0.5)
        .compose(&upscale_map(map, 2.0))
        .compose(&AffineMap::translation(-0.5, -0.5))
}
