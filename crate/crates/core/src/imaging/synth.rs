//! Procedural test scenes.
//!
//! There is no bundled photo dataset, so experiments run on synthetic
//! scenes that share the traits demosaicking cares about: piecewise smooth
//! regions, soft object edges shared by all three channels, oriented
//! textures, and slowly varying color casts.

use std::f32::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PlanarImage;

#[derive(Debug, Clone, Copy)]
enum ShapeKind {
    Ellipse,
    Rect,
}

#[derive(Debug, Clone)]
struct Shape {
    kind: ShapeKind,
    cx: f32,
    cy: f32,
    a: f32,
    b: f32,
    cos: f32,
    sin: f32,
    color: [f32; 3],
    // Optional grating: (frequency in cycles/px, orientation cos, sin, depth).
    grating: Option<(f32, f32, f32, f32)>,
}

impl Shape {
    fn coverage(&self, x: f32, y: f32) -> f32 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = self.cos * dx + self.sin * dy;
        let v = -self.sin * dx + self.cos * dy;
        let d = match self.kind {
            ShapeKind::Ellipse => {
                let r = ((u / self.a).powi(2) + (v / self.b).powi(2)).sqrt();
                (r - 1.0) * self.a.min(self.b)
            }
            ShapeKind::Rect => (u.abs() - self.a).max(v.abs() - self.b),
        };
        smoothstep(-d, 1.0)
    }

    fn color(&self, c: usize, x: f32, y: f32) -> f32 {
        match self.grating {
            None => self.color[c],
            Some((f, gc, gs, depth)) => {
                let phase = TAU * f * (gc * x + gs * y);
                self.color[c] * (1.0 - depth * 0.5 * (1.0 - phase.cos()))
            }
        }
    }
}

/// Smooth ramp from 0 at `t = -width` to 1 at `t = width`.
fn smoothstep(t: f32, width: f32) -> f32 {
    let s = ((t / width) * 0.5 + 0.5).clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

struct Wave {
    fx: f32,
    fy: f32,
    phase: f32,
    amp: f32,
}

fn random_waves(rng: &mut ChaCha8Rng, count: usize, fmin: f32, fmax: f32, amp: f32) -> Vec<Wave> {
    (0..count)
        .map(|_| {
            let f = rng.random_range(fmin..fmax);
            let theta = rng.random_range(0.0..TAU);
            Wave {
                fx: f * theta.cos(),
                fy: f * theta.sin(),
                phase: rng.random_range(0.0..TAU),
                // 1/f spectrum.
                amp: amp * fmin / f,
            }
        })
        .collect()
}

fn eval_waves(waves: &[Wave], x: f32, y: f32) -> f32 {
    waves
        .iter()
        .map(|w| w.amp * (TAU * (w.fx * x + w.fy * y) + w.phase).cos())
        .sum()
}

/// A random natural-looking RGB scene in `[0.02, 0.98]`.
pub fn natural_scene(width: usize, height: usize, seed: u64) -> PlanarImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5ce7e);
    let scale = width.max(height) as f32;

    let base: [f32; 3] = std::array::from_fn(|_| rng.random_range(0.3..0.6));
    let tint: Vec<Vec<Wave>> = (0..3)
        .map(|_| random_waves(&mut rng, 3, 0.5 / scale, 2.0 / scale, 0.08))
        .collect();
    let texture = random_waves(&mut rng, 24, 2.0 / scale, 0.18, 0.05);

    let n_shapes = ((width * height) as f32 / 600.0).clamp(6.0, 80.0) as usize;
    let shapes: Vec<Shape> = (0..n_shapes)
        .map(|_| {
            let theta: f32 = rng.random_range(0.0..TAU);
            let size = scale * rng.random_range(0.03f32..0.22);
            let g = rng.random_range(0.1f32..0.9);
            // Colors are correlated across channels like real reflectances.
            let color = std::array::from_fn(|_| (g + rng.random_range(-0.25f32..0.25)).clamp(0.05, 0.95));
            let grating = if rng.random_bool(0.3) {
                let gt: f32 = rng.random_range(0.0..TAU);
                Some((1.0 / rng.random_range(6.0f32..20.0), gt.cos(), gt.sin(), rng.random_range(0.3..0.8)))
            } else {
                None
            };
            Shape {
                kind: if rng.random_bool(0.5) { ShapeKind::Ellipse } else { ShapeKind::Rect },
                cx: rng.random_range(0.0..width as f32),
                cy: rng.random_range(0.0..height as f32),
                a: size,
                b: size * rng.random_range(0.3f32..1.0),
                cos: theta.cos(),
                sin: theta.sin(),
                color,
                grating,
            }
        })
        .collect();

    let mut out = PlanarImage::new(width, height, 3);
    for y in 0..height {
        for x in 0..width {
            let (xf, yf) = (x as f32, y as f32);
            let tex = eval_waves(&texture, xf, yf);
            for c in 0..3 {
                let mut v = base[c] + eval_waves(&tint[c], xf, yf);
                for s in &shapes {
                    let cov = s.coverage(xf, yf);
                    if cov > 0.0 {
                        v = v * (1.0 - cov) + s.color(c, xf, yf) * cov;
                    }
                }
                let v = v * (1.0 + tex);
                out.set(c, y, x, v.clamp(0.02, 0.98));
            }
        }
    }
    out
}

/// Grayscale natural scene.
pub fn natural_gray(width: usize, height: usize, seed: u64) -> PlanarImage {
    natural_scene(width, height, seed)
        .luminance()
        .expect("3-channel scene")
}

/// Scales an image by `gain` and clips at 1, creating saturated regions.
pub fn saturate(img: &PlanarImage, gain: f32) -> PlanarImage {
    let mut out = img.clone();
    out.data_mut().iter_mut().for_each(|v| *v = (*v * gain).clamp(0.0, 1.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic_and_in_range() {
        let a = natural_scene(48, 32, 4);
        assert_eq!(a, natural_scene(48, 32, 4));
        assert_ne!(a, natural_scene(48, 32, 5));
        assert!(a.data().iter().all(|&v| (0.02..=0.98).contains(&v)));
    }

    #[test]
    fn saturate_creates_clipped_regions() {
        let img = natural_gray(64, 64, 1);
        let sat = saturate(&img, 2.0);
        assert!(sat.data().contains(&1.0));
        assert!(sat.data().iter().all(|&v| v <= 1.0));
    }
}
