use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2×3 affine transform `(x, y) -> (a11 x + a12 y + tx, a21 x + a22 y + ty)`.
///
/// Coordinates have their origin at the center of the top-left pixel. Used
/// as a pull-back: warping `img` by `T` samples `img` at `T(p)` for every
/// output pixel `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineMap {
    /// Linear part `[a11, a12, a21, a22]`.
    pub a: [f64; 4],
    /// Translation `[tx, ty]` in pixels.
    pub t: [f64; 2],
}

impl Default for AffineMap {
    fn default() -> Self {
        Self::identity()
    }
}

/// Range of `|det|` accepted for estimated maps.
pub const DET_BOUNDS: (f64, f64) = (0.5, 2.0);

impl AffineMap {
    pub const fn new(a: [f64; 4], t: [f64; 2]) -> Self {
        Self { a, t }
    }

    pub const fn identity() -> Self {
        Self::new([1.0, 0.0, 0.0, 1.0], [0.0, 0.0])
    }

    pub const fn translation(tx: f64, ty: f64) -> Self {
        Self::new([1.0, 0.0, 0.0, 1.0], [tx, ty])
    }

    /// Rotation by `theta` radians about `(cx, cy)`.
    pub fn rotation_about(theta: f64, cx: f64, cy: f64) -> Self {
        let (s, c) = theta.sin_cos();
        let lin = Self::new([c, -s, s, c], [0.0, 0.0]);
        Self::translation(cx, cy)
            .compose(&lin)
            .compose(&Self::translation(-cx, -cy))
    }

    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let [a11, a12, a21, a22] = self.a;
        (
            a11 * x + a12 * y + self.t[0],
            a21 * x + a22 * y + self.t[1],
        )
    }

    /// `self ∘ inner`, i.e. `p -> self(inner(p))`.
    pub fn compose(&self, inner: &AffineMap) -> AffineMap {
        let [a, b, c, d] = self.a;
        let [e, f, g, h] = inner.a;
        let (tx, ty) = self.apply(inner.t[0], inner.t[1]);
        AffineMap::new(
            [a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h],
            [tx, ty],
        )
    }

    pub fn det(&self) -> f64 {
        self.a[0] * self.a[3] - self.a[1] * self.a[2]
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        let det = self.det();
        if !det.is_finite() || det.abs() < 1e-12 {
            return Err(Error::DegenerateMap(format!("singular linear part (det {det:e})")));
        }
        let [a, b, c, d] = self.a;
        let inv = [d / det, -b / det, -c / det, a / det];
        let tx = -(inv[0] * self.t[0] + inv[1] * self.t[1]);
        let ty = -(inv[2] * self.t[0] + inv[3] * self.t[1]);
        Ok(AffineMap::new(inv, [tx, ty]))
    }

    /// Errors unless `|det|` lies in [`DET_BOUNDS`].
    pub fn check_det_bounds(&self) -> Result<()> {
        let d = self.det().abs();
        if !(DET_BOUNDS.0..=DET_BOUNDS.1).contains(&d) {
            return Err(Error::DegenerateMap(format!(
                "|det| = {d:.4} outside [{}, {}]",
                DET_BOUNDS.0, DET_BOUNDS.1
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.t).all(|v| v.is_finite())
    }

    /// Mean distance between `self(p)` and `other(p)` over the four corners
    /// of a `width × height` grid.
    pub fn endpoint_error(&self, other: &AffineMap, width: usize, height: usize) -> f64 {
        let (xm, ym) = ((width - 1) as f64, (height - 1) as f64);
        let corners = [(0.0, 0.0), (xm, 0.0), (0.0, ym), (xm, ym)];
        corners
            .iter()
            .map(|&(x, y)| {
                let (ax, ay) = self.apply(x, y);
                let (bx, by) = other.apply(x, y);
                ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
            })
            .sum::<f64>()
            / 4.0
    }
}

/// Re-expresses a map estimated on a grid scaled by `1 / factor`:
/// `S ∘ T ∘ S⁻¹` with `S` the scaling by `factor` about the origin. The
/// linear part is unchanged and the translation is multiplied by `factor`.
pub fn upscale_map(t: &AffineMap, factor: f64) -> AffineMap {
    AffineMap::new(t.a, [t.t[0] * factor, t.t[1] * factor])
}

/// Fraction of the `width × height` pixel grid whose image under `t` lands
/// inside `[0, width-1] × [0, height-1]`.
pub fn overlap_fraction(t: &AffineMap, width: usize, height: usize) -> f64 {
    if width == 0 || height == 0 {
        return 0.0;
    }
    let (xm, ym) = ((width - 1) as f64, (height - 1) as f64);
    let mut inside = 0usize;
    for y in 0..height {
        for x in 0..width {
            let (u, v) = t.apply(x as f64, y as f64);
            if (0.0..=xm).contains(&u) && (0.0..=ym).contains(&v) {
                inside += 1;
            }
        }
    }
    inside as f64 / (width * height) as f64
}
