//! Catmull-Rom warping as a sparse linear operator, usable both inside the
//! autodiff graph and on plain images.

use crate::autodiff::ResampleMap;
use crate::error::{Error, Result};
use crate::imaging::PlanarImage;
use crate::registration::AffineMap;

/// Cubic convolution parameter.
pub const CUBIC_A: f64 = -0.5;

/// Keys cubic convolution kernel.
pub fn cubic_kernel(t: f64) -> f64 {
    let a = CUBIC_A;
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Weights of the four taps at offsets -1, 0, 1, 2 from `floor(x)`.
#[inline]
fn cubic_weights(frac: f64) -> [f64; 4] {
    [
        cubic_kernel(frac + 1.0),
        cubic_kernel(frac),
        cubic_kernel(1.0 - frac),
        cubic_kernel(2.0 - frac),
    ]
}

/// Pixels of a warped image whose whole 4×4 source footprint is inside the
/// source image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl WarpMask {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn and(&self, other: &WarpMask) -> WarpMask {
        WarpMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        }
    }
}

/// The operator sampling a `in_w × in_h` image at `map(p)` for every pixel
/// `p` of an `out_w × out_h` grid.
///
/// Pixels whose footprint leaves the source get all-zero weights and are
/// cleared in the returned mask.
pub fn warp_operator(
    map: &AffineMap,
    in_w: usize,
    in_h: usize,
    out_w: usize,
    out_h: usize,
) -> Result<(ResampleMap, WarpMask)> {
    if !map.is_finite() || map.det().abs() < 1e-9 {
        return Err(Error::DegenerateMap(format!("cannot warp by {map:?}")));
    }
    let n = out_w * out_h;
    let mut index = vec![0u32; n * 16];
    let mut weight = vec![0.0f64; n * 16];
    let mut mask = vec![false; n];
    for y in 0..out_h {
        for x in 0..out_w {
            let o = y * out_w + x;
            let (sx, sy) = map.apply(x as f64, y as f64);
            let (fx, fy) = (sx.floor(), sy.floor());
            if !(fx >= 1.0 && fy >= 1.0 && fx + 2.0 <= (in_w - 1) as f64 && fy + 2.0 <= (in_h - 1) as f64)
            {
                continue;
            }
            mask[o] = true;
            let (x0, y0) = (fx as usize - 1, fy as usize - 1);
            let wx = cubic_weights(sx - fx);
            let wy = cubic_weights(sy - fy);
            for (j, wyj) in wy.iter().enumerate() {
                for (i, wxi) in wx.iter().enumerate() {
                    let k = o * 16 + j * 4 + i;
                    index[k] = ((y0 + j) * in_w + x0 + i) as u32;
                    weight[k] = wyj * wxi;
                }
            }
        }
    }
    Ok((
        ResampleMap {
            in_height: in_h,
            in_width: in_w,
            out_height: out_h,
            out_width: out_w,
            taps: 16,
            index,
            weight,
        },
        WarpMask {
            width: out_w,
            height: out_h,
            data: mask,
        },
    ))
}

/// Warps every channel of `img` onto an `out_w × out_h` grid. Undefined
/// pixels are zero.
pub fn warp_image(
    img: &PlanarImage,
    map: &AffineMap,
    out_w: usize,
    out_h: usize,
) -> Result<(PlanarImage, WarpMask)> {
    let (op, mask) = warp_operator(map, img.width(), img.height(), out_w, out_h)?;
    let mut out = PlanarImage::new(out_w, out_h, img.channels());
    for c in 0..img.channels() {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for (o, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0f64;
            for k in o * 16..o * 16 + 16 {
                acc += op.weight[k] * src[op.index[k] as usize] as f64;
            }
            *d = acc as f32;
        }
    }
    Ok((out, mask))
}
