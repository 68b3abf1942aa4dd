//! Bayer CFA descriptors and the mosaicking operators.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PlanarImage;
use crate::error::{Error, Result};

pub const RED: usize = 0;
pub const GREEN: usize = 1;
pub const BLUE: usize = 2;

/// 2×2 Bayer tile layout, named by the colors at (0,0), (0,1), (1,0), (1,1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum CfaPattern {
    #[default]
    #[serde(rename = "RGGB")]
    Rggb,
    #[serde(rename = "BGGR")]
    Bggr,
    #[serde(rename = "GRBG")]
    Grbg,
    #[serde(rename = "GBRG")]
    Gbrg,
}

impl CfaPattern {
    pub const ALL: [CfaPattern; 4] = [
        CfaPattern::Rggb,
        CfaPattern::Bggr,
        CfaPattern::Grbg,
        CfaPattern::Gbrg,
    ];

    /// Colors of the tile in phase order (0,0), (0,1), (1,0), (1,1).
    #[inline]
    pub fn tile(self) -> [usize; 4] {
        match self {
            CfaPattern::Rggb => [RED, GREEN, GREEN, BLUE],
            CfaPattern::Bggr => [BLUE, GREEN, GREEN, RED],
            CfaPattern::Grbg => [GREEN, RED, BLUE, GREEN],
            CfaPattern::Gbrg => [GREEN, BLUE, RED, GREEN],
        }
    }

    /// Color channel sampled at pixel `(y, x)`.
    #[inline]
    pub fn color_at(self, y: usize, x: usize) -> usize {
        self.tile()[((y & 1) << 1) | (x & 1)]
    }

    pub fn name(self) -> &'static str {
        match self {
            CfaPattern::Rggb => "RGGB",
            CfaPattern::Bggr => "BGGR",
            CfaPattern::Grbg => "GRBG",
            CfaPattern::Gbrg => "GBRG",
        }
    }
}

impl fmt::Display for CfaPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CfaPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CfaPattern::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parameter(format!("unknown CFA pattern `{s}`")))
    }
}

/// Single-channel mosaicked frame. Width and height are always even.
#[derive(Clone, Debug, PartialEq)]
pub struct BayerFrame {
    width: usize,
    height: usize,
    pattern: CfaPattern,
    data: Vec<f32>,
}

fn check_even(width: usize, height: usize) -> Result<()> {
    if !width.is_multiple_of(2) || !height.is_multiple_of(2) || width == 0 || height == 0 {
        return Err(Error::Dimension(format!(
            "Bayer data needs positive even dimensions, got {width}x{height}"
        )));
    }
    Ok(())
}

impl BayerFrame {
    pub fn new(width: usize, height: usize, pattern: CfaPattern, data: Vec<f32>) -> Result<Self> {
        check_even(width, height)?;
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "{}x{} frame needs {} samples, got {}",
                width,
                height,
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pattern,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, pattern: CfaPattern, value: f32) -> Result<Self> {
        Self::new(width, height, pattern, vec![value; width * height])
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pattern(&self) -> CfaPattern {
        self.pattern
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Crop starting at an even offset so the CFA phase is preserved.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if !x0.is_multiple_of(2) || !y0.is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "Bayer crop origin ({x0},{y0}) must be even"
            )));
        }
        check_even(width, height)?;
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::Dimension(format!(
                "crop {}x{}+{}+{} exceeds {}x{} frame",
                width, height, x0, y0, self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + width]);
        }
        Self::new(width, height, self.pattern, data)
    }

    /// The frame as a 1-channel image (pattern metadata dropped).
    pub fn to_image(&self) -> PlanarImage {
        PlanarImage::from_data(self.width, self.height, 1, self.data.clone())
            .expect("frame dimensions are consistent")
    }
}

fn expect_rgb(rgb: &PlanarImage) -> Result<()> {
    if rgb.channels() != 3 {
        return Err(Error::Dimension(format!(
            "expected a 3-channel image, got {} channels",
            rgb.channels()
        )));
    }
    Ok(())
}

/// Keeps only the CFA-selected color at each pixel.
pub fn mosaic(rgb: &PlanarImage, pattern: CfaPattern) -> Result<BayerFrame> {
    expect_rgb(rgb)?;
    let (w, h) = (rgb.width(), rgb.height());
    check_even(w, h)?;
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            data.push(rgb.get(pattern.color_at(y, x), y, x));
        }
    }
    BayerFrame::new(w, h, pattern, data)
}

/// 3-channel 0/1 mask selecting the CFA sample of every pixel.
pub fn cfa_mask(width: usize, height: usize, pattern: CfaPattern) -> PlanarImage {
    PlanarImage::from_fn(width, height, 3, |c, y, x| {
        if pattern.color_at(y, x) == c {
            1.0
        } else {
            0.0
        }
    })
}

/// The mosaicking operator M acting inside the 3-channel domain: unsampled
/// positions become exactly zero.
pub fn apply_mask(rgb: &PlanarImage, pattern: CfaPattern) -> Result<PlanarImage> {
    expect_rgb(rgb)?;
    Ok(PlanarImage::from_fn(
        rgb.width(),
        rgb.height(),
        3,
        |c, y, x| {
            if pattern.color_at(y, x) == c {
                rgb.get(c, y, x)
            } else {
                0.0
            }
        },
    ))
}

/// Places each mosaic sample into its color channel, zeros elsewhere.
pub fn embed(frame: &BayerFrame) -> PlanarImage {
    let p = frame.pattern();
    PlanarImage::from_fn(frame.width(), frame.height(), 3, |c, y, x| {
        if p.color_at(y, x) == c {
            frame.get(y, x)
        } else {
            0.0
        }
    })
}

/// Splits a frame into its four half-resolution phases, channel `k` holding
/// offset `(k / 2, k % 2)`.
pub fn pack_phases(frame: &BayerFrame) -> PlanarImage {
    let (hw, hh) = (frame.width() / 2, frame.height() / 2);
    PlanarImage::from_fn(hw, hh, 4, |k, y, x| {
        frame.get(2 * y + (k >> 1), 2 * x + (k & 1))
    })
}

/// Inverse of [`pack_phases`].
pub fn unpack_phases(phases: &PlanarImage, pattern: CfaPattern) -> Result<BayerFrame> {
    if phases.channels() != 4 {
        return Err(Error::Dimension(format!(
            "phase image needs 4 channels, got {}",
            phases.channels()
        )));
    }
    let (w, h) = (phases.width() * 2, phases.height() * 2);
    let mut data = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let k = ((y & 1) << 1) | (x & 1);
            data[y * w + x] = phases.get(k, y / 2, x / 2);
        }
    }
    BayerFrame::new(w, h, pattern, data)
}
