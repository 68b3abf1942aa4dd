//! PNG persistence for images and Bayer frames.
//!
//! A Bayer frame on disk is a single-channel 16-bit PNG plus a JSON sidecar
//! with the same basename: `{"pattern": "RGGB", "sigma": 5.0}`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};
use serde::{Deserialize, Serialize};

use super::{BayerFrame, CfaPattern, PlanarImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BayerSidecar {
    pub pattern: CfaPattern,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

/// Reads an 8- or 16-bit grayscale or RGB PNG into `[0, 1]` samples.
pub fn read_png(path: impl AsRef<Path>) -> Result<PlanarImage> {
    let path = path.as_ref();
    let img = image::open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img,
        DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageLumaA16(_)
    );
    if gray {
        let buf = img.to_luma16();
        let data = buf.pixels().map(|p| p.0[0] as f32 / 65535.0).collect();
        PlanarImage::from_data(w, h, 1, data)
    } else {
        let buf = img.to_rgb16();
        let mut out = PlanarImage::new(w, h, 3);
        for (x, y, p) in buf.enumerate_pixels() {
            for c in 0..3 {
                out.set(c, y as usize, x as usize, p.0[c] as f32 / 65535.0);
            }
        }
        Ok(out)
    }
}

fn quantize(v: f32, max: f32) -> f32 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// Writes a 1- or 3-channel image as PNG; samples are clipped to `[0, 1]`.
pub fn write_png(path: impl AsRef<Path>, img: &PlanarImage, depth: BitDepth) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let dynimg = match (img.channels(), depth) {
        (1, BitDepth::Eight) => DynamicImage::ImageLuma8(ImageBuffer::from_fn(w, h, |x, y| {
            Luma([quantize(img.get(0, y as usize, x as usize), 255.0) as u8])
        })),
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(ImageBuffer::from_fn(w, h, |x, y| {
            Luma([quantize(img.get(0, y as usize, x as usize), 65535.0) as u16])
        })),
        (3, BitDepth::Eight) => DynamicImage::ImageRgb8(ImageBuffer::from_fn(w, h, |x, y| {
            Rgb(std::array::from_fn(|c| {
                quantize(img.get(c, y as usize, x as usize), 255.0) as u8
            }))
        })),
        (3, BitDepth::Sixteen) => DynamicImage::ImageRgb16(ImageBuffer::from_fn(w, h, |x, y| {
            Rgb(std::array::from_fn(|c| {
                quantize(img.get(c, y as usize, x as usize), 65535.0) as u16
            }))
        })),
        (c, _) => {
            return Err(Error::Dimension(format!(
                "PNG export supports 1 or 3 channels, got {c}"
            )))
        }
    };
    dynimg.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// Sidecar path for a frame PNG: same basename with a `.json` extension.
pub fn sidecar_path(png: &Path) -> PathBuf {
    png.with_extension("json")
}

pub fn save_bayer(path: impl AsRef<Path>, frame: &BayerFrame, sigma: f64) -> Result<()> {
    let path = path.as_ref();
    write_png(path, &frame.to_image(), BitDepth::Sixteen)?;
    let sidecar = BayerSidecar {
        pattern: frame.pattern(),
        sigma,
    };
    fs::write(sidecar_path(path), serde_json::to_string(&sidecar)?)?;
    Ok(())
}

/// Loads a frame and its sidecar. Returns the frame and the recorded sigma.
pub fn load_bayer(path: impl AsRef<Path>) -> Result<(BayerFrame, f64)> {
    let path = path.as_ref();
    let img = read_png(path)?;
    if img.channels() != 1 {
        return Err(Error::Data(format!(
            "{}: Bayer frames must be single-channel",
            path.display()
        )));
    }
    let sidecar: BayerSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let frame = BayerFrame::new(img.width(), img.height(), sidecar.pattern, img.into_data())?;
    Ok((frame, sidecar.sigma))
}
