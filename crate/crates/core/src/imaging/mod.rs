//! Image containers, Bayer CFA operators, the bilinear baseline and noise.

mod bayer;
mod demosaic;
mod image;
pub mod io;
mod noise;
pub mod synth;

pub use bayer::{
    apply_mask, cfa_mask, embed, mosaic, pack_phases, unpack_phases, BayerFrame, CfaPattern, BLUE,
    GREEN, RED,
};
pub use demosaic::demosaic_bilinear;
pub use image::PlanarImage;
pub use noise::{AddNoise, NoiseSpec};
