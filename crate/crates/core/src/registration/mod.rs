//! Affine registration of frame pairs, including Bayer frames registered on
//! their packed phases.

mod affine;
mod inverse_compositional;
pub mod pyramid;

pub use affine::{overlap_fraction, upscale_map, AffineMap, DET_BOUNDS};
pub use inverse_compositional::{
    estimate_affine, estimate_affine_bayer, half_res_to_full, Registration, RegistrationConfig,
    MIN_REGISTRATION_SIZE,
};
