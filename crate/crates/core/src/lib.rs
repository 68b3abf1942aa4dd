//! Mosaic-to-mosaic training for joint demosaicking and denoising.
//!
//! A demosaicking network is supervised by a second mosaicked frame of the
//! same scene instead of an RGB ground truth: the network output for one
//! frame is warped onto the other with a registered affinity, re-mosaicked
//! with the target's CFA, and compared only where both frames are defined.
//! The same machinery fine-tunes a pretrained network to a single RAW burst.
//!
//! Modules:
//! - [`imaging`]: image containers, Bayer operators, bilinear baseline, noise.
//! - [`registration`]: inverse compositional affine alignment on Bayer phases.
//! - [`autodiff`]: a small reverse-mode engine, Adam, and a gradient checker.
//! - [`network`]: the residual demosaicking net and a DnCNN-style denoiser.
//! - [`train`]: bicubic warping, the mosaic-to-mosaic loss, burst simulation,
//!   pretraining and burst fine-tuning.
//! - [`eval`]: PSNR, test images, experiment configs and drivers.

pub mod autodiff;
pub mod error;
pub mod eval;
pub mod imaging;
pub mod network;
pub mod registration;
pub mod train;

pub use autodiff::{BnMode, Graph, Real, Tensor, Var};
pub use error::{Error, Result};
pub use imaging::{BayerFrame, CfaPattern, NoiseSpec, PlanarImage};
pub use network::{NetKind, NetParams, NetSpec};
pub use registration::{AffineMap, RegistrationConfig};
pub use train::{PairSchedule, TrainConfig};
