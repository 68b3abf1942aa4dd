//! Metrics, test images, experiment configuration and drivers.

mod config;
mod experiment;
mod gradcheck;
mod images;
mod metrics;
mod report;

pub use config::{
    apply_override, parse_override, BurstConfig, DataConfig, ExperimentConfig, FinetuneSection,
    GradcheckConfig, PretrainSection, StripesConfig,
};
pub use experiment::{derive_seed, run_experiment, ExperimentKind};
pub use gradcheck::{gradient_suite, OpCheck, COMPOSED_PAD};
pub use images::{make_test_image, TestImage, MIN_TEST_IMAGE_SIZE};
pub use metrics::{psnr, psnr_where, DEFAULT_BORDER};
pub use report::{revision, EvalReport, ImageScore};
