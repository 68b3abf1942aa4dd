//! The residual demosaicking network and a DnCNN-style denoiser.

mod forward;
mod params;
mod spec;

pub use forward::{
    build_graph, demosaick_inputs, forward_demosaick, forward_demosaick_batch, forward_denoise,
    param_vars, update_running_stats, NetGraph,
};
pub use params::{BnRunning, NetParams, BN_EPS, BN_MOMENTUM};
pub use spec::{ExtraLayer, NetKind, NetSpec, Step};

#[cfg(test)]
mod tests;
