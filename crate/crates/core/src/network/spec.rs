use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    /// Packed Bayer phases in, full-resolution RGB out, plus a bilinear base.
    Demosaick,
    /// DnCNN-style residual denoiser predicting the noise.
    Denoise,
}

/// Where the demosaicking net's extra Conv+BN+ReLU sits relative to the
/// upsampling layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtraLayer {
    /// After depth-to-space, at full resolution on 3 channels.
    #[default]
    FullRes,
    /// Before depth-to-space, at half resolution on 12 channels.
    HalfRes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetSpec {
    pub kind: NetKind,
    pub body_layers: usize,
    pub features: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub residual: bool,
    #[serde(default)]
    pub extra_layer: ExtraLayer,
    /// Start the output convolution at zero so an untrained net reproduces
    /// its analytic baseline.
    #[serde(default)]
    pub zero_output: bool,
}

impl NetSpec {
    pub fn demosaick() -> Self {
        Self {
            kind: NetKind::Demosaick,
            body_layers: 14,
            features: 64,
            in_channels: 4,
            out_channels: 3,
            residual: true,
            extra_layer: ExtraLayer::FullRes,
            zero_output: false,
        }
    }

    pub fn denoise() -> Self {
        Self {
            kind: NetKind::Denoise,
            body_layers: 17,
            features: 64,
            in_channels: 1,
            out_channels: 1,
            residual: true,
            extra_layer: ExtraLayer::FullRes,
            zero_output: false,
        }
    }

    pub fn default_for(kind: NetKind) -> Self {
        match kind {
            NetKind::Demosaick => Self::demosaick(),
            NetKind::Denoise => Self::denoise(),
        }
    }

    pub fn with_size(mut self, body_layers: usize, features: usize) -> Self {
        self.body_layers = body_layers;
        self.features = features;
        self
    }

    pub fn with_zero_output(mut self, on: bool) -> Self {
        self.zero_output = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.body_layers == 0 || self.features == 0 {
            return Err(Error::Spec("body_layers and features must be at least 1".into()));
        }
        match self.kind {
            NetKind::Demosaick => {
                if self.in_channels != 4 || self.out_channels != 3 {
                    return Err(Error::Spec(
                        "demosaicking net maps 4 Bayer phases to 3 colors".into(),
                    ));
                }
            }
            NetKind::Denoise => {
                if self.body_layers < 2 {
                    return Err(Error::Spec("denoiser needs at least 2 layers".into()));
                }
                if self.in_channels == 0 || self.in_channels != self.out_channels {
                    return Err(Error::Spec(
                        "residual denoiser needs equal nonzero in/out channels".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// The layer sequence; convolutions and normalizations are numbered in
    /// order of appearance.
    pub fn plan(&self) -> Result<Vec<Step>> {
        self.validate()?;
        let f = self.features;
        let mut steps = Vec::new();
        let conv = |cin, cout, bn, relu| Step::Conv {
            cin,
            cout,
            bn,
            relu,
        };
        match self.kind {
            NetKind::Demosaick => {
                steps.push(conv(4, f, true, true));
                for _ in 1..self.body_layers {
                    steps.push(conv(f, f, true, true));
                }
                steps.push(conv(f, 12, true, true));
                match self.extra_layer {
                    ExtraLayer::FullRes => {
                        steps.push(Step::DepthToSpace);
                        steps.push(conv(3, f, true, true));
                        steps.push(conv(f, 3, false, false));
                    }
                    ExtraLayer::HalfRes => {
                        steps.push(conv(12, f, true, true));
                        steps.push(conv(f, 12, false, false));
                        steps.push(Step::DepthToSpace);
                    }
                }
            }
            NetKind::Denoise => {
                let c = self.in_channels;
                steps.push(conv(c, f, false, true));
                for _ in 2..self.body_layers {
                    steps.push(conv(f, f, true, true));
                }
                steps.push(conv(f, c, false, false));
            }
        }
        Ok(steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Conv {
        cin: usize,
        cout: usize,
        bn: bool,
        relu: bool,
    },
    DepthToSpace,
}
