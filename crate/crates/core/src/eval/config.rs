use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::metrics::DEFAULT_BORDER;
use crate::autodiff::BnMode;
use crate::error::{Error, Result};
use crate::imaging::{CfaPattern, NoiseSpec};
use crate::network::NetSpec;
use crate::registration::RegistrationConfig;
use crate::train::{FinetuneOptions, MotionSpec, PretrainMode, TrainConfig};

/// Where training and test images come from. Empty path lists fall back to
/// procedural scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub train_images: Vec<PathBuf>,
    pub validation_image: Option<PathBuf>,
    pub test_images: Vec<PathBuf>,
    /// Scene rendered into a burst by `simulate` (and by `finetune` when no
    /// burst directory is given).
    pub scene_image: Option<PathBuf>,
    /// Burst directory as written by `simulate`.
    pub burst_dir: Option<PathBuf>,
    /// Bayer PNGs (with sidecars) for `demosaic`.
    pub bayer_inputs: Vec<PathBuf>,
    /// Parameters to start from; absent means a fresh or zero network,
    /// depending on the experiment.
    pub checkpoint: Option<PathBuf>,
    pub synthetic_count: usize,
    pub synthetic_size: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_images: Vec::new(),
            validation_image: None,
            test_images: Vec::new(),
            scene_image: None,
            burst_dir: None,
            bayer_inputs: Vec::new(),
            checkpoint: None,
            synthetic_count: 5,
            synthetic_size: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BurstConfig {
    pub frames: usize,
    /// Side of the procedural scene; frames are smaller by the motion margin.
    pub scene_size: usize,
}

impl Default for BurstConfig {
    fn default() -> Self {
        Self {
            frames: 10,
            scene_size: 160,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainSection {
    pub mode: PretrainMode,
    pub train: TrainConfig,
    pub pad: usize,
    pub affinity_per_patch: bool,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self {
            mode: PretrainMode::M2m,
            train: TrainConfig::default(),
            pad: 8,
            affinity_per_patch: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneSection {
    pub train: TrainConfig,
    pub steps_per_pair: usize,
    pub passes: usize,
    pub bn_mode: BnMode,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        let o = FinetuneOptions::default();
        Self {
            train: TrainConfig::finetune(),
            steps_per_pair: o.steps_per_pair,
            passes: o.passes,
            bn_mode: o.bn_mode,
        }
    }
}

/// Settings of the self-similarity experiment on the stripes and
/// binary-noise images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StripesConfig {
    pub size: usize,
    pub frames: usize,
    pub sigma: f64,
    pub denoiser: NetSpec,
    /// Supervised pretraining of the denoiser on procedural gray scenes.
    pub pretrain: TrainConfig,
    pub finetune: FinetuneSection,
}

impl Default for StripesConfig {
    fn default() -> Self {
        Self {
            size: 64,
            frames: 10,
            sigma: 25.0,
            denoiser: NetSpec::denoise().with_size(5, 16).with_zero_output(true),
            pretrain: TrainConfig {
                epochs: 4,
                steps_per_epoch: 50,
                learning_rate: 2e-3,
                lr_drop_epochs: Vec::new(),
                batch_size: 16,
                patch_size: 48,
                loss_p: 2,
                ..TrainConfig::default()
            },
            finetune: FinetuneSection {
                train: TrainConfig {
                    patch_size: 32,
                    ..TrainConfig::finetune()
                },
                steps_per_pair: 5,
                ..FinetuneSection::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradcheckConfig {
    /// Threshold for single operators.
    pub op_tolerance: f64,
    /// Threshold for the composed mosaic-to-mosaic loss.
    pub loss_tolerance: f64,
    /// Side of the input crop of the composed check.
    pub crop: usize,
    pub probes_per_tensor: usize,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            op_tolerance: 1e-4,
            loss_tolerance: 1e-3,
            crop: 16,
            probes_per_tensor: 8,
        }
    }
}

/// Complete description of one run. Every field has a default, so a config
/// file only lists what it changes. Stage seeds are overwritten by values
/// derived from `seed` when the run starts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Drives every random choice of the run.
    pub seed: u64,
    pub output_dir: PathBuf,
    /// PSNR border crop in pixels.
    pub border: usize,
    pub net: NetSpec,
    pub noise: NoiseSpec,
    pub motion: MotionSpec,
    pub pattern: CfaPattern,
    pub registration: RegistrationConfig,
    pub data: DataConfig,
    pub burst: BurstConfig,
    pub pretrain: PretrainSection,
    pub finetune: FinetuneSection,
    pub stripes: StripesConfig,
    pub gradcheck: GradcheckConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            border: DEFAULT_BORDER,
            net: NetSpec::demosaick(),
            noise: NoiseSpec::default(),
            motion: MotionSpec::default(),
            pattern: CfaPattern::default(),
            registration: RegistrationConfig::default(),
            data: DataConfig::default(),
            burst: BurstConfig::default(),
            pretrain: PretrainSection::default(),
            finetune: FinetuneSection::default(),
            stripes: StripesConfig::default(),
            gradcheck: GradcheckConfig::default(),
        }
    }
}

/// Parses `key.path=value`. The value is read as JSON when possible and as a
/// plain string otherwise.
pub fn parse_override(text: &str) -> Result<(Vec<String>, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::config(text, "override must look like key=value"))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(Error::config(key, "empty key segment"));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((path, value))
}

/// Sets `path` inside `doc`, creating intermediate objects.
pub fn apply_override(doc: &mut Value, path: &[String], value: Value) -> Result<()> {
    let dotted = path.join(".");
    let mut cur = doc;
    for (i, seg) in path.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::config(&dotted, format!("`{}` is not an object", path[..i].join("."))))?;
        if i + 1 == path.len() {
            obj.insert(seg.clone(), value);
            return Ok(());
        }
        cur = obj
            .entry(seg.clone())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("path is not empty")
}

/// Overlays `top` on `base`: objects merge key by key, anything else
/// replaces.
fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl ExperimentConfig {
    /// Deserializes a (possibly partial) JSON document laid over the
    /// defaults; errors name the offending key path.
    pub fn from_value(doc: Value) -> Result<Self> {
        if !doc.is_object() {
            return Err(Error::config(".", "a config must be a JSON object"));
        }
        let mut full = serde_json::to_value(Self::default())?;
        merge(&mut full, doc);
        let cfg: Self = serde_path_to_error::deserialize(full).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text).map_err(|e| Error::config(".", e.to_string()))?;
        Self::from_value(doc)
    }

    /// Reads `path` (or starts from defaults) and applies dotted overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    Error::config(p.display().to_string(), format!("cannot read config: {e}"))
                })?;
                serde_json::from_str(&text).map_err(|e| Error::config(".", e.to_string()))?
            }
            None => Value::Object(Default::default()),
        };
        for o in overrides {
            let (key, value) = parse_override(o)?;
            apply_override(&mut doc, &key, value)?;
        }
        Self::from_value(doc)
    }

    pub fn validate(&self) -> Result<()> {
        let prefixed = |prefix: &str, r: Result<()>| {
            r.map_err(|e| match e {
                Error::Config { path, message } => Error::config(format!("{prefix}.{path}"), message),
                Error::Spec(m) => Error::config(prefix, m),
                other => other,
            })
        };
        prefixed("net", self.net.validate())?;
        prefixed("stripes.denoiser", self.stripes.denoiser.validate())?;
        self.noise
            .validate()
            .map_err(|e| Error::config("noise.sigma", e.to_string()))?;
        self.motion.validate()?;
        self.registration.validate()?;
        prefixed("pretrain.train", self.pretrain.train.validate())?;
        prefixed("finetune.train", self.finetune.train.validate())?;
        prefixed("stripes.pretrain", self.stripes.pretrain.validate())?;
        prefixed("stripes.finetune.train", self.stripes.finetune.train.validate())?;
        if self.burst.frames < 2 {
            return Err(Error::config("burst.frames", "a burst needs at least 2 frames"));
        }
        if self.stripes.frames < 2 {
            return Err(Error::config("stripes.frames", "a burst needs at least 2 frames"));
        }
        if self.data.synthetic_count == 0 {
            return Err(Error::config("data.synthetic_count", "must be at least 1"));
        }
        if self.gradcheck.crop < 12 || !self.gradcheck.crop.is_multiple_of(2) {
            return Err(Error::config("gradcheck.crop", "must be even and at least 12"));
        }
        Ok(())
    }

    pub fn finetune_options(&self) -> FinetuneOptions {
        FinetuneOptions {
            steps_per_pair: self.finetune.steps_per_pair,
            passes: self.finetune.passes,
            bn_mode: self.finetune.bn_mode,
            registration: self.registration,
        }
    }

    /// Canonical JSON of the resolved config.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(serde_json::to_vec(self)?);
        Ok(hex::encode(digest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(ExperimentConfig::from_json_str("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_json_str(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash().unwrap(), cfg.hash().unwrap());
        assert_eq!(cfg.hash().unwrap().len(), 64);
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let err = ExperimentConfig::from_json_str(r#"{"pretrain": {"train": {"epochz": 3}}}"#).unwrap_err();
        match err {
            Error::Config { path, message } => {
                assert_eq!(path, "pretrain.train.epochz");
                assert!(message.contains("epochz"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_types_report_their_path() {
        let err = ExperimentConfig::from_json_str(r#"{"noise": {"sigma": "loud"}}"#).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "noise.sigma"), "{err:?}");
    }

    #[test]
    fn invalid_values_name_the_key() {
        let err = ExperimentConfig::load(None, &["finetune.train.loss_p=3".into()]).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "finetune.train.loss_p"), "{err:?}");
    }

    #[test]
    fn overrides_parse_json_and_strings() {
        let cfg = ExperimentConfig::load(
            None,
            &[
                "seed=7".into(),
                "pretrain.train.lr_drop_epochs=[1,2]".into(),
                "output_dir=out/run one".into(),
                "pattern=\"GBRG\"".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.pretrain.train.lr_drop_epochs, vec![1, 2]);
        assert_eq!(cfg.output_dir, PathBuf::from("out/run one"));
        assert_eq!(cfg.pattern, CfaPattern::Gbrg);
    }

    #[test]
    fn override_through_a_scalar_is_rejected() {
        let err = ExperimentConfig::load(None, &["seed=1".into(), "seed.x=2".into()]).unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
        assert!(parse_override("no_equals").is_err());
        assert!(parse_override("a..b=1").is_err());
    }

    #[test]
    fn partial_nested_sections_keep_their_defaults() {
        let cfg = ExperimentConfig::load(None, &["net.features=8".into(), "net.body_layers=2".into()]).unwrap();
        assert_eq!(cfg.net, NetSpec::demosaick().with_size(2, 8));
        assert!(matches!(
            ExperimentConfig::from_json_str("[1, 2]"),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn hash_changes_with_content() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            seed: 1,
            ..a.clone()
        };
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }
}
