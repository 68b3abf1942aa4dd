use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub name: String,
    pub psnr_db: f64,
}

/// Outcome of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kind: String,
    pub images: Vec<ImageScore>,
    /// Arithmetic mean of `images`; absent when no image was scored.
    pub mean_psnr_db: Option<f64>,
    /// Further named results of the run.
    pub metrics: BTreeMap<String, f64>,
    /// SHA-256 of the resolved config.
    pub config_hash: String,
    pub seed: u64,
    /// `M2M_REVISION` at build time, else the crate version.
    pub revision: String,
    pub wall_time_s: f64,
}

pub fn revision() -> String {
    option_env!("M2M_REVISION")
        .map(str::to_string)
        .unwrap_or_else(|| format!("v{}", env!("CARGO_PKG_VERSION")))
}

fn mean(images: &[ImageScore]) -> Option<f64> {
    if images.is_empty() {
        None
    } else {
        Some(images.iter().map(|s| s.psnr_db).sum::<f64>() / images.len() as f64)
    }
}

impl EvalReport {
    pub fn new(kind: impl Into<String>, config_hash: String, seed: u64) -> Self {
        Self {
            kind: kind.into(),
            images: Vec::new(),
            mean_psnr_db: None,
            metrics: BTreeMap::new(),
            config_hash,
            seed,
            revision: revision(),
            wall_time_s: 0.0,
        }
    }

    pub fn push_image(&mut self, name: impl Into<String>, psnr_db: f64) {
        self.images.push(ImageScore {
            name: name.into(),
            psnr_db,
        });
        self.mean_psnr_db = mean(&self.images);
    }

    pub fn set(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    /// Writes `metric,value` rows: one `psnr_db/<image>` row per image, the
    /// mean, then the named metrics in key order. Timings are left out so
    /// reruns produce identical files.
    pub fn write_metrics_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "metric,value")?;
        for s in &self.images {
            writeln!(f, "psnr_db/{},{:.6}", s.name, s.psnr_db)?;
        }
        if let Some(m) = self.mean_psnr_db {
            writeln!(f, "mean_psnr_db,{m:.6}")?;
        }
        for (k, v) in &self.metrics {
            writeln!(f, "{k},{v:.6}")?;
        }
        f.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
