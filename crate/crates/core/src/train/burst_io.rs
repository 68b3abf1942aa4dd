//! Bursts and traces on disk.
//!
//! A burst directory holds `frame_000.png`, `frame_001.png`, ... (16-bit
//! single channel) with their JSON sidecars, an optional `clean.png` ground
//! truth for the reference, and `burst.json`.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::finetune::TraceRow;
use crate::error::{Error, Result};
use crate::imaging::io::{load_bayer, read_png, save_bayer, write_png, BitDepth};
use crate::imaging::{BayerFrame, PlanarImage};
use crate::registration::AffineMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstManifest {
    pub reference: usize,
    pub frames: Vec<String>,
    /// Noise level of the frames in 8-bit units.
    pub sigma: f64,
    /// Simulation ground truth: `maps[i]` registers frame `i` onto the reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_maps: Option<Vec<AffineMap>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean: Option<String>,
}

#[derive(Debug, Clone)]
pub struct StoredBurst {
    pub frames: Vec<BayerFrame>,
    pub manifest: BurstManifest,
    pub clean: Option<PlanarImage>,
}

pub fn frame_name(i: usize) -> String {
    format!("frame_{i:03}.png")
}

pub fn save_burst(
    dir: impl AsRef<Path>,
    frames: &[BayerFrame],
    reference: usize,
    sigma: f64,
    ground_truth_maps: Option<&[AffineMap]>,
    clean: Option<&PlanarImage>,
) -> Result<BurstManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let name = frame_name(i);
        save_bayer(dir.join(&name), f, sigma)?;
        names.push(name);
    }
    let clean_name = match clean {
        Some(img) => {
            write_png(dir.join("clean.png"), img, BitDepth::Sixteen)?;
            Some("clean.png".to_string())
        }
        None => None,
    };
    let manifest = BurstManifest {
        reference,
        frames: names,
        sigma,
        ground_truth_maps: ground_truth_maps.map(<[AffineMap]>::to_vec),
        clean: clean_name,
    };
    std::fs::write(dir.join("burst.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load_burst(dir: impl AsRef<Path>) -> Result<StoredBurst> {
    let dir = dir.as_ref();
    let text = std::fs::read_to_string(dir.join("burst.json"))?;
    let manifest: BurstManifest = serde_json::from_str(&text)?;
    if manifest.reference >= manifest.frames.len() {
        return Err(Error::Data(format!(
            "burst.json reference {} outside {} frames",
            manifest.reference,
            manifest.frames.len()
        )));
    }
    let frames = manifest
        .frames
        .iter()
        .map(|name| load_bayer(dir.join(name)).map(|(f, _)| f))
        .collect::<Result<Vec<_>>>()?;
    let clean = manifest
        .clean
        .as_ref()
        .map(|name| read_png(dir.join(name)))
        .transpose()?;
    Ok(StoredBurst {
        frames,
        manifest,
        clean,
    })
}

pub const TRACE_HEADER: &str = "pair_index,input_idx,target_idx,psnr_db";

pub fn write_trace_csv(path: impl AsRef<Path>, rows: &[TraceRow]) -> Result<PathBuf> {
    let path = path.as_ref().to_path_buf();
    let mut f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    writeln!(f, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(f, "{},{},{},{:.6}", r.pair_index, r.input_idx, r.target_idx, r.psnr_db)?;
    }
    f.flush()?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{mosaic, synth, CfaPattern};

    #[test]
    fn burst_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rgb = synth::natural_scene(16, 12, 1);
        let frames = vec![
            mosaic(&rgb, CfaPattern::Grbg).unwrap(),
            mosaic(&rgb, CfaPattern::Grbg).unwrap(),
        ];
        let maps = [AffineMap::identity(), AffineMap::translation(0.5, -1.0)];
        save_burst(dir.path(), &frames, 1, 5.0, Some(&maps), Some(&rgb)).unwrap();
        let back = load_burst(dir.path()).unwrap();
        assert_eq!(back.manifest.reference, 1);
        assert_eq!(back.manifest.ground_truth_maps.as_deref(), Some(&maps[..]));
        assert_eq!(back.frames.len(), 2);
        assert_eq!(back.frames[0].pattern(), CfaPattern::Grbg);
        for (a, b) in back.frames[0].data().iter().zip(frames[0].data()) {
            assert!((a - b).abs() <= 0.5 / 65535.0);
        }
        assert!(back.clean.is_some());
    }

    #[test]
    fn trace_csv_has_documented_columns() {
        let dir = tempfile::tempdir().unwrap();
        let rows = [TraceRow {
            pair_index: 0,
            input_idx: 1,
            target_idx: 0,
            psnr_db: 31.25,
        }];
        let p = write_trace_csv(dir.path().join("t.csv"), &rows).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text, "pair_index,input_idx,target_idx,psnr_db\n0,1,0,31.250000\n");
    }
}
