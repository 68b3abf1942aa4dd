//! Experiment drivers. Each run writes its resolved config, a report, a
//! timing-free metrics CSV and its artifacts into `cfg.output_dir`.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::gradcheck::gradient_suite;
use super::images::{make_test_image, TestImage};
use super::metrics::psnr;
use super::report::EvalReport;
use crate::autodiff::BnMode;
use crate::error::{Error, Result};
use crate::imaging::io::{load_bayer, read_png, write_png, BitDepth};
use crate::imaging::{demosaic_bilinear, mosaic, synth, AddNoise, BayerFrame, NoiseSpec, PlanarImage};
use crate::network::{forward_demosaick, NetKind, NetParams};
use crate::train::burst_io::{load_burst, save_burst, write_trace_csv};
use crate::train::{
    demosaick_psnr, finetune_burst, finetune_static, pretrain, pretrain_denoiser, simulate_burst,
    static_burst, DenoisePretrainOptions, FinetuneOptions, PretrainOptions, RegisteredPair,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Pretrain,
    Finetune,
    Demosaic,
    Eval,
    Gradcheck,
    Stripes,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        Self::Simulate,
        Self::Pretrain,
        Self::Finetune,
        Self::Demosaic,
        Self::Eval,
        Self::Gradcheck,
        Self::Stripes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Pretrain => "pretrain",
            Self::Finetune => "finetune",
            Self::Demosaic => "demosaic",
            Self::Eval => "eval",
            Self::Gradcheck => "gradcheck",
            Self::Stripes => "stripes",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config("kind", format!("unknown experiment `{s}`")))
    }
}

/// SplitMix64 of `seed` on stream `stream`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

// Streams of the procedural data.
const TRAIN_SCENES: u64 = 10;
const VALIDATION_SCENE: u64 = 11;
const BURST_SCENE: u64 = 12;
const TEST_SCENES: u64 = 13;
const BURST_MOTION: u64 = 14;
const DENOISER_SCENES: u64 = 15;
const STRIPES_IMAGES: u64 = 16;

impl ExperimentConfig {
    /// Replaces every stage seed with one derived from `seed`, so the top
    /// seed alone determines a run.
    pub fn resolved(mut self) -> Self {
        let s = self.seed;
        self.pretrain.train.seed = derive_seed(s, 1);
        self.finetune.train.seed = derive_seed(s, 2);
        self.noise.seed = derive_seed(s, 3);
        self.stripes.pretrain.seed = derive_seed(s, 4);
        self.stripes.finetune.train.seed = derive_seed(s, 5);
        self
    }
}

struct Run<'a> {
    cfg: &'a ExperimentConfig,
    out: &'a Path,
    report: EvalReport,
}

impl Run<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// Runs `kind` with `cfg` and writes its artifacts.
///
/// A gradient check that exceeds its tolerance still writes its artifacts,
/// then reports a numeric error.
pub fn run_experiment(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<EvalReport> {
    let start = Instant::now();
    cfg.validate()?;
    let cfg = cfg.clone().resolved();
    let out = cfg.output_dir.clone();
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.json"), cfg.to_json()?)?;
    let mut run = Run {
        cfg: &cfg,
        out: &out,
        report: EvalReport::new(kind.name(), cfg.hash()?, cfg.seed),
    };
    info!("{kind} run in {}", out.display());
    let outcome = match kind {
        ExperimentKind::Simulate => run_simulate(&mut run),
        ExperimentKind::Pretrain => run_pretrain(&mut run),
        ExperimentKind::Finetune => run_finetune(&mut run),
        ExperimentKind::Demosaic => run_demosaic(&mut run),
        ExperimentKind::Eval => run_eval(&mut run),
        ExperimentKind::Gradcheck => run_gradcheck(&mut run),
        ExperimentKind::Stripes => run_stripes(&mut run),
    };
    let failure = match outcome {
        Ok(()) => None,
        Err(e @ Error::Numeric(_)) => Some(e),
        Err(e) => return Err(e),
    };
    let mut report = run.report;
    report.wall_time_s = start.elapsed().as_secs_f64();
    report.write_metrics_csv(out.join("metrics.csv"))?;
    report.write_json(out.join("report.json"))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

fn read_rgb(path: &Path) -> Result<PlanarImage> {
    let img = read_png(path)?;
    if img.channels() != 3 {
        return Err(Error::Data(format!("{} is not an RGB image", path.display())));
    }
    Ok(img)
}

fn image_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn training_set(cfg: &ExperimentConfig) -> Result<Vec<PlanarImage>> {
    if cfg.data.train_images.is_empty() {
        let (n, size) = (cfg.data.synthetic_count, cfg.data.synthetic_size);
        let base = derive_seed(cfg.seed, TRAIN_SCENES);
        return Ok((0..n as u64)
            .map(|k| synth::natural_scene(size, size, base.wrapping_add(k)))
            .collect());
    }
    cfg.data.train_images.iter().map(|p| read_rgb(p)).collect()
}

fn validation_image(cfg: &ExperimentConfig) -> Result<PlanarImage> {
    match &cfg.data.validation_image {
        Some(p) => read_rgb(p),
        None => {
            let size = cfg.data.synthetic_size;
            Ok(synth::natural_scene(size, size, derive_seed(cfg.seed, VALIDATION_SCENE)))
        }
    }
}

fn test_set(cfg: &ExperimentConfig) -> Result<Vec<(String, PlanarImage)>> {
    if cfg.data.test_images.is_empty() {
        let (n, size) = (cfg.data.synthetic_count, cfg.data.synthetic_size);
        let base = derive_seed(cfg.seed, TEST_SCENES);
        return Ok((0..n as u64)
            .map(|k| (format!("scene{k}"), synth::natural_scene(size, size, base.wrapping_add(k))))
            .collect());
    }
    cfg.data
        .test_images
        .iter()
        .map(|p| Ok((image_name(p), read_rgb(p)?)))
        .collect()
}

/// Parameters from `data.checkpoint`, checked against the expected kind.
fn checkpoint(cfg: &ExperimentConfig, kind: NetKind) -> Result<Option<NetParams>> {
    let Some(path) = &cfg.data.checkpoint else {
        return Ok(None);
    };
    let params = NetParams::load(path)?;
    if params.spec().kind != kind {
        return Err(Error::config(
            "data.checkpoint",
            format!("expected a {kind:?} network in {}", path.display()),
        ));
    }
    Ok(Some(params))
}

fn scene(cfg: &ExperimentConfig) -> Result<PlanarImage> {
    match &cfg.data.scene_image {
        Some(p) => read_rgb(p),
        None => {
            let size = cfg.burst.scene_size;
            Ok(synth::natural_scene(size, size, derive_seed(cfg.seed, BURST_SCENE)))
        }
    }
}

struct Burst {
    frames: Vec<BayerFrame>,
    reference: usize,
    clean: Option<PlanarImage>,
}

fn simulated(cfg: &ExperimentConfig) -> Result<(Burst, crate::train::SimulatedBurst)> {
    let sim = simulate_burst(
        &scene(cfg)?,
        cfg.burst.frames,
        &cfg.motion,
        &cfg.noise,
        cfg.pattern,
        derive_seed(cfg.seed, BURST_MOTION),
    )?;
    let burst = Burst {
        frames: sim.frames.clone(),
        reference: sim.reference,
        clean: Some(sim.clean.clone()),
    };
    Ok((burst, sim))
}

fn run_simulate(run: &mut Run) -> Result<()> {
    let (burst, sim) = simulated(run.cfg)?;
    save_burst(
        run.path("burst"),
        &sim.frames,
        sim.reference,
        run.cfg.noise.sigma,
        Some(&sim.maps),
        Some(&sim.clean),
    )?;
    let reference = &burst.frames[burst.reference];
    let bilinear = demosaic_bilinear(reference).clipped();
    run.report
        .push_image("reference_bilinear", psnr(&bilinear, &sim.clean, run.cfg.border)?);
    run.report.set("frames", burst.frames.len() as f64);
    run.report.set("width", reference.width() as f64);
    run.report.set("height", reference.height() as f64);
    Ok(())
}

fn run_pretrain(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let dataset = training_set(cfg)?;
    let validation = validation_image(cfg)?;
    let opts = PretrainOptions {
        mode: cfg.pretrain.mode,
        noise: cfg.noise,
        motion: cfg.motion,
        pattern: cfg.pattern,
        pad: cfg.pretrain.pad,
        affinity_per_patch: cfg.pretrain.affinity_per_patch,
    };
    let (params, log) = pretrain(&cfg.net, &dataset, Some(&validation), &cfg.pretrain.train, &opts)?;
    params.save(run.path("model.ckpt"))?;

    let mut f = std::io::BufWriter::new(fs::File::create(run.path("train_log.csv"))?);
    writeln!(f, "epoch,learning_rate,mean_loss,val_psnr_db")?;
    for e in &log.epochs {
        let val = e.val_psnr.map(|v| format!("{v:.6}")).unwrap_or_default();
        writeln!(f, "{},{:e},{:.8},{val}", e.epoch, e.learning_rate, e.mean_loss)?;
    }
    f.flush()?;

    let zero = NetParams::zeroed(&cfg.net)?;
    let val_noise = cfg.noise.with_seed(cfg.noise.seed ^ 0x7a1);
    let bilinear = demosaick_psnr(&zero, &validation, cfg.pattern, &val_noise, BnMode::Eval)?;
    if let Some(v) = log.epochs.last().and_then(|e| e.val_psnr) {
        run.report.push_image("validation", v);
    }
    if let Some(v) = log.initial_val_psnr {
        run.report.set("initial_val_psnr_db", v);
    }
    run.report.set("bilinear_val_psnr_db", bilinear);
    Ok(())
}

fn write_pairs_csv(path: &Path, pairs: &[RegisteredPair]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "input_idx,target_idx,overlap,valid,a00,a01,a10,a11,t0,t1")?;
    for p in pairs {
        let (a, t) = (p.map.a, p.map.t);
        writeln!(
            f,
            "{},{},{:.6},{},{:.8},{:.8},{:.8},{:.8},{:.6},{:.6}",
            p.input_idx, p.target_idx, p.overlap, p.valid, a[0], a[1], a[2], a[3], t[0], t[1]
        )?;
    }
    f.flush()?;
    Ok(())
}

/// Network output clipped to `[0, 1]` for export.
fn save_output(path: &Path, params: &NetParams, frame: &BayerFrame, mode: BnMode) -> Result<()> {
    let out = forward_demosaick(params, frame, mode)?;
    write_png(path, &out.clipped(), BitDepth::Sixteen)
}

fn run_finetune(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let params = checkpoint(cfg, NetKind::Demosaick)?
        .ok_or_else(|| Error::config("data.checkpoint", "fine-tuning needs a pretrained network"))?;
    let burst = match &cfg.data.burst_dir {
        Some(dir) => {
            let stored = load_burst(dir)?;
            Burst {
                frames: stored.frames,
                reference: stored.manifest.reference,
                clean: stored.clean,
            }
        }
        None => simulated(cfg)?.0,
    };
    let tests = if cfg.data.test_images.is_empty() {
        Vec::new()
    } else {
        test_set(cfg)?
    };
    let score = |p: &NetParams| -> Result<Vec<f64>> {
        tests
            .iter()
            .enumerate()
            .map(|(k, (_, img))| {
                let noise = cfg.noise.with_seed(cfg.noise.seed ^ k as u64);
                demosaick_psnr(p, img, cfg.pattern, &noise, BnMode::Eval)
            })
            .collect()
    };
    let before = score(&params)?;

    let reference = &burst.frames[burst.reference];
    save_output(&run.path("reference_before.png"), &params, reference, BnMode::BatchStats)?;
    let opts = cfg.finetune_options();
    let result = finetune_burst(
        params,
        &burst.frames,
        burst.reference,
        &cfg.finetune.train,
        &opts,
        burst.clean.as_ref(),
    )?;
    save_output(&run.path("reference_after.png"), &result.params, reference, BnMode::BatchStats)?;
    result.params.save(run.path("finetuned.ckpt"))?;
    write_pairs_csv(&run.path("pairs.csv"), &result.pairs)?;
    if burst.clean.is_some() {
        write_trace_csv(run.path("trace.csv"), &result.trace)?;
    }

    let r = &mut run.report;
    if let (Some(a), Some(b)) = (result.initial_psnr, result.final_psnr()) {
        r.push_image("reference", b);
        r.set("reference_initial_psnr_db", a);
        r.set("reference_gain_db", b - a);
    }
    r.set("valid_pairs", result.pairs.iter().filter(|p| p.valid).count() as f64);
    for (((name, _), b), a) in tests.iter().zip(&before).zip(score(&result.params)?) {
        r.set(format!("test_before_psnr_db/{name}"), *b);
        r.set(format!("test_after_psnr_db/{name}"), a);
    }
    Ok(())
}

fn run_demosaic(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    if cfg.data.bayer_inputs.is_empty() {
        return Err(Error::config("data.bayer_inputs", "no Bayer images to demosaic"));
    }
    let params = match checkpoint(cfg, NetKind::Demosaick)? {
        Some(p) => p,
        None => NetParams::zeroed(&cfg.net)?,
    };
    for path in &cfg.data.bayer_inputs {
        let (frame, _) = load_bayer(path)?;
        save_output(&run.path(&format!("{}.png", image_name(path))), &params, &frame, BnMode::Eval)?;
    }
    run.report.set("images", cfg.data.bayer_inputs.len() as f64);
    Ok(())
}

fn run_eval(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let params = match checkpoint(cfg, NetKind::Demosaick)? {
        Some(p) => p,
        None => NetParams::zeroed(&cfg.net)?,
    };
    let tests = test_set(cfg)?;
    let scores = tests
        .par_iter()
        .enumerate()
        .map(|(k, (_, img))| {
            let noise = cfg.noise.with_seed(cfg.noise.seed ^ k as u64);
            let frame = mosaic(img, cfg.pattern)?.add_noise(&noise)?;
            let net = forward_demosaick(&params, &frame, BnMode::Eval)?.clipped();
            let bilinear = demosaic_bilinear(&frame).clipped();
            Ok((psnr(&net, img, cfg.border)?, psnr(&bilinear, img, cfg.border)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut bilinear_sum = 0.0;
    for ((name, _), (net, bilinear)) in tests.iter().zip(&scores) {
        run.report.push_image(name.clone(), *net);
        run.report.set(format!("bilinear_psnr_db/{name}"), *bilinear);
        bilinear_sum += bilinear;
    }
    run.report
        .set("bilinear_mean_psnr_db", bilinear_sum / scores.len() as f64);
    Ok(())
}

fn run_gradcheck(run: &mut Run) -> Result<()> {
    let checks = gradient_suite(&run.cfg.gradcheck, run.cfg.seed)?;
    let mut f = std::io::BufWriter::new(fs::File::create(run.path("gradcheck.csv"))?);
    writeln!(f, "op,max_rel_error,probed,tolerance,passed")?;
    for c in &checks {
        writeln!(
            f,
            "{},{:e},{},{:e},{}",
            c.name,
            c.max_rel_error,
            c.probed,
            c.tolerance,
            c.passed()
        )?;
        run.report.set(format!("max_rel_error/{}", c.name), c.max_rel_error);
    }
    f.flush()?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Numeric(format!("gradient check failed for {}", failed.join(", "))))
    }
}

fn run_stripes(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let st = &cfg.stripes;
    let size = cfg.data.synthetic_size;
    let base = derive_seed(cfg.seed, DENOISER_SCENES);
    let dataset: Vec<PlanarImage> = (0..cfg.data.synthetic_count as u64)
        .map(|k| synth::natural_gray(size, size, base.wrapping_add(k)))
        .collect();
    let validation = synth::natural_gray(size, size, base.wrapping_sub(1));
    let opts = DenoisePretrainOptions {
        sigma_min: st.sigma,
        sigma_max: st.sigma,
        val_sigma: st.sigma,
    };
    let (params, _) = pretrain_denoiser(&st.denoiser, &dataset, Some(&validation), &st.pretrain, &opts)?;
    params.save(run.path("denoiser.ckpt"))?;

    let ft = FinetuneOptions {
        steps_per_pair: st.finetune.steps_per_pair,
        passes: st.finetune.passes,
        bn_mode: st.finetune.bn_mode,
        ..FinetuneOptions::default()
    };
    let mut gains = Vec::new();
    for (k, kind) in [TestImage::Stripes, TestImage::BinaryNoise].into_iter().enumerate() {
        let name = match kind {
            TestImage::Stripes => "stripes",
            TestImage::BinaryNoise => "binary_noise",
        };
        let seed = derive_seed(cfg.seed, STRIPES_IMAGES + 2 * k as u64);
        let clean = make_test_image(kind, st.size, seed)?;
        let frames = static_burst(&clean, st.frames, &NoiseSpec::new(st.sigma, false, seed ^ 1))?;
        let result = finetune_static(params.clone(), &frames, 0, &st.finetune.train, &ft, Some(&clean))?;
        write_trace_csv(run.path(&format!("trace_{name}.csv")), &result.trace)?;
        let (a, b) = (
            result.initial_psnr.expect("clean image given"),
            result.final_psnr().expect("clean image given"),
        );
        run.report.push_image(name, b);
        run.report.set(format!("initial_psnr_db/{name}"), a);
        run.report.set(format!("gain_db/{name}"), b - a);
        gains.push(b - a);
    }
    run.report.set("gain_gap_db", gains[0] - gains[1]);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(dir: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            output_dir: dir.to_path_buf(),
            ..ExperimentConfig::default()
        };
        cfg.net = crate::network::NetSpec::demosaick().with_size(1, 4);
        cfg.data.synthetic_count = 2;
        cfg.data.synthetic_size = 64;
        cfg
    }

    #[test]
    fn kinds_parse_by_name() {
        for k in ExperimentKind::ALL {
            assert_eq!(k.name().parse::<ExperimentKind>().unwrap(), k);
        }
        assert!(matches!("train".parse::<ExperimentKind>(), Err(Error::Config { .. })));
    }

    #[test]
    fn derived_seeds_differ_by_stream() {
        assert_ne!(derive_seed(0, 1), derive_seed(0, 2));
        assert_ne!(derive_seed(0, 1), derive_seed(1, 1));
        let a = ExperimentConfig::default().resolved();
        assert_eq!(a.clone().resolved(), a);
    }

    #[test]
    fn zero_net_eval_matches_bilinear() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_experiment(&quick(dir.path()), ExperimentKind::Eval).unwrap();
        assert_eq!(report.images.len(), 2);
        for s in &report.images {
            let b = report.metrics[&format!("bilinear_psnr_db/{}", s.name)];
            assert!((s.psnr_db - b).abs() < 1e-3, "{} vs {b}", s.psnr_db);
        }
        for f in ["config.json", "metrics.csv", "report.json"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let back: ExperimentConfig =
            serde_json::from_str(&fs::read_to_string(dir.path().join("config.json")).unwrap()).unwrap();
        assert_eq!(back.hash().unwrap(), report.config_hash);
    }

    #[test]
    fn reruns_give_identical_metrics() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut cfg = quick(a.path());
        cfg.pretrain.train = crate::train::TrainConfig {
            epochs: 1,
            steps_per_epoch: 2,
            batch_size: 2,
            patch_size: 16,
            lr_drop_epochs: Vec::new(),
            ..Default::default()
        };
        cfg.pretrain.pad = 4;
        run_experiment(&cfg, ExperimentKind::Pretrain).unwrap();
        cfg.output_dir = b.path().to_path_buf();
        run_experiment(&cfg, ExperimentKind::Pretrain).unwrap();
        for f in ["metrics.csv", "train_log.csv", "model.ckpt"] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn simulated_burst_feeds_finetuning() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick(&dir.path().join("sim"));
        cfg.burst.frames = 3;
        cfg.burst.scene_size = 96;
        run_experiment(&cfg, ExperimentKind::Simulate).unwrap();
        let net = NetParams::init(&cfg.net.clone().with_zero_output(true), 1).unwrap();
        let ckpt = dir.path().join("net.ckpt");
        net.save(&ckpt).unwrap();

        cfg.output_dir = dir.path().join("ft");
        cfg.data.burst_dir = Some(dir.path().join("sim/burst"));
        cfg.data.checkpoint = Some(ckpt);
        cfg.finetune.steps_per_pair = 1;
        cfg.finetune.train.patch_size = 16;
        let report = run_experiment(&cfg, ExperimentKind::Finetune).unwrap();
        assert!(report.mean_psnr_db.is_some());
        let trace = fs::read_to_string(dir.path().join("ft/trace.csv")).unwrap();
        assert_eq!(trace.lines().count(), 1 + 6);
    }

    #[test]
    fn finetune_without_checkpoint_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = run_experiment(&quick(dir.path()), ExperimentKind::Finetune).unwrap_err();
        assert!(matches!(err, Error::Config { ref path, .. } if path == "data.checkpoint"));
    }
}
