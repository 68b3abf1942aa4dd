use std::sync::Arc;

use super::*;
use crate::autodiff::{grad_check, BnMode, Graph, Probe, Tensor};
use crate::imaging::{demosaic_bilinear, mosaic, synth, CfaPattern, NoiseSpec};
use crate::network::{forward_demosaick, param_vars, NetParams, NetSpec};
use crate::registration::AffineMap;

fn toy_spec() -> NetSpec {
    NetSpec::demosaick().with_size(2, 6)
}

#[test]
fn warp_gradient_matches_finite_differences() {
    let map = AffineMap::rotation_about(0.05, 5.0, 5.0).compose(&AffineMap::translation(0.3, -0.4));
    let (op, mask) = warp_operator(&map, 12, 12, 12, 12).unwrap();
    assert!(mask.count() > 0);
    let op = Arc::new(op);
    let img = Tensor::<f64>::from_image(&synth::natural_scene(12, 12, 1));
    let r = grad_check(
        |g, v| {
            let w = g.resample(v[0], std::slice::from_ref(&op))?;
            Ok(g.sum(w))
        },
        &[img],
        Probe::All,
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-4, "{r:?}");
}

#[test]
fn self_consistent_target_gives_zero_loss() {
    let params = NetParams::init(&toy_spec(), 3).unwrap();
    let rgb = synth::natural_scene(24, 24, 4);
    let input = mosaic(&rgb, CfaPattern::Rggb).unwrap();
    let out = forward_demosaick(&params, &input, BnMode::BatchStats).unwrap();
    let pair = BurstPair {
        target: mosaic(&out, CfaPattern::Rggb).unwrap(),
        input,
        map: AffineMap::identity(),
        valid: true,
    };
    assert!(m2m_loss(&params, &pair, 1, BnMode::BatchStats).unwrap() < 1e-6);

    // With the clipped output as target the loss is exactly the clipping gap.
    let zero = NetParams::zeroed(&toy_spec()).unwrap();
    let out = forward_demosaick(&zero, &pair.input, BnMode::BatchStats).unwrap();
    let pair = BurstPair {
        target: mosaic(&out.clipped(), CfaPattern::Rggb).unwrap(),
        ..pair
    };
    assert_eq!(m2m_loss(&zero, &pair, 2, BnMode::BatchStats).unwrap(), 0.0);
}

#[test]
fn zero_net_loss_equals_direct_bilinear_error() {
    let rgb = synth::natural_scene(34, 30, 5);
    let (w, h) = (32, 28);
    let input = mosaic(&rgb.crop(0, 0, w, h).unwrap(), CfaPattern::Rggb).unwrap();
    // Target is the scene one pixel to the right, so its CFA phase differs.
    let target_rgb = rgb.crop(1, 0, w, h).unwrap();
    let target = mosaic(&target_rgb, CfaPattern::Rggb).unwrap();
    let map = AffineMap::translation(1.0, 0.0);
    let pair = BurstPair {
        input: input.clone(),
        target,
        map,
        valid: true,
    };
    let zero = NetParams::zeroed(&toy_spec()).unwrap();
    for p in [1u8, 2] {
        let got = m2m_loss(&zero, &pair, p, BnMode::BatchStats).unwrap();
        let base = demosaic_bilinear(&input);
        let mut sum = 0.0f64;
        let mut n = 0usize;
        // The 4×4 footprint around (x + 1, y) spans x .. x + 3 and y - 1 .. y + 2.
        for y in 1..h - 2 {
            for x in 0..w - 3 {
                let c = CfaPattern::Rggb.color_at(y, x);
                let d = (base.get(c, y, x + 1) - target_rgb.get(c, y, x)).abs() as f64;
                sum += if p == 1 { d } else { d * d };
                n += 1;
            }
        }
        let expect = sum / n as f64;
        assert!((got - expect).abs() < 1e-6 * expect.max(1.0), "p={p}: {got} vs {expect}");
        assert!(expect > 0.0);
    }
}

#[test]
fn composed_loss_gradient_on_small_crop() {
    let spec = toy_spec();
    let params = NetParams::init(&spec, 7).unwrap();
    let burst = simulate_burst(
        &synth::natural_scene(48, 48, 8),
        2,
        &MotionSpec {
            max_shift: 1.0,
            max_rot: 1.0,
            max_scale: 0.0,
        },
        &NoiseSpec::new(5.0, false, 1),
        CfaPattern::Rggb,
        9,
    )
    .unwrap();
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
    let sample = crop_pair(&burst.frames[1], &burst.frames[0], &burst.maps[1], 12, 2, &mut rng).unwrap();
    assert_eq!(sample.input.width(), 16);
    let inputs: Vec<Tensor<f64>> = params.tensors().iter().map(|t| t.cast()).collect();
    let r = grad_check(
        |g, vars| {
            let (loss, _) = m2m_loss_graph(g, &spec, vars, params.running(), &[&sample], 2, BnMode::Train)?;
            Ok(loss)
        },
        &inputs,
        Probe::Sample {
            per_input: 6,
            seed: 2,
        },
    )
    .unwrap();
    assert!(r.max_rel_error < 1e-3, "{r:?}");
}

#[test]
fn loss_mostly_decreases_on_a_fixed_pair() {
    let spec = toy_spec();
    let rgb = synth::natural_scene(40, 40, 10);
    let input = mosaic(&rgb.crop(0, 0, 32, 32).unwrap(), CfaPattern::Rggb).unwrap();
    let target = mosaic(&rgb.crop(1, 1, 32, 32).unwrap(), CfaPattern::Rggb).unwrap();
    let sample = PatchPair {
        input,
        target,
        map: AffineMap::translation(1.0, 1.0),
    };
    let mut params = NetParams::init(&spec, 11).unwrap();
    let mut adam = crate::autodiff::AdamState::<f32>::new(1e-3);
    let mut losses = Vec::new();
    for _ in 0..101 {
        let mut g = Graph::<f32>::new();
        let vars = param_vars(&mut g, &params);
        let (loss, _) =
            m2m_loss_graph(&mut g, &spec, &vars, params.running(), &[&sample], 2, BnMode::BatchStats)
                .unwrap();
        losses.push(g.value(loss).item());
        let grads = g.backward(loss).unwrap();
        let gs: Vec<Tensor<f32>> = vars.iter().map(|&v| grads.get(v).unwrap().clone()).collect();
        let refs: Vec<&Tensor<f32>> = gs.iter().collect();
        let mut ps: Vec<&mut Tensor<f32>> = params.tensors_mut().iter_mut().collect();
        adam.step(&mut ps, &refs).unwrap();
    }
    let decreasing = losses.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(decreasing >= 80, "{decreasing} of 100 steps decreased the loss");
}

#[test]
fn crop_pair_keeps_phase_and_composes_maps() {
    let rgb = synth::natural_scene(80, 80, 12);
    let a = mosaic(&rgb, CfaPattern::Gbrg).unwrap();
    let map = AffineMap::translation(3.0, -2.0);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
    for _ in 0..10 {
        let s = crop_pair(&a, &a, &map, 16, 4, &mut rng).unwrap();
        assert_eq!(s.input.pattern(), CfaPattern::Gbrg);
        assert_eq!((s.input.width(), s.target.width()), (24, 16));
        // Local map is a translation by the same amount up to the crop offsets.
        assert_eq!(s.map.a, [1.0, 0.0, 0.0, 1.0]);
        assert_eq!(s.map.t[0].fract(), 0.0);
    }
}

fn toy_pretrain_cfg(lr: f64) -> TrainConfig {
    TrainConfig {
        epochs: 2,
        steps_per_epoch: 3,
        learning_rate: lr,
        lr_drop_epochs: vec![],
        batch_size: 2,
        patch_size: 16,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_learning_rate_keeps_parameters_and_flat_log() {
    let data = vec![synth::natural_scene(64, 64, 13)];
    let val = synth::natural_scene(32, 32, 14);
    for mode in [PretrainMode::Gt, PretrainMode::M2m] {
        let opts = PretrainOptions {
            mode,
            ..PretrainOptions::default()
        };
        let (params, _) = pretrain(&toy_spec(), &data, Some(&val), &toy_pretrain_cfg(0.0), &opts).unwrap();
        let init = NetParams::init(&toy_spec(), 0).unwrap();
        assert_eq!(params.tensors(), init.tensors());

        // Running statistics still move, but a zero output layer hides them.
        let spec = toy_spec().with_zero_output(true);
        let (_, log) = pretrain(&spec, &data, Some(&val), &toy_pretrain_cfg(0.0), &opts).unwrap();
        let first = log.initial_val_psnr.unwrap();
        assert!(log.epochs.iter().all(|e| e.val_psnr == Some(first)));
    }
}

#[test]
fn pretraining_is_deterministic() {
    let data = vec![synth::natural_scene(64, 64, 15)];
    let opts = PretrainOptions::default();
    let run = || pretrain(&toy_spec(), &data, None, &toy_pretrain_cfg(1e-3), &opts).unwrap();
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(a, b);
    assert_eq!(la, lb);
}

#[test]
fn empty_dataset_is_a_data_error() {
    let r = pretrain(&toy_spec(), &[], None, &toy_pretrain_cfg(1e-3), &PretrainOptions::default());
    assert!(matches!(r, Err(crate::Error::Data(_))));
}

#[test]
fn temporal_mean_of_identical_frames() {
    let img = synth::natural_gray(32, 32, 16);
    let m = temporal_mean(&[img.clone(), img.clone(), img.clone()]).unwrap();
    for (a, b) in m.data().iter().zip(img.data()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn tnr_of_identical_clean_frames_is_maximal() {
    let img = synth::natural_gray(32, 32, 17);
    let zero = NetParams::zeroed(&NetSpec::denoise().with_size(3, 4)).unwrap();
    let r = tnr_baselines(&vec![img.clone(); 4], 0, &img, &zero, 6).unwrap();
    assert_eq!(r.noisy, f64::INFINITY);
    assert_eq!(r.single_denoised, f64::INFINITY);
    assert!(r.mean > 120.0 && r.mean_denoised > 120.0);
}

#[test]
fn static_finetune_trace_has_one_row_per_pair() {
    let clean = synth::natural_gray(32, 32, 18);
    let frames = static_burst(&clean, 3, &NoiseSpec::new(25.0, false, 1)).unwrap();
    let params = NetParams::init(&NetSpec::denoise().with_size(3, 4), 1).unwrap();
    let cfg = TrainConfig {
        batch_size: 1,
        patch_size: 16,
        ..TrainConfig::finetune()
    };
    let opts = FinetuneOptions {
        steps_per_pair: 1,
        ..FinetuneOptions::default()
    };
    let r = finetune_static(params, &frames, 0, &cfg, &opts, Some(&clean)).unwrap();
    assert_eq!(r.trace.len(), 6);
    assert_eq!(r.trace.last().unwrap().input_idx, 0);
}
