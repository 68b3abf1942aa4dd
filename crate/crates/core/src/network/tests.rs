use super::*;
use crate::autodiff::{BnMode, Graph, Tensor};
use crate::imaging::{demosaic_bilinear, mosaic, synth, BayerFrame, CfaPattern};

fn conv(cin: usize, cout: usize) -> usize {
    cout * cin * 9 + cout
}

#[test]
fn default_demosaick_parameter_count() {
    let p = NetParams::init(&NetSpec::demosaick(), 0).unwrap();
    let bn = |c: usize| 2 * c;
    let expected = conv(4, 64) + bn(64)
        + 13 * (conv(64, 64) + bn(64))
        + conv(64, 12) + bn(12)
        + conv(3, 64) + bn(64)
        + conv(64, 3);
    assert_eq!(p.num_parameters(), expected);
    assert_eq!(expected, 494_823);
    assert_eq!(p.running().len(), 16);
}

#[test]
fn default_denoise_parameter_count() {
    let p = NetParams::init(&NetSpec::denoise(), 0).unwrap();
    let expected = conv(1, 64) + 15 * (conv(64, 64) + 128) + conv(64, 1);
    assert_eq!(p.num_parameters(), expected);
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(NetParams::init(&NetSpec::demosaick().with_size(0, 8), 0).is_err());
    let mut s = NetSpec::denoise();
    s.out_channels = 3;
    assert!(NetParams::init(&s, 0).is_err());
}

fn frame(w: usize, h: usize, seed: u64) -> BayerFrame {
    mosaic(&synth::natural_scene(w, h, seed), CfaPattern::Rggb).unwrap()
}

#[test]
fn demosaick_shape_law() {
    let spec = NetSpec::demosaick().with_size(2, 8);
    let p = NetParams::init(&spec, 1).unwrap();
    let mut g = Graph::<f32>::new();
    let vars = param_vars(&mut g, &p);
    let x = g.input(Tensor::full([1, 4, 8, 8], 0.3));
    let b = g.input(Tensor::zeros([1, 3, 16, 16]));
    let net = build_graph(&mut g, &spec, &vars, p.running(), x, Some(b), BnMode::Train).unwrap();
    assert_eq!(g.shape(net.output), [1, 3, 16, 16]);
}

#[test]
fn zero_weights_reduce_to_baselines() {
    for extra in [ExtraLayer::FullRes, ExtraLayer::HalfRes] {
        let mut spec = NetSpec::demosaick().with_size(2, 8);
        spec.extra_layer = extra;
        let p = NetParams::zeroed(&spec).unwrap();
        let f = frame(24, 20, 2);
        for mode in [BnMode::Train, BnMode::Eval] {
            let out = forward_demosaick(&p, &f, mode).unwrap();
            assert_eq!(out, demosaic_bilinear(&f));
        }
    }
    let p = NetParams::zeroed(&NetSpec::denoise().with_size(4, 8)).unwrap();
    let img = synth::natural_gray(40, 40, 3);
    let out = forward_denoise(&p, &img, BnMode::Train).unwrap();
    assert_eq!(out, img);
}

#[test]
fn eval_forward_is_deterministic() {
    let p = NetParams::init(&NetSpec::demosaick().with_size(3, 8), 4).unwrap();
    let f = frame(32, 32, 5);
    let a = forward_demosaick(&p, &f, BnMode::Eval).unwrap();
    let b = forward_demosaick(&p, &f, BnMode::Eval).unwrap();
    assert_eq!(a, b);
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let mut p = NetParams::init(&NetSpec::demosaick().with_size(2, 8), 6).unwrap();
    p.update_running(0, &[0.1; 8], &[2.0; 8], 10);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.m2m");
    p.save(&path).unwrap();
    let q = NetParams::load(&path).unwrap();
    assert_eq!(p, q);
    let f = frame(16, 16, 7);
    assert_eq!(
        forward_demosaick(&p, &f, BnMode::Eval).unwrap(),
        forward_demosaick(&q, &f, BnMode::Eval).unwrap()
    );
}

#[test]
fn shifting_by_a_cfa_period_shifts_the_output() {
    let p = NetParams::init(&NetSpec::demosaick().with_size(2, 8), 8).unwrap();
    let rgb = synth::natural_scene(40, 40, 9);
    let a = mosaic(&rgb.crop(0, 0, 36, 36).unwrap(), CfaPattern::Rggb).unwrap();
    let b = mosaic(&rgb.crop(2, 2, 36, 36).unwrap(), CfaPattern::Rggb).unwrap();
    let oa = forward_demosaick(&p, &a, BnMode::Eval).unwrap();
    let ob = forward_demosaick(&p, &b, BnMode::Eval).unwrap();
    // Receptive field of two half-res layers plus the full-res pair.
    let border = 10;
    for c in 0..3 {
        for y in border..36 - border {
            for x in border..36 - border {
                let d = oa.get(c, y, x) - ob.get(c, y - 2, x - 2);
                assert!(d.abs() < 1e-5, "({c},{y},{x}) differs by {d}");
            }
        }
    }
}

#[test]
fn running_stats_follow_momentum() {
    let mut p = NetParams::init(&NetSpec::denoise().with_size(3, 2), 0).unwrap();
    p.update_running(0, &[1.0, 2.0], &[0.5, 0.5], 2);
    let r = &p.running()[0];
    assert!((r.mean[0] - 0.1).abs() < 1e-7 && (r.mean[1] - 0.2).abs() < 1e-7);
    assert!((r.var[0] - (0.9 + 0.1)).abs() < 1e-6);
}
