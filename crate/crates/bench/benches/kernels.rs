use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use m2m::autodiff::Tensor;
use m2m::imaging::{demosaic_bilinear, mosaic, synth};
use m2m::network::forward_demosaick;
use m2m::registration::estimate_affine_bayer;
use m2m::train::{simulate_burst, MotionSpec};
use m2m::{BnMode, CfaPattern, Graph, NetParams, NetSpec, NoiseSpec, RegistrationConfig};

fn conv3x3(c: &mut Criterion) {
    let x = Tensor::<f32>::full([4, 16, 64, 64], 0.5);
    let w = Tensor::<f32>::full([16, 16, 3, 3], 0.01);
    let b = Tensor::<f32>::zeros([1, 16, 1, 1]);
    c.bench_function("conv3x3 forward+backward 4x16x64x64", |bench| {
        bench.iter(|| {
            let mut g = Graph::<f32>::new();
            let (x, w, b) = (g.input(x.clone()), g.param(w.clone()), g.param(b.clone()));
            let y = g.conv3x3(x, w, b).unwrap();
            let s = g.sum(y);
            black_box(g.backward(s).unwrap());
        })
    });
}

fn demosaicking(c: &mut Criterion) {
    let frame = mosaic(&synth::natural_scene(256, 256, 1), CfaPattern::Rggb).unwrap();
    c.bench_function("bilinear demosaic 256x256", |bench| {
        bench.iter(|| black_box(demosaic_bilinear(black_box(&frame))))
    });
    let params = NetParams::init(&NetSpec::demosaick().with_size(4, 32), 0).unwrap();
    c.bench_function("network forward 256x256 (4x32)", |bench| {
        bench.iter(|| black_box(forward_demosaick(&params, &frame, BnMode::Eval).unwrap()))
    });
}

fn registration(c: &mut Criterion) {
    let burst = simulate_burst(
        &synth::natural_scene(224, 224, 2),
        2,
        &MotionSpec::default(),
        &NoiseSpec::new(5.0, false, 3),
        CfaPattern::Rggb,
        4,
    )
    .unwrap();
    let cfg = RegistrationConfig::default();
    c.bench_function("estimate_affine_bayer 224 scene", |bench| {
        bench.iter(|| black_box(estimate_affine_bayer(&burst.frames[1], &burst.frames[0], &cfg).unwrap()))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = conv3x3, demosaicking, registration
}
criterion_main!(benches);
