use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn random(shape: [usize; 4], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Squared distance to a random target, so non-scalar ops see a generic
/// upstream gradient rather than all ones.
fn project(g: &mut Graph<f64>, x: Var, seed: u64) -> Var {
    let target = random(g.shape(x), seed);
    let mask = Tensor::full(g.shape(x), 1.0);
    g.masked_loss(x, &target, &mask, 2).expect("shapes agree")
}

const TOL: f64 = 1e-4;

#[test]
fn conv_identity_kernel() {
    let mut g = Graph::<f64>::new();
    let x = random([1, 1, 5, 6], 1);
    let mut k = Tensor::zeros([1, 1, 3, 3]);
    k.data_mut()[4] = 1.0;
    let xv = g.input(x.clone());
    let w = g.input(k);
    let b = g.input(Tensor::zeros([1, 1, 1, 1]));
    let y = g.conv3x3(xv, w, b).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn conv_constant_interior() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::full([1, 2, 6, 6], 0.5));
    let wt = random([3, 2, 3, 3], 2);
    let bt = random([1, 3, 1, 1], 3);
    let w = g.input(wt.clone());
    let b = g.input(bt.clone());
    let y = g.conv3x3(x, w, b).unwrap();
    for oc in 0..3 {
        let s: f64 = wt.data()[oc * 18..(oc + 1) * 18].iter().sum();
        let expect = s * 0.5 + bt.data()[oc];
        let plane = g.value(y).plane(0, oc);
        for yy in 1..5 {
            for xx in 1..5 {
                assert!((plane[yy * 6 + xx] - expect).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn conv_channel_mismatch_is_shape_error() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::zeros([1, 2, 4, 4]));
    let w = g.input(Tensor::zeros([1, 3, 3, 3]));
    let b = g.input(Tensor::zeros([1, 1, 1, 1]));
    assert!(matches!(g.conv3x3(x, w, b), Err(Error::Shape(_))));
}

#[test]
fn conv_gradients_match_finite_differences() {
    let inputs = [random([2, 3, 8, 8], 4), random([2, 3, 3, 3], 5), random([1, 2, 1, 1], 6)];
    let r = grad_check(
        |g, v| {
            let y = g.conv3x3(v[0], v[1], v[2])?;
            Ok(project(g, y, 7))
        },
        &inputs,
        Probe::All,
    )
    .unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn batch_norm_train_output_is_standardized() {
    let mut g = Graph::<f64>::new();
    let x = g.input(random([3, 2, 5, 4], 8));
    let gamma = g.input(Tensor::full([1, 2, 1, 1], 1.0));
    let beta = g.input(Tensor::zeros([1, 2, 1, 1]));
    let y = g.batch_norm(x, gamma, beta, BnMode::Train, None, 0.0).unwrap();
    let v = g.value(y);
    for c in 0..2 {
        let vals: Vec<f64> = (0..3).flat_map(|b| v.plane(b, c).to_vec()).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-5);
    }
    let (m, var, count) = g.batch_statistics(y).unwrap();
    assert_eq!((m.len(), var.len(), count), (2, 2, 60));
}

#[test]
fn batch_norm_eval_identity() {
    let mut g = Graph::<f64>::new();
    let xt = random([1, 2, 3, 3], 9);
    let x = g.input(xt.clone());
    let gamma = g.input(Tensor::full([1, 2, 1, 1], 1.0));
    let beta = g.input(Tensor::zeros([1, 2, 1, 1]));
    let (m, v) = (vec![0.0; 2], vec![1.0; 2]);
    let y = g
        .batch_norm(x, gamma, beta, BnMode::Eval, Some((&m, &v)), 1e-5)
        .unwrap();
    for (a, b) in g.value(y).data().iter().zip(xt.data()) {
        assert!((a - b).abs() < 1e-5);
    }
}

#[test]
fn batch_norm_empty_batch_is_shape_error() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::zeros([0, 2, 3, 3]));
    let gamma = g.input(Tensor::full([1, 2, 1, 1], 1.0));
    let beta = g.input(Tensor::zeros([1, 2, 1, 1]));
    assert!(matches!(
        g.batch_norm(x, gamma, beta, BnMode::Train, None, 1e-5),
        Err(Error::Shape(_))
    ));
}

#[test]
fn batch_norm_gradients_match_finite_differences() {
    for mode in [BnMode::Train, BnMode::Eval] {
        let inputs = [random([2, 3, 4, 4], 10), random([1, 3, 1, 1], 11), random([1, 3, 1, 1], 12)];
        let (m, v) = (vec![0.1, -0.2, 0.05], vec![0.5, 1.5, 0.9]);
        let r = grad_check(
            |g, vars| {
                let y = g.batch_norm(vars[0], vars[1], vars[2], mode, Some((&m, &v)), 1e-5)?;
                Ok(project(g, y, 13))
            },
            &inputs,
            Probe::All,
        )
        .unwrap();
        assert!(r.max_rel_error < TOL, "{mode:?}: {r:?}");
    }
}

#[test]
fn relu_and_add_gradients() {
    // Keep inputs away from the kink so central differences are valid.
    let mut x = random([1, 2, 4, 4], 14);
    x.data_mut().iter_mut().for_each(|v| {
        if v.abs() < 0.05 {
            *v += 0.1
        }
    });
    let y = random([1, 2, 4, 4], 15);
    let r = grad_check(
        |g, v| {
            let a = g.relu(v[0]);
            let s = g.add(a, v[1])?;
            Ok(project(g, s, 16))
        },
        &[x, y],
        Probe::All,
    )
    .unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn relu_of_negated_nonnegatives_is_zero() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::from_vec([1, 1, 1, 4], vec![-0.0, -1.0, -2.5, -1e-9]).unwrap());
    let y = g.relu(x);
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn depth_to_space_shape_and_gradient() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::zeros([1, 12, 5, 7]));
    let y = g.depth_to_space(x, 2).unwrap();
    assert_eq!(g.shape(y), [1, 3, 10, 14]);
    assert!(g.depth_to_space(x, 4).is_err());

    let r = grad_check(
        |g, v| {
            let y = g.depth_to_space(v[0], 2)?;
            Ok(project(g, y, 17))
        },
        &[random([2, 8, 3, 2], 18)],
        Probe::All,
    )
    .unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
}

#[test]
fn depth_to_space_follows_pixel_shuffle_layout() {
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::from_vec([1, 4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let y = g.depth_to_space(x, 2).unwrap();
    assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    let x = g.input(random([2, 8, 3, 5], 19));
    let y = g.depth_to_space(x, 2).unwrap();
    let z = g.space_to_depth(y, 2).unwrap();
    assert_eq!(g.value(z), g.value(x));
}

#[test]
fn masked_loss_scalar_cases() {
    let mut g = Graph::<f64>::new();
    let p = g.param(Tensor::scalar(0.5));
    let l = g
        .masked_loss(p, &Tensor::scalar(0.2), &Tensor::scalar(1.0), 1)
        .unwrap();
    assert!((g.value(l).item() - 0.3).abs() < 1e-12);
    let grads = g.backward(l).unwrap();
    assert_eq!(grads.get(p).unwrap().item(), 1.0);

    let mut g = Graph::<f64>::new();
    let t = random([1, 3, 4, 4], 20);
    let p = g.param(t.clone());
    let l = g.masked_loss(p, &t, &Tensor::full(t.shape(), 1.0), 1).unwrap();
    assert_eq!(g.value(l).item(), 0.0);
    assert!(g.backward(l).unwrap().get(p).unwrap().data().iter().all(|&v| v == 0.0));

    let mut g = Graph::<f64>::new();
    let p = g.param(Tensor::scalar(0.5));
    assert!(matches!(
        g.masked_loss(p, &Tensor::scalar(0.0), &Tensor::scalar(0.0), 2),
        Err(Error::DegenerateLoss)
    ));
}

#[test]
fn masked_loss_gradients() {
    let shape = [2, 3, 4, 4];
    let target = random(shape, 21);
    let mut mask = Tensor::zeros(shape);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    mask.data_mut()
        .iter_mut()
        .for_each(|m| *m = if rng.random_bool(0.6) { 1.0 } else { 0.0 });
    for p in [1u8, 2] {
        let mut pred = random(shape, 23);
        // Avoid |pred − target| near zero where ℓ1 has its kink.
        for (a, &b) in pred.data_mut().iter_mut().zip(target.data()) {
            if (*a - b).abs() < 0.05 {
                *a += 0.1;
            }
        }
        let r = grad_check(
            |g, v| g.masked_loss(v[0], &target, &mask, p),
            &[pred],
            Probe::All,
        )
        .unwrap();
        assert!(r.max_rel_error < TOL, "p={p}: {r:?}");
    }
}

#[test]
fn diamond_accumulates_fan_out() {
    let mut g = Graph::<f64>::new();
    let x = g.param(random([1, 1, 2, 2], 24));
    let a = g.relu(x);
    let s = g.add(x, x).unwrap();
    let t = g.add(s, a).unwrap();
    let d = g.sub(t, a).unwrap();
    let l = g.sum(d);
    let grads = g.backward(l).unwrap();
    assert!(grads.get(x).unwrap().data().iter().all(|&v| (v - 2.0).abs() < 1e-15));
}

#[test]
fn resample_gradient_and_batching() {
    // Each output pixel averages two neighbours of a 3×3 input.
    let mut index = Vec::new();
    let mut weight = Vec::new();
    for o in 0..4u32 {
        index.extend([o, o + 1]);
        weight.extend([0.25, 0.75]);
    }
    let m = Arc::new(ResampleMap {
        in_height: 3,
        in_width: 3,
        out_height: 2,
        out_width: 2,
        taps: 2,
        index,
        weight,
    });
    let r = grad_check(
        |g, v| {
            let y = g.resample(v[0], &[m.clone(), m.clone()])?;
            Ok(project(g, y, 25))
        },
        &[random([2, 2, 3, 3], 26)],
        Probe::All,
    )
    .unwrap();
    assert!(r.max_rel_error < TOL, "{r:?}");
    let mut g = Graph::<f64>::new();
    let x = g.input(Tensor::zeros([3, 1, 3, 3]));
    assert!(g.resample(x, &[m.clone(), m]).is_err());
}

#[test]
fn f32_and_f64_graphs_agree() {
    let x = random([1, 2, 5, 5], 27);
    let w = random([2, 2, 3, 3], 28);
    let b = random([1, 2, 1, 1], 29);
    let run64 = {
        let mut g = Graph::<f64>::new();
        let (x, w, b) = (g.input(x.clone()), g.input(w.clone()), g.input(b.clone()));
        let y = g.conv3x3(x, w, b).unwrap();
        g.value(y).clone()
    };
    let run32 = {
        let mut g = Graph::<f32>::new();
        let (x, w, b) = (g.input(x.cast()), g.input(w.cast()), g.input(b.cast()));
        let y = g.conv3x3(x, w, b).unwrap();
        g.value(y).clone()
    };
    for (a, b) in run64.data().iter().zip(run32.data()) {
        assert!((a - *b as f64).abs() < 1e-5);
    }
}
