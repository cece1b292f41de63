use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops;
use super::{check_gradients, Array, CdfModel, CheckConfig, Eager, Executor, Tape};

fn rand_arr(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array {
    Array::from_fn(shape, |_| rng.gen_range(lo..hi))
}

fn dot(a: &Array, b: &Array) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

#[test]
fn leaky_rectify_definition() {
    let x = Array::from_vec(&[1, 1, 2], vec![-1.0, 2.0]).unwrap();
    let y = ops::leaky_relu(&x, 0.1);
    assert_eq!(y.data(), &[-0.1, 2.0]);
}

#[test]
fn add_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = rand_arr(&[3, 4, 4], -1.0, 1.0, &mut rng);
    let z = Array::zeros(a.shape());
    assert_eq!(ops::add(&a, &z).unwrap(), a);
}

#[test]
fn conv2d_all_ones_hand_sum() {
    // 3x3 all-ones kernel over 5x5 all-ones input, stride 1, pad 1:
    // interior taps count 9, edges 6, corners 4.
    let x = Array::full(&[1, 5, 5], 1.0);
    let k = Array::full(&[1, 1, 3, 3], 1.0);
    let b = Array::zeros(&[1]);
    let y = ops::conv2d(&x, &k, &b, 1, 1).unwrap();
    assert_eq!(y.shape(), &[1, 5, 5]);
    assert_eq!(y.get3(0, 2, 2), 9.0);
    assert_eq!(y.get3(0, 0, 2), 6.0);
    assert_eq!(y.get3(0, 0, 0), 4.0);
}

#[test]
fn conv2d_shape_errors_name_extents() {
    let x = Array::zeros(&[2, 4, 4]);
    let k = Array::zeros(&[3, 5, 3, 3]); // wrong in-channels
    let b = Array::zeros(&[3]);
    let err = ops::conv2d(&x, &k, &b, 1, 1).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("conv2d"), "{msg}");
    assert!(msg.contains('5') && msg.contains('2'), "{msg}");
}

#[test]
fn deconv_is_adjoint_of_strided_conv() {
    // <conv(x), g> == <x, deconv(g)> for matching kernels: validates both
    // kernels against each other.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (ci, co, h, w) = (3, 2, 4, 6);
    let x = rand_arr(&[ci, 2 * h, 2 * w], -1.0, 1.0, &mut rng);
    let k = rand_arr(&[co, ci, 3, 3], -1.0, 1.0, &mut rng);
    let g = rand_arr(&[co, h, w], -1.0, 1.0, &mut rng);
    let zero_co = Array::zeros(&[co]);
    let zero_ci = Array::zeros(&[ci]);
    let cx = ops::conv2d(&x, &k, &zero_co, 2, 1).unwrap();
    assert_eq!(cx.shape(), &[co, h, w]);
    let dg = ops::deconv2d(&g, &k, &zero_ci).unwrap();
    assert_eq!(dg.shape(), &[ci, 2 * h, 2 * w]);
    assert_relative_eq!(dot(&cx, &g), dot(&x, &dg), max_relative = 1e-12);
}

#[test]
fn backward_sum_is_all_ones() {
    let mut tape = Tape::new();
    let x = tape.leaf(Array::from_fn(&[2, 3, 3], |i| i as f64));
    let loss = tape.sum(x).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.wrt(x).unwrap(), &Array::full(&[2, 3, 3], 1.0));
}

#[test]
fn backward_disconnected_leaf_gets_zeros() {
    let mut tape = Tape::new();
    let x = tape.leaf(Array::scalar(3.0));
    let y = tape.leaf(Array::from_vec(&[1, 2, 2], vec![1.0; 4]).unwrap());
    let loss = tape.sum(x).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.wrt(y).unwrap(), &Array::zeros(&[1, 2, 2]));
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut tape = Tape::new();
    let x = tape.leaf(Array::zeros(&[1, 2, 2]));
    let y = tape.scale(x, 2.0).unwrap();
    assert!(matches!(
        tape.backward(y),
        Err(crate::Error::NonScalarLoss { .. })
    ));
}

#[test]
fn backward_conv_mse_matches_finite_differences() {
    // loss = mean((conv(x,k) - t)^2) on a 4x4 input; rel err < 1e-5 at h=1e-6.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_arr(&[1, 4, 4], -1.0, 1.0, &mut rng);
    let k = rand_arr(&[2, 1, 3, 3], -0.7, 0.7, &mut rng);
    let t = rand_arr(&[2, 4, 4], -1.0, 1.0, &mut rng);
    let report = check_gradients(
        &[x, k],
        |tape, leaves| {
            let b = tape.constant(Array::zeros(&[2]));
            let tgt = tape.constant(t.clone());
            let y = tape.conv2d(leaves[0], leaves[1], b, 1, 1)?;
            let d = tape.sub(y, tgt)?;
            let sq = tape.mul(d, d)?;
            tape.mean(sq)
        },
        &CheckConfig {
            tolerance: 1e-5,
            ..CheckConfig::default()
        },
    )
    .unwrap();
    assert!(report.pass, "max rel err {}", report.max_rel_err);
}

#[test]
fn check_gradients_identity_and_fanout_exact() {
    // loss = x (one element): gradient exactly 1.
    let mut tape = Tape::new();
    let x = tape.leaf(Array::scalar(0.37));
    let loss = tape.sum(x).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.wrt(x).unwrap().data(), &[1.0]);

    // loss = x + x: additive accumulation gives exactly 2.
    let mut tape = Tape::new();
    let x = tape.leaf(Array::scalar(-1.25));
    let s = tape.add(x, x).unwrap();
    let loss = tape.sum(s).unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.wrt(x).unwrap().data(), &[2.0]);
}

#[test]
fn warp_then_mse_gradcheck_seed0() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let src = rand_arr(&[2, 6, 6], 0.0, 1.0, &mut rng);
    // keep sample points interior and off integer coordinates
    let flow = rand_arr(&[2, 6, 6], -1.3, 1.3, &mut rng).map(|v| v + 0.13);
    let tgt = rand_arr(&[2, 6, 6], 0.0, 1.0, &mut rng);
    let report = check_gradients(
        &[src, flow],
        |tape, leaves| {
            let t = tape.constant(tgt.clone());
            let w = tape.warp(leaves[0], leaves[1])?;
            let d = tape.sub(w, t)?;
            let sq = tape.mul(d, d)?;
            tape.mean(sq)
        },
        &CheckConfig::default(),
    )
    .unwrap();
    assert!(report.pass, "max rel err {}", report.max_rel_err);
}

#[test]
fn every_primitive_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let cfg = CheckConfig::default();

    // conv stride 2 (5x5 kernel) + leaky + mean
    let x = rand_arr(&[2, 8, 8], -1.0, 1.0, &mut rng);
    let k = rand_arr(&[3, 2, 5, 5], -0.4, 0.4, &mut rng);
    let b = rand_arr(&[3], -0.2, 0.2, &mut rng);
    let r = check_gradients(
        &[x, k, b],
        |t, l| {
            let y = t.conv2d(l[0], l[1], l[2], 2, 2)?;
            let y = t.leaky_relu(y, 0.1)?;
            t.mean(y)
        },
        &cfg,
    )
    .unwrap();
    assert!(r.pass, "conv s2: {}", r.max_rel_err);

    // deconv
    let x = rand_arr(&[2, 4, 4], -1.0, 1.0, &mut rng);
    let k = rand_arr(&[2, 3, 3, 3], -0.4, 0.4, &mut rng);
    let b = rand_arr(&[3], -0.2, 0.2, &mut rng);
    let r = check_gradients(
        &[x, k, b],
        |t, l| {
            let y = t.deconv2d(l[0], l[1], l[2])?;
            let sq = t.mul(y, y)?;
            t.mean(sq)
        },
        &cfg,
    )
    .unwrap();
    assert!(r.pass, "deconv: {}", r.max_rel_err);

    // add/sub/mul/scale/concat/sqrt chain
    let a = rand_arr(&[2, 4, 4], 0.2, 1.5, &mut rng);
    let c = rand_arr(&[2, 4, 4], 0.2, 1.5, &mut rng);
    let r = check_gradients(
        &[a, c],
        |t, l| {
            let s = t.add(l[0], l[1])?;
            let d = t.sub(l[0], l[1])?;
            let m = t.mul(s, l[1])?;
            let sc = t.scale(m, 0.37)?;
            let cat = t.concat(&[sc, d])?;
            let q = t.mul(cat, cat)?;
            let root = t.sqrt(q)?; // |values| bounded away from 0
            t.mean(root)
        },
        &cfg,
    )
    .unwrap();
    assert!(r.pass, "elementwise chain: {}", r.max_rel_err);

    // upsample2x / avgpool2
    let x = rand_arr(&[2, 6, 6], -1.0, 1.0, &mut rng);
    let r = check_gradients(
        &[x],
        |t, l| {
            let up = t.upsample2x(l[0])?;
            let down = t.avgpool2(up)?;
            let sq = t.mul(down, down)?;
            t.sum(sq)
        },
        &cfg,
    )
    .unwrap();
    assert!(r.pass, "resample: {}", r.max_rel_err);

    // interval NLL, Gaussian full-shape params
    let v = rand_arr(&[2, 4, 4], -2.0, 2.0, &mut rng);
    let loc = rand_arr(&[2, 4, 4], -1.0, 1.0, &mut rng);
    let raw = rand_arr(&[2, 4, 4], -1.0, 1.5, &mut rng);
    let r = check_gradients(
        &[v, loc, raw],
        |t, l| {
            let bits = t.interval_nll(l[0], l[1], l[2], CdfModel::Gaussian)?;
            t.sum(bits)
        },
        &cfg,
    )
    .unwrap();
    assert!(r.pass, "nll gaussian: {}", r.max_rel_err);

    // interval NLL, logistic channelwise params
    let v = rand_arr(&[3, 4, 4], -2.0, 2.0, &mut rng);
    let loc = rand_arr(&[3], -0.5, 0.5, &mut rng);
    let raw = rand_arr(&[3], -0.5, 1.0, &mut rng);
    let r = check_gradients(
        &[v, loc, raw],
        |t, l| {
            let bits = t.interval_nll(l[0], l[1], l[2], CdfModel::Logistic)?;
            t.sum(bits)
        },
        &cfg,
    )
    .unwrap();
    assert!(r.pass, "nll logistic: {}", r.max_rel_err);
}

#[test]
fn noise_is_constant_in_backward() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_arr(&[1, 4, 4], -1.0, 1.0, &mut rng);
    let noise = rand_arr(&[1, 4, 4], -0.5, 0.5, &mut rng);
    let mut tape = Tape::new();
    let xl = tape.leaf(x.clone());
    let noised = tape.add_noise(xl, noise).unwrap();
    let sq = tape.mul(noised, noised).unwrap();
    let loss = tape.sum(sq).unwrap();
    let g1 = tape.backward(loss).unwrap();
    // gradient of sum((x+u)^2) w.r.t x is 2(x+u): the noise shifts the value
    // but contributes no gradient term of its own
    let noised_vals = tape.value(noised).clone();
    let expect = ops::scale(&noised_vals, 2.0);
    assert_eq!(g1.wrt(xl).unwrap(), &expect);

    // repeated backward on the same tape is bit-identical
    let g2 = tape.backward(loss).unwrap();
    assert_eq!(g1.wrt(xl).unwrap(), g2.wrt(xl).unwrap());
}

#[test]
fn eager_matches_tape_values_bit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = rand_arr(&[2, 8, 8], -1.0, 1.0, &mut rng);
    let k = rand_arr(&[4, 2, 5, 5], -0.3, 0.3, &mut rng);
    let b = rand_arr(&[4], -0.1, 0.1, &mut rng);

    let mut tape = Tape::new();
    let (tx, tk, tb) = (tape.leaf(x.clone()), tape.leaf(k.clone()), tape.leaf(b.clone()));
    let ty = tape.conv2d(tx, tk, tb, 2, 2).unwrap();
    let ty = tape.leaky_relu(ty, 0.1).unwrap();
    let tm = tape.mean(ty).unwrap();

    let mut ea = Eager::new();
    let (ex, ek, eb) = (ea.constant(x), ea.constant(k), ea.constant(b));
    let ey = ea.conv2d(ex, ek, eb, 2, 2).unwrap();
    let ey = ea.leaky_relu(ey, 0.1).unwrap();
    let em = ea.mean(ey).unwrap();

    assert_eq!(tape.value(ty), ea.value(ey));
    assert_eq!(tape.value(tm).item(), ea.value(em).item());
}

#[test]
fn all_forward_values_finite_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..5 {
        let x = rand_arr(&[2, 8, 8], -2.0, 2.0, &mut rng);
        let k = rand_arr(&[2, 2, 3, 3], -1.0, 1.0, &mut rng);
        let b = rand_arr(&[2], -1.0, 1.0, &mut rng);
        let flow = rand_arr(&[2, 8, 8], -4.0, 4.0, &mut rng);
        let mut t = Tape::new();
        let (lx, lk, lb) = (t.leaf(x), t.leaf(k), t.leaf(b));
        let lf = t.constant(flow);
        let y = t.conv2d(lx, lk, lb, 1, 1).unwrap();
        let y = t.leaky_relu(y, 0.1).unwrap();
        let w = t.warp(y, lf).unwrap();
        let u = t.upsample2x(w).unwrap();
        let d = t.avgpool2(u).unwrap();
        let m = t.mean(d).unwrap();
        assert!(t.value(y).all_finite());
        assert!(t.value(w).all_finite());
        assert!(t.value(d).all_finite());
        assert!(t.value(m).all_finite());
    }
}

#[test]
fn interval_nll_floors_probability() {
    // value far in the tail: mass below 2^-16 floors at 16 bits and counts
    let v = Array::from_vec(&[1, 1, 1], vec![500.0]).unwrap();
    let loc = Array::zeros(&[1, 1, 1]);
    let raw = Array::zeros(&[1, 1, 1]);
    let (bits, floored) = ops::interval_nll(&v, &loc, &raw, CdfModel::Gaussian).unwrap();
    assert_eq!(floored, 1);
    assert_relative_eq!(bits.data()[0], 16.0, max_relative = 1e-12);
}
