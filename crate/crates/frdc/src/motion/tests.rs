use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::grad::{Executor, Tape};
use crate::nn::{OptimizerKind, ParamSet};

fn rand_frame(c: usize, h: usize, w: usize, seed: u64) -> Frame {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Frame::from_array(Array::from_fn(&[c, h, w], |_| rng.gen_range(0.0..1.0))).unwrap()
}

fn const_flow(h: usize, w: usize, vi: f64, vj: f64) -> FlowField {
    let mut a = Array::zeros(&[2, h, w]);
    for y in 0..h {
        for x in 0..w {
            a.set3(0, y, x, vi);
            a.set3(1, y, x, vj);
        }
    }
    FlowField::from_array(a).unwrap()
}

#[test]
fn warp_zero_flow_is_identity() {
    let f = rand_frame(2, 6, 8, 3);
    let out = warp(&f, &FlowField::zeros(6, 8)).unwrap();
    assert_eq!(out.array(), f.array());
}

#[test]
fn warp_integer_shift_matches_column_shift() {
    // reference shifted one column left of target; flow (1,0) recovers it
    let reference = rand_frame(1, 5, 7, 9);
    let out = warp(&reference, &const_flow(5, 7, 1.0, 0.0)).unwrap();
    for y in 0..5 {
        for x in 0..6 {
            // interior: out(x) == reference(x+1), exact equality
            assert_eq!(out.array().get3(0, y, x), reference.array().get3(0, y, x + 1));
        }
    }
}

#[test]
fn warp_half_pixel_hand_interpolation() {
    // reference row 0,2,4,...: sampling at x+0.5 gives odd values; col 0 -> 1
    let w = 6;
    let a = Array::from_fn(&[1, 1, w], |i| (2 * i) as f64);
    let reference = Frame::from_array(a).unwrap();
    let out = warp(&reference, &const_flow(1, w, 0.5, 0.0)).unwrap();
    assert_eq!(out.array().get3(0, 0, 0), 1.0);
    assert_eq!(out.array().get3(0, 0, 2), 5.0);
}

#[test]
fn warp_rejects_dimension_mismatch() {
    let f = rand_frame(1, 4, 4, 1);
    let flow = FlowField::zeros(4, 6);
    assert!(warp(&f, &flow).is_err());
}

#[test]
fn warp_exact_for_integer_flows_in_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let f = rand_frame(2, 8, 8, 5);
    for _ in 0..20 {
        let vi = rng.gen_range(-3i32..=3) as f64;
        let vj = rng.gen_range(-3i32..=3) as f64;
        let out = warp(&f, &const_flow(8, 8, vi, vj)).unwrap();
        for y in 0..8usize {
            for x in 0..8usize {
                let sx = x as i64 + vi as i64;
                let sy = y as i64 + vj as i64;
                if sx >= 0 && sx < 8 && sy >= 0 && sy < 8 {
                    for c in 0..2 {
                        assert_eq!(
                            out.array().get3(c, y, x),
                            f.array().get3(c, sy as usize, sx as usize)
                        );
                    }
                }
            }
        }
    }
}

#[test]
fn epe_hand_values() {
    let zero = FlowField::zeros(4, 4);
    assert_eq!(epe(&zero, &zero).unwrap(), 0.0);

    // 3-4-5 everywhere
    let f = const_flow(4, 4, 3.0, 4.0);
    assert_relative_eq!(epe(&f, &zero).unwrap(), 5.0, max_relative = 1e-12);
    // symmetry
    assert_eq!(epe(&f, &zero).unwrap(), epe(&zero, &f).unwrap());

    // half the pixels at error 5, half at 0 -> mean 2.5
    let mut a = Array::zeros(&[2, 2, 2]);
    a.set3(0, 0, 0, 3.0);
    a.set3(1, 0, 0, 4.0);
    a.set3(0, 0, 1, 3.0);
    a.set3(1, 0, 1, 4.0);
    let half = FlowField::from_array(a).unwrap();
    assert_relative_eq!(epe(&half, &FlowField::zeros(2, 2)).unwrap(), 2.5, max_relative = 1e-12);
}

#[test]
fn me_loss_hand_value_and_zero_case() {
    // constant reference, current offset by 0.1 -> warp-MSE exactly 0.01;
    // flow offset (3,4) from label -> EPE 5; lambda 100 -> loss 6.0
    let h = 4;
    let reference = Frame::from_array(Array::full(&[1, h, h], 0.4)).unwrap();
    let current = Frame::from_array(Array::full(&[1, h, h], 0.5)).unwrap();
    let label = FlowField::zeros(h, h);
    let flow = const_flow(h, h, 3.0, 4.0);
    let loss = me_loss(&current, &reference, &flow, &label, 100.0).unwrap();
    assert!((loss - 6.0).abs() < 1e-9, "{loss}");

    // flow equals label and warp reproduces current exactly -> 0
    let loss0 = me_loss(&reference, &reference, &label, &label, 100.0).unwrap();
    assert_eq!(loss0, 0.0);

    // default trade-off weight
    assert_eq!(FinetuneConfig::default().lambda_me, 100.0);
}

#[test]
fn densify_hand_cases() {
    // 1x1 grid (16,0), stride 4, precision 16 -> 4x4 flow all (1,0)
    let g = MvLabelGrid::new(4, 4, 4, 16, String::new(), vec![(16, 0)]).unwrap();
    let f = densify_labels(&g);
    for y in 0..4 {
        for x in 0..4 {
            assert_eq!(f.at(y, x), (1.0, 0.0));
        }
    }

    // all-zero grid -> all-zero flow
    let g = MvLabelGrid::new(6, 4, 2, 16, String::new(), vec![(0, 0); 6]).unwrap();
    assert_eq!(densify_labels(&g).array(), FlowField::zeros(4, 6).array());

    // 2x1 grid [(16,0), (-32,16)], stride 2, precision 16
    let g = MvLabelGrid::new(4, 2, 2, 16, String::new(), vec![(16, 0), (-32, 16)]).unwrap();
    let f = densify_labels(&g);
    for y in 0..2 {
        for x in 0..2 {
            assert_eq!(f.at(y, x), (1.0, 0.0));
            assert_eq!(f.at(y, x + 2), (-2.0, 1.0));
        }
    }
}

#[test]
fn densify_then_subsample_recovers_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (fw, fh, s, p) = (12, 8, 4, 16);
    let cells: Vec<(i16, i16)> = (0..(fw / s) * (fh / s))
        .map(|_| (rng.gen_range(-64..64), rng.gen_range(-64..64)))
        .collect();
    let g = MvLabelGrid::new(fw, fh, s, p, String::new(), cells.clone()).unwrap();
    let f = densify_labels(&g);
    for gy in 0..fh / s {
        for gx in 0..fw / s {
            let (vi, vj) = f.at(gy * s, gx * s);
            assert_eq!((vi * p as f64).round() as i16, cells[gy * (fw / s) + gx].0);
            assert_eq!((vj * p as f64).round() as i16, cells[gy * (fw / s) + gx].1);
        }
    }
}

#[test]
fn estimate_flow_shape_zero_init_and_determinism() {
    let params = FlowNetParams::init(1, 3, 0);
    let cur = rand_frame(1, 64, 64, 100);
    let rf = rand_frame(1, 64, 64, 101);
    let flow = estimate_flow(&cur, &rf, &params).unwrap();
    assert_eq!((flow.height(), flow.width()), (64, 64));
    // zero-initialized residual heads -> identically zero flow
    assert_eq!(flow.array(), FlowField::zeros(64, 64).array());

    // determinism with trained-looking weights
    let mut p2 = params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (_, a) in p2.entries_mut() {
        for v in a.data_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
    let f1 = estimate_flow(&cur, &rf, &p2).unwrap();
    let f2 = estimate_flow(&cur, &rf, &p2).unwrap();
    assert_eq!(f1.array(), f2.array());
}

#[test]
fn estimate_flow_rejects_indivisible_extents() {
    let params = FlowNetParams::init(1, 3, 0);
    let cur = rand_frame(1, 6, 6, 1);
    let rf = rand_frame(1, 6, 6, 2);
    let err = estimate_flow(&cur, &rf, &params).unwrap_err();
    assert!(err.to_string().contains("divisible by 4"), "{err}");
}

fn tiny_dataset(n: usize, h: usize, w: usize) -> Vec<(Frame, Frame, MvLabelGrid)> {
    // constant translation (1,0): current = reference shifted, labels exact
    let mut out = Vec::new();
    for i in 0..n {
        let master = rand_frame(1, h, w + 4, 40 + i as u64);
        let mut rf = Array::zeros(&[1, h, w]);
        let mut cur = Array::zeros(&[1, h, w]);
        for y in 0..h {
            for x in 0..w {
                rf.set3(0, y, x, master.array().get3(0, y, x + 1));
                cur.set3(0, y, x, master.array().get3(0, y, x));
            }
        }
        let cells = vec![(16, 0); (w / 4) * (h / 4)];
        let grid = MvLabelGrid::new(w, h, 4, 16, String::new(), cells).unwrap();
        out.push((
            Frame::from_array(cur).unwrap(),
            Frame::from_array(rf).unwrap(),
            grid,
        ));
    }
    out
}

#[test]
fn finetune_zero_lr_leaves_params_bit_exact() {
    let params = FlowNetParams::init(1, 3, 1);
    let data = tiny_dataset(1, 16, 16);
    let cfg = FinetuneConfig {
        iters: 3,
        batch_size: 1,
        lr: 0.0,
        ..FinetuneConfig::default()
    };
    let (out, _) = finetune_flow(&params, &data, &cfg).unwrap();
    assert_eq!(out, params);
}

#[test]
fn finetune_single_plain_step_matches_manual_gradient() {
    let params = FlowNetParams::init(1, 3, 2);
    let data = tiny_dataset(1, 16, 16);
    let lr = 0.01;
    let cfg = FinetuneConfig {
        iters: 1,
        batch_size: 1,
        lr,
        optimizer: OptimizerKind::Plain,
        seed: 4,
        ..FinetuneConfig::default()
    };
    let (stepped, _) = finetune_flow(&params, &data, &cfg).unwrap();

    // Manual replication of the single step.
    let mut tape = Tape::new();
    let mut ids = Vec::new();
    let h = params.bind(&mut tape, |t, a| {
        let id = t.leaf(a.clone());
        ids.push(id);
        id
    });
    let (cur, rf, grid) = &data[0];
    let c = tape.constant(cur.array().clone());
    let r = tape.constant(rf.array().clone());
    let l = tape.constant(densify_labels(grid).array().clone());
    let flow = flow_net(&mut tape, &h, c, r).unwrap();
    let item = super::finetune::me_loss_taped(&mut tape, flow, l, c, r, 100.0).unwrap();
    let loss = tape.scale(item, 1.0).unwrap();
    let grads = tape.backward(loss).unwrap();

    let mut expect = params.clone();
    for (id, (_, p)) in ids.iter().zip(expect.entries_mut()) {
        p.add_scaled_assign(grads.wrt(*id).unwrap(), -lr);
    }
    assert_eq!(stepped, expect);
}

#[test]
fn finetune_improves_epe_on_translation_corpus() {
    let params = FlowNetParams::init(1, 3, 3);
    let data = tiny_dataset(3, 16, 16);
    let held_out = tiny_dataset(1, 16, 16).remove(0);
    let label = densify_labels(&held_out.2);

    let initial = estimate_flow(&held_out.0, &held_out.1, &params).unwrap();
    let epe0 = epe(&initial, &label).unwrap();

    let cfg = FinetuneConfig {
        iters: 120,
        batch_size: 2,
        lr: 3e-3,
        seed: 5,
        ..FinetuneConfig::default()
    };
    let (trained, log) = finetune_flow(&params, &data, &cfg).unwrap();
    assert!(!log.is_empty());
    let after = estimate_flow(&held_out.0, &held_out.1, &trained).unwrap();
    let epe1 = epe(&after, &label).unwrap();
    assert!(epe1 < epe0, "held-out EPE {epe1} !< {epe0}");
}

#[test]
fn me_loss_gradient_wrt_params_matches_finite_differences() {
    use crate::grad::{check_gradients, CheckConfig};
    let params = FlowNetParams::init(1, 2, 6);
    // perturb the zero heads so the flow depends on everything
    let mut params = params;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (_, a) in params.entries_mut() {
        for v in a.data_mut() {
            *v += rng.gen_range(-0.05..0.05);
        }
    }
    let cur = rand_frame(1, 8, 8, 60);
    let rf = rand_frame(1, 8, 8, 61);
    let label = Array::from_fn(&[2, 8, 8], |i| 0.3 + 0.01 * (i % 7) as f64);

    let leaves: Vec<Array> = params.entries().iter().map(|(_, a)| (*a).clone()).collect();
    let level_count = params.level_count();
    let report = check_gradients(
        &leaves,
        |tape, ids| {
            // rebuild handles from perturbed leaves, mirroring bind order
            let mut k = 0;
            let levels = (0..level_count)
                .map(|_| {
                    let mk = |k: &mut usize| {
                        let h = crate::nn::LayerH {
                            w: ids[*k],
                            b: ids[*k + 1],
                        };
                        *k += 2;
                        h
                    };
                    [mk(&mut k), mk(&mut k), mk(&mut k), mk(&mut k)]
                })
                .collect();
            let h = FlowNetH { levels };
            let c = tape.constant(cur.array().clone());
            let r = tape.constant(rf.array().clone());
            let l = tape.constant(label.clone());
            let flow = flow_net(tape, &h, c, r)?;
            super::finetune::me_loss_taped(tape, flow, l, c, r, 100.0)
        },
        &CheckConfig {
            max_checks_per_leaf: Some(6),
            ..CheckConfig::default()
        },
    )
    .unwrap();
    assert!(report.pass, "max rel err {}", report.max_rel_err);
}
