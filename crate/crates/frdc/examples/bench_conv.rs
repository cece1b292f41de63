use frdc::grad::{ops, Array};
use std::time::Instant;

fn main() {
    // context-extractor-sized conv: 16ch -> 32ch, 3x3, 64x64
    let x = Array::from_fn(&[16, 64, 64], |i| (i % 97) as f64 * 0.01);
    let k = Array::from_fn(&[32, 16, 3, 3], |i| (i % 13) as f64 * 0.001);
    let b = Array::zeros(&[32]);
    let n = 50;
    let t = Instant::now();
    let mut acc = 0.0;
    for _ in 0..n {
        let y = ops::conv2d(&x, &k, &b, 1, 1).unwrap();
        acc += y.data()[0];
    }
    let dt = t.elapsed().as_secs_f64();
    let macs = (64 * 64 * 32 * 16 * 9 * n) as f64;
    println!("fwd: {:.3} s total, {:.2} GFLOP/s ({acc})", dt, 2.0 * macs / dt / 1e9);

    let g = Array::from_fn(&[32, 64, 64], |i| (i % 31) as f64 * 0.01);
    let t = Instant::now();
    for _ in 0..n {
        let (dx, _, _) = ops::conv2d_backward(&x, &k, 1, 1, &g);
        acc += dx.data()[0];
    }
    let dt = t.elapsed().as_secs_f64();
    println!("bwd: {:.3} s total, {:.2} GFLOP/s ({acc})", dt, 4.0 * macs / dt / 1e9);
}
