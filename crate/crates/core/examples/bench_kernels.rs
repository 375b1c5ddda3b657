//! Raw kernel throughput, bypassing the tape.

use std::time::Instant;

use sparseproj::autodiff::conv::{conv3x3_backward_input, conv3x3_backward_weight, conv3x3_forward};

fn main() {
    let (batch, ch, side) = (8usize, 64usize, 64usize);
    let plane = side * side;
    let x: Vec<f64> = (0..batch * ch * plane).map(|i| (i % 97) as f64 * 0.01).collect();
    let w: Vec<f64> = (0..ch * ch * 9).map(|i| (i % 13) as f64 * 0.001).collect();
    let b = vec![0.0; ch];
    let dout: Vec<f64> = (0..batch * ch * plane).map(|i| (i % 89) as f64 * 0.01).collect();
    let flop = 2.0 * (batch * ch * ch * plane * 9) as f64;

    let mut out = vec![0.0; batch * ch * plane];
    let reps = 5;
    let t0 = Instant::now();
    for _ in 0..reps {
        conv3x3_forward(&x, batch, ch, side, side, &w, &b, ch, &mut out);
        std::hint::black_box(&out);
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!("forward        : {:7.1} ms  {:6.1} GFLOP/s", dt * 1e3, flop / dt / 1e9);

    let mut gx = vec![0.0; x.len()];
    let t0 = Instant::now();
    for _ in 0..reps {
        gx.fill(0.0);
        conv3x3_backward_input(&dout, batch, ch, side, side, &w, ch, &mut gx);
        std::hint::black_box(&gx);
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!("backward input : {:7.1} ms  {:6.1} GFLOP/s", dt * 1e3, flop / dt / 1e9);

    let mut gw = vec![0.0; w.len()];
    let t0 = Instant::now();
    for _ in 0..reps {
        gw.fill(0.0);
        conv3x3_backward_weight(&x, &dout, batch, ch, side, side, ch, &mut gw);
        std::hint::black_box(&gw);
    }
    let dt = t0.elapsed().as_secs_f64() / reps as f64;
    println!("backward weight: {:7.1} ms  {:6.1} GFLOP/s", dt * 1e3, flop / dt / 1e9);
}
