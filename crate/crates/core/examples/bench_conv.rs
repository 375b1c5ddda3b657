//! Microbenchmark for the training hot loop's building blocks.

use std::time::Instant;

use sparseproj::autodiff::{Mode, ParamStore, Tape};

fn main() {
    let (batch, ch, side) = (8usize, 64usize, 64usize);
    let plane = side * side;
    let n_px = batch * ch * plane;
    let x: Vec<f64> = (0..n_px).map(|i| (i % 97) as f64 * 0.01).collect();
    let flop_conv = 2.0 * (batch * ch * ch * plane * 9) as f64;

    // Raw conv forward through the public tape op, weights as constants.
    let mut store = ParamStore::new();
    let w_id = store.add("w", vec![ch, ch, 3, 3], vec![0.001; ch * ch * 9], true);
    let b_id = store.add("b", vec![ch], vec![0.0; ch], true);

    for reps in [3u32] {
        let t0 = Instant::now();
        for _ in 0..reps {
            let mut tape = Tape::new();
            let xin = tape.constant(x.clone(), vec![batch, ch, side, side]);
            let w = tape.param(&store, w_id);
            let b = tape.param(&store, b_id);
            let y = tape.conv2d(xin, w, b);
            let s = tape.sum(y);
            tape.backward(s, &mut store);
            std::hint::black_box(tape.values(y)[0]);
        }
        let dt = t0.elapsed().as_secs_f64() / reps as f64;
        // forward + backward-input + backward-weight ~= 3x forward cost
        println!(
            "tape conv fwd+bwd: {:7.1} ms  ({:5.1} GFLOP/s over 3x fwd flops)",
            dt * 1e3,
            3.0 * flop_conv / dt / 1e9
        );
        store.zero_grad();
    }

    // Individual op timings inside one training-shaped tape.
    let ops: &[&str] = &["conv", "bn", "relu"];
    for &op in ops {
        let mut store = ParamStore::new();
        let w_id = store.add("w", vec![ch, ch, 3, 3], vec![0.001; ch * ch * 9], true);
        let b_id = store.add("b", vec![ch], vec![0.0; ch], true);
        let g_id = store.add("g", vec![ch], vec![1.0; ch], true);
        let be_id = store.add("be", vec![ch], vec![0.0; ch], true);
        let mut bn = sparseproj::autodiff::BnState::new(ch);
        let reps = 3;
        let t0 = Instant::now();
        for _ in 0..reps {
            let mut tape = Tape::new();
            let xin = tape.constant(x.clone(), vec![batch, ch, side, side]);
            let node = match op {
                "conv" => {
                    let w = tape.param(&store, w_id);
                    let b = tape.param(&store, b_id);
                    tape.conv2d(xin, w, b)
                }
                "bn" => {
                    let g = tape.param(&store, g_id);
                    let be = tape.param(&store, be_id);
                    tape.batchnorm2d(xin, g, be, &mut bn, Mode::Train)
                }
                _ => tape.relu(xin),
            };
            let s = tape.sum(node);
            tape.backward(s, &mut store);
            std::hint::black_box(tape.values(node)[0]);
            store.zero_grad();
        }
        let dt = t0.elapsed().as_secs_f64() / reps as f64;
        println!("op {op:5}: {:8.2} ms per fwd+bwd", dt * 1e3);
    }
}
