// temporary tape-overhead probe, removed before release
use recgrid::tensor::Tape;
use std::time::Instant;

fn bench(label: &str, mut f: impl FnMut()) {
    let start = Instant::now();
    let mut reps = 0u64;
    while start.elapsed().as_secs_f64() < 1.0 {
        f();
        reps += 1;
    }
    println!(
        "{label}: {:.3} ms/call ({reps} reps)",
        start.elapsed().as_secs_f64() * 1e3 / reps as f64
    );
}

#[test]
#[ignore]
fn tape_linear_breakdown() {
    let rows = 676usize;
    let c_in = 16usize;
    let c_out = 64usize;
    let xs = vec![0.5f64; rows * c_in];
    let ws = vec![0.1f64; c_in * c_out];
    let bs = vec![0.0f64; c_out];

    bench("tape linear fwd only", || {
        let mut tape = Tape::new();
        let x = tape.leaf(xs.clone(), vec![rows, c_in]).unwrap();
        let w = tape.leaf(ws.clone(), vec![c_in, c_out]).unwrap();
        let b = tape.leaf(bs.clone(), vec![c_out]).unwrap();
        let y = tape.linear(x, w, Some(b)).unwrap();
        std::hint::black_box(tape.data(y));
    });

    bench("tape linear fwd+bwd", || {
        let mut tape = Tape::new();
        let x = tape.leaf(xs.clone(), vec![rows, c_in]).unwrap();
        let w = tape.leaf(ws.clone(), vec![c_in, c_out]).unwrap();
        let b = tape.leaf(bs.clone(), vec![c_out]).unwrap();
        let y = tape.linear(x, w, Some(b)).unwrap();
        let s = tape.sum(y);
        tape.backward(s).unwrap();
    });

    bench("tape gelu fwd only (43k)", || {
        let mut tape = Tape::new();
        let x = tape.leaf(vec![0.5; rows * c_out], vec![rows, c_out]).unwrap();
        let y = tape.gelu(x);
        std::hint::black_box(tape.data(y));
    });

    bench("tape gelu fwd+bwd (43k)", || {
        let mut tape = Tape::new();
        let x = tape.leaf(vec![0.5; rows * c_out], vec![rows, c_out]).unwrap();
        let y = tape.gelu(x);
        let s = tape.sum(y);
        tape.backward(s).unwrap();
    });

    bench("tape mul fwd+bwd (43k)", || {
        let mut tape = Tape::new();
        let x = tape.leaf(vec![0.5; rows * c_out], vec![rows, c_out]).unwrap();
        let y = tape.leaf(vec![0.7; rows * c_out], vec![rows, c_out]).unwrap();
        let m = tape.mul(x, y).unwrap();
        let s = tape.sum(m);
        tape.backward(s).unwrap();
    });
}
