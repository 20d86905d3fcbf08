// temporary backward-cost bisect, removed before release
use recgrid::tensor::Tape;
use std::time::Instant;

fn bench(label: &str, mut f: impl FnMut()) {
    let start = Instant::now();
    let mut reps = 0u64;
    while start.elapsed().as_secs_f64() < 0.5 {
        f();
        reps += 1;
    }
    println!(
        "{label}: {:.4} ms/call ({reps} reps)",
        start.elapsed().as_secs_f64() * 1e3 / reps as f64
    );
}

#[test]
#[ignore]
fn backward_bisect() {
    let n = 43264usize;
    let xs = vec![0.5f64; n];
    let ys = vec![0.7f64; n];

    bench("clone two 43k vecs", || {
        std::hint::black_box((xs.clone(), ys.clone()));
    });

    bench("leaves only", || {
        let mut tape = Tape::new();
        let x = tape.leaf(xs.clone(), vec![n]).unwrap();
        let _y = tape.leaf(ys.clone(), vec![n]).unwrap();
        std::hint::black_box(tape.data(x).len());
    });

    bench("leaves + mul fwd", || {
        let mut tape = Tape::new();
        let x = tape.leaf(xs.clone(), vec![n]).unwrap();
        let y = tape.leaf(ys.clone(), vec![n]).unwrap();
        let m = tape.mul(x, y).unwrap();
        std::hint::black_box(tape.data(m).len());
    });

    bench("leaves + mul + sum fwd", || {
        let mut tape = Tape::new();
        let x = tape.leaf(xs.clone(), vec![n]).unwrap();
        let y = tape.leaf(ys.clone(), vec![n]).unwrap();
        let m = tape.mul(x, y).unwrap();
        let s = tape.sum(m);
        std::hint::black_box(tape.scalar(s));
    });

    bench("sum-only bwd", || {
        let mut tape = Tape::new();
        let x = tape.leaf(xs.clone(), vec![n]).unwrap();
        let s = tape.sum(x);
        tape.backward(s).unwrap();
    });

    bench("mul+sum bwd", || {
        let mut tape = Tape::new();
        let x = tape.leaf(xs.clone(), vec![n]).unwrap();
        let y = tape.leaf(ys.clone(), vec![n]).unwrap();
        let m = tape.mul(x, y).unwrap();
        let s = tape.sum(m);
        tape.backward(s).unwrap();
    });
}

#[test]
#[ignore]
fn manual_mul_backward() {
    let n = 43264usize;
    let gout = vec![1.0f64; n];
    let ad = vec![0.5f64; n];
    let bd = vec![0.7f64; n];

    bench("manual mul-bwd loops", || {
        let mut ga = vec![0.0f64; n];
        for ((gv, &ov), &bv) in ga.iter_mut().zip(&gout).zip(&bd) {
            *gv += ov * bv;
        }
        let mut gb = vec![0.0f64; n];
        for ((gv, &ov), &av) in gb.iter_mut().zip(&gout).zip(&ad) {
            *gv += ov * av;
        }
        std::hint::black_box((&ga, &gb));
    });
}

#[test]
#[ignore]
fn size_sweep() {
    for n in [8000usize, 20000, 43264, 100000] {
        let xs = vec![0.5f64; n];
        let ys = vec![0.7f64; n];
        let label = format!("mul+sum bwd n={n}");
        bench(&label, || {
            let mut tape = Tape::new();
            let x = tape.leaf(xs.clone(), vec![n]).unwrap();
            let y = tape.leaf(ys.clone(), vec![n]).unwrap();
            let m = tape.mul(x, y).unwrap();
            let s = tape.sum(m);
            tape.backward(s).unwrap();
        });
    }

    // allocation-pattern probe: many live buffers like a real tape
    let n = 43264usize;
    bench("alloc 6 live bufs, touch, drop", || {
        let mut keep: Vec<Vec<f64>> = Vec::new();
        for _ in 0..6 {
            let mut v = vec![0.0f64; n];
            v[0] = 1.0;
            v[n - 1] = 1.0;
            for i in (0..n).step_by(512) {
                v[i] = 2.0; // touch every page
            }
            keep.push(v);
        }
        std::hint::black_box(&keep);
    });
}

#[test]
#[ignore]
fn with_mallopt() {
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 256 * 1024 * 1024);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 256 * 1024 * 1024);
    }
    let n = 43264usize;
    bench("alloc 6 live bufs (mallopt)", || {
        let mut keep: Vec<Vec<f64>> = Vec::new();
        for _ in 0..6 {
            let mut v = vec![0.0f64; n];
            for i in (0..n).step_by(512) {
                v[i] = 2.0;
            }
            keep.push(v);
        }
        std::hint::black_box(&keep);
    });
    let xs = vec![0.5f64; n];
    let ys = vec![0.7f64; n];
    bench("mul+sum bwd (mallopt)", || {
        let mut tape = Tape::new();
        let x = tape.leaf(xs.clone(), vec![n]).unwrap();
        let y = tape.leaf(ys.clone(), vec![n]).unwrap();
        let m = tape.mul(x, y).unwrap();
        let s = tape.sum(m);
        tape.backward(s).unwrap();
    });
}
