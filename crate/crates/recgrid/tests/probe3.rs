// temporary raw-kernel probe, removed before release
use std::time::Instant;

fn bench(label: &str, flops_per_call: f64, mut f: impl FnMut()) {
    let start = Instant::now();
    let mut reps = 0u64;
    while start.elapsed().as_secs_f64() < 1.0 {
        f();
        reps += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    let rate = flops_per_call * reps as f64 / secs / 1e9;
    println!("{label}: {:.3} ms/call, {rate:.2} GFLOP/s", secs * 1e3 / reps as f64);
}

#[test]
#[ignore]
fn raw_kernels() {
    let rows = 676usize;
    let c_in = 16usize;
    let c_out = 64usize;
    let x = vec![0.5f64; rows * c_in];
    let w = vec![0.1f64; c_in * c_out];
    let mut out = vec![0.0f64; rows * c_out];

    // same loop shape as Tape::linear
    bench("axpy-style linear", (rows * c_in * c_out * 2) as f64, || {
        out.fill(0.0);
        for r in 0..rows {
            let xrow = &x[r * c_in..(r + 1) * c_in];
            let orow = &mut out[r * c_out..(r + 1) * c_out];
            for (k, &xv) in xrow.iter().enumerate() {
                let wrow = &w[k * c_out..(k + 1) * c_out];
                for (o, &wv) in orow.iter_mut().zip(wrow) {
                    *o += xv * wv;
                }
            }
        }
        std::hint::black_box(&out);
    });

    // unsafe unchecked variant
    bench("unchecked linear", (rows * c_in * c_out * 2) as f64, || {
        out.fill(0.0);
        unsafe {
            for r in 0..rows {
                for k in 0..c_in {
                    let xv = *x.get_unchecked(r * c_in + k);
                    for j in 0..c_out {
                        *out.get_unchecked_mut(r * c_out + j) +=
                            xv * *w.get_unchecked(k * c_out + j);
                    }
                }
            }
        }
        std::hint::black_box(&out);
    });

    // allocation cost probe
    bench("alloc 346KB + fill", 0.0, || {
        let v = vec![0.0f64; rows * c_out];
        std::hint::black_box(&v);
    });

    // conv-shaped kernel: 4x16x13x13, 16 out channels
    let (b, ci, co, h, wd) = (4usize, 16usize, 16usize, 13usize, 13usize);
    let plane = h * wd;
    let xc = vec![0.5f64; b * ci * plane];
    let wc = vec![0.1f64; co * ci * 9];
    let mut oc = vec![0.0f64; b * co * plane];
    bench(
        "conv fwd (row-axpy)",
        (b * co * ci * 9 * plane * 2) as f64,
        || {
            oc.fill(0.0);
            for bi in 0..b {
                for o in 0..co {
                    let oplane = &mut oc[(bi * co + o) * plane..(bi * co + o + 1) * plane];
                    for i in 0..ci {
                        let iplane = &xc[(bi * ci + i) * plane..(bi * ci + i + 1) * plane];
                        let wbase = (o * ci + i) * 9;
                        for dy in 0..3usize {
                            let (y0, y1) = (1usize.saturating_sub(dy), (h + 1 - dy).min(h));
                            for dx in 0..3usize {
                                let coeff = wc[wbase + dy * 3 + dx];
                                let (x0, x1) = (1usize.saturating_sub(dx), (wd + 1 - dx).min(wd));
                                for y in y0..y1 {
                                    let orow = &mut oplane[y * wd + x0..y * wd + x1];
                                    let ibase = (y + dy - 1) * wd + (x0 + dx - 1);
                                    let irow = &iplane[ibase..ibase + (x1 - x0)];
                                    for (ov, iv) in orow.iter_mut().zip(irow) {
                                        *ov += coeff * iv;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            std::hint::black_box(&oc);
        },
    );
}
