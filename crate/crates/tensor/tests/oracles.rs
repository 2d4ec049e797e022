//! Independent reference implementations checked against the fast paths.

use lessvit_tensor::flops;
use lessvit_tensor::gradcheck::{check_gradients, GradCheckOptions};
use lessvit_tensor::{Tensor, Var};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

fn triple_loop(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = a.dims2().unwrap();
    let (_, n) = b.dims2().unwrap();
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a.at(&[i, p]) * b.at(&[p, j]);
            }
            out.data_mut()[i * n + j] = s;
        }
    }
    out
}

fn four_loop_kron(a: &Tensor, b: &Tensor) -> Tensor {
    let (p, q) = a.dims2().unwrap();
    let (m, n) = b.dims2().unwrap();
    let mut out = Tensor::zeros(&[p * m, q * n]);
    for i in 0..p {
        for j in 0..q {
            for k in 0..m {
                for l in 0..n {
                    out.data_mut()[(i * m + k) * q * n + j * n + l] = a.at(&[i, j]) * b.at(&[k, l]);
                }
            }
        }
    }
    out
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[4, 4], &mut rng);
    let b = random(&[4, 4], &mut rng);
    let fast = a.matmul(&b).unwrap();
    let slow = triple_loop(&a, &b);
    // a 4-term dot product; blocking may reorder the additions
    assert!(fast.max_abs_diff(&slow) < 1e-15);

    let c = random(&[5, 3], &mut rng);
    let d = random(&[7, 3], &mut rng);
    let ct = c.matmul_t(&d).unwrap();
    assert!(ct.max_abs_diff(&triple_loop(&c, &d.transpose().unwrap())) < 1e-15);
}

#[test]
fn kron_matches_four_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = random(&[3, 3], &mut rng);
    let b = random(&[2, 2], &mut rng);
    assert_eq!(a.kron(&b).unwrap(), four_loop_kron(&a, &b));
    let a = random(&[2, 3], &mut rng);
    let b = random(&[4, 1], &mut rng);
    assert_eq!(a.kron(&b).unwrap(), four_loop_kron(&a, &b));
}

#[test]
fn softmax_matches_extended_precision() {
    // 40-digit evaluation of exp(i) / sum exp(j)
    let expected = [
        0.090_030_573_170_380_457_998_022_1,
        0.244_728_471_054_797_652_472_959_6,
        0.665_240_955_774_821_889_529_018_3,
    ];
    let x = Tensor::new(&[1, 3], vec![1.0, 2.0, 3.0]).unwrap();
    let y = x.softmax(None).unwrap();
    for (a, b) in y.data().iter().zip(expected) {
        assert!((a - b).abs() < 1e-15, "{a} vs {b}");
    }
}

#[test]
fn flop_counts_compose() {
    let a = Tensor::ones(&[2, 3]);
    let b = Tensor::ones(&[3, 4]);
    let c = Tensor::ones(&[4, 5]);
    let (_, total) = flops::measure(|| a.matmul(&b).unwrap().matmul(&c).unwrap());
    assert_eq!(total.mac_count(), 2 * 3 * 4 + 2 * 4 * 5);
}

const TOL: f64 = 1e-4;

fn opts() -> GradCheckOptions {
    GradCheckOptions::default()
}

macro_rules! gradcheck {
    ($name:ident, [$($shape:expr),+], |$tape:ident, $v:ident| $body:expr) => {
        #[test]
        fn $name() {
            let mut rng = ChaCha8Rng::seed_from_u64(stringify!($name).len() as u64);
            let inputs: Vec<Tensor> = vec![$(random(&$shape, &mut rng)),+];
            let report = check_gradients(&inputs, opts(), |$tape, $v: &[Var<'_>]| $body).unwrap();
            assert!(report.passes(TOL), "{:?}", report.relative_errors);
        }
    };
}

gradcheck!(grad_matmul, [[3, 4], [4, 2]], |_t, v| Ok(v[0].matmul(v[1])?.gelu().sum()));
gradcheck!(grad_matmul_batched_lhs, [[2, 3, 4], [4, 2]], |_t, v| Ok(v[0]
    .matmul(v[1])?
    .gelu()
    .sum()));
gradcheck!(grad_matmul_t, [[3, 4], [5, 4]], |_t, v| Ok(v[0].matmul_t(v[1])?.gelu().sum()));
gradcheck!(grad_bmm, [[2, 3, 4], [2, 4, 2]], |_t, v| Ok(v[0].bmm(v[1], false)?.gelu().sum()));
gradcheck!(grad_bmm_t, [[2, 3, 4], [2, 5, 4]], |_t, v| Ok(v[0].bmm(v[1], true)?.gelu().sum()));
gradcheck!(grad_add_sub_mul, [[3, 3], [3, 3], [3, 3]], |_t, v| Ok(v[0]
    .add(v[1])?
    .mul(v[2])?
    .sub(v[0])?
    .gelu()
    .sum()));
gradcheck!(grad_add_row_scale, [[4, 3], [3]], |_t, v| Ok(v[0]
    .add_row(v[1])?
    .scale(-0.7)
    .gelu()
    .sum()));
gradcheck!(grad_transpose_reshape, [[2, 3, 4]], |t, v| {
    let w = t.constant(Tensor::from_fn(&[4, 3, 2], |i| (i as f64 * 0.37).sin()));
    Ok(v[0].transpose()?.reshape(&[4, 3, 2])?.mul(w)?.sum())
});
gradcheck!(grad_swap_leading, [[2, 3, 2]], |t, v| {
    let w = t.constant(Tensor::from_fn(&[3, 2, 2], |i| (i as f64 * 0.53).cos()));
    Ok(v[0].swap_leading()?.mul(w)?.sum())
});
gradcheck!(grad_softmax, [[3, 5]], |t, v| {
    let w = t.constant(Tensor::from_fn(&[3, 5], |i| (i as f64).sin()));
    Ok(v[0].softmax(None)?.mul(w)?.sum())
});
gradcheck!(grad_softmax_masked, [[2, 3, 3]], |t, v| {
    let w = t.constant(Tensor::from_fn(&[2, 3, 3], |i| (i as f64 * 1.3).sin()));
    let mask = [true, false, true, true, true, false, false, true, true];
    Ok(v[0].softmax(Some(&mask))?.mul(w)?.sum())
});
gradcheck!(grad_layernorm, [[3, 6], [6], [6]], |t, v| {
    let w = t.constant(Tensor::from_fn(&[3, 6], |i| (i as f64 * 0.71).sin()));
    Ok(v[0].layernorm(v[1], v[2])?.mul(w)?.sum())
});
gradcheck!(grad_kron, [[2, 3], [3, 2]], |t, v| {
    let w = t.constant(Tensor::from_fn(&[6, 6], |i| (i as f64 * 0.29).cos()));
    Ok(v[0].kron(v[1])?.mul(w)?.sum())
});
gradcheck!(grad_gather_concat, [[2, 3], [2, 2]], |t, v| {
    let c = t.concat(&[v[0], v[1]], 1)?;
    let g = c.index_select(1, &[4, 0, 0, 2])?;
    let w = t.constant(Tensor::from_fn(&[2, 4], |i| i as f64 - 1.5));
    Ok(g.mul(w)?.gelu().sum())
});
gradcheck!(grad_mean_mse, [[4, 2], [4, 2]], |_t, v| v[0].gelu().mse(v[1]));
gradcheck!(grad_cross_entropy, [[4, 3]], |_t, v| v[0].cross_entropy(&[0, 2, 1, 2]));

#[test]
fn gradient_is_linear_in_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random(&[3, 4], &mut rng);
    let w = random(&[4, 4], &mut rng);
    let grad_of = |which: u8| {
        let tape = lessvit_tensor::Tape::new();
        let xv = tape.param(std::sync::Arc::new(x.clone()));
        let wv = tape.constant(w.clone());
        let f1 = xv.matmul(wv).unwrap().gelu().sum();
        let f2 = xv.softmax(None).unwrap().mul(xv).unwrap().sum();
        let loss = match which {
            1 => f1,
            2 => f2,
            _ => f1.add(f2).unwrap(),
        };
        tape.backward(loss).unwrap().wrt(xv)
    };
    let sum = grad_of(1).add(&grad_of(2)).unwrap();
    assert!(grad_of(3).max_abs_diff(&sum) < 1e-12);
}

proptest! {
    #[test]
    fn softmax_rows_are_stochastic(
        rows in 1usize..5,
        cols in 1usize..7,
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_fn(&[rows, cols], |_| rng.gen_range(-30.0..30.0));
        let mut mask: Vec<bool> = (0..rows * cols).map(|_| rng.gen_bool(0.6)).collect();
        for r in 0..rows {
            mask[r * cols + rng.gen_range(0..cols)] = true;
        }
        let y = x.softmax(Some(&mask)).unwrap();
        for (r, row) in y.data().chunks(cols).enumerate() {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            for (j, &v) in row.iter().enumerate() {
                prop_assert!(v >= 0.0);
                if !mask[r * cols + j] {
                    prop_assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn reshape_round_trip(a in 1usize..6, b in 1usize..6, c in 1usize..4) {
        let x = Tensor::from_fn(&[a, b, c], |i| i as f64 * 0.5);
        let y = x.reshape(&[a * b * c]).unwrap().reshape(&[a, b, c]).unwrap();
        prop_assert_eq!(x, y);
    }

    #[test]
    fn matmul_chain_counts_are_additive(m in 1usize..6, k in 1usize..6, n in 1usize..6, p in 1usize..6) {
        let a = Tensor::ones(&[m, k]);
        let b = Tensor::ones(&[k, n]);
        let c = Tensor::ones(&[n, p]);
        let (_, total) = flops::measure(|| {
            let (_, first) = flops::measure(|| a.matmul(&b).unwrap());
            prop_assert_eq!(first.mac_count(), (m * k * n) as u64);
            Ok(())
        });
        prop_assert_eq!(total.mac_count(), (m * k * n) as u64);
        let (_, chain) = flops::measure(|| a.matmul(&b).unwrap().matmul(&c).unwrap());
        prop_assert_eq!(chain.mac_count(), (m * k * n + m * n * p) as u64);
    }

    #[test]
    fn layernorm_rows_are_centered(rows in 1usize..4, d in 2usize..9, seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::from_fn(&[rows, d], |_| rng.gen_range(-5.0..5.0));
        let y = x.layernorm(&Tensor::ones(&[d]), &Tensor::zeros(&[d])).unwrap();
        for row in y.data().chunks(d) {
            let mean: f64 = row.iter().sum::<f64>() / d as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }
}

#[test]
fn f32_precision_mode_is_close() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = random(&[16, 32], &mut rng);
    let b = random(&[32, 8], &mut rng);
    let exact = a.matmul(&b).unwrap();
    let approx = lessvit_tensor::with_precision(lessvit_tensor::Precision::F32, || a.matmul(&b).unwrap());
    let diff = exact.max_abs_diff(&approx);
    assert!(diff > 0.0 && diff < 1e-5, "{diff}");
    assert_eq!(lessvit_tensor::precision(), lessvit_tensor::Precision::F64);
}
