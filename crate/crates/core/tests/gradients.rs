//! Analytic backward passes against central finite differences, in 64-bit.

use lgmc_core::attention::{
    efficient_attention_backward, efficient_cross_attention, vanilla_attention_backward,
    vanilla_cross_attention, AttentionInputs,
};
use lgmc_core::motion::{bilinear_warp_backward, bilinear_warp_displacement};
use lgmc_core::nn::seeded_rng;
use lgmc_core::tensor::{
    finite_difference_gradient, matmul, matmul_backward, relative_error, softmax_cols,
    softmax_cols_backward, softmax_rows, softmax_rows_backward,
};
use lgmc_core::{Exec, Tensor64};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 100;
const EPS: f64 = 1e-6;
const TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, dims: &[usize], scale: f64) -> Tensor64 {
    Tensor64::from_fn(dims, |_| rng.gen_range(-scale..scale)).unwrap()
}

fn dot(a: &Tensor64, b: &Tensor64) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Denominator floor of the relative error. Central differences at `EPS`
/// carry about 1e-10 of round-off, which must not count as error when the
/// true gradient vanishes (a single-channel query softmax is constant).
const FLOOR: f64 = 1e-5;

fn check(analytic: &Tensor64, numeric: &Tensor64, what: &str, seed: u64) {
    let err = relative_error(analytic, numeric, FLOOR).unwrap();
    assert!(err <= TOL, "{what} seed {seed}: relative error {err:e}");
}

#[test]
fn matmul_gradients() {
    for seed in 0..SEEDS {
        let mut rng = seeded_rng(seed);
        let (m, k, n) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..6));
        let a = random(&mut rng, &[m, k], 1.0);
        let b = random(&mut rng, &[k, n], 1.0);
        let g = random(&mut rng, &[m, n], 1.0);
        let (da, db) = matmul_backward(&a, &b, &g).unwrap();
        let na = finite_difference_gradient(|x| dot(&matmul(x, &b).unwrap(), &g), &a, EPS).unwrap();
        let nb = finite_difference_gradient(|x| dot(&matmul(&a, x).unwrap(), &g), &b, EPS).unwrap();
        check(&da, &na, "matmul d_a", seed);
        check(&db, &nb, "matmul d_b", seed);
    }
}

#[test]
fn softmax_gradients() {
    for seed in 0..SEEDS {
        let mut rng = seeded_rng(seed);
        let (r, c) = (rng.gen_range(1..7), rng.gen_range(1..7));
        let x = random(&mut rng, &[r, c], 3.0);
        let g = random(&mut rng, &[r, c], 1.0);
        let y = softmax_rows(&x).unwrap();
        let n = finite_difference_gradient(|x| dot(&softmax_rows(x).unwrap(), &g), &x, EPS).unwrap();
        check(&softmax_rows_backward(&y, &g).unwrap(), &n, "softmax_rows", seed);
        let y = softmax_cols(&x).unwrap();
        let n = finite_difference_gradient(|x| dot(&softmax_cols(x).unwrap(), &g), &x, EPS).unwrap();
        check(&softmax_cols_backward(&y, &g).unwrap(), &n, "softmax_cols", seed);
    }
}

/// Displacements whose sample points are interior and at least 0.1 away
/// from lattice lines, so the probe never crosses a cell boundary.
fn fractional_displacement(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Tensor64 {
    let mut d = Vec::with_capacity(2 * h * w);
    for y in 0..h {
        for x in 0..w {
            for (pos, extent) in [(x, w), (y, h)] {
                let cell = rng.gen_range(0..extent - 1) as f64;
                let target = cell + rng.gen_range(0.1..0.9);
                d.push(target - pos as f64);
            }
        }
    }
    Tensor64::new(vec![h, w, 2], d).unwrap()
}

#[test]
fn warp_gradients_at_fractional_offsets() {
    for seed in 0..SEEDS {
        let mut rng = seeded_rng(seed);
        let (c, h, w) = (rng.gen_range(1..4), rng.gen_range(2..7), rng.gen_range(2..7));
        let feature = random(&mut rng, &[c, h, w], 1.0);
        let disp = fractional_displacement(&mut rng, h, w);
        let g = random(&mut rng, &[c, h, w], 1.0);
        let (df, dd) = bilinear_warp_backward(&feature, &disp, &g).unwrap();
        let warp = |f: &Tensor64, d: &Tensor64| bilinear_warp_displacement(f, d, Exec::Sequential).unwrap();
        let nf = finite_difference_gradient(|f| dot(&warp(f, &disp), &g), &feature, EPS).unwrap();
        let nd = finite_difference_gradient(|d| dot(&warp(&feature, d), &g), &disp, EPS).unwrap();
        check(&df, &nf, "warp d_feature", seed);
        check(&dd, &nd, "warp d_disp", seed);
    }
}

#[test]
fn efficient_attention_gradients() {
    for seed in 0..SEEDS {
        let mut rng = seeded_rng(seed);
        let (lq, lk, c) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..5));
        let q = random(&mut rng, &[lq, c], 2.0);
        let kv = random(&mut rng, &[lk, c], 2.0);
        let g = random(&mut rng, &[lq, c], 1.0);
        let inp = AttentionInputs::new(q.clone(), kv.clone()).unwrap();
        let (dq, dkv) = efficient_attention_backward(&inp, &g).unwrap();
        let f = |q: &Tensor64, kv: &Tensor64| {
            efficient_cross_attention(&AttentionInputs::new(q.clone(), kv.clone()).unwrap()).unwrap()
        };
        let nq = finite_difference_gradient(|x| dot(&f(x, &kv), &g), &q, EPS).unwrap();
        let nkv = finite_difference_gradient(|x| dot(&f(&q, x), &g), &kv, EPS).unwrap();
        check(&dq, &nq, "efficient d_query", seed);
        check(&dkv, &nkv, "efficient d_keyvalue", seed);
    }
}

#[test]
fn vanilla_attention_gradients() {
    for seed in 0..SEEDS {
        let mut rng = seeded_rng(seed);
        let (lq, lk, c) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..5));
        let q = random(&mut rng, &[lq, c], 1.0);
        let kv = random(&mut rng, &[lk, c], 1.0);
        let g = random(&mut rng, &[lq, c], 1.0);
        let inp = AttentionInputs::new(q.clone(), kv.clone()).unwrap();
        let (dq, dkv) = vanilla_attention_backward(&inp, &g).unwrap();
        let f = |q: &Tensor64, kv: &Tensor64| {
            vanilla_cross_attention(&AttentionInputs::new(q.clone(), kv.clone()).unwrap())
                .unwrap()
                .output
        };
        let nq = finite_difference_gradient(|x| dot(&f(x, &kv), &g), &q, EPS).unwrap();
        let nkv = finite_difference_gradient(|x| dot(&f(&q, x), &g), &kv, EPS).unwrap();
        check(&dq, &nq, "vanilla d_query", seed);
        check(&dkv, &nkv, "vanilla d_keyvalue", seed);
    }
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut rng = seeded_rng(9);
    let inp = AttentionInputs::new(random(&mut rng, &[4, 3], 1.0), random(&mut rng, &[5, 3], 1.0)).unwrap();
    let (dq, dkv) = efficient_attention_backward(&inp, &Tensor64::zeros(&[4, 3]).unwrap()).unwrap();
    assert!(dq.data().iter().chain(dkv.data()).all(|&v| v == 0.0));
}
