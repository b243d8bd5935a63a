use lgmc_core::attention::{efficient_attention_backward, efficient_cross_attention, AttentionInputs};
use lgmc_core::metrics::format_sig6;
use lgmc_core::motion::{bilinear_warp_backward, bilinear_warp_displacement};
use lgmc_core::nn::seeded_rng;
use lgmc_core::tensor::{
    finite_difference_gradient, matmul, matmul_backward, relative_error, softmax_rows, softmax_rows_backward,
};
use lgmc_core::{Exec, Tensor64};
use clap::ValueEnum;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::args::{GradKernel, GradcheckArgs};
use crate::Outcome;

const EPS: f64 = 1e-6;
/// Relative-error denominator floor; absorbs finite-difference round-off
/// when the true gradient vanishes.
const FLOOR: f64 = 1e-5;

fn random(rng: &mut ChaCha8Rng, dims: &[usize], scale: f64) -> Tensor64 {
    Tensor64::from_fn(dims, |_| rng.gen_range(-scale..scale)).expect("finite draws")
}

fn dot(a: &Tensor64, b: &Tensor64) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn upstream(rng: &mut ChaCha8Rng, dims: &[usize], zero: bool) -> Tensor64 {
    if zero {
        Tensor64::zeros(dims).expect("valid dims")
    } else {
        random(rng, dims, 1.0)
    }
}

/// Largest relative error over all inputs of one kernel instance.
fn check_seed(kernel: GradKernel, seed: u64, zero: bool) -> anyhow::Result<f64> {
    let mut rng = seeded_rng(seed);
    let mut worst = 0.0f64;
    let mut record = |analytic: &Tensor64, numeric: Tensor64| -> anyhow::Result<()> {
        worst = worst.max(relative_error(analytic, &numeric, FLOOR)?);
        Ok(())
    };
    match kernel {
        GradKernel::Matmul => {
            let (m, k, n) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..6));
            let a = random(&mut rng, &[m, k], 1.0);
            let b = random(&mut rng, &[k, n], 1.0);
            let g = upstream(&mut rng, &[m, n], zero);
            let (da, db) = matmul_backward(&a, &b, &g)?;
            record(&da, finite_difference_gradient(|x| dot(&matmul(x, &b).unwrap(), &g), &a, EPS)?)?;
            record(&db, finite_difference_gradient(|x| dot(&matmul(&a, x).unwrap(), &g), &b, EPS)?)?;
        }
        GradKernel::Softmax => {
            let (r, c) = (rng.gen_range(1..7), rng.gen_range(1..7));
            let x = random(&mut rng, &[r, c], 3.0);
            let g = upstream(&mut rng, &[r, c], zero);
            let analytic = softmax_rows_backward(&softmax_rows(&x)?, &g)?;
            record(&analytic, finite_difference_gradient(|x| dot(&softmax_rows(x).unwrap(), &g), &x, EPS)?)?;
        }
        GradKernel::Warp => {
            let (c, h, w) = (rng.gen_range(1..4), rng.gen_range(2..7), rng.gen_range(2..7));
            let feature = random(&mut rng, &[c, h, w], 1.0);
            // sample points interior and ≥ 0.1 from lattice lines
            let mut d = Vec::with_capacity(2 * h * w);
            for y in 0..h {
                for x in 0..w {
                    for (pos, extent) in [(x, w), (y, h)] {
                        let target = rng.gen_range(0..extent - 1) as f64 + rng.gen_range(0.1..0.9);
                        d.push(target - pos as f64);
                    }
                }
            }
            let disp = Tensor64::new(vec![h, w, 2], d)?;
            let g = upstream(&mut rng, &[c, h, w], zero);
            let (df, dd) = bilinear_warp_backward(&feature, &disp, &g)?;
            let warp = |f: &Tensor64, d: &Tensor64| bilinear_warp_displacement(f, d, Exec::Sequential).unwrap();
            record(&df, finite_difference_gradient(|f| dot(&warp(f, &disp), &g), &feature, EPS)?)?;
            record(&dd, finite_difference_gradient(|d| dot(&warp(&feature, d), &g), &disp, EPS)?)?;
        }
        GradKernel::EfficientAttention => {
            let (lq, lk, c) = (rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..5));
            let q = random(&mut rng, &[lq, c], 2.0);
            let kv = random(&mut rng, &[lk, c], 2.0);
            let g = upstream(&mut rng, &[lq, c], zero);
            let (dq, dkv) = efficient_attention_backward(&AttentionInputs::new(q.clone(), kv.clone())?, &g)?;
            let f = |q: &Tensor64, kv: &Tensor64| {
                efficient_cross_attention(&AttentionInputs::new(q.clone(), kv.clone()).unwrap()).unwrap()
            };
            record(&dq, finite_difference_gradient(|x| dot(&f(x, &kv), &g), &q, EPS)?)?;
            record(&dkv, finite_difference_gradient(|x| dot(&f(&q, x), &g), &kv, EPS)?)?;
        }
    }
    Ok(worst)
}

pub fn run(args: GradcheckArgs) -> anyhow::Result<Outcome> {
    let name = args.kernel.to_possible_value().map_or_else(String::new, |v| v.get_name().to_string());
    println!("kernel seed rel_error status");
    let mut failures = 0;
    for seed in 0..args.seeds {
        let err = check_seed(args.kernel, seed, args.zero_upstream)?;
        let ok = err <= args.tol;
        failures += usize::from(!ok);
        println!("{name} {seed} {} {}", format_sig6(err), if ok { "pass" } else { "FAIL" });
    }
    println!("{name}: {}/{} seeds within {}", args.seeds as usize - failures, args.seeds, format_sig6(args.tol));
    Ok(if failures == 0 {
        Outcome::Success
    } else {
        Outcome::CheckFailed
    })
}
