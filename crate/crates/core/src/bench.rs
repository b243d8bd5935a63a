//! Timing harness for the scaling of both attention kernels in the token
//! count `L` and the channel count `C`.

use std::fmt;
use std::time::Instant;

use rand::Rng;
use serde::Serialize;

use crate::attention::{efficient_cross_attention_with, vanilla_cross_attention_with, AttentionInputs};
use crate::error::{Error, Result};
use crate::metrics::format_sig6;
use crate::nn::{derive_seed, seeded_rng};
use crate::par::Exec;
use crate::tensor::Tensor;

pub const DEFAULT_LS: [usize; 7] = [256, 512, 1024, 2048, 4096, 8192, 16384];
pub const DEFAULT_MEM_BUDGET: u64 = 2 << 30;
/// Fits below this coefficient of determination are flagged noisy.
pub const MIN_R_SQUARED: f64 = 0.95;
const ELEM: u64 = std::mem::size_of::<f32>() as u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Vanilla,
    Efficient,
}

impl Kernel {
    pub fn as_str(self) -> &'static str {
        match self {
            Kernel::Vanilla => "vanilla",
            Kernel::Efficient => "efficient",
        }
    }

    /// Rough peak bytes of one forward pass with `l` query and key tokens.
    pub fn peak_bytes(self, l: usize, c: usize) -> u64 {
        let (l, c) = (l as u64, c as u64);
        match self {
            Kernel::Vanilla => (3 * l * c + 2 * l * l) * ELEM,
            Kernel::Efficient => (5 * l * c + c * c) * ELEM,
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One measured configuration, handed to a [`Clock`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Point {
    pub kernel: Kernel,
    pub l: usize,
    pub c: usize,
}

/// Source of timings. [`WallClock`] runs the kernel; test clocks may return
/// synthetic times without running it.
pub trait Clock {
    fn measure(&mut self, point: Point, run: &mut dyn FnMut()) -> f64;
}

/// Monotonic wall-clock nanoseconds.
#[derive(Debug, Default, Clone, Copy)]
pub struct WallClock;

impl Clock for WallClock {
    fn measure(&mut self, _: Point, run: &mut dyn FnMut()) -> f64 {
        let start = Instant::now();
        run();
        start.elapsed().as_nanos() as f64
    }
}

/// Returns `f(point)` and never runs the kernel.
pub struct SyntheticClock<F>(pub F);

impl<F: FnMut(Point) -> f64> Clock for SyntheticClock<F> {
    fn measure(&mut self, point: Point, _: &mut dyn FnMut()) -> f64 {
        (self.0)(point)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub ls: Vec<usize>,
    pub channels: usize,
    pub reps: usize,
    pub warmup: usize,
    /// Largest L×L f32 buffer the vanilla kernel may allocate.
    pub mem_budget: u64,
    pub seed: u64,
    /// Run kernels sequentially. Slopes are only fitted when set.
    pub single_thread: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            ls: DEFAULT_LS.to_vec(),
            channels: 64,
            reps: 9,
            warmup: 2,
            mem_budget: DEFAULT_MEM_BUDGET,
            seed: 0,
            single_thread: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub kernel: Kernel,
    pub l: usize,
    pub c: usize,
    pub median_ns: f64,
    pub reps: usize,
    pub warmup: usize,
    pub single_thread: bool,
    pub peak_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Skipped {
    pub kernel: Kernel,
    pub l: usize,
    pub c: usize,
    pub required_bytes: u64,
    pub budget_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl LogLogFit {
    pub fn noisy(&self) -> bool {
        !(self.r_squared >= MIN_R_SQUARED)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelFit {
    pub kernel: Kernel,
    /// `"L"` for token sweeps, `"C"` for channel sweeps.
    pub axis: &'static str,
    pub points: usize,
    #[serde(flatten)]
    pub fit: LogLogFit,
    pub noisy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub samples: Vec<Sample>,
    pub skipped: Vec<Skipped>,
    pub fits: Vec<KernelFit>,
}

impl BenchReport {
    pub fn fit(&self, kernel: Kernel, axis: &str) -> Option<&KernelFit> {
        self.fits.iter().find(|f| f.kernel == kernel && f.axis == axis)
    }

    /// `kernel,L,C,median_ns,reps`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kernel,L,C,median_ns,reps\n");
        for s in &self.samples {
            out += &format!(
                "{},{},{},{},{}\n",
                s.kernel,
                s.l,
                s.c,
                format_sig6(s.median_ns),
                s.reps
            );
        }
        out
    }

    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            fits: &'a [KernelFit],
            skipped: &'a [Skipped],
            peak_bytes: Vec<(Kernel, usize, usize, u64)>,
        }
        let summary = Summary {
            fits: &self.fits,
            skipped: &self.skipped,
            peak_bytes: self.samples.iter().map(|s| (s.kernel, s.l, s.c, s.peak_bytes)).collect(),
        };
        serde_json::to_string_pretty(&summary).map_err(|e| Error::Invalid(e.to_string()))
    }
}

/// Ordinary least squares of `ln t` on `ln x`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::Invalid(format!(
            "slope fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(x, t)) = points.iter().find(|(x, t)| !(*x > 0.0 && *t > 0.0)) {
        return Err(Error::Domain(format!("log-log fit needs positive values, got ({x}, {t})")));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("log-log fit needs distinct x values".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
    })
}

fn validate(config: &BenchConfig) -> Result<()> {
    if config.reps < 5 {
        return Err(Error::Invalid(format!("need at least 5 repetitions, got {}", config.reps)));
    }
    if config.channels == 0 {
        return Err(Error::Invalid("channel count must be positive".into()));
    }
    Ok(())
}

fn validate_sweep(values: &[usize], what: &str, span: usize) -> Result<()> {
    if values.len() < 4 || values.windows(2).any(|w| w[1] <= w[0]) || values[0] == 0 {
        return Err(Error::Invalid(format!(
            "{what} values must be ≥ 4 positive, strictly increasing entries"
        )));
    }
    if values[values.len() - 1] < span * values[0] {
        return Err(Error::Invalid(format!("{what} values must span at least {span}×")));
    }
    Ok(())
}

fn random_inputs(l: usize, c: usize, seed: u64) -> AttentionInputs<f32> {
    let mut rng = seeded_rng(derive_seed(seed, ((l as u64) << 20) | c as u64));
    let mut draw = |_: usize| rng.gen_range(-1.0f32..1.0);
    let query = Tensor::from_fn(&[l, c], &mut draw).expect("finite");
    let keyvalue = Tensor::from_fn(&[l, c], &mut draw).expect("finite");
    AttentionInputs::new(query, keyvalue).expect("matching channels")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn time_point(point: Point, config: &BenchConfig, clock: &mut dyn Clock) -> Sample {
    let inputs = random_inputs(point.l, point.c, config.seed);
    let exec = if config.single_thread {
        Exec::Sequential
    } else {
        Exec::Parallel
    };
    let mut run = || match point.kernel {
        Kernel::Vanilla => {
            std::hint::black_box(vanilla_cross_attention_with(&inputs, exec).expect("valid inputs"));
        }
        Kernel::Efficient => {
            std::hint::black_box(efficient_cross_attention_with(&inputs, exec).expect("valid inputs"));
        }
    };
    for _ in 0..config.warmup {
        clock.measure(point, &mut run);
    }
    let times = (0..config.reps).map(|_| clock.measure(point, &mut run)).collect();
    Sample {
        kernel: point.kernel,
        l: point.l,
        c: point.c,
        median_ns: median(times),
        reps: config.reps,
        warmup: config.warmup,
        single_thread: config.single_thread,
        peak_bytes: point.kernel.peak_bytes(point.l, point.c),
    }
}

fn fit_samples(
    samples: &[Sample],
    kernel: Kernel,
    axis: &'static str,
    single_thread: bool,
) -> Result<Option<KernelFit>> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.kernel == kernel)
        .map(|s| (if axis == "L" { s.l } else { s.c } as f64, s.median_ns))
        .collect();
    if !single_thread || pts.len() < 3 {
        return Ok(None);
    }
    let fit = fit_loglog_slope(&pts)?;
    Ok(Some(KernelFit {
        kernel,
        axis,
        points: pts.len(),
        fit,
        noisy: fit.noisy(),
    }))
}

/// Times both kernels over `ls` at `c` channels with default settings.
pub fn run_attention_scaling(ls: &[usize], c: usize, reps: usize) -> Result<BenchReport> {
    let config = BenchConfig {
        ls: ls.to_vec(),
        channels: c,
        reps,
        ..BenchConfig::default()
    };
    run_attention_scaling_with(&config, &mut WallClock)
}

/// Vanilla points whose L×L buffer exceeds the memory budget are skipped
/// and listed in the report. Slopes are fitted only for single-threaded runs.
pub fn run_attention_scaling_with(config: &BenchConfig, clock: &mut dyn Clock) -> Result<BenchReport> {
    validate(config)?;
    validate_sweep(&config.ls, "L", 16)?;
    let c = config.channels;
    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    for &l in &config.ls {
        samples.push(time_point(Point { kernel: Kernel::Efficient, l, c }, config, clock));
        let buffer = (l as u64) * (l as u64) * ELEM;
        if buffer > config.mem_budget {
            skipped.push(Skipped {
                kernel: Kernel::Vanilla,
                l,
                c,
                required_bytes: buffer,
                budget_bytes: config.mem_budget,
            });
        } else {
            samples.push(time_point(Point { kernel: Kernel::Vanilla, l, c }, config, clock));
        }
    }
    let fits = [Kernel::Efficient, Kernel::Vanilla]
        .into_iter()
        .filter_map(|k| fit_samples(&samples, k, "L", config.single_thread).transpose())
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport {
        samples,
        skipped,
        fits,
    })
}

/// Times the efficient kernel at fixed `l` over the channel counts `cs`.
pub fn run_channel_sweep_with(
    l: usize,
    cs: &[usize],
    config: &BenchConfig,
    clock: &mut dyn Clock,
) -> Result<BenchReport> {
    validate(config)?;
    validate_sweep(cs, "C", 4)?;
    let samples: Vec<Sample> = cs
        .iter()
        .map(|&c| time_point(Point { kernel: Kernel::Efficient, l, c }, config, clock))
        .collect();
    let fits = fit_samples(&samples, Kernel::Efficient, "C", config.single_thread)?
        .into_iter()
        .collect();
    Ok(BenchReport {
        samples,
        skipped: Vec::new(),
        fits,
    })
}
