use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::format::{format_sig6, parse_real};

/// One rate-distortion operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub rate: f64,
    pub quality: f64,
}

impl RdPoint {
    pub fn new(rate: f64, quality: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) || !quality.is_finite() {
            return Err(Error::Domain(format!(
                "rd point needs a positive rate and finite quality, got ({rate}, {quality})"
            )));
        }
        Ok(Self { rate, quality })
    }
}

const SAMPLES: usize = 1000;

/// A curve is at least four points with strictly increasing rate and
/// quality. Strict quality order is required because log-rate is
/// interpolated as a function of quality.
fn validate(curve: &[RdPoint], name: &str) -> Result<()> {
    if curve.len() < 4 {
        return Err(Error::Invalid(format!(
            "{name} curve has {} points, need at least 4",
            curve.len()
        )));
    }
    for p in curve {
        RdPoint::new(p.rate, p.quality)?;
    }
    for pair in curve.windows(2) {
        if pair[1].rate <= pair[0].rate || pair[1].quality <= pair[0].quality {
            return Err(Error::Invalid(format!(
                "{name} curve must have strictly increasing rate and quality"
            )));
        }
    }
    Ok(())
}

/// Natural cubic spline through `(x[i], y[i])`, `x` strictly increasing.
struct Spline {
    x: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Spline {
    fn natural(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Tridiagonal system for interior second derivatives (Thomas).
            let k = n - 2;
            let h: Vec<f64> = x.windows(2).map(|p| p[1] - p[0]).collect();
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
            }
            for i in 1..k {
                let f = h[i] / diag[i - 1];
                diag[i] -= f * h[i];
                rhs[i] -= f * rhs[i - 1];
            }
            for i in (0..k).rev() {
                let upper = if i + 1 < k { h[i + 1] * m[i + 2] } else { 0.0 };
                m[i + 1] = (rhs[i] - upper) / diag[i];
            }
        }
        Self { x, y, m }
    }

    fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let i = self.x[1..n - 1].partition_point(|&v| v <= t);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        let h = x1 - x0;
        let (a, b) = ((x1 - t) / h, (t - x0) / h);
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

fn log_rate_spline(curve: &[RdPoint]) -> Spline {
    Spline::natural(
        curve.iter().map(|p| p.quality).collect(),
        curve.iter().map(|p| p.rate.log10()).collect(),
    )
}

/// Bjøntegaard delta rate of `test` against `anchor` in percent.
/// Negative values mean `test` needs fewer bits at equal quality.
pub fn bd_rate(anchor: &[RdPoint], test: &[RdPoint]) -> Result<f64> {
    validate(anchor, "anchor")?;
    validate(test, "test")?;
    let lo = anchor[0].quality.max(test[0].quality);
    let hi = anchor[anchor.len() - 1].quality.min(test[test.len() - 1].quality);
    if lo >= hi {
        return Err(Error::Domain(format!(
            "quality ranges do not overlap (overlap [{lo}, {hi}])"
        )));
    }
    let (sa, st) = (log_rate_spline(anchor), log_rate_spline(test));
    let step = (hi - lo) / (SAMPLES - 1) as f64;
    let diff = |i: usize| {
        let q = if i + 1 == SAMPLES { hi } else { lo + step * i as f64 };
        st.eval(q) - sa.eval(q)
    };
    let mut integral = 0.0;
    let mut prev = diff(0);
    for i in 1..SAMPLES {
        let cur = diff(i);
        integral += 0.5 * (prev + cur) * step;
        prev = cur;
    }
    let delta = integral / (hi - lo);
    Ok((10f64.powf(delta) - 1.0) * 100.0)
}

/// Reads a `rate_bpp,quality` CSV with header.
pub fn parse_rd_csv(text: &str) -> Result<Vec<RdPoint>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.trim() == "rate_bpp,quality" => {}
        other => {
            return Err(Error::Format(format!(
                "expected header rate_bpp,quality, found {other:?}"
            )))
        }
    }
    lines
        .map(|line| {
            let (r, q) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("bad rd row {line:?}")))?;
            RdPoint::new(parse_real(r)?, parse_real(q)?)
        })
        .collect()
}

pub fn write_rd_csv(points: &[RdPoint]) -> String {
    let mut out = String::from("rate_bpp,quality\n");
    for p in points {
        out += &format!("{},{}\n", format_sig6(p.rate), format_sig6(p.quality));
    }
    out
}

/// BD-rate of one sequence, labelled with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct BdEntry {
    pub class: String,
    pub sequence: String,
    pub bd_rate: f64,
}

/// Two ways of summarizing per-sequence BD-rates.
#[derive(Debug, Clone, PartialEq)]
pub struct BdAggregate {
    /// Plain mean over all sequences.
    pub per_sequence_mean: f64,
    /// Mean over classes of each class's mean.
    pub per_class_mean: f64,
    pub class_means: BTreeMap<String, f64>,
}

pub fn aggregate_bd_rates(entries: &[BdEntry]) -> Result<BdAggregate> {
    if entries.is_empty() {
        return Err(Error::Invalid("no BD-rate entries to aggregate".into()));
    }
    let per_sequence_mean = entries.iter().map(|e| e.bd_rate).sum::<f64>() / entries.len() as f64;
    let mut groups: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for e in entries {
        let g = groups.entry(e.class.clone()).or_default();
        g.0 += e.bd_rate;
        g.1 += 1;
    }
    let class_means: BTreeMap<String, f64> =
        groups.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    let per_class_mean = class_means.values().sum::<f64>() / class_means.len() as f64;
    Ok(BdAggregate {
        per_sequence_mean,
        per_class_mean,
        class_means,
    })
}
