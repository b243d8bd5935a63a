use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Per-scale exponents, finest first.
pub const MS_SSIM_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
const WINDOW: usize = 11;
const WINDOW_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
/// Smallest side for which the window still fits after four halvings.
pub const MS_SSIM_MIN_SIDE: usize = WINDOW << 4;

/// Multi-scale SSIM with peak 1.0.
pub fn ms_ssim<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    ms_ssim_with_peak(a, b, 1.0)
}

/// Multi-scale SSIM of `C×H×W` images (C = 1 or 3), computed per channel
/// and averaged. Filtering is "valid" (no padding); scales are built by 2×2
/// averaging with odd trailing rows/columns dropped. Negative contrast or
/// similarity terms are clamped to 0 before exponentiation.
pub fn ms_ssim_with_peak<T: Real>(a: &Tensor<T>, b: &Tensor<T>, peak: f64) -> Result<f64> {
    a.expect_same_dims(b, "ms_ssim")?;
    let (c, h, w) = a.chw()?;
    if c != 1 && c != 3 {
        return Err(Error::shape(format!("ms_ssim needs 1 or 3 channels, got {c}")));
    }
    if h.min(w) < MS_SSIM_MIN_SIDE {
        return Err(Error::shape(format!(
            "ms_ssim needs both sides ≥ {MS_SSIM_MIN_SIDE} for five scales, got {h}×{w}"
        )));
    }
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::Domain(format!("peak {peak} must be > 0")));
    }
    let window = gaussian_window();
    let plane = h * w;
    let mut total = 0.0;
    for ch in 0..c {
        let take = |t: &Tensor<T>| -> Vec<f64> {
            t.data()[ch * plane..(ch + 1) * plane].iter().map(|v| v.as_f64()).collect()
        };
        total += channel_ms_ssim(take(a), take(b), h, w, peak, &window);
    }
    Ok(total / c as f64)
}

fn gaussian_window() -> [f64; WINDOW] {
    let half = (WINDOW / 2) as f64;
    let mut g = [0.0; WINDOW];
    for (i, v) in g.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

fn channel_ms_ssim(
    mut a: Vec<f64>,
    mut b: Vec<f64>,
    mut h: usize,
    mut w: usize,
    peak: f64,
    window: &[f64; WINDOW],
) -> f64 {
    let c1 = (K1 * peak).powi(2);
    let c2 = (K2 * peak).powi(2);
    let mut value = 1.0;
    for (scale, &weight) in MS_SSIM_WEIGHTS.iter().enumerate() {
        let (luminance, contrast) = ssim_terms(&a, &b, h, w, c1, c2, window);
        let term = if scale + 1 == MS_SSIM_WEIGHTS.len() {
            luminance * contrast
        } else {
            contrast
        };
        value *= term.max(0.0).powf(weight);
        if scale + 1 < MS_SSIM_WEIGHTS.len() {
            a = halve(&a, h, w);
            b = halve(&b, h, w);
            h /= 2;
            w /= 2;
        }
    }
    value
}

/// Mean luminance and contrast-structure terms over all valid window
/// positions. Every expression is written so that swapping `a` and `b`
/// only commutes IEEE additions and multiplications.
fn ssim_terms(
    a: &[f64],
    b: &[f64],
    h: usize,
    w: usize,
    c1: f64,
    c2: f64,
    window: &[f64; WINDOW],
) -> (f64, f64) {
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let (mu_a, oh, ow) = filter(a, h, w, window);
    let (mu_b, _, _) = filter(b, h, w, window);
    let (e_aa, _, _) = filter(&aa, h, w, window);
    let (e_bb, _, _) = filter(&bb, h, w, window);
    let (e_ab, _, _) = filter(&ab, h, w, window);
    let n = (oh * ow) as f64;
    let (mut lum, mut cs) = (0.0, 0.0);
    for i in 0..oh * ow {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        lum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        cs += (2.0 * cov + c2) / (var_a + var_b + c2);
    }
    (lum / n, cs / n)
}

/// Separable valid-mode Gaussian filter.
fn filter(x: &[f64], h: usize, w: usize, g: &[f64; WINDOW]) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h + 1 - WINDOW, w + 1 - WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x0 in 0..ow {
            let src = &x[y * w + x0..y * w + x0 + WINDOW];
            rows[y * ow + x0] = src.iter().zip(g).map(|(v, k)| v * k).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y0 in 0..oh {
        for x0 in 0..ow {
            out[y0 * ow + x0] = (0..WINDOW).map(|k| rows[(y0 + k) * ow + x0] * g[k]).sum();
        }
    }
    (out, oh, ow)
}

fn halve(x: &[f64], h: usize, w: usize) -> Vec<f64> {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        for xx in 0..ow {
            let i = 2 * y * w + 2 * xx;
            out.push((x[i] + x[i + 1] + x[i + w] + x[i + w + 1]) * 0.25);
        }
    }
    out
}
