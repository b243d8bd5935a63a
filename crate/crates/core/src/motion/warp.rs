use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::tensor::{Real, Tensor};

use super::FlowField;

/// One bilinear tap: clamped base cell, fractional offsets, and whether each
/// axis was clamped (a clamped axis carries no displacement gradient).
#[derive(Clone, Copy)]
struct Tap<T> {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    fx: T,
    fy: T,
    clamped_x: bool,
    clamped_y: bool,
}

#[inline]
fn axis<T: Real>(pos: T, extent: usize) -> (usize, usize, T, bool) {
    let hi = T::lit((extent - 1) as f64);
    let clamped = pos < T::zero() || pos > hi;
    let p = pos.max(T::zero()).min(hi);
    let base = p.floor();
    let i0 = base.as_f64() as usize;
    (i0, (i0 + 1).min(extent - 1), p - base, clamped)
}

#[inline]
fn tap<T: Real>(x: usize, y: usize, u: T, v: T, w: usize, h: usize) -> Tap<T> {
    let (x0, x1, fx, clamped_x) = axis(T::lit(x as f64) + u, w);
    let (y0, y1, fy, clamped_y) = axis(T::lit(y as f64) + v, h);
    Tap {
        x0,
        x1,
        y0,
        y1,
        fx,
        fy,
        clamped_x,
        clamped_y,
    }
}

#[inline]
fn sample<T: Real>(plane: &[T], w: usize, t: &Tap<T>) -> T {
    let f00 = plane[t.y0 * w + t.x0];
    if t.fx == T::zero() && t.fy == T::zero() {
        return f00;
    }
    let f01 = plane[t.y0 * w + t.x1];
    let f10 = plane[t.y1 * w + t.x0];
    let f11 = plane[t.y1 * w + t.x1];
    let one = T::one();
    (one - t.fy) * ((one - t.fx) * f00 + t.fx * f01) + t.fy * ((one - t.fx) * f10 + t.fx * f11)
}

fn check(feature_dims: &[usize], disp_dims: &[usize]) -> Result<(usize, usize, usize)> {
    match (feature_dims, disp_dims) {
        (&[c, h, w], &[fh, fw, 2]) if (h, w) == (fh, fw) => Ok((c, h, w)),
        _ => Err(Error::shape(format!(
            "warp: feature {feature_dims:?} and displacement {disp_dims:?} are incompatible"
        ))),
    }
}

/// Backward bilinear warp: `out(c, y, x) = feature(c, y + v, x + u)` with
/// sample coordinates clamped to the border.
pub fn bilinear_warp<T: Real>(feature: &Tensor<T>, flow: &FlowField) -> Result<Tensor<T>> {
    bilinear_warp_displacement(feature, &flow.to_tensor()?, Exec::default())
}

/// [`bilinear_warp`] with displacements given as an `H×W×2` tensor in the
/// feature precision.
pub fn bilinear_warp_displacement<T: Real>(
    feature: &Tensor<T>,
    disp: &Tensor<T>,
    exec: Exec,
) -> Result<Tensor<T>> {
    let (c, h, w) = check(feature.dims(), disp.dims())?;
    let d = disp.data();
    let taps: Vec<Tap<T>> = (0..h * w)
        .map(|i| tap(i % w, i / w, d[2 * i], d[2 * i + 1], w, h))
        .collect();
    let src = feature.data();
    let mut out = vec![T::zero(); c * h * w];
    par::for_each_chunk(exec, &mut out, h * w, |ch, plane| {
        let input = &src[ch * h * w..(ch + 1) * h * w];
        for (o, t) in plane.iter_mut().zip(&taps) {
            *o = sample(input, w, t);
        }
    });
    Tensor::from_parts(vec![c, h, w], out, "bilinear_warp")
}

/// Gradients of [`bilinear_warp_displacement`] with respect to the feature
/// and the `H×W×2` displacement.
///
/// On lattice points the displacement gradient is the one-sided slope of
/// the right/down interpolation cell; along a clamped axis it is zero.
pub fn bilinear_warp_backward<T: Real>(
    feature: &Tensor<T>,
    disp: &Tensor<T>,
    d_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (c, h, w) = check(feature.dims(), disp.dims())?;
    feature.expect_same_dims(d_out, "bilinear_warp_backward")?;
    let d = disp.data();
    let src = feature.data();
    let g = d_out.data();
    let one = T::one();
    let mut d_feature = vec![T::zero(); c * h * w];
    let mut d_disp = vec![T::zero(); 2 * h * w];
    for i in 0..h * w {
        let t = tap(i % w, i / w, d[2 * i], d[2 * i + 1], w, h);
        let (i00, i01) = (t.y0 * w + t.x0, t.y0 * w + t.x1);
        let (i10, i11) = (t.y1 * w + t.x0, t.y1 * w + t.x1);
        let (wx0, wy0) = (one - t.fx, one - t.fy);
        let (mut du, mut dv) = (T::zero(), T::zero());
        for ch in 0..c {
            let base = ch * h * w;
            let go = g[base + i];
            let df = &mut d_feature[base..base + h * w];
            df[i00] = df[i00] + go * wx0 * wy0;
            df[i01] = df[i01] + go * t.fx * wy0;
            df[i10] = df[i10] + go * wx0 * t.fy;
            df[i11] = df[i11] + go * t.fx * t.fy;
            let p = &src[base..base + h * w];
            let (f00, f01, f10, f11) = (p[i00], p[i01], p[i10], p[i11]);
            du = du + go * (wy0 * (f01 - f00) + t.fy * (f11 - f10));
            dv = dv + go * (wx0 * (f10 - f00) + t.fx * (f11 - f01));
        }
        d_disp[2 * i] = if t.clamped_x { T::zero() } else { du };
        d_disp[2 * i + 1] = if t.clamped_y { T::zero() } else { dv };
    }
    Ok((
        Tensor::from_parts(vec![c, h, w], d_feature, "bilinear_warp_backward")?,
        Tensor::from_parts(vec![h, w, 2], d_disp, "bilinear_warp_backward")?,
    ))
}
