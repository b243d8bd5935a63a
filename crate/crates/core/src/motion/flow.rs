use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Default bound on any displacement component, in pixels.
pub const DEFAULT_FLOW_CAP: f32 = 512.0;

/// Middlebury `.flo` sanity value ("PIEH" when read as bytes).
pub const FLO_MAGIC: f32 = 202021.25;

/// Per-pixel displacement field, row-major with `u` before `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        Self::with_cap(width, height, data, DEFAULT_FLOW_CAP)
    }

    pub fn with_cap(width: usize, height: usize, data: Vec<f32>, cap: f32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::shape(format!("flow extent {width}×{height} is empty")));
        }
        if data.len() != 2 * width * height {
            return Err(Error::shape(format!(
                "flow {width}×{height} needs {} values, got {}",
                2 * width * height,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("flow component {bad}")));
        }
        if let Some(big) = data.iter().find(|v| v.abs() > cap) {
            return Err(Error::Domain(format!(
                "flow magnitude {big} exceeds the {cap} px cap"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0.0; 2 * width * height])
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Result<Self> {
        Self::new(
            width,
            height,
            std::iter::repeat_n([u, v], width * height).flatten().collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Interleaved `(u, v)` pairs.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = 2 * (y * self.width + x);
        (self.data[i], self.data[i + 1])
    }

    /// Displacements as an `H×W×2` tensor, the layout the warp kernels use.
    pub fn to_tensor<T: Real>(&self) -> Result<Tensor<T>> {
        Tensor::new(
            vec![self.height, self.width, 2],
            self.data.iter().map(|&v| T::lit(v as f64)).collect(),
        )
    }

    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Self> {
        match t.dims() {
            &[h, w, 2] => Self::new(w, h, t.data().iter().map(|v| v.as_f64() as f32).collect()),
            d => Err(Error::shape(format!("expected H×W×2 displacements, got {d:?}"))),
        }
    }

    pub fn max_magnitude(&self) -> f32 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_flo(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.data.len());
        out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
        out.extend_from_slice(&(self.width as i32).to_le_bytes());
        out.extend_from_slice(&(self.height as i32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_flo(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Truncated {
                expected: 12,
                found: bytes.len(),
            });
        }
        let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().unwrap() };
        if f32::from_le_bytes(word(0)) != FLO_MAGIC {
            return Err(Error::Format("bad .flo magic, expected 202021.25".into()));
        }
        let (w, h) = (i32::from_le_bytes(word(4)), i32::from_le_bytes(word(8)));
        if w <= 0 || h <= 0 {
            return Err(Error::Format(format!("nonpositive .flo extent {w}×{h}")));
        }
        let n = 2 * w as usize * h as usize;
        let expected = 12 + 4 * n;
        if bytes.len() < expected {
            return Err(Error::Truncated {
                expected,
                found: bytes.len(),
            });
        }
        let data = bytes[12..expected]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(w as usize, h as usize, data)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_flo(&std::fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_flo())?;
        Ok(())
    }
}

/// Rescales a flow to a coarser grid: `factor×factor` average pooling of
/// each component (ceiling extents) followed by division by `factor`.
pub fn downsample_flow(flow: &FlowField, factor: usize) -> Result<FlowField> {
    if !matches!(factor, 1 | 2 | 4) {
        return Err(Error::Invalid(format!("flow downsample factor {factor} not in {{1, 2, 4}}")));
    }
    if factor == 1 {
        return Ok(flow.clone());
    }
    let (w, h) = (flow.width, flow.height);
    let (ow, oh) = (w.div_ceil(factor), h.div_ceil(factor));
    let mut out = Vec::with_capacity(2 * ow * oh);
    for oy in 0..oh {
        let ys = oy * factor..((oy + 1) * factor).min(h);
        for ox in 0..ow {
            let xs = ox * factor..((ox + 1) * factor).min(w);
            let (mut su, mut sv) = (0.0f64, 0.0f64);
            for y in ys.clone() {
                for x in xs.clone() {
                    let (u, v) = flow.at(x, y);
                    su += u as f64;
                    sv += v as f64;
                }
            }
            let n = (ys.len() * xs.len()) as f64;
            let f = factor as f64;
            out.push((su / n / f) as f32);
            out.push((sv / n / f) as f32);
        }
    }
    FlowField::new(ow, oh, out)
}

/// Parametric motion used to synthesize test content.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthMotion {
    /// Constant displacement `(u, v)`.
    Translation { u: f64, v: f64 },
    /// Rigid rotation by `theta` radians about the frame center.
    Rotation { theta: f64 },
    /// Radial zoom by `scale` about the frame center.
    Zoom { scale: f64 },
}

/// Displacement field of a parametric motion; each pixel `p` maps to `T(p)`
/// and stores `T(p) − p`. The center is `((W−1)/2, (H−1)/2)`.
pub fn synth_flow(motion: SynthMotion, width: usize, height: usize) -> Result<FlowField> {
    let params_finite = match motion {
        SynthMotion::Translation { u, v } => u.is_finite() && v.is_finite(),
        SynthMotion::Rotation { theta } => theta.is_finite(),
        SynthMotion::Zoom { scale } => scale.is_finite(),
    };
    if !params_finite {
        return Err(Error::Invalid("synthetic motion parameters must be finite".into()));
    }
    let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
    let mut data = Vec::with_capacity(2 * width * height);
    for y in 0..height {
        for x in 0..width {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            let (u, v) = match motion {
                SynthMotion::Translation { u, v } => (u, v),
                SynthMotion::Rotation { theta } => {
                    let (s, c) = snap_sin_cos(theta);
                    (c * dx - s * dy - dx, s * dx + c * dy - dy)
                }
                SynthMotion::Zoom { scale } => ((scale - 1.0) * dx, (scale - 1.0) * dy),
            };
            data.push(u as f32);
            data.push(v as f32);
        }
    }
    FlowField::new(width, height, data)
}

/// `sin`/`cos` with quarter turns snapped to exact values.
fn snap_sin_cos(theta: f64) -> (f64, f64) {
    let quarters = theta / (PI / 2.0);
    if (quarters - quarters.round()).abs() < 1e-12 {
        match (quarters.round() as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        theta.sin_cos()
    }
}
