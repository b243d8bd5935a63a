//! Binary PGM (P5) / PPM (P6) frames and edge padding.

use std::path::Path;

use crate::error::{Error, Result};
use crate::motion::FlowField;
use crate::tensor::{Real, Tensor};

/// An 8-bit grayscale or RGB image, samples interleaved per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl Image {
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut token = || -> Result<&[u8]> {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Format("truncated netpbm header".into()));
            }
            Ok(&bytes[start..pos])
        };
        let channels = match token()? {
            b"P5" => 1,
            b"P6" => 3,
            m => {
                return Err(Error::Format(format!(
                    "unsupported netpbm magic {:?}",
                    String::from_utf8_lossy(m)
                )))
            }
        };
        let mut number = |what: &str| -> Result<usize> {
            let t = token()?;
            std::str::from_utf8(t)
                .ok()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Format(format!("bad netpbm {what}")))
        };
        let width = number("width")?;
        let height = number("height")?;
        let maxval = number("maxval")?;
        if width == 0 || height == 0 {
            return Err(Error::Format(format!("empty image {width}×{height}")));
        }
        if maxval != 255 {
            return Err(Error::Format(format!("maxval {maxval} unsupported, need 255")));
        }
        // exactly one whitespace byte separates the header from the raster
        let start = pos + 1;
        let n = width * height * channels;
        if bytes.len() < start + n {
            return Err(Error::Truncated {
                expected: start + n,
                found: bytes.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels: bytes[start..start + n].to_vec(),
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    /// Planar `C×H×W` tensor with samples scaled to `[0, 1]`.
    pub fn to_tensor<T: Real>(&self) -> Result<Tensor<T>> {
        let (c, plane) = (self.channels, self.width * self.height);
        Tensor::from_fn(&[c, self.height, self.width], |i| {
            let (ch, p) = (i / plane, i % plane);
            T::lit(self.pixels[p * c + ch] as f64 / 255.0)
        })
    }

    /// Inverse of [`Image::to_tensor`]; values are clamped to `[0, 1]` and
    /// rounded to the nearest code.
    pub fn from_tensor<T: Real>(t: &Tensor<T>) -> Result<Self> {
        let (c, h, w) = t.chw()?;
        if c != 1 && c != 3 {
            return Err(Error::shape(format!("images need 1 or 3 channels, got {c}")));
        }
        let plane = h * w;
        let mut pixels = vec![0u8; c * plane];
        for (i, v) in t.data().iter().enumerate() {
            let (ch, p) = (i / plane, i % plane);
            pixels[p * c + ch] = (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8;
        }
        Ok(Self {
            width: w,
            height: h,
            channels: c,
            pixels,
        })
    }
}

/// Pads a `C×H×W` tensor on the right and bottom by edge replication so both
/// extents become multiples of `multiple`.
pub fn pad_to_multiple<T: Real>(t: &Tensor<T>, multiple: usize) -> Result<Tensor<T>> {
    let (c, h, w) = t.chw()?;
    let (ph, pw) = (h.div_ceil(multiple) * multiple, w.div_ceil(multiple) * multiple);
    if (ph, pw) == (h, w) {
        return Ok(t.clone());
    }
    let src = t.data();
    Tensor::from_fn(&[c, ph, pw], |i| {
        let (ch, y, x) = (i / (ph * pw), (i / pw) % ph, i % pw);
        src[(ch * h + y.min(h - 1)) * w + x.min(w - 1)]
    })
}

/// Top-left `height×width` crop of a `C×H×W` tensor.
pub fn crop<T: Real>(t: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    let (c, h, w) = t.chw()?;
    if height > h || width > w {
        return Err(Error::shape(format!("crop {height}×{width} exceeds {h}×{w}")));
    }
    let src = t.data();
    Tensor::from_fn(&[c, height, width], |i| {
        let (ch, y, x) = (i / (height * width), (i / width) % height, i % width);
        src[(ch * h + y) * w + x]
    })
}

/// Edge-replicating pad of a flow field to multiples of `multiple`.
pub fn pad_flow_to_multiple(flow: &FlowField, multiple: usize) -> Result<FlowField> {
    let (w, h) = (flow.width(), flow.height());
    let (ph, pw) = (h.div_ceil(multiple) * multiple, w.div_ceil(multiple) * multiple);
    let mut data = Vec::with_capacity(2 * ph * pw);
    for y in 0..ph {
        for x in 0..pw {
            let (u, v) = flow.at(x.min(w - 1), y.min(h - 1));
            data.push(u);
            data.push(v);
        }
    }
    FlowField::new(pw, ph, data)
}
