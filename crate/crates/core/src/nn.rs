//! Seeded convolution layers used by the embedding, pyramid and codec stubs.
//!
//! Nothing here is trained. Weights come from a ChaCha8 stream keyed by a
//! seed, drawn in 64-bit and rounded to the layer precision, so regenerating
//! a layer from the same seed is bit-identical on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::tensor::{Real, Tensor};

pub const LEAKY_SLOPE: f64 = 0.01;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent sub-seed for component `tag` of a seeded model.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn uniform_vec<T: Real>(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> Vec<T> {
    (0..n).map(|_| T::lit(rng.gen_range(-bound..bound))).collect()
}

pub fn leaky_relu<T: Real>(x: &mut Tensor<T>) {
    let slope = T::lit(LEAKY_SLOPE);
    for v in x.data_mut() {
        if *v < T::zero() {
            *v = *v * slope;
        }
    }
}

/// 2-D convolution with zero padding and optional channel groups.
///
/// Weight layout is `[out][in / groups][k][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T: Real> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv2d<T> {
    /// Layer with uniform(−1/√fan_in, 1/√fan_in) weights and biases.
    pub fn seeded(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        seed: u64,
    ) -> Self {
        let fan_in = (in_channels * kernel * kernel) as f64;
        Self::uniform(in_channels, out_channels, kernel, stride, 1, 1.0 / fan_in.sqrt(), seed)
    }

    pub fn uniform(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        groups: usize,
        bound: f64,
        seed: u64,
    ) -> Self {
        assert!(groups >= 1 && in_channels % groups == 0 && out_channels % groups == 0);
        let mut rng = seeded_rng(seed);
        let weight = uniform_vec(&mut rng, out_channels * (in_channels / groups) * kernel * kernel, bound);
        let bias = uniform_vec(&mut rng, out_channels, bound);
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding: kernel / 2,
            groups,
            weight,
            bias,
        }
    }

    pub fn zeroed(mut self) -> Self {
        self.weight.iter_mut().for_each(|w| *w = T::zero());
        self.bias.iter_mut().for_each(|b| *b = T::zero());
        self
    }

    pub fn output_extent(&self, extent: usize) -> usize {
        (extent + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_with(x, Exec::default())
    }

    pub fn forward_with(&self, x: &Tensor<T>, exec: Exec) -> Result<Tensor<T>> {
        let (c, h, w) = x.chw()?;
        if c != self.in_channels {
            return Err(Error::shape(format!(
                "conv expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        if h + 2 * self.padding < self.kernel || w + 2 * self.padding < self.kernel {
            return Err(Error::shape(format!("input {h}×{w} smaller than kernel")));
        }
        let (oh, ow) = (self.output_extent(h), self.output_extent(w));
        let (k, s, p) = (self.kernel, self.stride, self.padding as isize);
        let in_per_group = self.in_channels / self.groups;
        let out_per_group = self.out_channels / self.groups;
        let src = x.data();
        let mut out = vec![T::zero(); self.out_channels * oh * ow];
        par::for_each_chunk(exec, &mut out, oh * ow, |co, plane| {
            plane.iter_mut().for_each(|v| *v = self.bias[co]);
            let g = co / out_per_group;
            for ci_local in 0..in_per_group {
                let ci = g * in_per_group + ci_local;
                let input = &src[ci * h * w..(ci + 1) * h * w];
                let wbase = (co * in_per_group + ci_local) * k * k;
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = self.weight[wbase + ky * k + kx];
                        for oy in 0..oh {
                            let iy = (oy * s) as isize + ky as isize - p;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let irow = &input[iy as usize * w..(iy as usize + 1) * w];
                            let orow = &mut plane[oy * ow..(oy + 1) * ow];
                            for (ox, o) in orow.iter_mut().enumerate() {
                                let ix = (ox * s) as isize + kx as isize - p;
                                if ix >= 0 && ix < w as isize {
                                    *o = *o + wv * irow[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        });
        Tensor::from_parts(vec![self.out_channels, oh, ow], out, "conv2d")
    }
}

/// Stride-2 transposed convolution with a 2×2 kernel: every input pixel
/// expands into a 2×2 output block. Weight layout is `[in][out][2][2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Upsample2x<T: Real> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Upsample2x<T> {
    pub fn seeded(in_channels: usize, out_channels: usize, seed: u64) -> Self {
        let bound = 1.0 / (in_channels as f64).sqrt();
        let mut rng = seeded_rng(seed);
        Self {
            in_channels,
            out_channels,
            weight: uniform_vec(&mut rng, in_channels * out_channels * 4, bound),
            bias: uniform_vec(&mut rng, out_channels, bound),
        }
    }

    pub fn forward_with(&self, x: &Tensor<T>, exec: Exec) -> Result<Tensor<T>> {
        let (c, h, w) = x.chw()?;
        if c != self.in_channels {
            return Err(Error::shape(format!(
                "upsample expects {} input channels, got {c}",
                self.in_channels
            )));
        }
        let (oh, ow) = (2 * h, 2 * w);
        let src = x.data();
        let mut out = vec![T::zero(); self.out_channels * oh * ow];
        par::for_each_chunk(exec, &mut out, oh * ow, |co, plane| {
            plane.iter_mut().for_each(|v| *v = self.bias[co]);
            for ci in 0..c {
                let input = &src[ci * h * w..(ci + 1) * h * w];
                let wb = (ci * self.out_channels + co) * 4;
                let wk = &self.weight[wb..wb + 4];
                for y in 0..h {
                    for x in 0..w {
                        let v = input[y * w + x];
                        for (d, &wv) in wk.iter().enumerate() {
                            let (dy, dx) = (d / 2, d % 2);
                            let o = &mut plane[(2 * y + dy) * ow + 2 * x + dx];
                            *o = *o + wv * v;
                        }
                    }
                }
            }
        });
        Tensor::from_parts(vec![self.out_channels, oh, ow], out, "upsample2x")
    }
}

/// Average pooling with a `factor`×`factor` window and stride, ceiling the
/// output extent. Partial windows at the right/bottom edge average only the
/// pixels they cover.
pub fn avg_pool<T: Real>(x: &Tensor<T>, factor: usize) -> Result<Tensor<T>> {
    let (c, h, w) = x.chw()?;
    if factor == 0 {
        return Err(Error::Invalid("pool factor must be positive".into()));
    }
    let (oh, ow) = (h.div_ceil(factor), w.div_ceil(factor));
    let src = x.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            let ys = oy * factor..((oy + 1) * factor).min(h);
            for ox in 0..ow {
                let xs = ox * factor..((ox + 1) * factor).min(w);
                let mut sum = T::zero();
                for y in ys.clone() {
                    for xx in xs.clone() {
                        sum = sum + plane[y * w + xx];
                    }
                }
                out.push(sum / T::lit((ys.len() * xs.len()) as f64));
            }
        }
    }
    Tensor::from_parts(vec![c, oh, ow], out, "avg_pool")
}
