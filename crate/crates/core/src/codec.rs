//! Conditional coding pipeline driven by local and/or global contexts.
//!
//! The encoder is four stride-2 convolutions. Before each of the first three
//! the stage input is concatenated with the contexts of the matching scale:
//! the frame with scale 0, the first middle feature with scale 1, the second
//! with scale 2. The decoder mirrors this with four 2× upsampling stages and
//! concatenates scale 2, 1 and 0 contexts before the last two upsampling
//! stages and the final reconstruction convolution.
//!
//! Every stage always sees a fixed channel layout `[features | local | global]`.
//! A context family the ablation mode excludes is fed as zeros, so all modes
//! share one set of weights and an excluded family cannot influence the
//! output.
//!
//! Global contexts are built on each side from that side's own activations:
//! the encoder attends from the frame and its middle features, the decoder
//! from its upsampled activations. Both sides share the embedding weights.
//!
//! Nothing is trained. The only structured weights are in the final decoder
//! convolution, whose context taps read the reference back out of a context
//! map (the pseudo-inverse of the level-0 pyramid projection), so a context
//! that is well aligned with the current frame yields a good prediction.

use std::fmt;
use std::str::FromStr;

use crate::attention::{global_context_with, EmbedParams};
use crate::error::{Error, Result};
use crate::metrics::{mse, psnr};
use crate::motion::{local_contexts_with, FeaturePyramid, FlowField, PyramidConfig, PyramidExtractor};
use crate::nn::{self, derive_seed, Conv2d, Upsample2x};
use crate::par::Exec;
use crate::tensor::{concat_channels, Real, Tensor};

/// Which context families condition the encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AblationMode {
    /// Local and global contexts on both sides.
    Both,
    /// Flow-warped contexts only.
    LocalOnly,
    /// Attention contexts only.
    GlobalOnly,
    /// Local on both sides, global at the encoder only.
    GlobalEncOnly,
    /// Local on both sides, global at the decoder only.
    GlobalDecOnly,
}

impl AblationMode {
    pub const ALL: [AblationMode; 5] = [
        AblationMode::Both,
        AblationMode::LocalOnly,
        AblationMode::GlobalOnly,
        AblationMode::GlobalEncOnly,
        AblationMode::GlobalDecOnly,
    ];

    pub fn local(self) -> bool {
        self != AblationMode::GlobalOnly
    }

    pub fn global_encoder(self) -> bool {
        matches!(
            self,
            AblationMode::Both | AblationMode::GlobalOnly | AblationMode::GlobalEncOnly
        )
    }

    pub fn global_decoder(self) -> bool {
        matches!(
            self,
            AblationMode::Both | AblationMode::GlobalOnly | AblationMode::GlobalDecOnly
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::Both => "both",
            AblationMode::LocalOnly => "local_only",
            AblationMode::GlobalOnly => "global_only",
            AblationMode::GlobalEncOnly => "global_enc_only",
            AblationMode::GlobalDecOnly => "global_dec_only",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown ablation mode {s:?}")))
    }
}

/// Channel widths: context channels per scale, encoder/decoder hidden width,
/// and latent channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelPlan {
    pub contexts: [usize; 3],
    pub hidden: usize,
    pub latent: usize,
}

impl Default for ChannelPlan {
    fn default() -> Self {
        Self {
            contexts: [32, 48, 64],
            hidden: 64,
            latent: 96,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodecConfig {
    pub lambda: f64,
    pub mode: AblationMode,
    pub channels: ChannelPlan,
    pub seed: u64,
    /// Scale of the zero-mean Gaussian rate model.
    pub sigma: f64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            lambda: 1024.0,
            mode: AblationMode::Both,
            channels: ChannelPlan::default(),
            seed: 0,
            sigma: 1.0,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Invalid(format!("lambda {} must be > 0", self.lambda)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Invalid(format!("sigma {} must be > 0", self.sigma)));
        }
        let c = &self.channels;
        if c.contexts.contains(&0) || c.hidden == 0 || c.latent == 0 {
            return Err(Error::Invalid(format!("channel plan {c:?} has a zero width")));
        }
        Ok(())
    }
}

/// Quantized latent plus the real-valued tensor it was rounded from.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent<T: Real = f32> {
    pub quantized: Tensor<T>,
    pub pre: Tensor<T>,
}

impl<T: Real> Latent<T> {
    pub fn from_pre(pre: Tensor<T>) -> Result<Self> {
        Ok(Self {
            quantized: quantize(&pre)?,
            pre,
        })
    }
}

/// Per-frame rate and distortion record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameStats {
    pub frame_index: usize,
    pub total_bpp: f64,
    /// Always 0 here: motion vectors are not coded, only consumed.
    pub motion_bpp: f64,
    pub mse: f64,
    pub psnr: f64,
}

/// Contexts supplied to the encoder or decoder. `local` holds the warped
/// pyramid levels; `global_source` is the reference pyramid the attention
/// reads keys and values from. A family the mode excludes may be omitted
/// and is ignored if present.
#[derive(Debug, Clone, Copy)]
pub struct Contexts<'a, T: Real> {
    pub local: Option<&'a [Tensor<T>; 3]>,
    pub global_source: Option<&'a FeaturePyramid<T>>,
}

/// Seeded weights for one codec configuration and reference channel count.
#[derive(Debug, Clone)]
pub struct CodecParams<T: Real = f32> {
    config: CodecConfig,
    pyramid: PyramidExtractor<T>,
    embed: [EmbedParams<T>; 3],
    encoder_queries: [Conv2d<T>; 3],
    decoder_queries: [Conv2d<T>; 3],
    encoder: [Conv2d<T>; 4],
    decoder: [Upsample2x<T>; 4],
    reconstruct: Conv2d<T>,
}

/// Gain of the feature taps of the reconstruction convolution relative to
/// the default initialization.
const RESIDUAL_GAIN: f64 = 0.1;

impl<T: Real> CodecParams<T> {
    pub fn new(config: CodecConfig, reference_channels: usize) -> Result<Self> {
        config.validate()?;
        if reference_channels == 0 {
            return Err(Error::Invalid("reference feature needs channels".into()));
        }
        let seed = config.seed;
        let ChannelPlan {
            contexts: [c0, c1, c2],
            hidden,
            latent,
        } = config.channels;
        let s = |tag: u64| derive_seed(seed, tag);
        let pyramid_config = PyramidConfig {
            channels: config.channels.contexts,
            seed: s(1),
        };
        let pyramid = PyramidExtractor::new(reference_channels, &pyramid_config);
        let embed_seed = s(2);
        let embed = [
            EmbedParams::seeded(c0, derive_seed(embed_seed, 0)),
            EmbedParams::seeded(c1, derive_seed(embed_seed, 1)),
            EmbedParams::seeded(c2, derive_seed(embed_seed, 2)),
        ];
        let encoder_queries = [
            Conv2d::seeded(3, c0, 1, 1, s(10)),
            Conv2d::seeded(hidden, c1, 1, 1, s(11)),
            Conv2d::seeded(hidden, c2, 1, 1, s(12)),
        ];
        let decoder_queries = [
            Conv2d::seeded(hidden, c0, 1, 1, s(20)),
            Conv2d::seeded(hidden, c1, 1, 1, s(21)),
            Conv2d::seeded(hidden, c2, 1, 1, s(22)),
        ];
        let encoder = [
            Conv2d::seeded(3 + 2 * c0, hidden, 3, 2, s(30)),
            Conv2d::seeded(hidden + 2 * c1, hidden, 3, 2, s(31)),
            Conv2d::seeded(hidden + 2 * c2, hidden, 3, 2, s(32)),
            Conv2d::seeded(hidden, latent, 3, 2, s(33)),
        ];
        let decoder = [
            Upsample2x::seeded(latent, hidden, s(40)),
            Upsample2x::seeded(hidden, hidden, s(41)),
            Upsample2x::seeded(hidden + 2 * c2, hidden, s(42)),
            Upsample2x::seeded(hidden + 2 * c1, hidden, s(43)),
        ];
        let mut params = Self {
            config,
            pyramid,
            embed,
            encoder_queries,
            decoder_queries,
            encoder,
            decoder,
            reconstruct: Conv2d::seeded(hidden + 2 * c0, 3, 3, 1, s(50)),
        };
        params.structure_reconstruction(reference_channels);
        Ok(params)
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn mode(&self) -> AblationMode {
        self.config.mode
    }

    pub fn pyramid(&self) -> &PyramidExtractor<T> {
        &self.pyramid
    }

    /// Splits the reconstruction kernel into small random feature taps and
    /// context taps equal to a readout of the level-0 projection. Each
    /// context family the decoder uses gets an equal share of the readout.
    fn structure_reconstruction(&mut self, reference_channels: usize) {
        let hidden = self.config.channels.hidden;
        let c0 = self.config.channels.contexts[0];
        let conv = &mut self.reconstruct;
        let in_ch = conv.in_channels;
        for o in 0..3 {
            for i in 0..in_ch {
                for t in 0..9 {
                    let w = &mut conv.weight[(o * in_ch + i) * 9 + t];
                    *w = if i < hidden {
                        *w * T::lit(RESIDUAL_GAIN)
                    } else {
                        T::zero()
                    };
                }
            }
            conv.bias[o] = T::zero();
        }

        let mode = self.config.mode;
        let shares = [mode.local(), mode.global_decoder()];
        let active = shares.iter().filter(|&&on| on).count();
        if active == 0 {
            return;
        }
        let Some((readout, offset)) = projection_readout(&self.pyramid, reference_channels) else {
            return;
        };
        let gain = 1.0 / active as f64;
        for (slot, on) in shares.into_iter().enumerate() {
            if !on {
                continue;
            }
            let base = hidden + slot * c0;
            for o in 0..3 {
                for i in 0..c0 {
                    // centre tap of the 3×3 kernel
                    conv.weight[(o * in_ch + base + i) * 9 + 4] = T::lit(gain * readout[o][i]);
                }
            }
        }
        for o in 0..3 {
            conv.bias[o] = T::lit(-offset[o]);
        }
    }
}

/// Rows `R` (3×C₀) and offset `R·b` such that `R·(P·x + b) − R·b = x` for
/// the level-0 projection `P·x + b`, using the Moore-Penrose left inverse.
/// Output channel `k` reads reference channel `k mod C_ref`. Returns `None`
/// when `P` has no left inverse.
fn projection_readout<T: Real>(
    pyramid: &PyramidExtractor<T>,
    reference_channels: usize,
) -> Option<([Vec<f64>; 3], [f64; 3])> {
    let proj = pyramid.level0_projection();
    let (rows, cols) = (proj.out_channels, reference_channels);
    let p = |r: usize, c: usize| proj.weight[r * cols + c].as_f64();
    // Gram matrix PᵀP (cols × cols), inverted by Gauss-Jordan.
    let mut aug = vec![vec![0.0f64; 2 * cols]; cols];
    for i in 0..cols {
        for j in 0..cols {
            aug[i][j] = (0..rows).map(|r| p(r, i) * p(r, j)).sum();
        }
        aug[i][cols + i] = 1.0;
    }
    for col in 0..cols {
        let pivot = (col..cols).max_by(|&a, &b| aug[a][col].abs().total_cmp(&aug[b][col].abs()))?;
        if aug[pivot][col].abs() < 1e-12 {
            return None;
        }
        aug.swap(col, pivot);
        let d = aug[col][col];
        aug[col].iter_mut().for_each(|v| *v /= d);
        for r in 0..cols {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    for k in 0..2 * cols {
                        aug[r][k] -= f * aug[col][k];
                    }
                }
            }
        }
    }
    let readout_row = |k: usize| -> Vec<f64> {
        let src = k % cols;
        (0..rows)
            .map(|r| (0..cols).map(|j| aug[src][cols + j] * p(r, j)).sum())
            .collect()
    };
    let readout = [readout_row(0), readout_row(1), readout_row(2)];
    let bias: Vec<f64> = proj.bias.iter().map(|b| b.as_f64()).collect();
    let offset = [0, 1, 2].map(|o| readout[o].iter().zip(&bias).map(|(r, b)| r * b).sum());
    Some((readout, offset))
}

/// Rounds half away from zero.
pub fn quantize<T: Real>(pre: &Tensor<T>) -> Result<Tensor<T>> {
    pre.map(|v| v.round())
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Probability mass of integer `k` under a zero-mean Gaussian of scale
/// `sigma` integrated over `[k − ½, k + ½]`. Evaluated in the lower tail,
/// where the CDF difference does not cancel.
fn bin_probability(k: f64, sigma: f64) -> f64 {
    let a = k.abs();
    std_normal_cdf((-a + 0.5) / sigma) - std_normal_cdf((-a - 0.5) / sigma)
}

/// Estimated bits of a quantized latent under a factorized Gaussian model.
pub fn estimate_rate<T: Real>(latent: &Latent<T>, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("rate model scale {sigma} must be > 0")));
    }
    Ok(latent
        .quantized
        .data()
        .iter()
        .map(|v| -bin_probability(v.as_f64(), sigma).max(f64::MIN_POSITIVE).log2())
        .sum())
}

fn slot<T: Real>(
    ctx: Option<&Tensor<T>>,
    channels: usize,
    h: usize,
    w: usize,
    what: &str,
) -> Result<Tensor<T>> {
    match ctx {
        Some(t) => {
            if t.dims() != [channels, h, w] {
                return Err(Error::shape(format!(
                    "{what} context {:?} does not match expected {:?}",
                    t.dims(),
                    [channels, h, w]
                )));
            }
            Ok(t.clone())
        }
        None => Tensor::zeros(&[channels, h, w]),
    }
}

fn require<'a, X>(x: Option<&'a X>, needed: bool, what: &str, mode: AblationMode) -> Result<Option<&'a X>> {
    match (needed, x) {
        (true, None) => Err(Error::shape(format!("mode {mode} needs {what} contexts"))),
        (true, some) => Ok(some),
        (false, _) => Ok(None),
    }
}

fn check_frame(frame: &Tensor<impl Real>) -> Result<(usize, usize)> {
    let (c, h, w) = frame.chw()?;
    if c != 3 {
        return Err(Error::shape(format!("frames need 3 channels, got {c}")));
    }
    if h % 16 != 0 || w % 16 != 0 || h == 0 || w == 0 {
        return Err(Error::shape(format!(
            "frame {h}×{w} is not a multiple of 16; pad it first"
        )));
    }
    Ok((h, w))
}

fn activate<T: Real>(mut t: Tensor<T>) -> Tensor<T> {
    nn::leaky_relu(&mut t);
    t
}

/// Encoder: returns the pre-quantization latent.
pub fn contextual_encode<T: Real>(
    frame: &Tensor<T>,
    ctx: &Contexts<'_, T>,
    params: &CodecParams<T>,
) -> Result<Tensor<T>> {
    contextual_encode_with(frame, ctx, params, Exec::default())
}

pub fn contextual_encode_with<T: Real>(
    frame: &Tensor<T>,
    ctx: &Contexts<'_, T>,
    params: &CodecParams<T>,
    exec: Exec,
) -> Result<Tensor<T>> {
    let (h, w) = check_frame(frame)?;
    let mode = params.mode();
    let local = require(ctx.local, mode.local(), "local", mode)?;
    let global = require(ctx.global_source, mode.global_encoder(), "global", mode)?;
    let widths = params.config.channels.contexts;

    let mut x = frame.clone();
    for s in 0..3 {
        let (sh, sw) = (h >> s, w >> s);
        let l = slot(local.map(|l| &l[s]), widths[s], sh, sw, "local")?;
        let g = match global {
            Some(src) => {
                let query = params.encoder_queries[s].forward_with(&x, exec)?;
                global_context_with(&query, src.level(s), &params.embed[s], exec)?
            }
            None => Tensor::zeros(&[widths[s], sh, sw])?,
        };
        x = activate(params.encoder[s].forward_with(&concat_channels(&[&x, &l, &g])?, exec)?);
    }
    params.encoder[3].forward_with(&x, exec)
}

/// Decoder: returns a frame clamped to `[0, 1]`.
pub fn contextual_decode<T: Real>(
    latent: &Latent<T>,
    ctx: &Contexts<'_, T>,
    params: &CodecParams<T>,
) -> Result<Tensor<T>> {
    contextual_decode_with(latent, ctx, params, Exec::default())
}

pub fn contextual_decode_with<T: Real>(
    latent: &Latent<T>,
    ctx: &Contexts<'_, T>,
    params: &CodecParams<T>,
    exec: Exec,
) -> Result<Tensor<T>> {
    let mode = params.mode();
    let local = require(ctx.local, mode.local(), "local", mode)?;
    let global = require(ctx.global_source, mode.global_decoder(), "global", mode)?;
    let widths = params.config.channels.contexts;
    let (lc, lh, lw) = latent.quantized.chw()?;
    if lc != params.config.channels.latent {
        return Err(Error::shape(format!(
            "latent has {lc} channels, codec expects {}",
            params.config.channels.latent
        )));
    }

    let mut x = activate(params.decoder[0].forward_with(&latent.quantized, exec)?);
    x = activate(params.decoder[1].forward_with(&x, exec)?);
    for s in (0..3).rev() {
        let (sh, sw) = (lh << (4 - s), lw << (4 - s));
        let l = slot(local.map(|l| &l[s]), widths[s], sh, sw, "local")?;
        let g = match global {
            Some(src) => {
                let query = params.decoder_queries[s].forward_with(&x, exec)?;
                global_context_with(&query, src.level(s), &params.embed[s], exec)?
            }
            None => Tensor::zeros(&[widths[s], sh, sw])?,
        };
        let joined = concat_channels(&[&x, &l, &g])?;
        x = if s > 0 {
            activate(params.decoder[4 - s].forward_with(&joined, exec)?)
        } else {
            params.reconstruct.forward_with(&joined, exec)?
        };
    }
    x.map(|v| v.max(T::zero()).min(T::one()))
}

/// Output of [`code_frame`].
#[derive(Debug, Clone)]
pub struct CodedFrame<T: Real = f32> {
    pub reconstruction: Tensor<T>,
    pub latent: Latent<T>,
    pub bits: f64,
    pub stats: FrameStats,
}

/// Codes one P-frame against a reference feature and decoded flow.
/// `stats.frame_index` is left at 0 for the caller to fill in.
pub fn code_frame<T: Real>(
    frame: &Tensor<T>,
    reference: &Tensor<T>,
    flow: &FlowField,
    params: &CodecParams<T>,
) -> Result<CodedFrame<T>> {
    code_frame_with(frame, reference, flow, params, Exec::default())
}

pub fn code_frame_with<T: Real>(
    frame: &Tensor<T>,
    reference: &Tensor<T>,
    flow: &FlowField,
    params: &CodecParams<T>,
    exec: Exec,
) -> Result<CodedFrame<T>> {
    let (h, w) = check_frame(frame)?;
    let (_, rh, rw) = reference.chw()?;
    if (rh, rw) != (h, w) {
        return Err(Error::shape(format!(
            "reference {rh}×{rw} does not match frame {h}×{w}"
        )));
    }
    let pyramid = params.pyramid.extract(reference, exec)?;
    let local = local_contexts_with(&pyramid, flow, exec)?;
    let ctx = Contexts {
        local: Some(&local),
        global_source: Some(&pyramid),
    };
    let latent = Latent::from_pre(contextual_encode_with(frame, &ctx, params, exec)?)?;
    let bits = estimate_rate(&latent, params.config.sigma)?;
    let reconstruction = contextual_decode_with(&latent, &ctx, params, exec)?;
    let distortion = mse(frame, &reconstruction)?;
    let stats = FrameStats {
        frame_index: 0,
        total_bpp: bits / (h * w) as f64,
        motion_bpp: 0.0,
        mse: distortion,
        psnr: psnr(frame, &reconstruction, 1.0)?,
    };
    Ok(CodedFrame {
        reconstruction,
        latent,
        bits,
        stats,
    })
}

/// Codes a sequence of P-frames. Frame `t` uses the previous reconstruction
/// as its reference feature, except at multiples of `intra_period` (and at
/// `t = 0`) where `reference` is used. `flows` holds one flow per frame, or a
/// single flow reused for every frame.
pub fn code_sequence<T: Real>(
    frames: &[Tensor<T>],
    reference: &Tensor<T>,
    flows: &[FlowField],
    intra_period: usize,
    params: &CodecParams<T>,
) -> Result<Vec<CodedFrame<T>>> {
    if flows.is_empty() || (flows.len() != 1 && flows.len() != frames.len()) {
        return Err(Error::Invalid(format!(
            "{} flows supplied for {} frames",
            flows.len(),
            frames.len()
        )));
    }
    if intra_period == 0 {
        return Err(Error::Invalid("intra period must be positive".into()));
    }
    let (rc, _, _) = reference.chw()?;
    let mut out: Vec<CodedFrame<T>> = Vec::with_capacity(frames.len());
    for (t, frame) in frames.iter().enumerate() {
        let flow = &flows[if flows.len() == 1 { 0 } else { t }];
        let restart = t % intra_period == 0 || rc != 3;
        let reference = match out.last() {
            Some(prev) if !restart => &prev.reconstruction,
            _ => reference,
        };
        let mut coded = code_frame(frame, reference, flow, params)?;
        coded.stats.frame_index = t;
        out.push(coded);
    }
    Ok(out)
}
