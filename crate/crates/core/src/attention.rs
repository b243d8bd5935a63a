//! Cross-attention between a query map and a reference (key/value) map.
//!
//! Feature maps are flattened to token matrices with spatial positions as
//! rows and channels as columns, so a `C×H×W` map becomes `(H·W)×C`.
//!
//! Two operators are provided:
//!
//! * [`vanilla_cross_attention`] computes `softmax_rows(Q·Kᵀ)·K`. Materializes the
//!   `L_q×L_k` similarity matrix; time and memory are quadratic in tokens.
//! * [`efficient_cross_attention`] computes `softmax_rows(Q)·(softmax_cols(K)ᵀ·K)`.
//!   The `C×C` context is formed first, so cost is `O(C²·L)` and no buffer
//!   proportional to `L_q·L_k` is ever allocated.
//!
//! The key and value are the same tensor and no scaling or learned Q/K/V
//! projection is applied; the only nonlinear transform is [`drb_embed`].

use crate::error::{Error, Result};
use crate::nn::{self, Conv2d};
use crate::par::Exec;
use crate::tensor::{
    matmul_backward, matmul_transpose_a, matmul_transpose_b, matmul_with, softmax_cols_backward,
    softmax_cols_with, softmax_rows_backward, softmax_rows_with, Real, Tensor,
};

/// Default cap on the number of entries [`materialize_efficient_similarity`]
/// may allocate.
pub const DEFAULT_SIMILARITY_CAP: usize = 1 << 24;

/// Query tokens (`L_q×C`) and key/value tokens (`L_k×C`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionInputs<T: Real = f32> {
    query: Tensor<T>,
    keyvalue: Tensor<T>,
}

impl<T: Real> AttentionInputs<T> {
    pub fn new(query: Tensor<T>, keyvalue: Tensor<T>) -> Result<Self> {
        let (_, cq) = query.matrix_dims()?;
        let (_, ck) = keyvalue.matrix_dims()?;
        if cq != ck {
            return Err(Error::shape(format!(
                "query {:?} and key/value {:?} have different channel counts",
                query.dims(),
                keyvalue.dims()
            )));
        }
        Ok(Self { query, keyvalue })
    }

    pub fn query(&self) -> &Tensor<T> {
        &self.query
    }

    pub fn keyvalue(&self) -> &Tensor<T> {
        &self.keyvalue
    }

    pub fn query_len(&self) -> usize {
        self.query.dims()[0]
    }

    pub fn key_len(&self) -> usize {
        self.keyvalue.dims()[0]
    }

    pub fn channels(&self) -> usize {
        self.query.dims()[1]
    }

    pub fn into_parts(self) -> (Tensor<T>, Tensor<T>) {
        (self.query, self.keyvalue)
    }
}

/// Output and similarity matrix of [`vanilla_cross_attention`].
#[derive(Debug, Clone)]
pub struct VanillaOutput<T: Real> {
    pub output: Tensor<T>,
    pub similarity: Tensor<T>,
}

pub fn vanilla_cross_attention<T: Real>(inp: &AttentionInputs<T>) -> Result<VanillaOutput<T>> {
    vanilla_cross_attention_with(inp, Exec::default())
}

pub fn vanilla_cross_attention_with<T: Real>(
    inp: &AttentionInputs<T>,
    exec: Exec,
) -> Result<VanillaOutput<T>> {
    let logits = matmul_transpose_b(&inp.query, &inp.keyvalue, exec)?;
    let similarity = softmax_rows_with(&logits, exec)?;
    drop(logits);
    let output = matmul_with(&similarity, &inp.keyvalue, exec)?;
    Ok(VanillaOutput { output, similarity })
}

pub fn efficient_cross_attention<T: Real>(inp: &AttentionInputs<T>) -> Result<Tensor<T>> {
    efficient_cross_attention_with(inp, Exec::default())
}

pub fn efficient_cross_attention_with<T: Real>(
    inp: &AttentionInputs<T>,
    exec: Exec,
) -> Result<Tensor<T>> {
    let query = softmax_rows_with(&inp.query, exec)?;
    let context = {
        let key = softmax_cols_with(&inp.keyvalue, exec)?;
        matmul_transpose_a(&key, &inp.keyvalue, exec)?
    };
    matmul_with(&query, &context, exec)
}

/// Forms `softmax_rows(Q)·softmax_cols(K)ᵀ` explicitly. Test and inspection
/// path only; refuses to allocate more than [`DEFAULT_SIMILARITY_CAP`] entries.
pub fn materialize_efficient_similarity<T: Real>(inp: &AttentionInputs<T>) -> Result<Tensor<T>> {
    materialize_efficient_similarity_capped(inp, DEFAULT_SIMILARITY_CAP)
}

pub fn materialize_efficient_similarity_capped<T: Real>(
    inp: &AttentionInputs<T>,
    cap: usize,
) -> Result<Tensor<T>> {
    let entries = inp.query_len().saturating_mul(inp.key_len());
    if entries > cap {
        return Err(Error::Resource(format!(
            "similarity matrix {}×{} has {entries} entries, cap is {cap}",
            inp.query_len(),
            inp.key_len()
        )));
    }
    let exec = Exec::default();
    let query = softmax_rows_with(&inp.query, exec)?;
    let key = softmax_cols_with(&inp.keyvalue, exec)?;
    matmul_transpose_b(&query, &key, exec)
}

/// Gradients of `efficient_cross_attention` with respect to the query and
/// key/value tokens, given the upstream gradient `d_out` (`L_q×C`).
pub fn efficient_attention_backward<T: Real>(
    inp: &AttentionInputs<T>,
    d_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if d_out.dims() != inp.query.dims() {
        return Err(Error::shape(format!(
            "d_out {:?} does not match output shape {:?}",
            d_out.dims(),
            inp.query.dims()
        )));
    }
    let exec = Exec::default();
    let query = softmax_rows_with(&inp.query, exec)?;
    let key = softmax_cols_with(&inp.keyvalue, exec)?;
    let key_t = key.transpose()?;
    let context = matmul_with(&key_t, &inp.keyvalue, exec)?;

    let (d_query_soft, d_context) = matmul_backward(&query, &context, d_out)?;
    let (d_key_t, d_value) = matmul_backward(&key_t, &inp.keyvalue, &d_context)?;

    let d_query = softmax_rows_backward(&query, &d_query_soft)?;
    let d_key = softmax_cols_backward(&key, &d_key_t.transpose()?)?;
    Ok((d_query, d_key.add(&d_value)?))
}

/// Gradients of `vanilla_cross_attention(..).output`.
pub fn vanilla_attention_backward<T: Real>(
    inp: &AttentionInputs<T>,
    d_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if d_out.dims() != inp.query.dims() {
        return Err(Error::shape(format!(
            "d_out {:?} does not match output shape {:?}",
            d_out.dims(),
            inp.query.dims()
        )));
    }
    let fwd = vanilla_cross_attention(inp)?;
    let (d_sim, d_value) = matmul_backward(&fwd.similarity, &inp.keyvalue, d_out)?;
    let d_logits = softmax_rows_backward(&fwd.similarity, &d_sim)?;
    let key_t = inp.keyvalue.transpose()?;
    let (d_query, d_key_t) = matmul_backward(&inp.query, &key_t, &d_logits)?;
    Ok((d_query, d_key_t.transpose()?.add(&d_value)?))
}

/// Weights of the residual bottleneck used for nonlinear embedding:
/// 1×1 conv (C → C/2), depthwise 3×3 conv, leaky activation, 1×1 conv
/// (C/2 → C), added back onto the input.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbedParams<T: Real = f32> {
    pub channels: usize,
    pub seed: u64,
    reduce: Conv2d<T>,
    depthwise: Conv2d<T>,
    expand: Conv2d<T>,
}

/// Bound of the uniform draw for embedding weights.
pub const EMBED_INIT_BOUND: f64 = 0.1;

impl<T: Real> EmbedParams<T> {
    pub fn seeded(channels: usize, seed: u64) -> Self {
        assert!(channels >= 1, "embedding needs at least one channel");
        let mid = (channels / 2).max(1);
        let b = EMBED_INIT_BOUND;
        Self {
            channels,
            seed,
            reduce: Conv2d::uniform(channels, mid, 1, 1, 1, b, nn::derive_seed(seed, 1)),
            depthwise: Conv2d::uniform(mid, mid, 3, 1, mid, b, nn::derive_seed(seed, 2)),
            expand: Conv2d::uniform(mid, channels, 1, 1, 1, b, nn::derive_seed(seed, 3)),
        }
    }

    /// All-zero branch: the embedding is the identity map.
    pub fn zeros(channels: usize) -> Self {
        let p = Self::seeded(channels, 0);
        Self {
            reduce: p.reduce.zeroed(),
            depthwise: p.depthwise.zeroed(),
            expand: p.expand.zeroed(),
            ..p
        }
    }

    pub fn bottleneck_channels(&self) -> usize {
        self.reduce.out_channels
    }

    fn embed_map(&self, map: &Tensor<T>, exec: Exec) -> Result<Tensor<T>> {
        let (c, _, _) = map.chw()?;
        if c != self.channels {
            return Err(Error::shape(format!(
                "embedding expects {} channels, got {c}",
                self.channels
            )));
        }
        let mut branch = self.reduce.forward_with(map, exec)?;
        branch = self.depthwise.forward_with(&branch, exec)?;
        nn::leaky_relu(&mut branch);
        branch = self.expand.forward_with(&branch, exec)?;
        map.add(&branch)
    }
}

/// Residual nonlinear embedding of `L×C` tokens laid out on a
/// `height×width` grid (`L = height·width`). Output has the input's shape.
pub fn drb_embed<T: Real>(
    x: &Tensor<T>,
    height: usize,
    width: usize,
    params: &EmbedParams<T>,
) -> Result<Tensor<T>> {
    let map = Tensor::from_tokens(x, height, width)?;
    params.embed_map(&map, Exec::default())?.to_tokens()
}

/// Global context for one scale: embeds the query-side `middle` map and the
/// reference `propagated` map, attends from the former to the latter with
/// the efficient operator, and returns a map shaped like `middle`.
pub fn global_context<T: Real>(
    middle: &Tensor<T>,
    propagated: &Tensor<T>,
    params: &EmbedParams<T>,
) -> Result<Tensor<T>> {
    global_context_with(middle, propagated, params, Exec::default())
}

pub fn global_context_with<T: Real>(
    middle: &Tensor<T>,
    propagated: &Tensor<T>,
    params: &EmbedParams<T>,
    exec: Exec,
) -> Result<Tensor<T>> {
    middle.expect_same_dims(propagated, "global_context")?;
    let (_, h, w) = middle.chw()?;
    let query = params.embed_map(middle, exec)?.to_tokens()?;
    let keyvalue = params.embed_map(propagated, exec)?.to_tokens()?;
    let out = efficient_cross_attention_with(&AttentionInputs::new(query, keyvalue)?, exec)?;
    Tensor::from_tokens(&out, h, w)
}
