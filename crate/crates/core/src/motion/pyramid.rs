use crate::error::{Error, Result};
use crate::nn::{self, avg_pool, Conv2d};
use crate::par::Exec;
use crate::tensor::{Real, Tensor};

use super::{bilinear_warp_displacement, downsample_flow, FlowField};

/// Channel counts and weight seed of the three pyramid levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PyramidConfig {
    pub channels: [usize; 3],
    pub seed: u64,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self {
            channels: [32, 48, 64],
            seed: 0,
        }
    }
}

/// Feature maps at full, half and quarter resolution (ceiling extents).
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid<T: Real = f32> {
    pub levels: [Tensor<T>; 3],
}

impl<T: Real> FeaturePyramid<T> {
    pub fn level(&self, scale: usize) -> &Tensor<T> {
        &self.levels[scale]
    }

    pub fn map(&self, f: impl Fn(&Tensor<T>) -> Result<Tensor<T>>) -> Result<Self> {
        let [a, b, c] = &self.levels;
        Ok(Self {
            levels: [f(a)?, f(b)?, f(c)?],
        })
    }
}

/// Seeded 1×1 projections taking an input with `in_channels` channels to the
/// configured level widths.
#[derive(Debug, Clone)]
pub struct PyramidExtractor<T: Real> {
    projections: [Conv2d<T>; 3],
}

impl<T: Real> PyramidExtractor<T> {
    pub fn new(in_channels: usize, config: &PyramidConfig) -> Self {
        let proj = |s: usize| {
            Conv2d::seeded(
                in_channels,
                config.channels[s],
                1,
                1,
                nn::derive_seed(config.seed, 0x50 + s as u64),
            )
        };
        Self {
            projections: [proj(0), proj(1), proj(2)],
        }
    }

    pub fn level0_projection(&self) -> &Conv2d<T> {
        &self.projections[0]
    }

    /// Level 0 projects the input; levels 1 and 2 project successive
    /// stride-2 2×2 average pools of it.
    pub fn extract(&self, propagated: &Tensor<T>, exec: Exec) -> Result<FeaturePyramid<T>> {
        let (_, h, w) = propagated.chw()?;
        if h < 4 || w < 4 {
            return Err(Error::shape(format!(
                "pyramid input {h}×{w} is smaller than 4×4"
            )));
        }
        let half = avg_pool(propagated, 2)?;
        let quarter = avg_pool(&half, 2)?;
        Ok(FeaturePyramid {
            levels: [
                self.projections[0].forward_with(propagated, exec)?,
                self.projections[1].forward_with(&half, exec)?,
                self.projections[2].forward_with(&quarter, exec)?,
            ],
        })
    }
}

pub fn build_pyramid<T: Real>(
    propagated: &Tensor<T>,
    config: &PyramidConfig,
) -> Result<FeaturePyramid<T>> {
    let (c, _, _) = propagated.chw()?;
    PyramidExtractor::new(c, config).extract(propagated, Exec::default())
}

/// Warps each pyramid level by the flow rescaled to that level.
pub fn local_contexts<T: Real>(
    pyramid: &FeaturePyramid<T>,
    flow: &FlowField,
) -> Result<[Tensor<T>; 3]> {
    local_contexts_with(pyramid, flow, Exec::default())
}

pub fn local_contexts_with<T: Real>(
    pyramid: &FeaturePyramid<T>,
    flow: &FlowField,
    exec: Exec,
) -> Result<[Tensor<T>; 3]> {
    let (_, h, w) = pyramid.levels[0].chw()?;
    if (flow.width(), flow.height()) != (w, h) {
        return Err(Error::shape(format!(
            "flow {}×{} does not match level-0 extent {w}×{h}",
            flow.width(),
            flow.height()
        )));
    }
    let warp = |s: usize| -> Result<Tensor<T>> {
        let scaled = downsample_flow(flow, 1 << s)?;
        bilinear_warp_displacement(&pyramid.levels[s], &scaled.to_tensor()?, exec)
    };
    Ok([warp(0)?, warp(1)?, warp(2)?])
}
