//! Flow-based local compensation.
//!
//! A decoded flow field warps each level of a feature pyramid (rescaled to
//! that level) into local contexts. Warping is backward and bilinear with
//! clamp-to-edge sampling, so a spatially constant feature is a fixed point
//! of any bounded flow.

mod block_match;
mod flow;
mod pyramid;
mod warp;

pub use block_match::{block_match, block_match_with};
pub use flow::{downsample_flow, synth_flow, FlowField, SynthMotion, DEFAULT_FLOW_CAP, FLO_MAGIC};
pub use pyramid::{
    build_pyramid, local_contexts, local_contexts_with, FeaturePyramid, PyramidConfig,
    PyramidExtractor,
};
pub use warp::{bilinear_warp, bilinear_warp_backward, bilinear_warp_displacement};
