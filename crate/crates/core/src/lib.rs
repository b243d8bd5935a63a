//! Joint local and global motion compensation kernels.
//!
//! Local contexts come from bilinear backward warping of a multi-scale
//! feature pyramid by a flow field ([`motion`]). Global contexts come from a
//! cross-attention whose softmax is split into a row softmax on the query and
//! a column softmax on the reference, which makes the cost linear in the
//! number of tokens ([`attention`]). [`codec`] conditions a seeded, untrained
//! encoder/decoder on either family, [`metrics`] carries the rate-distortion
//! vocabulary, and [`bench`] measures the complexity of both attention forms.

pub mod attention;
pub mod bench;
pub mod codec;
pub mod container;
pub mod error;
pub mod frames;
pub mod metrics;
pub mod motion;
pub mod nn;
pub mod par;
pub mod tensor;

pub use error::{Error, ErrorClass, Result};
pub use par::Exec;
pub use tensor::{Real, Tensor, Tensor32, Tensor64};
