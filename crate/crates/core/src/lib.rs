//! Branching random walks on d-ary trees under a hard wall.
//!
//! The crate samples the BRW and its switching-sign decomposition
//! `phi = phi_tilde + X` (a zero-sum field plus one shared Gaussian), and
//! estimates the left tail of the maximum, the probability that every leaf is
//! nonnegative, and the conditional height of a typical leaf given that event.
//!
//! The field math is generic over [`Real`] (`f32`/`f64`); estimators, oracles
//! and record formats work in `f64`. Concrete aliases for both precisions are
//! exported at the crate root.

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brw;
pub mod error;
pub mod estimators;
pub mod field;
pub mod gaussian;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod ssbrw;
pub mod tree;
pub mod validate;

pub use error::{Error, Result};
pub use field::{NormalSource, SampleMode};
pub use rng::RngStream;
pub use scalar::Real;
pub use tree::{LeafId, TreeShape};

pub type CenteringF64 = brw::Centering<f64>;
pub type CenteringF32 = brw::Centering<f32>;
pub type BrwSampleF64 = brw::BrwSample<f64>;
pub type BrwSampleF32 = brw::BrwSample<f32>;
pub type BrwSamplerF64 = brw::BrwSampler<f64>;
pub type BrwSamplerF32 = brw::BrwSampler<f32>;
pub type ComparisonSampleF64 = brw::ComparisonSample<f64>;
pub type ComparisonSamplerF64 = brw::ComparisonSampler<f64>;
pub type SwitchMatrixF64 = ssbrw::SwitchMatrix<f64>;
pub type SwitchMatrixF32 = ssbrw::SwitchMatrix<f32>;
pub type SsbrwSampleF64 = ssbrw::SsbrwSample<f64>;
pub type SsbrwSampleF32 = ssbrw::SsbrwSample<f32>;
pub type PhiTildeSamplerF64 = ssbrw::PhiTildeSampler<f64>;
pub type PhiTildeSamplerF32 = ssbrw::PhiTildeSampler<f32>;
pub type SmallSpdMatrixF64 = gaussian::SmallSpdMatrix<f64>;
pub type LowerTriangularF64 = gaussian::LowerTriangular<f64>;
