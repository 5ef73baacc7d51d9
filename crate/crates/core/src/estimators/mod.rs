//! Monte Carlo estimators for the left tail of the maximum, the hard-wall
//! probability and the conditional mean height, plus the deterministic
//! bound evaluators that go with them.
//!
//! All estimators take `(samples, seed, shards)` and are pure functions of
//! those; see [`shard`] for the fan-out contract.

mod bounds;
mod hardwall;
mod record;
mod sandwich;
pub mod shard;
mod tail;

pub use bounds::{
    eval_lefttail_bounds, eval_positivity_bounds, lambda_prime_residual, log_sum_lemma, solve_lambda_prime,
    solve_lambda_prime_dn, BoundParams, LeftTailBounds, LemmaSum, PositivityBounds,
};
pub use hardwall::{
    estimate_conditional_mean, estimate_conditional_mean_tilted, estimate_positivity, PositivityMethod,
};
pub use record::{sig17, EstimateRecord, EstimatorKind, Quantity, Sig17};
pub use sandwich::{theorem2_sandwich, SandwichFit, RESIDUAL_BOUND};
pub use tail::{estimate_max_cdf, tilted_left_tail, tilted_levels, FieldModel, TailCurve, TiltedSource};
