//! Estimators for the all-leaves-nonnegative event.
//!
//! With `phi = phi_tilde + X` and `X ~ N(0, sigma^2)` independent of
//! `phi_tilde`, every leaf is nonnegative exactly when `max phi_tilde <= X`.
//! Conditioning on `M = max phi_tilde` turns the indicator into `Q(M / sigma)`
//! and the leaf average into `E(X; X >= M) = sigma * density(M / sigma)`.

use std::time::Instant;

use super::record::{EstimateRecord, EstimatorKind, Quantity};
use super::shard::{check_run, run_shards, LogMean, LogRatio, MeanVar};
use super::tail::{FieldModel, TiltedSource};
use crate::brw::BrwSampler;
use crate::error::{Error, Result};
use crate::field::NormalSource;
use crate::gaussian::{log_normal_density, log_normal_tail_q};
use crate::rng::RngStream;
use crate::ssbrw::PhiTildeSampler;
use crate::tree::TreeShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositivityMethod {
    /// Fraction of BRW samples with every leaf nonnegative.
    Naive,
    /// Mean of `Q(max phi_tilde / sigma)`.
    Conditional,
}

pub fn estimate_positivity(
    shape: &TreeShape,
    samples: u64,
    seed: u64,
    shards: u32,
    method: PositivityMethod,
) -> Result<EstimateRecord> {
    check_run(samples, 100, shards)?;
    let start = Instant::now();
    let mut r = match method {
        PositivityMethod::Naive => {
            let parts = run_shards(samples, seed, shards, |mut stream, count| {
                let mut sampler = BrwSampler::<f64>::new(*shape);
                let mut acc = MeanVar::default();
                for _ in 0..count {
                    acc.push(f64::from(u8::from(sampler.extremes(&mut stream).min >= 0.0)));
                }
                acc
            });
            let mut acc = MeanVar::default();
            parts.iter().for_each(|p| acc.merge(p));
            let p = acc.mean;
            let n = samples as f64;
            let mut r =
                EstimateRecord::new(Quantity::Positivity, EstimatorKind::Naive, p, (p * (1.0 - p) / n).sqrt(), samples);
            r.model = Some(FieldModel::Brw.to_string());
            r.log_value = Some(p.ln());
            r.log_stderr = Some(((1.0 - p) / (p * n)).sqrt());
            r
        }
        PositivityMethod::Conditional => {
            let sigma = PhiTildeSampler::<f64>::new(*shape)?.sigma();
            let parts = run_shards(samples, seed, shards, |mut stream, count| {
                let mut sampler = PhiTildeSampler::<f64>::new(*shape).expect("validated above");
                let mut acc = LogMean::default();
                for _ in 0..count {
                    let m = sampler.max_and_shared(&mut stream).0;
                    acc.push(log_normal_tail_q(m / sigma));
                }
                acc
            });
            let mut acc = LogMean::default();
            parts.iter().for_each(|p| acc.merge(p));
            let mut r = EstimateRecord::new(
                Quantity::Positivity,
                EstimatorKind::Conditional,
                acc.mean(),
                acc.stderr(),
                samples,
            );
            r.model = Some(FieldModel::PhiTilde.to_string());
            r.log_value = Some(acc.log_mean());
            r.log_stderr = Some(acc.relative_stderr());
            r
        }
    };
    r = r.run(Some(*shape), seed, shards);
    r.wall_clock = start.elapsed().as_secs_f64();
    Ok(r)
}

fn ratio_pass<S: NormalSource + Reset>(
    mut sampler: PhiTildeSampler<f64>,
    mut src: S,
    count: u64,
    sigma: f64,
    log_weight: impl Fn(&S) -> f64,
) -> LogRatio {
    let log_sigma = sigma.ln();
    let mut acc = LogRatio::default();
    for _ in 0..count {
        src.reset();
        let a = sampler.max_and_shared(&mut src).0 / sigma;
        let log_q = log_normal_tail_q(a);
        // E(X | X >= M) = sigma * density(a) / Q(a)
        let h = (log_sigma + log_normal_density(a) - log_q).exp();
        acc.push(log_weight(&src) + log_q, h);
    }
    acc
}

trait Reset {
    fn reset(&mut self);
}

impl Reset for RngStream {
    #[inline(always)]
    fn reset(&mut self) {}
}

impl Reset for TiltedSource {
    #[inline(always)]
    fn reset(&mut self) {
        self.reset_weight();
    }
}

/// Ratio estimate of `E(X | max phi_tilde <= X)`, the mean leaf height given
/// that every leaf is nonnegative.
pub fn estimate_conditional_mean(shape: &TreeShape, samples: u64, seed: u64, shards: u32) -> Result<EstimateRecord> {
    estimate_conditional_mean_tilted(shape, 0.0, 0, samples, seed, shards)
}

/// Same ratio with the draws at the top `levels` levels shifted by `-tilt`
/// and reweighted; `tilt = 0` reproduces [`estimate_conditional_mean`]
/// exactly.
pub fn estimate_conditional_mean_tilted(
    shape: &TreeShape,
    tilt: f64,
    levels: u32,
    samples: u64,
    seed: u64,
    shards: u32,
) -> Result<EstimateRecord> {
    check_run(samples, 1000, shards)?;
    if !(tilt >= 0.0) || !tilt.is_finite() {
        return Err(Error::InvalidArgument(format!("tilt must be nonnegative, got {tilt}")));
    }
    let sigma = PhiTildeSampler::<f64>::new(*shape)?.sigma();
    let start = Instant::now();
    let levels = levels.min(shape.n());
    let parts = run_shards(samples, seed, shards, |stream, count| {
        let sampler = PhiTildeSampler::<f64>::new(*shape).expect("validated above");
        if tilt == 0.0 || levels == 0 {
            ratio_pass(sampler, stream, count, sigma, |_| 0.0)
        } else {
            let src = TiltedSource::new(stream, tilt, levels);
            ratio_pass(sampler, src, count, sigma, |s: &TiltedSource| s.log_weight())
        }
    });
    let mut acc = LogRatio::default();
    parts.iter().for_each(|p| acc.merge(p));
    let floor = 1e-300f64.ln();
    if acc.shift < floor {
        return Err(Error::DenominatorUnderflow { max_log_weight: acc.shift });
    }
    let mut r =
        EstimateRecord::new(Quantity::ConditionalMean, EstimatorKind::Conditional, acc.ratio(), acc.stderr(), samples)
            .run(Some(*shape), seed, shards);
    r.model = Some(FieldModel::PhiTilde.to_string());
    r.ess = Some(acc.ess());
    if tilt > 0.0 {
        r.tilt = Some(tilt);
    }
    if acc.ess() < 10.0 {
        r.warning = Some(format!("effective sample size {:.1} is below 10", acc.ess()));
    }
    r.wall_clock = start.elapsed().as_secs_f64();
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(d: u32, n: u32) -> TreeShape {
        TreeShape::new(d, n).unwrap()
    }

    #[test]
    fn deterministic_per_seed_and_shards() {
        let a = estimate_positivity(&s(2, 3), 5000, 9, 4, PositivityMethod::Conditional).unwrap();
        let b = estimate_positivity(&s(2, 3), 5000, 9, 4, PositivityMethod::Conditional).unwrap();
        assert_eq!((a.value, a.stderr), (b.value, b.stderr));
        assert_eq!(a.to_json(), b.to_json());
        let c = estimate_conditional_mean(&s(2, 3), 5000, 9, 4).unwrap();
        let d = estimate_conditional_mean(&s(2, 3), 5000, 9, 4).unwrap();
        assert_eq!(c.to_json(), d.to_json());
    }

    #[test]
    fn zero_tilt_is_the_plain_ratio() {
        let a = estimate_conditional_mean(&s(2, 4), 2000, 3, 2).unwrap();
        let b = estimate_conditional_mean_tilted(&s(2, 4), 0.0, 3, 2000, 3, 2).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn small_budget_rejected() {
        assert!(estimate_positivity(&s(2, 1), 99, 1, 1, PositivityMethod::Naive).is_err());
        assert!(estimate_conditional_mean(&s(2, 1), 999, 1, 1).is_err());
        assert!(estimate_positivity(&s(2, 1), 100, 1, 0, PositivityMethod::Naive).is_err());
    }

    #[test]
    fn log_value_tracks_value() {
        let r = estimate_positivity(&s(2, 4), 2000, 1, 2, PositivityMethod::Conditional).unwrap();
        assert!((r.log_value.unwrap().exp() - r.value).abs() <= 1e-12 * r.value);
        assert!((r.log_stderr.unwrap() * r.value - r.stderr).abs() <= 1e-12 * r.value);
    }

    #[test]
    fn deep_tree_reports_log_scale() {
        let r = estimate_positivity(&s(2, 14), 100, 2, 1, PositivityMethod::Conditional).unwrap();
        assert!(r.log_value.unwrap() < -50.0 && r.log_value.unwrap().is_finite());
    }
}
