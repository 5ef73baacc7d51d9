use std::time::Instant;

use super::record::{EstimateRecord, EstimatorKind, Quantity};
use super::shard::{check_run, run_shards, LogMean};
use crate::brw::{BrwSampler, Centering, ComparisonSampler};
use crate::error::{Error, Result};
use crate::field::NormalSource;
use crate::rng::RngStream;
use crate::ssbrw::PhiTildeSampler;
use crate::tree::TreeShape;

/// Which field's maximum to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldModel {
    Brw,
    PhiTilde,
    /// Comparison field with restarted subtrees of height `n_prime`.
    Comparison {
        n_prime: u32,
    },
}

impl std::fmt::Display for FieldModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FieldModel::Brw => f.write_str("brw"),
            FieldModel::PhiTilde => f.write_str("phi_tilde"),
            FieldModel::Comparison { n_prime } => write!(f, "comparison({n_prime})"),
        }
    }
}

/// Draws maxima of one model, reusing sampler scratch between draws.
pub(crate) enum MaxDrawer {
    Brw(BrwSampler<f64>),
    PhiTilde(PhiTildeSampler<f64>),
    Comparison(ComparisonSampler<f64>),
}

impl MaxDrawer {
    pub fn new(shape: TreeShape, model: FieldModel) -> Result<Self> {
        Ok(match model {
            FieldModel::Brw => MaxDrawer::Brw(BrwSampler::new(shape)),
            FieldModel::PhiTilde => MaxDrawer::PhiTilde(PhiTildeSampler::new(shape)?),
            FieldModel::Comparison { n_prime } => MaxDrawer::Comparison(ComparisonSampler::new(shape, n_prime)?),
        })
    }

    #[inline]
    pub fn max<S: NormalSource>(&mut self, src: &mut S) -> f64 {
        match self {
            MaxDrawer::Brw(s) => s.extremes(src).max,
            MaxDrawer::PhiTilde(s) => s.max_and_shared(src).0,
            MaxDrawer::Comparison(s) => s.sample(src).max,
        }
    }
}

/// Empirical distribution function of the maximum on a threshold grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TailCurve {
    pub thresholds: Vec<f64>,
    pub estimates: Vec<EstimateRecord>,
}

impl TailCurve {
    /// `threshold,log_estimate` rows; an empty bin gives `-inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,log_estimate\n");
        for (t, r) in self.thresholds.iter().zip(&self.estimates) {
            let log = if r.value > 0.0 { super::sig17(r.value.ln()) } else { "-inf".to_owned() };
            out.push_str(&format!("{},{log}\n", super::sig17(*t)));
        }
        out
    }
}

pub fn estimate_max_cdf(
    shape: &TreeShape,
    model: FieldModel,
    thresholds: &[f64],
    samples: u64,
    seed: u64,
    shards: u32,
) -> Result<TailCurve> {
    check_run(samples, 100, shards)?;
    if let Some(t) = thresholds.iter().find(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument(format!("threshold {t} is not finite")));
    }
    MaxDrawer::new(*shape, model)?;
    let mut grid = thresholds.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let start = Instant::now();
    let counts = run_shards(samples, seed, shards, |mut stream, count| {
        let mut drawer = MaxDrawer::new(*shape, model).expect("validated above");
        // hits[i]: maxima falling in (grid[i-1], grid[i]]
        let mut hits = vec![0u64; grid.len() + 1];
        for _ in 0..count {
            let m = drawer.max(&mut stream);
            hits[grid.partition_point(|&t| t < m)] += 1;
        }
        hits
    });
    let wall = start.elapsed().as_secs_f64();
    let mut cumulative = 0u64;
    let n = samples as f64;
    let estimates = grid
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            cumulative += counts.iter().map(|h| h[i]).sum::<u64>();
            let p = cumulative as f64 / n;
            let mut r =
                EstimateRecord::new(Quantity::MaxCdf, EstimatorKind::Naive, p, (p * (1.0 - p) / n).sqrt(), samples)
                    .run(Some(*shape), seed, shards);
            r.threshold = Some(t);
            r.model = Some(model.to_string());
            r.log_value = Some(p.ln());
            r.log_stderr = Some(((1.0 - p) / (p * n)).sqrt());
            r.wall_clock = wall;
            r
        })
        .collect();
    Ok(TailCurve { thresholds: grid, estimates })
}

/// Standard-normal source that shifts every draw at tree levels
/// `1..=levels` by `-tilt` and tracks the likelihood ratio of the shifted
/// draws against the untilted law. Draws at level 0 pass through.
#[derive(Debug, Clone)]
pub struct TiltedSource {
    stream: RngStream,
    tilt: f64,
    levels: u32,
    log_weight: f64,
}

impl TiltedSource {
    pub fn new(stream: RngStream, tilt: f64, levels: u32) -> Self {
        Self { stream, tilt, levels, log_weight: 0.0 }
    }

    /// Log likelihood ratio accumulated since the last reset.
    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    pub fn reset_weight(&mut self) {
        self.log_weight = 0.0;
    }

    pub fn stream(&self) -> &RngStream {
        &self.stream
    }
}

impl NormalSource for TiltedSource {
    #[inline]
    fn standard_normal(&mut self, level: u32) -> f64 {
        let z = self.stream.next_gaussian();
        if level == 0 || level > self.levels {
            return z;
        }
        let shifted = z - self.tilt;
        // N(0,1) density over N(-tilt,1) density at the shifted draw
        self.log_weight += self.tilt * shifted + 0.5 * self.tilt * self.tilt;
        shifted
    }
}

/// Number of top levels that get tilted: `ceil(c * lambda)`, clamped to the tree.
pub fn tilted_levels(shape: &TreeShape, lambda: f64, centering: &Centering<f64>) -> u32 {
    ((centering.c * lambda).ceil().max(1.0) as u32).min(shape.n())
}

/// Importance-sampling estimate of `P(max phi_tilde <= m_n - lambda)`.
pub fn tilted_left_tail(
    shape: &TreeShape,
    lambda: f64,
    tilt: f64,
    samples: u64,
    seed: u64,
    shards: u32,
) -> Result<EstimateRecord> {
    check_run(samples, 1, shards)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    if !(tilt >= 0.0) || !tilt.is_finite() {
        return Err(Error::InvalidArgument(format!("tilt must be nonnegative, got {tilt}")));
    }
    let centering = Centering::<f64>::for_shape(shape);
    let level = centering.m_n(shape.n()) - lambda;
    let levels = tilted_levels(shape, lambda, &centering);
    PhiTildeSampler::<f64>::new(*shape)?;
    let start = Instant::now();
    let parts = run_shards(samples, seed, shards, |stream, count| {
        let mut sampler = PhiTildeSampler::<f64>::new(*shape).expect("validated above");
        let mut src = TiltedSource::new(stream, tilt, levels);
        let mut acc = LogMean::default();
        for _ in 0..count {
            src.reset_weight();
            let m = sampler.max_and_shared(&mut src).0;
            acc.push(if m <= level { src.log_weight() } else { f64::NEG_INFINITY });
        }
        acc
    });
    let mut acc = LogMean::default();
    parts.iter().for_each(|p| acc.merge(p));
    let mut r = EstimateRecord::new(Quantity::LeftTail, EstimatorKind::Tilted, acc.mean(), acc.stderr(), samples).run(
        Some(*shape),
        seed,
        shards,
    );
    r.lambda = Some(lambda);
    r.tilt = Some(tilt);
    r.threshold = Some(level);
    r.model = Some(FieldModel::PhiTilde.to_string());
    r.log_value = Some(acc.log_mean());
    r.log_stderr = Some(acc.relative_stderr());
    r.ess = Some(acc.ess());
    if acc.ess() < 10.0 {
        r.warning = Some(format!("effective sample size {:.1} is below 10", acc.ess()));
    }
    r.wall_clock = start.elapsed().as_secs_f64();
    Ok(r)
}
