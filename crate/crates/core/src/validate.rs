//! Oracle cross-checks behind the `validate` command and the acceptance
//! suite.
//!
//! Every check is a pure function of its budget and seed. Its `lines` and
//! `records` form the payload; timings are kept beside it so that repeated
//! runs produce identical payloads.

use std::time::Instant;

use crate::brw::{BrwSampler, Centering};
use crate::error::Result;
use crate::estimators::shard::run_shards;
use crate::estimators::{
    estimate_conditional_mean, estimate_max_cdf, estimate_positivity, log_sum_lemma, solve_lambda_prime_dn,
    theorem2_sandwich, tilted_left_tail, EstimateRecord, FieldModel, PositivityMethod,
};
use crate::field::{NormalSource, SampleMode};
use crate::oracle::{
    empirical_cov, exact_cov_matrix, orthant_reference, rejection_conditional_mean, CovSource, OrthantReference,
};
use crate::rng::RngStream;
use crate::ssbrw::{sigma2_dn, PhiTildeSampler, SwitchLevels};
use crate::tree::TreeShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tier {
    /// Reduced budgets, about a minute on one core.
    Quick,
    /// The acceptance budgets.
    Full,
}

/// Sample budgets of every check.
#[derive(Debug, Clone, PartialEq)]
pub struct Budget {
    pub construction: u64,
    pub hardwall: u64,
    pub conditional_mean: u64,
    pub sandwich: u64,
    pub sandwich_ns: Vec<u32>,
    pub left_tail: u64,
    pub left_tail_n: u32,
    pub slepian: u64,
}

impl Tier {
    pub fn budget(self) -> Budget {
        match self {
            Tier::Quick => Budget {
                construction: 20_000,
                hardwall: 100_000,
                conditional_mean: 100_000,
                sandwich: 20_000,
                sandwich_ns: vec![6, 8, 10, 12, 14],
                left_tail: 100_000,
                left_tail_n: 10,
                slepian: 50_000,
            },
            Tier::Full => Budget {
                construction: 100_000,
                hardwall: 1_000_000,
                conditional_mean: 1_000_000,
                sandwich: 1_000_000,
                sandwich_ns: vec![8, 10, 12, 14, 16],
                left_tail: 1_000_000,
                left_tail_n: 12,
                slepian: 100_000,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Deterministic findings, one per line.
    pub lines: Vec<String>,
    pub records: Vec<EstimateRecord>,
    pub seconds: f64,
}

impl CheckResult {
    fn new(name: &'static str) -> Self {
        Self { name, passed: true, lines: Vec::new(), records: Vec::new(), seconds: 0.0 }
    }

    /// Records one condition and folds it into the verdict.
    fn expect(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines.push(format!("[{}] {line}", if ok { "ok" } else { "FAIL" }));
    }

    fn timed(mut self, start: Instant) -> Self {
        self.seconds = start.elapsed().as_secs_f64();
        self
    }
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub tier: Tier,
    pub seed: u64,
    pub shards: u32,
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Pass/fail table with timings, for humans.
    pub fn table(&self) -> String {
        let mut out = format!("{:<22} {:<6} {:>9}\n", "check", "result", "seconds");
        for c in &self.checks {
            out.push_str(&format!("{:<22} {:<6} {:>9.2}\n", c.name, if c.passed { "PASS" } else { "FAIL" }, c.seconds));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        out.push_str(&format!("{} of {} checks passed\n", self.checks.len() - failed, self.checks.len()));
        out
    }

    /// Findings of every check, for humans.
    pub fn details(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!("{}:\n", c.name));
            for l in &c.lines {
                out.push_str(&format!("  {l}\n"));
            }
        }
        out
    }

    /// JSON lines: one summary object per check followed by its records.
    /// Contains no timings.
    pub fn payload(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let head = serde_json::json!({
                "check": c.name,
                "passed": c.passed,
                "seed": self.seed,
                "shards": self.shards,
                "lines": c.lines,
            });
            out.push_str(&head.to_string());
            out.push('\n');
            for r in &c.records {
                out.push_str(&r.to_json());
                out.push('\n');
            }
        }
        out
    }
}

/// Runs every check of a tier. Checks derive their own seeds from `seed`.
pub fn run_validation(tier: Tier, seed: u64, shards: u32) -> Result<ValidationReport> {
    let b = tier.budget();
    let checks = vec![
        check_kernel_equality()?,
        check_construction(b.construction, seed, shards)?,
        check_hardwall(b.hardwall, seed.wrapping_add(1), shards)?,
        check_conditional_mean(b.conditional_mean, seed.wrapping_add(2), shards)?,
        check_sandwich(&b.sandwich_ns, b.sandwich, seed.wrapping_add(3), shards)?,
        check_left_tail(b.left_tail_n, b.left_tail, 0.25, seed.wrapping_add(4), shards)?,
        check_lambda_prime_band()?,
        check_slepian(b.slepian, seed.wrapping_add(5), shards)?,
        check_lemma_sum()?,
        check_determinism(seed.wrapping_add(6))?,
    ];
    Ok(ValidationReport { tier, seed, shards, checks })
}

fn s(d: u32, n: u32) -> Result<TreeShape> {
    TreeShape::new(d, n)
}

/// BRW kernel equals the zero-sum kernel plus `sigma_{d,n}^2` for every
/// `d` in 2..=5 and every `n` with at most 1024 leaves.
pub fn check_kernel_equality() -> Result<CheckResult> {
    let start = Instant::now();
    let mut c = CheckResult::new("kernel_equality");
    for d in 2..=5u32 {
        let mut n = 1;
        while (d as u64).pow(n) <= 1024 {
            let sh = s(d, n)?;
            let b = exact_cov_matrix(&sh, CovSource::BrwKernel)?;
            let p = exact_cov_matrix(&sh, CovSource::PhiTildeKernel)?;
            let s2 = sigma2_dn::<f64>(&sh);
            let worst = b.entries().iter().zip(p.entries()).map(|(x, y)| (x - y - s2).abs()).fold(0.0, f64::max);
            c.expect(worst <= 1e-10, format!("d={d} n={n}: max |brw - phi_tilde - sigma^2| = {worst:.3e}"));
            n += 1;
        }
    }
    Ok(c.timed(start))
}

/// Standard normals tagged with their level, in draw order.
struct Recorder {
    stream: RngStream,
    draws: Vec<(u32, f64)>,
}

impl NormalSource for Recorder {
    fn standard_normal(&mut self, level: u32) -> f64 {
        let z = self.stream.next_gaussian();
        self.draws.push((level, z));
        z
    }
}

/// Rebuilds the zero-sum field from recorded draws (pre-order, `d - 1`
/// per node) and checks that the sampled leaves aggregate to `d^(n-k)`
/// times the node height at every node of depth `k`. Returns the largest
/// violation and the largest leaf mismatch.
fn zero_sum_violation(shape: &TreeShape, draws: &[(u32, f64)], leaves: &[f64]) -> Result<(f64, f64)> {
    let levels = SwitchLevels::<f64>::new(*shape)?;
    let d = shape.d() as usize;
    let n = shape.n();
    let mut next = draws.iter();
    let mut z = vec![0.0; d];
    let mut inc = vec![0.0; d];
    let mut worst = (0.0f64, 0.0f64);
    // stack of (depth, first leaf, height) in pre-order
    let mut stack = vec![(0u32, 0usize, 0.0f64)];
    while let Some((depth, first, height)) = stack.pop() {
        let span = d.pow(n - depth);
        let sum: f64 = leaves[first..first + span].iter().sum();
        worst.0 = worst.0.max((sum - span as f64 * height).abs());
        if depth == n {
            worst.1 = worst.1.max((leaves[first] - height).abs());
            continue;
        }
        for x in z[..d - 1].iter_mut() {
            let &(level, v) = next.next().expect("one draw per child edge but the last");
            debug_assert_eq!(level, depth + 1);
            *x = v;
        }
        levels.level(depth + 1).increments(&z, &mut inc);
        let child = span / d;
        for i in (0..d).rev() {
            stack.push((depth + 1, first + i * child, height + inc[i]));
        }
    }
    Ok(worst)
}

/// Empirical covariances of both samplers against their kernels, and exact
/// per-node zero sums of every zero-sum draw.
pub fn check_construction(samples: u64, seed: u64, shards: u32) -> Result<CheckResult> {
    let start = Instant::now();
    let mut c = CheckResult::new("construction");
    for (d, n) in [(2, 3), (3, 2)] {
        let sh = s(d, n)?;
        for source in [CovSource::BrwKernel, CovSource::PhiTildeKernel] {
            let parts = run_shards(samples, seed, shards, |mut stream, count| -> Result<(Vec<Vec<f64>>, f64, f64)> {
                let mut rows = Vec::with_capacity(count as usize);
                let mut worst = (0.0f64, 0.0f64);
                match source {
                    CovSource::BrwKernel => {
                        let mut sampler = BrwSampler::<f64>::new(sh);
                        for _ in 0..count {
                            rows.push(sampler.sample(&mut stream, SampleMode::Full)?.values.unwrap_or_default());
                        }
                    }
                    CovSource::PhiTildeKernel => {
                        let mut sampler = PhiTildeSampler::<f64>::new(sh)?;
                        let mut rec = Recorder { stream, draws: Vec::new() };
                        for _ in 0..count {
                            rec.draws.clear();
                            let leaves = sampler.sample(&mut rec, SampleMode::Full)?.phi_tilde.unwrap_or_default();
                            let (zs, lm) = zero_sum_violation(&sh, &rec.draws, &leaves)?;
                            worst = (worst.0.max(zs), worst.1.max(lm));
                            rows.push(leaves);
                        }
                    }
                }
                Ok((rows, worst.0, worst.1))
            });
            let mut rows = Vec::with_capacity(samples as usize);
            let (mut zero_sum, mut mismatch) = (0.0f64, 0.0f64);
            for p in parts {
                let (r, zs, lm) = p?;
                rows.extend(r);
                zero_sum = zero_sum.max(zs);
                mismatch = mismatch.max(lm);
            }
            let emp = empirical_cov(&rows)?;
            let exact = exact_cov_matrix(&sh, source)?;
            let dim = exact.dim();
            let count = rows.len() as f64;
            let mut worst_z = 0.0f64;
            for i in 0..dim {
                for j in 0..dim {
                    let se = ((exact.get(i, i) * exact.get(j, j) + exact.get(i, j).powi(2)) / (count - 1.0)).sqrt();
                    worst_z = worst_z.max((emp.get(i, j) - exact.get(i, j)).abs() / se);
                }
            }
            let name = match source {
                CovSource::BrwKernel => "brw",
                CovSource::PhiTildeKernel => "phi_tilde",
            };
            c.expect(worst_z <= 5.0, format!("{name} d={d} n={n}: worst entry {worst_z:.3} stderr from kernel"));
            if source == CovSource::PhiTildeKernel {
                let tol = 1e-8 * sh.leaf_count() as f64;
                c.expect(
                    zero_sum <= tol && mismatch <= 1e-12 * n as f64,
                    format!("phi_tilde d={d} n={n}: worst node-sum defect {zero_sum:.3e}, leaf rebuild error {mismatch:.3e}"),
                );
            }
        }
    }
    Ok(c.timed(start))
}

fn within(value: f64, target: f64, se: f64, k: f64) -> bool {
    (value - target).abs() <= k * se
}

/// Naive and conditional positivity against the closed forms and each other.
pub fn check_hardwall(samples: u64, seed: u64, shards: u32) -> Result<CheckResult> {
    let start = Instant::now();
    let mut c = CheckResult::new("hardwall");
    for (d, n) in [(2, 1), (2, 2), (3, 1), (2, 3), (3, 2)] {
        let sh = s(d, n)?;
        let cond = estimate_positivity(&sh, samples, seed, shards, PositivityMethod::Conditional)?;
        let naive = estimate_positivity(&sh, samples, seed.wrapping_add(1000), shards, PositivityMethod::Naive)?;
        if let OrthantReference::Exact(p) = orthant_reference(&sh) {
            c.expect(
                within(cond.value, p, cond.stderr, 3.0),
                format!("d={d} n={n}: conditional {:.6} +- {:.2e} vs exact {p:.6}", cond.value, cond.stderr),
            );
        }
        let joint = cond.stderr.hypot(naive.stderr);
        c.expect(
            within(cond.value, naive.value, joint, 3.0),
            format!("d={d} n={n}: conditional {:.6} vs naive {:.6}, joint stderr {joint:.2e}", cond.value, naive.value),
        );
        c.expect(
            cond.stderr < naive.stderr,
            format!("d={d} n={n}: conditional stderr {:.3e} < naive {:.3e}", cond.stderr, naive.stderr),
        );
        c.records.push(cond);
        c.records.push(naive);
    }
    Ok(c.timed(start))
}

/// Conditional mean against `sqrt(2/pi)` at one level and a rejection
/// oracle at two.
pub fn check_conditional_mean(samples: u64, seed: u64, shards: u32) -> Result<CheckResult> {
    let start = Instant::now();
    let mut c = CheckResult::new("conditional_mean");
    let one = estimate_conditional_mean(&s(2, 1)?, samples, seed, shards)?;
    let exact = (2.0 / std::f64::consts::PI).sqrt();
    c.expect(
        within(one.value, exact, one.stderr, 3.0),
        format!("d=2 n=1: {:.6} +- {:.2e} vs sqrt(2/pi) {exact:.6}", one.value, one.stderr),
    );
    let sh = s(2, 2)?;
    let two = estimate_conditional_mean(&sh, samples, seed.wrapping_add(1), shards)?;
    let oracle = rejection_conditional_mean(&sh, samples, seed.wrapping_add(2), shards)?;
    let joint = two.stderr.hypot(oracle.stderr);
    c.expect(
        within(two.value, oracle.value, joint, 3.0),
        format!("d=2 n=2: ratio {:.6} vs rejection {:.6}, joint stderr {joint:.2e}", two.value, oracle.value),
    );
    c.records.extend([one, two, oracle]);
    Ok(c.timed(start))
}

/// Gap `m_n - E_n` regressed on `ln n` at `d = 2`; passes when the slope
/// interval is strictly positive.
pub fn check_sandwich(ns: &[u32], samples: u64, seed: u64, shards: u32) -> Result<CheckResult> {
    let start = Instant::now();
    let mut c = CheckResult::new("log_gap_sandwich");
    let shapes = ns.iter().map(|&n| s(2, n)).collect::<Result<Vec<_>>>()?;
    let records =
        shapes.iter().map(|sh| estimate_conditional_mean(sh, samples, seed, shards)).collect::<Result<Vec<_>>>()?;
    let fit = theorem2_sandwich(&shapes, &records, &Centering::new(2))?;
    c.lines.extend(fit.report().lines().map(str::to_owned));
    c.expect(fit.slope_positive, format!("slope 95% CI [{:.4}, {:.4}] strictly positive", fit.ci_low, fit.ci_high));
    c.records = records;
    Ok(c.timed(start))
}

/// Left-tail grid of the shifted maximum.
pub const LEFT_TAIL_LAMBDAS: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 2.5];

/// Tilted left tail over [`LEFT_TAIL_LAMBDAS`]: effective sample size at
/// least 100, log probability strictly decreasing, second differences below
/// zero by more than three standard errors.
pub fn check_left_tail(n: u32, samples: u64, tilt: f64, seed: u64, shards: u32) -> Result<CheckResult> {
    let start = Instant::now();
    let mut c = CheckResult::new("left_tail_shape");
    let sh = s(2, n)?;
    let records = LEFT_TAIL_LAMBDAS
        .iter()
        .map(|&l| tilted_left_tail(&sh, l, tilt, samples, seed, shards))
        .collect::<Result<Vec<_>>>()?;
    let logs: Vec<f64> = records.iter().map(|r| r.log_value.unwrap_or(f64::NEG_INFINITY)).collect();
    let ses: Vec<f64> = records.iter().map(|r| r.log_stderr.unwrap_or(f64::INFINITY)).collect();
    for (l, r) in LEFT_TAIL_LAMBDAS.iter().zip(&records) {
        let ess = r.ess.unwrap_or(0.0);
        c.expect(
            ess >= 100.0 && logs.iter().all(|x| x.is_finite()),
            format!(
                "lambda {l}: log p {:.4} +- {:.4}, ess {ess:.0}",
                r.log_value.unwrap_or(f64::NAN),
                r.log_stderr.unwrap_or(f64::NAN)
            ),
        );
    }
    for i in 0..logs.len() - 1 {
        c.expect(
            logs[i + 1] < logs[i],
            format!("log p decreases from lambda {} to {}", LEFT_TAIL_LAMBDAS[i], LEFT_TAIL_LAMBDAS[i + 1]),
        );
    }
    for i in 0..logs.len() - 2 {
        let second = logs[i + 2] - 2.0 * logs[i + 1] + logs[i];
        let se = (ses[i + 2].powi(2) + 4.0 * ses[i + 1].powi(2) + ses[i].powi(2)).sqrt();
        c.expect(
            second + 3.0 * se < 0.0,
            format!("second difference at lambda {}: {second:.4} +- {se:.4}", LEFT_TAIL_LAMBDAS[i + 1]),
        );
    }
    c.records = records;
    Ok(c.timed(start))
}

/// `d^(c lambda') / n` at `d = 2`, `C'' = 1`, for every `n` in 16..=1024,
/// inside `[0.05, 20]`.
pub fn check_lambda_prime_band() -> Result<CheckResult> {
    let start = Instant::now();
    let mut c = CheckResult::new("lambda_prime_band");
    let centering = Centering::<f64>::new(2);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for n in 16..=1024u32 {
        let lp = solve_lambda_prime_dn(2, n, 1.0, &centering)?;
        let ratio = (centering.c * lp * 2f64.ln()).exp() / n as f64;
        lo = lo.min(ratio);
        hi = hi.max(ratio);
        if matches!(n, 16 | 64 | 256 | 1024) {
            c.lines.push(format!("n={n}: lambda' {lp:.6}, d^(c lambda')/n {ratio:.4}"));
        }
    }
    c.expect(lo >= 0.05 && hi <= 20.0, format!("d^(c lambda')/n over n in 16..=1024 spans [{lo:.4}, {hi:.4}]"));
    Ok(c.timed(start))
}

/// Comparison field against the BRW at `(2, 10)` with `n' = 7`.
pub fn check_slepian(samples: u64, seed: u64, shards: u32) -> Result<CheckResult> {
    let start = Instant::now();
    let mut c = CheckResult::new("slepian_dominance");
    let sh = s(2, 10)?;
    let grid: Vec<f64> = (0..=16).map(|i| 4.0 + 0.5 * i as f64).collect();
    let plain = estimate_max_cdf(&sh, FieldModel::Brw, &grid, samples, seed, shards)?;
    let comp =
        estimate_max_cdf(&sh, FieldModel::Comparison { n_prime: 7 }, &grid, samples, seed.wrapping_add(1), shards)?;
    let mut worst = f64::INFINITY;
    for (p, q) in plain.estimates.iter().zip(&comp.estimates) {
        let joint = p.stderr.hypot(q.stderr);
        // margin in joint stderrs; a degenerate 0/1 pair has margin +inf
        let margin = if joint > 0.0 {
            (q.value - p.value) / joint
        } else if q.value >= p.value {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        worst = worst.min(margin);
    }
    c.expect(
        worst >= -3.0,
        format!("worst comparison-minus-brw CDF gap {worst:.3} joint stderr over {} thresholds", grid.len()),
    );
    c.records.extend(plain.estimates);
    c.records.extend(comp.estimates);
    Ok(c.timed(start))
}

/// Weighted log sum against its closed-form upper bound for `d` in {2, 3},
/// `n` in 1..=60, and the ratio to `d^n` settling in `[0.5, 1.2]` at `d = 2`.
pub fn check_lemma_sum() -> Result<CheckResult> {
    let start = Instant::now();
    let mut c = CheckResult::new("lemma_sum");
    for d in [2u32, 3] {
        let mut slack = f64::INFINITY;
        for n in 1..=60 {
            let l = log_sum_lemma(n, d)?;
            slack = slack.min(if l.sum == 0.0 { f64::INFINITY } else { l.log_paper_upper - l.log_sum });
        }
        c.expect(slack >= 0.0, format!("d={d}: smallest log(upper / sum) over n in 1..=60 is {slack:.4}"));
    }
    let ratios =
        [10u32, 20, 40, 60].map(|n| log_sum_lemma(n, 2).map(|l| l.ratio)).into_iter().collect::<Result<Vec<_>>>()?;
    let steps: Vec<f64> = ratios.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    c.expect(
        ratios.iter().all(|r| (0.5..=1.2).contains(r)) && steps.windows(2).all(|w| w[1] <= w[0]),
        format!("d=2 ratios at n=10,20,40,60: {:.6} {:.6} {:.6} {:.6}", ratios[0], ratios[1], ratios[2], ratios[3]),
    );
    Ok(c.timed(start))
}

/// Re-runs one estimator and compares serialized records byte for byte.
pub fn check_determinism(seed: u64) -> Result<CheckResult> {
    let start = Instant::now();
    let mut c = CheckResult::new("determinism");
    let sh = s(2, 4)?;
    for shards in [1u32, 3] {
        let a = estimate_positivity(&sh, 20_000, seed, shards, PositivityMethod::Conditional)?;
        let b = estimate_positivity(&sh, 20_000, seed, shards, PositivityMethod::Conditional)?;
        c.expect(a.to_json() == b.to_json(), format!("positivity d=2 n=4 shards={shards}: repeated run identical"));
        c.records.push(a);
    }
    Ok(c.timed(start))
}
