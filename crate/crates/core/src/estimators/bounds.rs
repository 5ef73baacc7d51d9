//! Closed-form bound shapes, the optimizing shift `lambda'`, and the
//! weighted log sum whose growth is compared against `d^n`.
//!
//! None of the multiplicative constants has a known value; they are inputs.

use crate::brw::Centering;
use crate::error::{Error, Result};
use crate::ssbrw::{shared_variance, sigma2_dn};
use crate::tree::TreeShape;

/// Constants of the positivity and left-tail bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    /// `C'`
    pub cp: f64,
    /// `C''`
    pub cpp: f64,
    /// `K'`
    pub kp: f64,
    /// `K''`
    pub kpp: f64,
    pub c_star: f64,
    pub p_bar: f64,
    pub a_bar: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self { k1: 1.0, k2: 1.0, k3: 1.0, cp: 1.0, cpp: 1.0, kp: 1.0, kpp: 1.0, c_star: 1.0, p_bar: 1.0, a_bar: 1.0 }
    }
}

impl BoundParams {
    pub fn named(&self) -> [(&'static str, f64); 10] {
        [
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("cp", self.cp),
            ("cpp", self.cpp),
            ("kp", self.kp),
            ("kpp", self.kpp),
            ("c_star", self.c_star),
            ("p_bar", self.p_bar),
            ("a_bar", self.a_bar),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, x) in self.named() {
            if !(x > 0.0) || !x.is_finite() {
                return Err(Error::InvalidArgument(format!("bound constant {name} = {x} must be positive")));
            }
        }
        Ok(())
    }
}

/// Root of `m_n - lambda = sigma^2 C'' c d^(c lambda) ln d` in `(0, m_n)`.
pub fn solve_lambda_prime(shape: &TreeShape, cpp: f64, centering: &Centering<f64>) -> Result<f64> {
    solve_lambda_prime_dn(shape.d(), shape.n(), cpp, centering)
}

/// [`solve_lambda_prime`] for heights whose leaf count has no integer type.
pub fn solve_lambda_prime_dn(d: u32, n: u32, cpp: f64, centering: &Centering<f64>) -> Result<f64> {
    if d < 2 || n < 1 {
        return Err(Error::InvalidShape { d, n, reason: "need d >= 2 and n >= 1" });
    }
    if !(cpp > 0.0) || !cpp.is_finite() {
        return Err(Error::InvalidArgument(format!("C'' = {cpp} must be positive")));
    }
    let m = centering.m_n(n);
    if !(m > 0.0) {
        return Err(Error::InvalidArgument(format!("m_n = {m} must be positive")));
    }
    let ln_d = (d as f64).ln();
    let k = shared_variance::<f64>(d, n) * cpp * centering.c * ln_d;
    let f = |lambda: f64| m - lambda - k * (centering.c * lambda * ln_d).exp();
    let f0 = f(0.0);
    if f0 <= 0.0 {
        return Err(Error::NoInteriorRoot { f0 });
    }
    // f is strictly decreasing with f(m) < 0
    let (mut lo, mut hi) = (0.0, m);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let v = f(mid);
        if v.abs() <= 1e-9 {
            break;
        }
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Residual of the defining equation at `lambda`.
pub fn lambda_prime_residual(d: u32, n: u32, cpp: f64, centering: &Centering<f64>, lambda: f64) -> f64 {
    let ln_d = (d as f64).ln();
    centering.m_n(n)
        - lambda
        - shared_variance::<f64>(d, n) * cpp * centering.c * (centering.c * lambda * ln_d).exp() * ln_d
}

/// Natural logs of the lower and upper positivity bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositivityBounds {
    pub log_lower: f64,
    pub log_upper: f64,
}

pub fn eval_positivity_bounds(
    shape: &TreeShape,
    params: &BoundParams,
    lambda_prime: f64,
    centering: &Centering<f64>,
) -> PositivityBounds {
    let s2 = sigma2_dn::<f64>(shape);
    let gap = centering.m_n(shape.n()) - lambda_prime;
    let gauss = -gap * gap / (2.0 * s2);
    let ln_d = (shape.d() as f64).ln();
    PositivityBounds {
        log_lower: params.k1.ln() + gauss - params.k3 * gap,
        log_upper: params.k2.ln() + gauss - gap / (centering.c * s2 * ln_d),
    }
}

/// Lower and upper left-tail bounds `K' exp(-K'' d^(c lambda))` and
/// `C' exp(-C'' d^(c lambda))`, with their logs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeftTailBounds {
    pub lower: f64,
    pub upper: f64,
    pub log_lower: f64,
    pub log_upper: f64,
}

pub fn eval_lefttail_bounds(
    shape: &TreeShape,
    lambda: f64,
    params: &BoundParams,
    centering: &Centering<f64>,
) -> LeftTailBounds {
    let growth = (centering.c * lambda * (shape.d() as f64).ln()).exp();
    let log_lower = params.kp.ln() - params.kpp * growth;
    let log_upper = params.cp.ln() - params.cpp * growth;
    LeftTailBounds { lower: log_lower.exp(), upper: log_upper.exp(), log_lower, log_upper }
}

/// `sum_{j=1}^n ln(n+1-j) d^j` against `d^n` and the closed-form bound
/// `(d^(n+2) - (n+1) d^2 + n d) / (d-1)^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaSum {
    pub n: u32,
    pub d: u32,
    /// `+inf` once the sum leaves the double range; see `log_sum`.
    pub sum: f64,
    /// `sum / d^n`
    pub ratio: f64,
    pub paper_upper: f64,
    pub log_sum: f64,
    pub log_paper_upper: f64,
}

pub fn log_sum_lemma(n: u32, d: u32) -> Result<LemmaSum> {
    if n < 1 || d < 2 {
        return Err(Error::InvalidShape { d, n, reason: "need d >= 2 and n >= 1" });
    }
    let df = d as f64;
    // ratio = sum_{k=0}^{n-1} ln(k+1) d^(-k), smallest terms first
    let (mut total, mut comp) = (0.0f64, 0.0f64);
    for k in (0..n).rev() {
        let term = ((k + 1) as f64).ln() * df.powi(-(k as i32));
        let t = total + term;
        comp += if total.abs() >= term.abs() { (total - t) + term } else { (term - t) + total };
        total = t;
    }
    let ratio = total + comp;
    let ln_d = df.ln();
    let nf = n as f64;
    let log_sum = if ratio > 0.0 { ratio.ln() + nf * ln_d } else { f64::NEG_INFINITY };
    // d^(n+2) (1 - ((n+1) d^2 - n d) / d^(n+2)) / (d-1)^2
    let tail = ((nf + 1.0) * df * df - nf * df) * (-(nf + 2.0) * ln_d).exp();
    let log_paper_upper = (nf + 2.0) * ln_d + (-tail).ln_1p() - 2.0 * (df - 1.0).ln();
    Ok(LemmaSum {
        n,
        d,
        sum: if ratio == 0.0 { 0.0 } else { log_sum.exp() },
        ratio,
        paper_upper: log_paper_upper.exp(),
        log_sum,
        log_paper_upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(d: u32, n: u32) -> TreeShape {
        TreeShape::new(d, n).unwrap()
    }

    #[test]
    fn lambda_prime_reference_values() {
        let c = Centering::<f64>::new(2);
        let l1 = solve_lambda_prime(&s(2, 16), 1.0, &c).unwrap();
        assert!((l1 - 4.881898).abs() < 1e-5, "{l1}");
        assert!((l1 - 4.885).abs() < 0.01);
        assert!(lambda_prime_residual(2, 16, 1.0, &c, l1).abs() <= 1e-9);
        let l2 = solve_lambda_prime(&s(2, 16), 2.0, &c).unwrap();
        assert!((l2 - 3.862908).abs() < 1e-5, "{l2}");
        assert!(l2 < l1);
    }

    #[test]
    fn lambda_prime_order_of_n() {
        let c = Centering::<f64>::new(2);
        for n in [16u32, 32, 64, 128, 256, 512, 1024] {
            let l = solve_lambda_prime_dn(2, n, 1.0, &c).unwrap();
            let ratio = (c.c * l * 2f64.ln()).exp() / n as f64;
            assert!((0.05..=20.0).contains(&ratio), "n={n}: {ratio}");
            assert!(lambda_prime_residual(2, n, 1.0, &c, l).abs() <= 1e-9);
        }
    }

    #[test]
    fn lambda_prime_degenerate() {
        let c = Centering::<f64>::new(2);
        assert!(matches!(solve_lambda_prime(&s(2, 1), 50.0, &c), Err(Error::NoInteriorRoot { .. })));
        assert!(solve_lambda_prime(&s(2, 4), 0.0, &c).is_err());
    }

    #[test]
    fn positivity_bounds_examples() {
        let sh = s(2, 16);
        let c = Centering::<f64>::new(2);
        let s2 = sigma2_dn::<f64>(&sh);
        let p = BoundParams { k3: 1.0 / (c.c * s2 * 2f64.ln()), ..BoundParams::default() };
        let b = eval_positivity_bounds(&sh, &p, 4.885, &c);
        assert!((b.log_lower - b.log_upper).abs() < 1e-12);
        let p = BoundParams { k3: 2.0, ..BoundParams::default() };
        let b = eval_positivity_bounds(&sh, &p, 4.885, &c);
        // -(gap^2) / (2 sigma^2) - 2 gap with gap = m_16 - 4.885
        let gap = 15.306330_f64 - 4.885;
        let want = -gap * gap / (2.0 * s2) - 2.0 * gap;
        assert!((b.log_lower - want).abs() < 1e-4, "{} vs {want}", b.log_lower);
        assert!((b.log_lower - (-75.148)).abs() < 0.01);
    }

    #[test]
    fn lefttail_bounds_examples() {
        let c = Centering::<f64>::new(2);
        let p = BoundParams { kp: 1.0, kpp: 0.5, cp: 2.0, cpp: 0.25, ..BoundParams::default() };
        let b = eval_lefttail_bounds(&s(2, 12), 2.0, &p, &c);
        assert!((b.lower - 0.197_310_2).abs() < 1e-6, "{}", b.lower);
        let z = eval_lefttail_bounds(&s(2, 12), 0.0, &p, &c);
        assert!((z.lower - (-0.5f64).exp()).abs() < 1e-15);
        assert!((z.upper - 2.0 * (-0.25f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn params_must_be_positive() {
        assert!(BoundParams::default().validate().is_ok());
        assert!(BoundParams { kpp: 0.0, ..BoundParams::default() }.validate().is_err());
        assert!(BoundParams { k1: f64::NAN, ..BoundParams::default() }.validate().is_err());
    }

    #[test]
    fn lemma_small_cases() {
        let a = log_sum_lemma(1, 2).unwrap();
        assert_eq!((a.sum, a.ratio), (0.0, 0.0));
        assert!((a.paper_upper - 2.0).abs() < 1e-12);
        let b = log_sum_lemma(3, 2).unwrap();
        assert!((b.sum - (2.0 * 3f64.ln() + 4.0 * 2f64.ln())).abs() < 1e-12);
        assert!((b.sum - 4.969813).abs() < 1e-6);
        assert!((b.ratio - 0.621227).abs() < 1e-6);
        assert!((b.paper_upper - 22.0).abs() < 1e-12);
        assert!(log_sum_lemma(0, 2).is_err());
    }

    #[test]
    fn lemma_direct_summation_agrees() {
        for d in [2u32, 3, 5] {
            for n in 1..=25u32 {
                let direct: f64 = (1..=n).map(|j| ((n + 1 - j) as f64).ln() * (d as f64).powi(j as i32)).sum();
                let got = log_sum_lemma(n, d).unwrap();
                assert!((got.sum - direct).abs() <= 1e-12 * direct.max(1.0), "d={d} n={n}");
                let closed = ((d as f64).powi(n as i32 + 2) - (n + 1) as f64 * (d * d) as f64 + (n * d) as f64)
                    / ((d - 1) as f64).powi(2);
                assert!((got.paper_upper - closed).abs() <= 1e-12 * closed);
            }
        }
    }

    #[test]
    fn lemma_reference_ratios() {
        let cases = [(2, 2, 0.346574), (3, 2, 0.231049), (2, 10, 1.010826), (2, 60, 1.015668), (3, 60, 0.435838)];
        for (d, n, want) in cases {
            let got = log_sum_lemma(n, d).unwrap().ratio;
            assert!((got - want).abs() < 1e-6, "d={d} n={n}: {got}");
        }
        // far beyond the double range
        let big = log_sum_lemma(5000, 3).unwrap();
        assert!(big.sum.is_infinite() && big.log_sum.is_finite());
        assert!(big.log_sum < big.log_paper_upper);
    }
}
