//! Growth of the gap `m_n - E_n` in `ln n`.
//!
//! Weighted least squares of the gap on `ln n` with an intercept, weights
//! `1 / stderr^2`. When the scatter exceeds the quoted errors the slope error
//! is inflated by the Birge ratio `sqrt(chi^2 / dof)`; it is never deflated.

use statrs::distribution::{ContinuousCDF, StudentsT};

use super::record::EstimateRecord;
use crate::brw::Centering;
use crate::error::{Error, Result};
use crate::tree::TreeShape;

/// Gap points farther than this from the fitted line count as unbounded.
pub const RESIDUAL_BOUND: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_stderr: f64,
    /// 95% interval for the slope.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Lower slope estimate, `ci_low`: the gap grows at least like `a_hat ln n`.
    pub a_hat: f64,
    /// Upper slope estimate, `ci_high`.
    pub b_hat: f64,
    pub dof: u32,
    pub chi2: f64,
    pub birge_ratio: f64,
    pub ns: Vec<u32>,
    pub gaps: Vec<f64>,
    pub residuals: Vec<f64>,
    /// The interval lies strictly above zero.
    pub slope_positive: bool,
    /// The interval excludes zero on either side.
    pub excludes_zero: bool,
    /// Every residual within [`RESIDUAL_BOUND`].
    pub residuals_bounded: bool,
}

impl SandwichFit {
    pub fn report(&self) -> String {
        let mut out = format!(
            "gap = {:.4} + {:.4} ln n, slope 95% CI [{:.4}, {:.4}], dof {}, chi2 {:.3}, Birge {:.3}\n",
            self.intercept, self.slope, self.ci_low, self.ci_high, self.dof, self.chi2, self.birge_ratio
        );
        for ((n, g), r) in self.ns.iter().zip(&self.gaps).zip(&self.residuals) {
            out.push_str(&format!("  n={n:<4} gap {g:.5} residual {r:+.5}\n"));
        }
        out.push_str(&format!(
            "slope CI {} zero; residuals {}\n",
            if self.excludes_zero { "excludes" } else { "contains" },
            if self.residuals_bounded { "bounded" } else { "not bounded" }
        ));
        out
    }
}

pub fn theorem2_sandwich(
    shapes: &[TreeShape],
    records: &[EstimateRecord],
    centering: &Centering<f64>,
) -> Result<SandwichFit> {
    if shapes.len() != records.len() {
        return Err(Error::LengthMismatch { expected: shapes.len(), got: records.len() });
    }
    if shapes.len() < 4 {
        return Err(Error::TooFewPoints { needed: 4, got: shapes.len() });
    }
    let d = shapes[0].d();
    for w in shapes.windows(2) {
        if w[1].d() != d || w[1].n() <= w[0].n() {
            return Err(Error::InvalidArgument("shapes need a common d and increasing n".into()));
        }
    }
    let ns: Vec<u32> = shapes.iter().map(|s| s.n()).collect();
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let gaps: Vec<f64> = shapes.iter().zip(records).map(|(s, r)| centering.m_n(s.n()) - r.value).collect();
    let weighted = records.iter().all(|r| r.stderr > 0.0 && r.stderr.is_finite());
    let ws: Vec<f64> =
        if weighted { records.iter().map(|r| 1.0 / (r.stderr * r.stderr)).collect() } else { vec![1.0; xs.len()] };
    let sw: f64 = ws.iter().sum();
    let xbar = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ybar = ws.iter().zip(&gaps).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = ws.iter().zip(&xs).map(|(w, x)| w * (x - xbar) * (x - xbar)).sum();
    let sxy: f64 = ws.iter().zip(&xs).zip(&gaps).map(|((w, x), y)| w * (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let residuals: Vec<f64> = xs.iter().zip(&gaps).map(|(x, y)| y - intercept - slope * x).collect();
    let chi2: f64 = ws.iter().zip(&residuals).map(|(w, r)| w * r * r).sum();
    let dof = xs.len() as u32 - 2;
    let scatter = chi2 / dof as f64;
    let (birge_ratio, slope_var) = if weighted {
        let b = scatter.sqrt().max(1.0);
        (b, b * b / sxx)
    } else {
        (scatter.sqrt(), scatter / sxx)
    };
    let slope_stderr = slope_var.sqrt();
    let t = StudentsT::new(0.0, 1.0, dof as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?.inverse_cdf(0.975);
    let (ci_low, ci_high) = (slope - t * slope_stderr, slope + t * slope_stderr);
    Ok(SandwichFit {
        intercept,
        slope,
        slope_stderr,
        ci_low,
        ci_high,
        a_hat: ci_low,
        b_hat: ci_high,
        dof,
        chi2,
        birge_ratio,
        ns,
        gaps,
        slope_positive: ci_low > 0.0,
        excludes_zero: ci_low > 0.0 || ci_high < 0.0,
        residuals_bounded: residuals.iter().all(|r| r.abs() <= RESIDUAL_BOUND),
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{EstimatorKind, Quantity};

    fn planted(gap: impl Fn(u32) -> f64, se: f64) -> (Vec<TreeShape>, Vec<EstimateRecord>, Centering<f64>) {
        let c = Centering::<f64>::new(2);
        let ns = [8u32, 10, 12, 14, 16];
        let shapes: Vec<TreeShape> = ns.iter().map(|&n| TreeShape::new(2, n).unwrap()).collect();
        let recs = ns
            .iter()
            .map(|&n| {
                EstimateRecord::new(Quantity::ConditionalMean, EstimatorKind::Conditional, c.m_n(n) - gap(n), se, 1000)
            })
            .collect();
        (shapes, recs, c)
    }

    // fixed pseudo-noise with sd about 0.1
    const NOISE: [f64; 5] = [0.083, -0.121, 0.047, 0.102, -0.069];

    #[test]
    fn recovers_planted_log_slope() {
        let (sh, rec, c) = planted(|n| 1.5 * (n as f64).ln() + NOISE[(n as usize - 8) / 2], 0.1);
        let fit = theorem2_sandwich(&sh, &rec, &c).unwrap();
        assert!((fit.slope - 1.5).abs() < 0.3, "{}", fit.report());
        assert!(fit.slope_positive && fit.excludes_zero);
        assert!(fit.residuals_bounded);
        assert!(fit.ci_low <= fit.slope && fit.slope <= fit.ci_high);
    }

    #[test]
    fn constant_gap_interval_contains_zero() {
        let (sh, rec, c) = planted(|_| 2.0, 0.05);
        let fit = theorem2_sandwich(&sh, &rec, &c).unwrap();
        assert!(fit.ci_low <= 0.0 && 0.0 <= fit.ci_high, "{}", fit.report());
        assert!(!fit.excludes_zero);
        assert!((fit.intercept - 2.0).abs() < 1e-9);
        let (sh, rec, c) = planted(|n| 2.0 + NOISE[(n as usize - 8) / 2], 0.1);
        let fit = theorem2_sandwich(&sh, &rec, &c).unwrap();
        assert!(fit.ci_low <= 0.0 && 0.0 <= fit.ci_high, "{}", fit.report());
    }

    #[test]
    fn unweighted_fallback_and_exact_line() {
        let (sh, rec, c) = planted(|n| 0.7 + 1.1 * (n as f64).ln(), 0.0);
        let fit = theorem2_sandwich(&sh, &rec, &c).unwrap();
        assert!((fit.slope - 1.1).abs() < 1e-9 && (fit.intercept - 0.7).abs() < 1e-9);
    }

    #[test]
    fn input_checks() {
        let (sh, rec, c) = planted(|_| 1.0, 0.1);
        assert!(matches!(theorem2_sandwich(&sh[..3], &rec[..3], &c), Err(Error::TooFewPoints { .. })));
        assert!(theorem2_sandwich(&sh, &rec[..4], &c).is_err());
        let mut rev = sh.clone();
        rev.reverse();
        assert!(theorem2_sandwich(&rev, &rec, &c).is_err());
    }
}
