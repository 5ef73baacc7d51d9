//! Small-scale ground truth: dense kernel matrices, closed-form orthant
//! probabilities, and plain dense-Cholesky Monte Carlo.
//!
//! Nothing here uses the tree samplers, so these results can check them.

use std::time::Instant;

use crate::brw::{brw_cov, BrwSampler};
use crate::error::{Error, Result};
use crate::estimators::shard::{check_run, run_shards, MeanVar};
use crate::estimators::{EstimateRecord, EstimatorKind, Quantity};
use crate::field::SampleMode;
use crate::gaussian::{check_square_symmetric, cholesky_clamped, LowerTriangular};
use crate::ssbrw::phi_tilde_cov;
use crate::tree::{LeafId, TreeShape};

/// Largest dimension of a [`DenseCov`].
pub const DENSE_DIM_LIMIT: usize = 1024;

/// Pivot tolerance, relative to the largest diagonal entry, of the
/// positive-semidefinite check.
pub const PSD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovSource {
    BrwKernel,
    PhiTildeKernel,
}

/// Dense symmetric covariance, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseCov {
    dim: usize,
    entries: Vec<f64>,
    /// `None` for user-supplied or empirical matrices.
    source: Option<CovSource>,
    shape: Option<TreeShape>,
}

impl DenseCov {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim > DENSE_DIM_LIMIT {
            return Err(Error::DimensionTooLarge { dim, limit: DENSE_DIM_LIMIT });
        }
        check_square_symmetric(dim, &entries)?;
        Ok(Self { dim, entries, source: None, shape: None })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut entries = vec![0.0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = 1.0;
        }
        Self::new(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn source(&self) -> Option<CovSource> {
        self.source
    }

    pub fn shape(&self) -> Option<TreeShape> {
        self.shape
    }

    /// Clamped Cholesky factor; fails when a pivot drops below
    /// `-PSD_TOLERANCE` times the largest diagonal entry.
    pub fn cholesky(&self) -> Result<LowerTriangular<f64>> {
        cholesky_clamped(self.dim, &self.entries, PSD_TOLERANCE)
    }

    pub fn max_abs_diff(&self, other: &DenseCov) -> Result<f64> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        Ok(self.entries.iter().zip(&other.entries).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }

    /// One CSV row per matrix row, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.entries.chunks(self.dim.max(1)) {
            let cells: Vec<String> = row.iter().map(|&x| crate::estimators::sig17(x)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Kernel matrix over all leaf pairs in flat-index order.
pub fn exact_cov_matrix(shape: &TreeShape, source: CovSource) -> Result<DenseCov> {
    let dim = shape.leaf_count();
    if dim > DENSE_DIM_LIMIT as u64 {
        return Err(Error::DimensionTooLarge { dim: dim as usize, limit: DENSE_DIM_LIMIT });
    }
    let dim = dim as usize;
    let leaves: Vec<LeafId> = shape.leaves().collect();
    let mut entries = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            entries[i * dim + j] = match source {
                CovSource::BrwKernel => brw_cov(&leaves[i], &leaves[j], shape)?,
                CovSource::PhiTildeKernel => phi_tilde_cov(&leaves[i], &leaves[j], shape)?,
            };
        }
    }
    Ok(DenseCov { dim, entries, source: Some(source), shape: Some(*shape) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrthantReference {
    Exact(f64),
    Unsupported,
}

/// Exact probability that every leaf is nonnegative, where a closed form
/// exists: independent leaves at height 1, and two independent correlated
/// pairs at `(d, n) = (2, 2)`.
pub fn orthant_reference(shape: &TreeShape) -> OrthantReference {
    match (shape.d(), shape.n()) {
        (d, 1) => OrthantReference::Exact(0.5f64.powi(d as i32)),
        (2, 2) => {
            // sibling correlation 1/2: 1/4 + asin(rho) / (2 pi) per pair
            let pair = 0.25 + 0.5f64.asin() / (2.0 * std::f64::consts::PI);
            OrthantReference::Exact(pair * pair)
        }
        _ => OrthantReference::Unsupported,
    }
}

/// Fraction of dense Gaussian draws `L z` with every coordinate nonnegative.
pub fn mc_orthant(cov: &DenseCov, samples: u64, seed: u64, shards: u32) -> Result<EstimateRecord> {
    check_run(samples, 1, shards)?;
    let factor = cov.cholesky()?;
    let dim = cov.dim;
    let l = factor.entries();
    let start = Instant::now();
    let parts = run_shards(samples, seed, shards, |mut stream, count| {
        let mut z = vec![0.0; dim];
        let mut acc = MeanVar::default();
        for _ in 0..count {
            z.iter_mut().for_each(|x| *x = stream.next_gaussian());
            let inside =
                (0..dim).all(|i| l[i * dim..i * dim + i + 1].iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() >= 0.0);
            acc.push(f64::from(u8::from(inside)));
        }
        acc
    });
    let mut acc = MeanVar::default();
    parts.iter().for_each(|p| acc.merge(p));
    let p = acc.mean;
    let n = samples as f64;
    let mut r = EstimateRecord::new(Quantity::Orthant, EstimatorKind::Naive, p, (p * (1.0 - p) / n).sqrt(), samples)
        .run(cov.shape, seed, shards);
    r.model = Some(
        match cov.source {
            Some(CovSource::BrwKernel) => "dense_brw",
            Some(CovSource::PhiTildeKernel) => "dense_phi_tilde",
            None => "dense",
        }
        .to_owned(),
    );
    r.log_value = Some(p.ln());
    r.log_stderr = Some(((1.0 - p) / (p * n)).sqrt());
    r.wall_clock = start.elapsed().as_secs_f64();
    Ok(r)
}

/// Mean leaf height given that every leaf is nonnegative, by rejection:
/// full BRW draws are kept only when their minimum is nonnegative.
///
/// The stderr treats the accepted count as fixed.
pub fn rejection_conditional_mean(shape: &TreeShape, samples: u64, seed: u64, shards: u32) -> Result<EstimateRecord> {
    check_run(samples, 1, shards)?;
    BrwSampler::<f64>::new(*shape).sample(&mut crate::rng::RngStream::new(seed, 0), SampleMode::Full)?;
    let start = Instant::now();
    let parts = run_shards(samples, seed, shards, |mut stream, count| {
        let mut sampler = BrwSampler::<f64>::new(*shape);
        let mut acc = MeanVar::default();
        for _ in 0..count {
            let s = sampler.sample(&mut stream, SampleMode::Full).expect("checked above");
            if s.min >= 0.0 {
                let values = s.values.expect("full mode keeps values");
                acc.push(values.iter().sum::<f64>() / values.len() as f64);
            }
        }
        acc
    });
    let mut acc = MeanVar::default();
    parts.iter().for_each(|p| acc.merge(p));
    if acc.count < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: acc.count as usize });
    }
    let mut r = EstimateRecord::new(Quantity::ConditionalMean, EstimatorKind::Naive, acc.mean, acc.stderr(), samples)
        .run(Some(*shape), seed, shards);
    r.model = Some("brw_rejection".to_owned());
    r.ess = Some(acc.count as f64);
    r.wall_clock = start.elapsed().as_secs_f64();
    Ok(r)
}

/// Unbiased sample covariance (divisor `count - 1`) of equal-length vectors.
pub fn empirical_cov(samples: &[Vec<f64>]) -> Result<DenseCov> {
    if samples.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: samples.len() });
    }
    let dim = samples[0].len();
    if dim > DENSE_DIM_LIMIT {
        return Err(Error::DimensionTooLarge { dim, limit: DENSE_DIM_LIMIT });
    }
    if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    let count = samples.len() as f64;
    let mut mean = vec![0.0; dim];
    for s in samples {
        mean.iter_mut().zip(s).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut entries = vec![0.0; dim * dim];
    let mut centered = vec![0.0; dim];
    for s in samples {
        centered.iter_mut().zip(s.iter().zip(&mean)).for_each(|(c, (x, m))| *c = x - m);
        for i in 0..dim {
            for j in i..dim {
                entries[i * dim + j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            let v = entries[i * dim + j] / (count - 1.0);
            entries[i * dim + j] = v;
            entries[j * dim + i] = v;
        }
    }
    Ok(DenseCov { dim, entries, source: None, shape: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ssbrw::sigma2_dn;

    fn s(d: u32, n: u32) -> TreeShape {
        TreeShape::new(d, n).unwrap()
    }

    #[test]
    fn brw_matrix_example() {
        let m = exact_cov_matrix(&s(2, 2), CovSource::BrwKernel).unwrap();
        let want = [2., 1., 0., 0., 1., 2., 0., 0., 0., 0., 2., 1., 0., 0., 1., 2.];
        assert_eq!(m.entries(), &want);
        let p = exact_cov_matrix(&s(2, 2), CovSource::PhiTildeKernel).unwrap();
        for (a, b) in p.entries().iter().zip(&want) {
            assert!((a - (b - 0.75)).abs() < 1e-15);
        }
    }

    #[test]
    fn rank_one_difference_and_psd() {
        for (d, n) in [(2, 1), (2, 5), (3, 3), (4, 2), (5, 2), (2, 10)] {
            let sh = s(d, n);
            let b = exact_cov_matrix(&sh, CovSource::BrwKernel).unwrap();
            let p = exact_cov_matrix(&sh, CovSource::PhiTildeKernel).unwrap();
            let s2 = sigma2_dn::<f64>(&sh);
            for (x, y) in b.entries().iter().zip(p.entries()) {
                assert!((x - y - s2).abs() <= 1e-12);
            }
            b.cholesky().unwrap();
            p.cholesky().unwrap();
        }
    }

    #[test]
    fn size_limit() {
        assert!(exact_cov_matrix(&s(2, 11), CovSource::BrwKernel).is_err());
        assert!(DenseCov::identity(1025).is_err());
        assert!(DenseCov::new(2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
    }

    #[test]
    fn references() {
        assert_eq!(orthant_reference(&s(2, 1)), OrthantReference::Exact(0.25));
        assert_eq!(orthant_reference(&s(3, 1)), OrthantReference::Exact(0.125));
        match orthant_reference(&s(2, 2)) {
            OrthantReference::Exact(p) => assert!((p - 1.0 / 9.0).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert_eq!(orthant_reference(&s(2, 3)), OrthantReference::Unsupported);
    }

    #[test]
    fn non_psd_rejected() {
        let m = DenseCov::new(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(mc_orthant(&m, 10, 1, 1), Err(Error::NotPositiveSemidefinite { .. })));
    }

    #[test]
    fn empirical_cov_basics() {
        let constant = vec![vec![1.0, -2.0, 3.0]; 10];
        assert!(empirical_cov(&constant).unwrap().entries().iter().all(|&x| x == 0.0));
        let two = vec![vec![0.0, 1.0], vec![2.0, 5.0]];
        // deviations (-1, -2) and (1, 2), divisor 1
        assert_eq!(empirical_cov(&two).unwrap().entries(), &[2.0, 4.0, 4.0, 8.0]);
        assert!(empirical_cov(&two[..1]).is_err());
        assert!(empirical_cov(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn csv_export() {
        let m = DenseCov::identity(2).unwrap();
        assert_eq!(
            m.to_csv(),
            "1.0000000000000000e0,0.0000000000000000e0\n0.0000000000000000e0,1.0000000000000000e0\n"
        );
    }
}
