//! Branching random walk on the leaves of a d-ary tree.
//!
//! Each edge carries an independent unit-variance Gaussian increment and a
//! leaf's value is the sum along its root path, so `Var = n` and the
//! covariance of two leaves is the depth of their lowest common ancestor,
//! `n - d_T(u, v) / 2`.

use crate::error::{Error, Result};
use crate::field::{walk, Extremes, FullSink, NormalSource, SampleMode, FULL_LEAF_BUDGET};
use crate::scalar::Real;
use crate::tree::{tree_distance, LeafId, TreeShape};

/// Constants of the expected-maximum centering `m_n = c1 n - c2 ln n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centering<T> {
    /// `sqrt(2 ln d)`
    pub c1: T,
    /// `3 / (2 c1)`
    pub c2: T,
    /// `1 / c1`
    pub c: T,
}

impl<T: Real> Centering<T> {
    pub fn new(d: u32) -> Self {
        let c1 = (T::of(2.0) * T::of(d as f64).ln()).sqrt();
        Self { c1, c2: T::of(1.5) / c1, c: c1.recip() }
    }

    pub fn for_shape(shape: &TreeShape) -> Self {
        Self::new(shape.d())
    }

    /// `c1 n - c2 ln n` with the natural logarithm.
    pub fn m_n(&self, n: u32) -> T {
        let n = T::of(n as f64);
        self.c1 * n - self.c2 * n.ln()
    }
}

pub fn m_n<T: Real>(shape: &TreeShape, centering: &Centering<T>) -> T {
    centering.m_n(shape.n())
}

/// Exact covariance of two leaves.
pub fn brw_cov<T: Real>(u: &LeafId, v: &LeafId, shape: &TreeShape) -> Result<T> {
    let dist = tree_distance(u, v, shape)?;
    Ok(T::of(shape.n() as f64) - T::of(dist as f64) * T::of(0.5))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrwSample<T> {
    pub shape: TreeShape,
    /// Leaf values in flat-index order; `None` in max-only mode.
    pub values: Option<Vec<T>>,
    pub max: T,
    pub argmax: LeafId,
    pub min: T,
}

/// Reusable BRW sampler; owns the traversal scratch space.
#[derive(Debug, Clone)]
pub struct BrwSampler<T> {
    shape: TreeShape,
    scratch: Vec<T>,
}

impl<T: Real> BrwSampler<T> {
    pub fn new(shape: TreeShape) -> Self {
        Self { shape, scratch: Vec::new() }
    }

    pub fn shape(&self) -> &TreeShape {
        &self.shape
    }

    /// Extremes of one field draw using `O(n d)` memory.
    pub fn extremes<S: NormalSource>(&mut self, src: &mut S) -> Extremes<T> {
        let mut sink = Extremes::default();
        walk(&self.shape, &mut self.scratch, |level, out| fill_independent(level, out, src), &mut sink);
        sink
    }

    pub fn sample<S: NormalSource>(&mut self, src: &mut S, mode: SampleMode) -> Result<BrwSample<T>> {
        let (values, ext) = match mode {
            SampleMode::MaxOnly => (None, self.extremes(src)),
            SampleMode::Full => {
                let leaves = self.shape.leaf_count();
                if leaves > FULL_LEAF_BUDGET {
                    return Err(Error::BudgetExceeded { requested: leaves, budget: FULL_LEAF_BUDGET });
                }
                let mut sink = FullSink::with_capacity(leaves);
                walk(&self.shape, &mut self.scratch, |level, out| fill_independent(level, out, src), &mut sink);
                (Some(sink.values), sink.extremes)
            }
        };
        Ok(BrwSample {
            shape: self.shape,
            values,
            max: ext.max,
            argmax: LeafId::from_flat(ext.argmax, &self.shape)?,
            min: ext.min,
        })
    }
}

#[inline(always)]
fn fill_independent<T: Real, S: NormalSource>(level: u32, out: &mut [T], src: &mut S) {
    for x in out.iter_mut() {
        *x = T::of(src.standard_normal(level));
    }
}

/// One BRW draw. Full mode is limited to [`FULL_LEAF_BUDGET`] leaves.
pub fn sample_brw<T: Real, S: NormalSource>(shape: &TreeShape, src: &mut S, mode: SampleMode) -> Result<BrwSample<T>> {
    BrwSampler::new(*shape).sample(src, mode)
}

/// Maximum of the comparison field `g + phi`, where `g` restarts a BRW in
/// every subtree of height `n'` and `phi ~ N(0, n - n')` is shared by all
/// leaves. Leaf variances equal the BRW's; covariances are never smaller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonSample<T> {
    pub shape: TreeShape,
    pub subtree_height: u32,
    pub max: T,
    /// Field value at leaf 0.
    pub anchor: T,
}

#[derive(Debug, Clone)]
pub struct ComparisonSampler<T> {
    shape: TreeShape,
    subtree_height: u32,
    subtrees: u64,
    inner: BrwSampler<T>,
}

impl<T: Real> ComparisonSampler<T> {
    pub fn new(shape: TreeShape, subtree_height: u32) -> Result<Self> {
        if subtree_height < 1 || subtree_height > shape.n() {
            return Err(Error::InvalidArgument(format!(
                "subtree height n' = {subtree_height} must lie in [1, {}]",
                shape.n()
            )));
        }
        let sub = TreeShape::new(shape.d(), subtree_height)?;
        let subtrees = (shape.d() as u64).pow(shape.n() - subtree_height);
        Ok(Self { shape, subtree_height, subtrees, inner: BrwSampler::new(sub) })
    }

    /// Subtrees are drawn in flat order, then the shared Gaussian; the
    /// shared draw is consumed even when `n' = n`.
    pub fn sample<S: NormalSource>(&mut self, src: &mut S) -> ComparisonSample<T> {
        let mut max = T::neg_infinity();
        let mut anchor = T::nan();
        for i in 0..self.subtrees {
            let ext = self.inner.extremes(src);
            if i == 0 {
                anchor = ext.first;
            }
            max = max.max(ext.max);
        }
        let spread = T::of((self.shape.n() - self.subtree_height) as f64).sqrt();
        let shared = spread * T::of(src.standard_normal(0));
        ComparisonSample {
            shape: self.shape,
            subtree_height: self.subtree_height,
            max: max + shared,
            anchor: anchor + shared,
        }
    }
}

pub fn sample_comparison_max<T: Real, S: NormalSource>(
    shape: &TreeShape,
    n_prime: u32,
    src: &mut S,
) -> Result<ComparisonSample<T>> {
    Ok(ComparisonSampler::new(*shape, n_prime)?.sample(src))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::tree::split_depth;

    fn s(d: u32, n: u32) -> TreeShape {
        TreeShape::new(d, n).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let sh = s(2, 3);
        let a = sh.leaf(&[0, 0, 0]).unwrap();
        let b = sh.leaf(&[0, 0, 1]).unwrap();
        let c = sh.leaf(&[1, 0, 0]).unwrap();
        assert_eq!(brw_cov::<f64>(&a, &a, &sh).unwrap(), 3.0);
        assert_eq!(brw_cov::<f64>(&a, &b, &sh).unwrap(), 2.0);
        assert_eq!(brw_cov::<f64>(&a, &c, &sh).unwrap(), 0.0);
    }

    #[test]
    fn kernel_is_split_depth_exhaustive() {
        for (d, n) in [(2, 9), (3, 5), (4, 4), (8, 3)] {
            let sh = s(d, n);
            let leaves: Vec<_> = sh.leaves().collect();
            for u in &leaves {
                for v in &leaves {
                    let k = split_depth(u, v, &sh).unwrap();
                    assert_eq!(brw_cov::<f64>(u, v, &sh).unwrap(), k as f64);
                }
            }
        }
    }

    #[test]
    fn centering_values() {
        let c2 = Centering::<f64>::new(2);
        assert!((c2.c1 * c2.c - 1.0).abs() < 1e-15);
        assert!((c2.c2 - 1.5 / c2.c1).abs() < 1e-15);
        // references evaluated in 30-digit arithmetic
        assert!((c2.m_n(1) - 1.177_410_022_515_474_7).abs() < 1e-12);
        assert!((c2.m_n(16) - 15.306_330_292_701_17).abs() < 1e-12);
        let c4 = Centering::<f64>::new(4);
        assert!((c4.c1 - 1.665_109_222_315_395_5).abs() < 1e-12);
        assert!((c4.m_n(10) - 14.576_827_308_154_37).abs() < 1e-12);
        let c32 = Centering::<f32>::new(2);
        assert!((c32.m_n(16) - 15.306_33).abs() < 1e-4);
    }

    #[test]
    fn height_one_leaves_are_the_draws() {
        let sh = s(2, 1);
        let mut src = RngStream::new(5, 0);
        let sample: BrwSample<f64> = sample_brw(&sh, &mut src, SampleMode::Full).unwrap();
        let mut again = RngStream::new(5, 0);
        let want = [again.next_gaussian(), again.next_gaussian()];
        assert_eq!(sample.values.as_deref(), Some(&want[..]));
        assert_eq!(sample.max, want[0].max(want[1]));
        assert_eq!(src.position(), 2);
    }

    #[test]
    fn full_and_max_only_agree_bitwise() {
        for (d, n) in [(2, 7), (3, 4), (5, 2)] {
            let sh = s(d, n);
            let mut a = RngStream::new(11, 2);
            let mut b = RngStream::new(11, 2);
            let mut sampler = BrwSampler::<f64>::new(sh);
            for _ in 0..20 {
                let full = sampler.sample(&mut a, SampleMode::Full).unwrap();
                let fast = sampler.sample(&mut b, SampleMode::MaxOnly).unwrap();
                assert_eq!(full.max.to_bits(), fast.max.to_bits());
                assert_eq!(full.argmax, fast.argmax);
                let values = full.values.unwrap();
                assert_eq!(values.len() as u64, sh.leaf_count());
                let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(m, full.max);
                assert_eq!(values[full.argmax.to_flat(&sh) as usize], m);
            }
            assert_eq!(a.position(), b.position());
        }
    }

    #[test]
    fn full_mode_budget() {
        let sh = s(2, 30);
        let mut src = RngStream::new(0, 0);
        assert!(matches!(sample_brw::<f64, _>(&sh, &mut src, SampleMode::Full), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn expected_max_of_two_leaves() {
        // E max(Z1, Z2) = 1 / sqrt(pi)
        let sh = s(2, 1);
        let mut src = RngStream::new(3, 0);
        let mut sampler = BrwSampler::<f64>::new(sh);
        let count = 1_000_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..count {
            let m = sampler.extremes(&mut src).max;
            sum += m;
            sq += m * m;
        }
        let mean = sum / count as f64;
        let se = ((sq / count as f64 - mean * mean) / count as f64).sqrt();
        assert!((mean - 0.564_189_583_547_756_3).abs() < 3.0 * se, "{mean} +- {se}");
    }

    #[test]
    fn comparison_rejects_bad_height() {
        assert!(ComparisonSampler::<f64>::new(s(2, 5), 0).is_err());
        assert!(ComparisonSampler::<f64>::new(s(2, 5), 6).is_err());
    }

    #[test]
    fn comparison_with_full_height_is_the_brw_max() {
        let sh = s(2, 6);
        let mut a = RngStream::new(8, 0);
        let mut b = RngStream::new(8, 0);
        let mut cmp = ComparisonSampler::<f64>::new(sh, 6).unwrap();
        let mut brw = BrwSampler::<f64>::new(sh);
        for _ in 0..50 {
            let c = cmp.sample(&mut a);
            let m = brw.extremes(&mut b).max;
            b.next_gaussian();
            assert_eq!(c.max, m);
        }
    }
}
