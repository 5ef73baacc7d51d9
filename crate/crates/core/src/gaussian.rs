//! Scalar Gaussian numerics and small dense Cholesky factorization.
//!
//! The upper tail `Q(x) = P(Z >= x)` is evaluated without forming `1 - Phi(x)`:
//! a positive-term power series covers the body and the Laplace continued
//! fraction for the Mills ratio covers the tail, so relative accuracy holds
//! far into the tail (the Rao-Blackwellized estimators call it at `x ~ 20+`).

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Below this argument the power series is used, above it the continued fraction.
const SERIES_LIMIT: f64 = 3.0;

const MAX_TERMS: usize = 500;

/// Standard normal density.
#[inline]
pub fn normal_density<T: Real>(x: T) -> T {
    let inv_sqrt_2pi = T::FRAC_1_SQRT_2() * T::FRAC_2_SQRT_PI() * T::of(0.5);
    inv_sqrt_2pi * (-(x * x) * T::of(0.5)).exp()
}

/// Natural log of the standard normal density.
#[inline]
pub fn log_normal_density<T: Real>(x: T) -> T {
    // ln(1/sqrt(2 pi))
    T::of(-0.918_938_533_204_672_8) - x * x * T::of(0.5)
}

/// `(Phi(x) - 1/2) / phi(x) = sum_k x^(2k+1) / (2k+1)!!`, all terms share the sign of `x`.
fn body_series<T: Real>(x: T) -> T {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut k = 0usize;
    while k < MAX_TERMS {
        term *= x2 / T::of((2 * k + 3) as f64);
        sum += term;
        if term.abs() <= sum.abs() * T::epsilon() {
            break;
        }
        k += 1;
    }
    sum
}

/// Mills ratio `Q(x)/phi(x)` for `x >= SERIES_LIMIT` by modified Lentz on
/// `1/(x + 1/(x + 2/(x + 3/(x + ...))))`.
fn mills_continued_fraction<T: Real>(x: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let mut f = x;
    let mut c = f;
    let mut d = T::zero();
    for j in 1..MAX_TERMS {
        let a = T::of(j as f64);
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        d = d.recip();
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        let delta = c * d;
        f *= delta;
        if (delta - T::one()).abs() <= T::epsilon() {
            break;
        }
    }
    f.recip()
}

/// Upper tail probability `P(Z >= x)` of a standard normal.
///
/// Total on the extended reals: `Q(-inf) = 1`, `Q(+inf) = 0`.
pub fn normal_tail_q<T: Real>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    if x < T::zero() {
        return T::one() - normal_tail_q(-x);
    }
    if x == T::infinity() {
        return T::zero();
    }
    if x <= T::of(SERIES_LIMIT) {
        T::of(0.5) - normal_density(x) * body_series(x)
    } else {
        normal_density(x) * mills_continued_fraction(x)
    }
}

/// Standard normal distribution function `P(Z <= x)`.
pub fn normal_cdf<T: Real>(x: T) -> T {
    normal_tail_q(-x)
}

/// Mills ratio `Q(x) / phi(x)`.
pub fn mills_ratio<T: Real>(x: T) -> T {
    if x > T::of(SERIES_LIMIT) {
        mills_continued_fraction(x)
    } else {
        normal_tail_q(x) / normal_density(x)
    }
}

/// `ln Q(x)`, accurate where `Q(x)` itself underflows.
pub fn log_normal_tail_q<T: Real>(x: T) -> T {
    if x > T::of(SERIES_LIMIT) {
        log_normal_density(x) + mills_continued_fraction(x).ln()
    } else if x < -T::of(SERIES_LIMIT) {
        (-normal_tail_q(-x)).ln_1p()
    } else {
        normal_tail_q(x).ln()
    }
}

/// Truncated first moment `E[Z; Z >= x]`, which equals `phi(x)`.
#[inline]
pub fn truncated_first_moment<T: Real>(x: T) -> T {
    if x.is_infinite() {
        return T::zero();
    }
    normal_density(x)
}

/// Largest dimension accepted by [`SmallSpdMatrix`].
pub const SMALL_DIM_LIMIT: usize = 64;

/// Dense symmetric matrix of dimension at most [`SMALL_DIM_LIMIT`], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallSpdMatrix<T> {
    dim: usize,
    entries: Vec<T>,
}

impl<T: Real> SmallSpdMatrix<T> {
    pub fn new(dim: usize, entries: Vec<T>) -> Result<Self> {
        if dim > SMALL_DIM_LIMIT {
            return Err(Error::DimensionTooLarge { dim, limit: SMALL_DIM_LIMIT });
        }
        check_square_symmetric(dim, &entries)?;
        Ok(Self { dim, entries })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        let mut entries = vec![T::zero(); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = T::one();
        }
        Self::new(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }
}

pub(crate) fn check_square_symmetric<T: Real>(dim: usize, entries: &[T]) -> Result<()> {
    if entries.len() != dim * dim {
        return Err(Error::DimensionMismatch { expected: dim * dim, got: entries.len() });
    }
    let rel = T::of(1e-12).max(T::epsilon() * T::of(4.0));
    for row in 0..dim {
        for col in row + 1..dim {
            let (a, b) = (entries[row * dim + col], entries[col * dim + row]);
            let scale = T::one().max(a.abs()).max(b.abs());
            if !((a - b).abs() <= rel * scale) {
                return Err(Error::NotSymmetric { row, col });
            }
        }
    }
    Ok(())
}

/// Row-major lower-triangular factor.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangular<T> {
    dim: usize,
    entries: Vec<T>,
}

impl<T: Real> LowerTriangular<T> {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.entries[row * self.dim + col]
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    /// Every entry multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|&x| x * factor).collect() }
    }

    /// `out = L z`.
    pub fn apply(&self, z: &[T], out: &mut [T]) {
        let n = self.dim;
        for (row, slot) in out.iter_mut().enumerate().take(n) {
            let r = &self.entries[row * n..row * n + row + 1];
            *slot = r.iter().zip(z).fold(T::zero(), |acc, (&l, &x)| acc + l * x);
        }
    }

    /// `L L^T`, row-major.
    pub fn gram(&self) -> Vec<T> {
        let n = self.dim;
        let mut out = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = T::zero();
                for k in 0..=j {
                    s += self.get(i, k) * self.get(j, k);
                }
                out[i * n + j] = s;
                out[j * n + i] = s;
            }
        }
        out
    }
}

/// Cholesky factorization with clamping of slightly negative pivots.
///
/// Pivots in `[-neg_tol, 0]` (relative to the largest diagonal entry) are set
/// to zero and their column below the diagonal is zeroed; more negative
/// pivots are rejected.
pub(crate) fn cholesky_clamped<T: Real>(dim: usize, entries: &[T], neg_tol: T) -> Result<LowerTriangular<T>> {
    let scale = (0..dim).map(|i| entries[i * dim + i].abs()).fold(T::one(), T::max);
    let tol = neg_tol * scale;
    let mut l = vec![T::zero(); dim * dim];
    for j in 0..dim {
        let mut pivot = entries[j * dim + j];
        for k in 0..j {
            pivot -= l[j * dim + k] * l[j * dim + k];
        }
        if pivot < -tol || pivot.is_nan() {
            return Err(Error::NotPositiveSemidefinite { row: j, pivot: pivot.to_f64_lossy() });
        }
        if pivot <= T::zero() {
            // rank-deficient direction
            continue;
        }
        let root = pivot.sqrt();
        l[j * dim + j] = root;
        for i in j + 1..dim {
            let mut s = entries[i * dim + j];
            for k in 0..j {
                s -= l[i * dim + k] * l[j * dim + k];
            }
            l[i * dim + j] = s / root;
        }
    }
    Ok(LowerTriangular { dim, entries: l })
}

/// Lower Cholesky factor `L` with `L L^T = m` and a nonnegative diagonal.
///
/// Fails with [`Error::NotPositiveSemidefinite`] on a pivot below `-1e-12`;
/// pivots in `[-1e-12, 0]` are clamped to zero.
pub fn cholesky_small<T: Real>(m: &SmallSpdMatrix<T>) -> Result<LowerTriangular<T>> {
    let tol = T::of(1e-12).max(T::epsilon() * T::of(16.0));
    cholesky_clamped(m.dim, &m.entries, tol)
}
