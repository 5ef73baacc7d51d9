//! Switching-sign branching random walk.
//!
//! At every internal node the `d` child increments are exchangeable and sum
//! to zero: `d - 1` of them are `A z` for a mixing matrix `A` with
//! `A A^T = sigma^2 (I (1 + 1/(d-1)) - 11^T/(d-1))`, the last is minus their
//! sum. Edges at level `l` (root edges are level 1) use
//! `sigma_l^2 = 1 - d^-(n-l+1)`. The zero-sum field `phi_tilde` plus an
//! independent shared Gaussian `X ~ N(0, sigma_{d,n}^2)`,
//! `sigma_{d,n}^2 = (1 - d^-n)/(d-1)`, has exactly the BRW covariance, so
//! `P(all leaves >= 0) = P(max phi_tilde <= X)`.

use crate::error::{Error, Result};
use crate::field::{walk, Extremes, FullSink, NormalSource, SampleMode, FULL_LEAF_BUDGET};
use crate::gaussian::{cholesky_small, LowerTriangular, SmallSpdMatrix};
use crate::scalar::Real;
use crate::tree::{split_depth, LeafId, TreeShape};

/// Variance of the shared Gaussian, `(1 - d^-n) / (d - 1)`.
pub fn sigma2_dn<T: Real>(shape: &TreeShape) -> T {
    shared_variance(shape.d(), shape.n())
}

/// `(1 - d^-n) / (d - 1)` for any `d >= 2`, `n >= 1`, including heights whose
/// leaf count exceeds the addressable width.
pub fn shared_variance<T: Real>(d: u32, n: u32) -> T {
    let d = T::of(d as f64);
    (T::one() - d.powi(-(n as i32))) / (d - T::one())
}

/// `1 - d^-(n-l+1)`; callers guarantee `1 <= l <= n`.
pub fn edge_variance<T: Real>(d: u32, n: u32, l: u32) -> T {
    T::one() - T::of(d as f64).powi(-((n - l + 1) as i32))
}

/// Variance of a level-`l` increment, `1 - d^-(n-l+1)`, for `1 <= l <= n`.
pub fn level_variance<T: Real>(l: u32, shape: &TreeShape) -> Result<T> {
    if l < 1 || l > shape.n() {
        return Err(Error::InvalidArgument(format!("level {l} outside [1, {}]", shape.n())));
    }
    Ok(edge_variance(shape.d(), shape.n(), l))
}

/// Mixing matrix for one node: lower-triangular `A` of size `d - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchMatrix<T> {
    d: u32,
    sigma2: T,
    a: LowerTriangular<T>,
}

/// The `(d-1) x (d-1)` target `sigma^2 [1 on the diagonal, -1/(d-1) elsewhere]`.
fn pattern_matrix<T: Real>(d: u32, sigma2: T) -> Result<SmallSpdMatrix<T>> {
    let k = (d - 1) as usize;
    let off = -sigma2 / T::of((d - 1) as f64);
    let entries = (0..k * k).map(|i| if i / k == i % k { sigma2 } else { off }).collect();
    SmallSpdMatrix::new(k, entries)
}

pub fn build_switch_matrix<T: Real>(d: u32, sigma2: T) -> Result<SwitchMatrix<T>> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!("branching factor {d} < 2")));
    }
    if !(sigma2 > T::zero()) {
        return Err(Error::InvalidArgument(format!("level variance {sigma2} must be positive")));
    }
    let a = cholesky_small(&pattern_matrix(d, sigma2)?)?;
    Ok(SwitchMatrix { d, sigma2, a })
}

impl<T: Real> SwitchMatrix<T> {
    pub fn d(&self) -> u32 {
        self.d
    }

    pub fn sigma2(&self) -> T {
        self.sigma2
    }

    pub fn matrix(&self) -> &LowerTriangular<T> {
        &self.a
    }

    /// Same pattern at another variance: `A(s2) = sqrt(s2 / sigma2) A(sigma2)`.
    pub fn rescaled(&self, sigma2: T) -> Self {
        Self { d: self.d, sigma2, a: self.a.scaled((sigma2 / self.sigma2).sqrt()) }
    }

    /// Writes the `d` child increments for `d - 1` standard normals `z`.
    #[inline]
    pub fn increments(&self, z: &[T], out: &mut [T]) {
        if self.d == 2 {
            let y = self.a.get(0, 0) * z[0];
            out[0] = y;
            out[1] = -y;
            return;
        }
        let k = self.d as usize - 1;
        self.a.apply(&z[..k], &mut out[..k]);
        let mut total = T::zero();
        for &x in &out[..k] {
            total += x;
        }
        out[k] = -total;
    }

    /// Covariance of the `d` child increments, row-major `d x d`.
    pub fn child_covariance(&self) -> Vec<T> {
        let k = self.d as usize - 1;
        let d = self.d as usize;
        let gram = self.a.gram();
        let mut cov = vec![T::zero(); d * d];
        for i in 0..k {
            for j in 0..k {
                cov[i * d + j] = gram[i * k + j];
            }
        }
        // last child is -1^T A z
        for i in 0..k {
            let c = -(0..k).map(|j| gram[i * k + j]).sum::<T>();
            cov[i * d + k] = c;
            cov[k * d + i] = c;
        }
        cov[k * d + k] = gram.iter().copied().sum();
        cov
    }
}

/// Per-level mixing matrices for a tree shape; one factorization, rescaled.
#[derive(Debug, Clone)]
pub struct SwitchLevels<T> {
    shape: TreeShape,
    levels: Vec<SwitchMatrix<T>>,
}

impl<T: Real> SwitchLevels<T> {
    pub fn new(shape: TreeShape) -> Result<Self> {
        let unit = build_switch_matrix(shape.d(), T::one())?;
        let levels =
            (1..=shape.n()).map(|l| level_variance(l, &shape).map(|v| unit.rescaled(v))).collect::<Result<_>>()?;
        Ok(Self { shape, levels })
    }

    pub fn level(&self, l: u32) -> &SwitchMatrix<T> {
        &self.levels[l as usize - 1]
    }

    /// Draws the `d - 1` normals of one level-`l` node in digit order and
    /// writes its `d` zero-sum child increments.
    #[inline]
    pub fn node_increments<S: NormalSource>(&self, l: u32, src: &mut S, z: &mut [T], out: &mut [T]) {
        let k = self.shape.d() as usize - 1;
        for x in z[..k].iter_mut() {
            *x = T::of(src.standard_normal(l));
        }
        self.level(l).increments(z, out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SsbrwSample<T> {
    pub shape: TreeShape,
    /// Zero-sum field in flat-index order; `None` in max-only mode.
    pub phi_tilde: Option<Vec<T>>,
    pub max: T,
    pub argmax: LeafId,
    /// Shared Gaussian `X`; the BRW-distributed field is `phi_tilde + X`.
    pub x_shared: T,
}

/// Summary of one draw without allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiTildeDraw<T> {
    pub extremes: Extremes<T>,
    pub x_shared: T,
}

#[derive(Debug, Clone)]
pub struct PhiTildeSampler<T> {
    levels: SwitchLevels<T>,
    sigma: T,
    scratch: Vec<T>,
    z: Vec<T>,
    block_slots: Vec<u32>,
    block: Vec<T>,
    pre: Vec<f64>,
    // level l's factor entries, k x k row-major, at (l - 1) * k * k
    flat: Vec<T>,
}

impl<T: Real> PhiTildeSampler<T> {
    pub fn new(shape: TreeShape) -> Result<Self> {
        Ok(Self {
            levels: SwitchLevels::new(shape)?,
            sigma: sigma2_dn::<T>(&shape).sqrt(),
            scratch: Vec::new(),
            z: vec![T::zero(); shape.d() as usize],
            block_slots: Vec::new(),
            block: Vec::new(),
            pre: Vec::new(),
            flat: Vec::new(),
        }
        .with_flat())
    }

    fn with_flat(mut self) -> Self {
        self.flat = self.levels.levels.iter().flat_map(|m| m.a.entries().iter().copied()).collect();
        self
    }

    pub fn shape(&self) -> &TreeShape {
        &self.levels.shape
    }

    /// Standard deviation of the shared Gaussian.
    pub fn sigma(&self) -> T {
        self.sigma
    }

    fn run<S: NormalSource, K: crate::field::LeafSink<T>>(&mut self, src: &mut S, sink: &mut K) -> T {
        let Self { levels, scratch, z, sigma, flat, .. } = self;
        let k = levels.shape.d() as usize - 1;
        if k == 1 {
            walk(
                &levels.shape,
                scratch,
                |l, out| {
                    let y = flat[l as usize - 1] * T::of(src.standard_normal(l));
                    out[0] = y;
                    out[1] = -y;
                },
                sink,
            );
        } else {
            walk(
                &levels.shape,
                scratch,
                |l, out| {
                    let a = &flat[(l as usize - 1) * k * k..l as usize * k * k];
                    for x in z[..k].iter_mut() {
                        *x = T::of(src.standard_normal(l));
                    }
                    let mut total = T::zero();
                    for row in 0..k {
                        let mut acc = T::zero();
                        for col in 0..=row {
                            acc += a[row * k + col] * z[col];
                        }
                        out[row] = acc;
                        total += acc;
                    }
                    out[k] = -total;
                },
                sink,
            );
        }
        // drawn after the traversal so both modes share one stream layout
        *sigma * T::of(src.standard_normal(0))
    }

    pub fn draw<S: NormalSource>(&mut self, src: &mut S) -> PhiTildeDraw<T> {
        let mut extremes = Extremes::default();
        let x_shared = self.run(src, &mut extremes);
        PhiTildeDraw { extremes, x_shared }
    }

    /// Maximum of `phi_tilde` and the shared Gaussian: the same values as
    /// `draw`, bit for bit, from the same stream positions.
    ///
    /// For `d = 2` the normals of each bottom subtree are generated in one
    /// tight loop and the subtree is then reduced from that buffer, which
    /// keeps the stream counter out of the traversal.
    pub fn max_and_shared<S: NormalSource>(&mut self, src: &mut S) -> (T, T) {
        if self.levels.shape.d() != 2 {
            let d = self.draw(src);
            return (d.extremes.max, d.x_shared);
        }
        let n = self.levels.shape.n();
        let h = n.min(BLOCK_HEIGHT);
        if self.block_slots.len() != (1usize << h) - 1 {
            self.block_slots = preorder_slots(h);
            self.block = vec![T::zero(); 3 << h];
            self.pre = vec![0.0; self.block_slots.len()];
        }
        let (z, sums) = self.block.split_at_mut(1 << h);
        let pre = &mut self.pre[..];
        let mut b = BinaryMax { n, h, coef: &self.flat, slots: &self.block_slots, pre, z, sums };
        let max = b.node(1, T::zero(), src);
        (max, self.sigma * T::of(src.standard_normal(0)))
    }

    pub fn sample<S: NormalSource>(&mut self, src: &mut S, mode: SampleMode) -> Result<SsbrwSample<T>> {
        let shape = self.levels.shape;
        let (phi_tilde, ext, x_shared) = match mode {
            SampleMode::MaxOnly => {
                let d = self.draw(src);
                (None, d.extremes, d.x_shared)
            }
            SampleMode::Full => {
                let leaves = shape.leaf_count();
                if leaves > FULL_LEAF_BUDGET {
                    return Err(Error::BudgetExceeded { requested: leaves, budget: FULL_LEAF_BUDGET });
                }
                let mut sink = FullSink::with_capacity(leaves);
                let x = self.run(src, &mut sink);
                (Some(sink.values), sink.extremes, x)
            }
        };
        Ok(SsbrwSample { shape, phi_tilde, max: ext.max, argmax: LeafId::from_flat(ext.argmax, &shape)?, x_shared })
    }
}

/// Height of the bottom subtrees whose normals are buffered at once.
const BLOCK_HEIGHT: u32 = 10;

/// Breadth-first slot of each internal node of a binary subtree of height
/// `h`, listed in preorder.
fn preorder_slots(h: u32) -> Vec<u32> {
    fn visit(slot: u32, h: u32, out: &mut Vec<u32>) {
        out.push(slot);
        // slots are 1-based heap positions, so children of s are 2s and 2s + 1
        if 2 * slot < 1 << h {
            visit(2 * slot, h, out);
            visit(2 * slot + 1, h, out);
        }
    }
    let mut out = Vec::with_capacity((1usize << h) - 1);
    visit(1, h, &mut out);
    out
}

struct BinaryMax<'a, T> {
    n: u32,
    h: u32,
    coef: &'a [T],
    slots: &'a [u32],
    pre: &'a mut [f64],
    z: &'a mut [T],
    sums: &'a mut [T],
}

impl<T: Real> BinaryMax<'_, T> {
    fn node<S: NormalSource>(&mut self, l: u32, base: T, src: &mut S) -> T {
        if l + self.h > self.n {
            return self.block(l, base, src);
        }
        let y = self.coef[l as usize - 1] * T::of(src.standard_normal(l));
        let left = self.node(l + 1, base + y, src);
        let right = self.node(l + 1, base + -y, src);
        left.max(right)
    }

    /// Bottom subtree rooted at level `l`: draws its normals in preorder
    /// into heap order, then sums level by level from the root down, so each
    /// leaf is `((base + y_1) + y_2) + ...` exactly as in the full traversal.
    fn block<S: NormalSource>(&mut self, l: u32, base: T, src: &mut S) -> T {
        let depth = |slot: u32| 31 - slot.leading_zeros();
        src.fill_normals(self.slots.iter().map(|&s| l + depth(s)), self.pre);
        for (&slot, &z) in self.slots.iter().zip(self.pre.iter()) {
            self.z[slot as usize] = T::of(z);
        }
        let half = 1usize << (self.h - 1);
        let (cur, next) = self.sums.split_at_mut(half);
        cur[0] = base;
        let mut width = 1;
        // rows above the leaves alternate between the two halves of `sums`
        for depth in 0..self.h - 1 {
            let c = self.coef[(l + depth) as usize - 1];
            let z = &self.z[width..2 * width];
            let (from, to) = if depth % 2 == 0 { (&*cur, &mut *next) } else { (&*next, &mut *cur) };
            for ((pair, &b), &z) in to[..2 * width].chunks_exact_mut(2).zip(&from[..width]).zip(z) {
                let y = c * z;
                pair[0] = b + y;
                pair[1] = b + -y;
            }
            width *= 2;
        }
        let last = if self.h % 2 == 1 { &*cur } else { &*next };
        let c = self.coef[(l + self.h - 1) as usize - 1];
        let mut best = [T::neg_infinity(); 4];
        for (b4, z4) in last[..width].chunks(4).zip(self.z[width..2 * width].chunks(4)) {
            for ((m, &b), &z) in best.iter_mut().zip(b4).zip(z4) {
                let y = c * z;
                let v = (b + y).max(b + -y);
                if v > *m {
                    *m = v;
                }
            }
        }
        best[0].max(best[1]).max(best[2].max(best[3]))
    }
}

pub fn sample_phi_tilde<T: Real, S: NormalSource>(
    shape: &TreeShape,
    src: &mut S,
    mode: SampleMode,
) -> Result<SsbrwSample<T>> {
    PhiTildeSampler::new(*shape)?.sample(src, mode)
}

/// Exact covariance of `phi_tilde` at two leaves: BRW covariance minus `sigma_{d,n}^2`.
pub fn phi_tilde_cov<T: Real>(u: &LeafId, v: &LeafId, shape: &TreeShape) -> Result<T> {
    let k = split_depth(u, v, shape)?;
    Ok(T::of(k as f64) - sigma2_dn::<T>(shape))
}

/// Covariance of `phi_tilde` assembled edge by edge from the level variances:
/// shared levels contribute their variance, the level where the paths split
/// contributes the sibling covariance `-sigma_l^2/(d-1)`.
pub fn phi_tilde_cov_by_levels<T: Real>(u: &LeafId, v: &LeafId, shape: &TreeShape) -> Result<T> {
    let k = split_depth(u, v, shape)?;
    let mut cov = T::zero();
    for l in 1..=k {
        cov += level_variance::<T>(l, shape)?;
    }
    if k < shape.n() {
        cov -= level_variance::<T>(k + 1, shape)? / T::of((shape.d() - 1) as f64);
    }
    Ok(cov)
}
