//! Depth-first leaf traversal shared by the tree samplers.
//!
//! A node's `d` child-edge increments are produced together when the walk
//! first enters the node, in digit order, and the walk then descends into
//! child 0. Working memory is an `n x d` increment stack; leaves are emitted in flat-index order.

use crate::rng::RngStream;
use crate::scalar::Real;
use crate::tree::TreeShape;

/// Largest leaf count a full-field sample may materialize.
pub const FULL_LEAF_BUDGET: u64 = 1 << 25;

/// Whether a sampler keeps every leaf value or only the summary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    Full,
    MaxOnly,
}

/// Source of the standard normals that drive tree edges.
///
/// `level` is the edge level being generated (1 for the root's edges, `n`
/// for the leaves' edges); level 0 marks draws outside the tree, such as the
/// shared Gaussian of the switching-sign decomposition.
pub trait NormalSource {
    fn standard_normal(&mut self, level: u32) -> f64;

    /// Next `out.len()` draws for the given levels, in order.
    fn fill_normals(&mut self, levels: impl Iterator<Item = u32>, out: &mut [f64]) {
        for (o, l) in out.iter_mut().zip(levels) {
            *o = self.standard_normal(l);
        }
    }
}

impl NormalSource for RngStream {
    #[inline(always)]
    fn standard_normal(&mut self, _level: u32) -> f64 {
        self.next_gaussian()
    }

    fn fill_normals(&mut self, _levels: impl Iterator<Item = u32>, out: &mut [f64]) {
        self.fill_gaussian(out);
    }
}

impl<S: NormalSource + ?Sized> NormalSource for &mut S {
    #[inline(always)]
    fn standard_normal(&mut self, level: u32) -> f64 {
        (**self).standard_normal(level)
    }

    fn fill_normals(&mut self, levels: impl Iterator<Item = u32>, out: &mut [f64]) {
        (**self).fill_normals(levels, out);
    }
}

pub trait LeafSink<T> {
    fn leaf(&mut self, index: u64, value: T);
}

/// Running max/argmax/min over the emitted leaves, plus the value of leaf 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremes<T> {
    pub max: T,
    pub argmax: u64,
    pub min: T,
    pub first: T,
}

impl<T: Real> Default for Extremes<T> {
    fn default() -> Self {
        Self { max: T::neg_infinity(), argmax: 0, min: T::infinity(), first: T::nan() }
    }
}

impl<T: Real> LeafSink<T> for Extremes<T> {
    #[inline(always)]
    fn leaf(&mut self, index: u64, value: T) {
        if index == 0 {
            self.first = value;
        }
        if value > self.max {
            self.max = value;
            self.argmax = index;
        }
        if value < self.min {
            self.min = value;
        }
    }
}

/// Keeps every leaf value alongside the running extremes.
#[derive(Debug, Clone)]
pub(crate) struct FullSink<T> {
    pub values: Vec<T>,
    pub extremes: Extremes<T>,
}

impl<T: Real> FullSink<T> {
    pub fn with_capacity(leaves: u64) -> Self {
        Self { values: Vec::with_capacity(leaves as usize), extremes: Extremes::default() }
    }
}

impl<T: Real> LeafSink<T> for FullSink<T> {
    #[inline(always)]
    fn leaf(&mut self, index: u64, value: T) {
        self.values.push(value);
        self.extremes.leaf(index, value);
    }
}

/// Walks the tree depth first. `fill(level, out)` writes the `d` increments
/// of the edges below a node whose children sit at depth `level`.
pub(crate) fn walk<T, F, S>(shape: &TreeShape, scratch: &mut Vec<T>, fill: F, sink: &mut S)
where
    T: Real,
    F: FnMut(u32, &mut [T]),
    S: LeafSink<T>,
{
    let d = shape.d() as usize;
    let n = shape.n();
    scratch.clear();
    scratch.resize(n as usize * d, T::zero());
    // small arities get fully unrolled child loops
    match d {
        2 => Walker::<F, S, 2> { d, n, fill, sink, index: 0 }.root(scratch),
        3 => Walker::<F, S, 3> { d, n, fill, sink, index: 0 }.root(scratch),
        4 => Walker::<F, S, 4> { d, n, fill, sink, index: 0 }.root(scratch),
        _ => Walker::<F, S, 0> { d, n, fill, sink, index: 0 }.root(scratch),
    }
}

struct Walker<'a, F, S, const D: usize> {
    d: usize,
    n: u32,
    fill: F,
    sink: &'a mut S,
    index: u64,
}

impl<F, S, const D: usize> Walker<'_, F, S, D> {
    #[inline(always)]
    fn arity(&self) -> usize {
        if D == 0 {
            self.d
        } else {
            D
        }
    }

    fn root<T>(&mut self, stack: &mut [T])
    where
        T: Real,
        F: FnMut(u32, &mut [T]),
        S: LeafSink<T>,
    {
        match self.n {
            1 => self.bottom1(1, T::zero(), stack),
            2 => self.bottom2(1, T::zero(), stack),
            3 => self.bottom3(1, T::zero(), stack),
            _ => self.node(1, T::zero(), stack),
        }
    }

    /// Calls `f` on each of the first `d` increments, fully unrolled for the
    /// const arities (loop exits inside the recursion predict badly).
    #[inline(always)]
    fn each<T: Copy>(this: &mut Self, incs: &[T], mut f: impl FnMut(&mut Self, T)) {
        match D {
            2 => {
                f(this, incs[0]);
                f(this, incs[1]);
            }
            3 => {
                f(this, incs[0]);
                f(this, incs[1]);
                f(this, incs[2]);
            }
            4 => {
                f(this, incs[0]);
                f(this, incs[1]);
                f(this, incs[2]);
                f(this, incs[3]);
            }
            _ => {
                for &inc in &incs[..this.d] {
                    f(this, inc);
                }
            }
        }
    }

    // The last three levels are expanded by fixed-height helpers so the
    // height test runs only at nodes with more than three levels below.

    #[inline(always)]
    fn bottom1<T>(&mut self, level: u32, base: T, stack: &mut [T])
    where
        T: Real,
        F: FnMut(u32, &mut [T]),
        S: LeafSink<T>,
    {
        let d = self.arity();
        let incs = &mut stack[..d];
        (self.fill)(level, incs);
        for &inc in incs.iter() {
            self.sink.leaf(self.index, base + inc);
            self.index += 1;
        }
    }

    #[inline(always)]
    fn bottom2<T>(&mut self, level: u32, base: T, stack: &mut [T])
    where
        T: Real,
        F: FnMut(u32, &mut [T]),
        S: LeafSink<T>,
    {
        let (incs, rest) = stack.split_at_mut(self.arity());
        (self.fill)(level, incs);
        for &inc in incs.iter() {
            self.bottom1(level + 1, base + inc, rest);
        }
    }

    #[inline(always)]
    fn bottom3<T>(&mut self, level: u32, base: T, stack: &mut [T])
    where
        T: Real,
        F: FnMut(u32, &mut [T]),
        S: LeafSink<T>,
    {
        let (incs, rest) = stack.split_at_mut(self.arity());
        (self.fill)(level, incs);
        for &inc in incs.iter() {
            self.bottom2(level + 1, base + inc, rest);
        }
    }

    // a node with at least four levels below it; recursion depth <= n - 3
    fn node<T>(&mut self, level: u32, base: T, stack: &mut [T])
    where
        T: Real,
        F: FnMut(u32, &mut [T]),
        S: LeafSink<T>,
    {
        let (incs, rest) = stack.split_at_mut(self.arity());
        (self.fill)(level, incs);
        if level + 4 > self.n {
            Self::each(self, incs, |w, inc| w.bottom3(level + 1, base + inc, rest));
        } else {
            Self::each(self, incs, |w, inc| w.node(level + 1, base + inc, rest));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Recorder(Vec<(u64, f64)>);

    impl LeafSink<f64> for Recorder {
        fn leaf(&mut self, index: u64, value: f64) {
            self.0.push((index, value));
        }
    }

    #[test]
    fn leaf_value_is_path_sum_of_level_tags() {
        // every edge at level l contributes 10^(l-1) * (digit + 1)
        let shape = TreeShape::new(3, 3).unwrap();
        let mut rec = Recorder(Vec::new());
        let mut scratch = Vec::new();
        walk(
            &shape,
            &mut scratch,
            |level, out: &mut [f64]| {
                for (i, x) in out.iter_mut().enumerate() {
                    *x = 10f64.powi(level as i32 - 1) * (i as f64 + 1.0);
                }
            },
            &mut rec,
        );
        assert_eq!(rec.0.len(), 27);
        for (k, &(index, value)) in rec.0.iter().enumerate() {
            assert_eq!(index, k as u64);
            let digits = [index / 9, (index / 3) % 3, index % 3];
            let want: f64 = digits.iter().enumerate().map(|(l, &x)| 10f64.powi(l as i32) * (x as f64 + 1.0)).sum();
            assert_eq!(value, want);
        }
    }

    #[test]
    fn fill_is_called_once_per_internal_node_in_preorder() {
        let shape = TreeShape::new(2, 4).unwrap();
        let mut levels = Vec::new();
        let mut scratch = Vec::new();
        walk(
            &shape,
            &mut scratch,
            |level, out: &mut [f64]| {
                levels.push(level);
                out.fill(0.0);
            },
            &mut Extremes::default(),
        );
        assert_eq!(levels.len() as u64, shape.internal_count());
        assert_eq!(levels, [1, 2, 3, 4, 4, 3, 4, 4, 2, 3, 4, 4, 3, 4, 4]);
    }

    #[test]
    fn height_one() {
        let shape = TreeShape::new(4, 1).unwrap();
        let mut rec = Recorder(Vec::new());
        let mut scratch = Vec::new();
        walk(
            &shape,
            &mut scratch,
            |_, out: &mut [f64]| {
                for (i, x) in out.iter_mut().enumerate() {
                    *x = i as f64;
                }
            },
            &mut rec,
        );
        assert_eq!(rec.0, vec![(0, 0.0), (1, 1.0), (2, 2.0), (3, 3.0)]);
    }
}
