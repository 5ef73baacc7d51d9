//! Leaf addressing and the tree metric on the complete d-ary tree of height n.
//!
//! Only leaves carry field values. A leaf is a path of `n` base-`d` digits;
//! the first digit is the edge below the root. The flat index of a leaf is the
//! same digit string read as a base-`d` number, so depth-first traversal in
//! digit order visits leaves in increasing flat index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Branching factor and height of a complete d-ary tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TreeShape {
    d: u32,
    n: u32,
    leaves: u64,
}

impl TreeShape {
    pub fn new(d: u32, n: u32) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidShape { d, n, reason: "branching factor must be at least 2" });
        }
        if n < 1 {
            return Err(Error::InvalidShape { d, n, reason: "height must be at least 1" });
        }
        let leaves = (d as u64).checked_pow(n).ok_or(Error::LeafCountOverflow { d, n })?;
        Ok(Self { d, n, leaves })
    }

    #[inline]
    pub fn d(&self) -> u32 {
        self.d
    }

    #[inline]
    pub fn n(&self) -> u32 {
        self.n
    }

    /// Number of leaves, `d^n`.
    #[inline]
    pub fn leaf_count(&self) -> u64 {
        self.leaves
    }

    /// Number of internal vertices, `(d^n - 1) / (d - 1)`.
    pub fn internal_count(&self) -> u64 {
        (self.leaves - 1) / (self.d as u64 - 1)
    }

    pub fn leaf(&self, digits: &[u32]) -> Result<LeafId> {
        LeafId::new(digits.to_vec(), self)
    }

    /// Iterates all leaves in flat-index order.
    pub fn leaves(&self) -> impl Iterator<Item = LeafId> + '_ {
        (0..self.leaves).map(move |i| LeafId::from_flat_unchecked(i, self))
    }
}

impl std::fmt::Display for TreeShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(d={}, n={})", self.d, self.n)
    }
}

/// Returns `d^n`, rejecting shapes whose leaf count overflows `u64`.
pub fn leaf_count(d: u32, n: u32) -> Result<u64> {
    TreeShape::new(d, n).map(|s| s.leaf_count())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LeafId {
    digits: Vec<u32>,
}

impl LeafId {
    pub fn new(digits: Vec<u32>, shape: &TreeShape) -> Result<Self> {
        if digits.len() != shape.n as usize {
            return Err(Error::LengthMismatch { expected: shape.n as usize, got: digits.len() });
        }
        if let Some((position, &digit)) = digits.iter().enumerate().find(|(_, &x)| x >= shape.d) {
            return Err(Error::DigitOutOfRange { position, digit, d: shape.d });
        }
        Ok(Self { digits })
    }

    pub fn from_flat(index: u64, shape: &TreeShape) -> Result<Self> {
        if index >= shape.leaves {
            return Err(Error::IndexOutOfRange { index, count: shape.leaves });
        }
        Ok(Self::from_flat_unchecked(index, shape))
    }

    fn from_flat_unchecked(mut index: u64, shape: &TreeShape) -> Self {
        let d = shape.d as u64;
        let mut digits = vec![0u32; shape.n as usize];
        for slot in digits.iter_mut().rev() {
            *slot = (index % d) as u32;
            index /= d;
        }
        Self { digits }
    }

    /// Flat index with the most significant digit at the root.
    pub fn to_flat(&self, shape: &TreeShape) -> u64 {
        let d = shape.d as u64;
        self.digits.iter().fold(0u64, |acc, &x| acc * d + x as u64)
    }

    pub fn digits(&self) -> &[u32] {
        &self.digits
    }
}

fn check_pair(u: &LeafId, v: &LeafId, shape: &TreeShape) -> Result<()> {
    let n = shape.n as usize;
    for leaf in [u, v] {
        if leaf.digits.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: leaf.digits.len() });
        }
    }
    Ok(())
}

/// Depth of the deepest common ancestor: the length of the common digit prefix.
pub fn split_depth(u: &LeafId, v: &LeafId, shape: &TreeShape) -> Result<u32> {
    check_pair(u, v, shape)?;
    Ok(u.digits.iter().zip(&v.digits).take_while(|(a, b)| a == b).count() as u32)
}

/// Graph distance between two leaves, `2 (n - split_depth)`.
pub fn tree_distance(u: &LeafId, v: &LeafId, shape: &TreeShape) -> Result<u32> {
    Ok(2 * (shape.n - split_depth(u, v, shape)?))
}

/// Split depth of two flat leaf indices without materializing digit paths.
pub fn split_depth_flat(a: u64, b: u64, shape: &TreeShape) -> u32 {
    let d = shape.d as u64;
    let (mut a, mut b) = (a, b);
    let mut diverged_below = 0;
    // strip digits from the leaf end until the remaining prefixes agree
    while a != b {
        a /= d;
        b /= d;
        diverged_below += 1;
    }
    shape.n - diverged_below
}
