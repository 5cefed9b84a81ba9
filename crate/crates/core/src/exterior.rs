//! Exterior algebra of ℝⁿ in the basis `dx^I`, with index sets stored as
//! bitmasks (bit `j` set means `dx^{j+1}` is present).
//!
//! Basis order: by degree, then by bitmask. For n = 3 that is
//! 1, dx¹, dx², dx³, dx¹∧dx², dx¹∧dx³, dx²∧dx³, dx¹∧dx²∧dx³.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{CMatrix, C64};

/// Largest supported dimension. 2^8 = 256 forms per mode is already far past
/// what a desk-scale mode sum can afford.
pub const MAX_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExteriorBasis {
    n: usize,
    order: Vec<u32>,
    position: Vec<usize>,
}

impl ExteriorBasis {
    pub fn new(n: usize) -> Self {
        assert!(n <= MAX_DIM, "exterior algebra dimension {n} exceeds {MAX_DIM}");
        let mut order: Vec<u32> = (0..1u32 << n).collect();
        order.sort_by_key(|&m| (m.count_ones(), m));
        let mut position = vec![0; order.len()];
        for (i, &m) in order.iter().enumerate() {
            position[m as usize] = i;
        }
        Self { n, order, position }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn mask(&self, i: usize) -> u32 {
        self.order[i]
    }

    pub fn index_of(&self, mask: u32) -> usize {
        self.position[mask as usize]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.order[i].count_ones() as usize
    }

    pub fn masks(&self) -> &[u32] {
        &self.order
    }

    /// Indices of the basis elements of degree `k`.
    pub fn degree_range(&self, k: usize) -> core::ops::Range<usize> {
        let start: usize = (0..k).map(|j| binomial(self.n, j)).sum();
        start..start + binomial(self.n, k)
    }

    /// Matrix of left multiplication by `dx^I` (I as a bitmask).
    pub fn wedge(&self, mask: u32) -> CMatrix {
        let len = self.len();
        let mut m = CMatrix::zeros(len, len);
        for (col, &j) in self.order.iter().enumerate() {
            if let Some(s) = wedge_sign(mask, j) {
                m[(self.index_of(mask | j), col)] = C64::new(s, 0.0);
            }
        }
        m
    }

    /// The parity operator (−1)^degree.
    pub fn parity(&self) -> CMatrix {
        let d: Vec<C64> =
            (0..self.len()).map(|i| C64::new(if self.degree(i) % 2 == 0 { 1.0 } else { -1.0 }, 0.0)).collect();
        CMatrix::diagonal(&d)
    }
}

/// Sign of `dx^I ∧ dx^J = sign · dx^{I∪J}`, or `None` when I and J overlap.
/// The sign is the parity of the shuffle sorting the concatenation I J.
pub fn wedge_sign(i: u32, j: u32) -> Option<f64> {
    if i & j != 0 {
        return None;
    }
    // Count pairs (a in I, b in J) with a > b.
    let mut inversions = 0u32;
    let mut rest = i;
    while rest != 0 {
        let a = rest.trailing_zeros();
        inversions += (j & ((1u32 << a) - 1)).count_ones();
        rest &= rest - 1;
    }
    Some(if inversions % 2 == 0 { 1.0 } else { -1.0 })
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Indices (0-based) of the bits set in `mask`, ascending.
pub fn mask_indices(mask: u32) -> Vec<usize> {
    (0..32).filter(|&b| mask >> b & 1 == 1).collect()
}
