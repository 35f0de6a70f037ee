//! Subset indices over binary variables and fast subset-lattice transforms.
//!
//! A set of variables I ⊆ {1..n} is stored as a bitmask with variable i on
//! bit i-1. Vectors over the lattice are indexed by that mask, so index 0 is
//! the empty set and masks run in increasing numeric order.

/// Bitmask identifying a subset of the variables {1..n}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SubsetIndex(pub u32);

impl SubsetIndex {
    pub const EMPTY: SubsetIndex = SubsetIndex(0);

    /// Subset containing only variable `var` (1-based).
    pub fn singleton(var: usize) -> SubsetIndex {
        SubsetIndex(1 << (var - 1))
    }

    pub fn from_vars(vars: &[usize]) -> SubsetIndex {
        SubsetIndex(vars.iter().fold(0u32, |m, &v| m | (1 << (v - 1))))
    }

    /// Number of variables in the subset.
    #[inline]
    pub fn order(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn contains_var(self, var: usize) -> bool {
        self.0 >> (var - 1) & 1 == 1
    }

    #[inline]
    pub fn union(self, other: SubsetIndex) -> SubsetIndex {
        SubsetIndex(self.0 | other.0)
    }

    #[inline]
    pub fn intersection(self, other: SubsetIndex) -> SubsetIndex {
        SubsetIndex(self.0 & other.0)
    }

    #[inline]
    pub fn is_subset_of(self, other: SubsetIndex) -> bool {
        self.0 & !other.0 == 0
    }

    /// 1-based variable ids, ascending.
    pub fn vars(self) -> impl Iterator<Item = usize> {
        let m = self.0;
        (0..32).filter(move |b| m >> b & 1 == 1).map(|b| b + 1)
    }
}

/// Nonempty subset masks of {1..n} with order <= l, increasing bitmask order.
pub fn masks_up_to_order(n: usize, l: usize) -> Vec<u32> {
    (1u32..1 << n)
        .filter(|m| (m.count_ones() as usize) <= l)
        .collect()
}

/// Subset masks of {1..n} with order > l, increasing bitmask order.
pub fn masks_above_order(n: usize, l: usize) -> Vec<u32> {
    (1u32..1 << n)
        .filter(|m| (m.count_ones() as usize) > l)
        .collect()
}

/// All nonempty subset masks of {1..n}, increasing bitmask order.
pub fn all_masks(n: usize) -> Vec<u32> {
    (1u32..1 << n).collect()
}

/// In place: v[m] <- sum over supersets k of m of v[k].
pub fn superset_sum_transform(v: &mut [f64]) {
    let size = v.len();
    debug_assert!(size.is_power_of_two());
    let mut bit = 1;
    while bit < size {
        for m in 0..size {
            if m & bit == 0 {
                v[m] += v[m | bit];
            }
        }
        bit <<= 1;
    }
}

/// Inverse of `superset_sum_transform`: v[m] <- sum over supersets k of m of
/// (-1)^|k \ m| v[k].
pub fn superset_moebius_transform(v: &mut [f64]) {
    let size = v.len();
    debug_assert!(size.is_power_of_two());
    let mut bit = 1;
    while bit < size {
        for m in 0..size {
            if m & bit == 0 {
                v[m] -= v[m | bit];
            }
        }
        bit <<= 1;
    }
}

/// In place: v[m] <- sum over subsets k of m of v[k].
pub fn subset_sum_transform(v: &mut [f64]) {
    let size = v.len();
    debug_assert!(size.is_power_of_two());
    let mut bit = 1;
    while bit < size {
        for m in 0..size {
            if m & bit != 0 {
                v[m] += v[m & !bit];
            }
        }
        bit <<= 1;
    }
}

/// Inverse of `subset_sum_transform`: v[m] <- sum over subsets k of m of
/// (-1)^|m \ k| v[k].
pub fn subset_moebius_transform(v: &mut [f64]) {
    let size = v.len();
    debug_assert!(size.is_power_of_two());
    let mut bit = 1;
    while bit < size {
        for m in 0..size {
            if m & bit != 0 {
                v[m] -= v[m & !bit];
            }
        }
        bit <<= 1;
    }
}
