//! Shared test fixtures.

use crate::coords::JointTable;

/// Deterministic table with every cell well inside the simplex, so
/// finite-difference perturbations and log transforms stay comfortable.
pub(crate) fn random_interior_table(n: usize, seed: u64) -> JointTable {
    let size = 1usize << n;
    let mut s = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1);
    let mut w = Vec::with_capacity(size);
    for _ in 0..size {
        s ^= s >> 12;
        s ^= s << 25;
        s ^= s >> 27;
        let u = (s.wrapping_mul(0x2545_f491_4f6c_dd1d) >> 11) as f64 / (1u64 << 53) as f64;
        w.push(0.7 * u + 0.3);
    }
    JointTable::from_unnormalized(n, &w).unwrap()
}
