//! Fisher information matrices in each coordinate system, closed form:
//!
//! * theta system: g_{IJ} = eta_{I u J} - eta_I eta_J;
//! * eta system: g^{IJ} = (-1)^{|I|+|J|} sum_{K <= I n J} 1/p_K;
//! * l-mixed system: block diagonal, A on the eta block and B on the theta
//!   block, where A = ((G_eta^{-1})_low)^{-1} and B = ((G_theta^{-1})_high)^{-1}.
//!   Since G_eta^{-1} = G_theta exactly, A is the inverse of the low-order
//!   block of G_theta and B the inverse of the high-order block of G_eta.
//!
//! `fisher_oracle` rebuilds any of these from finite-difference scores as an
//! independent cross-check, and `fid` is the Fisher information distance
//! sqrt(dxi^T G dxi) with G evaluated at the first argument.

use crate::coords::{
    eta_to_p, from_mixed_with, p_to_eta, p_to_mixed, p_to_theta, theta_to_p, EtaVector,
    JointTable, MixedCoords, NewtonOptions, ThetaVector,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::subset::{
    all_masks, masks_above_order, masks_up_to_order, subset_sum_transform,
    superset_sum_transform, SubsetIndex,
};

/// Coordinate system selector for Fisher matrices and FID.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordSystem {
    Theta,
    Eta,
    Mixed(usize),
}

/// Fisher information matrix with its coordinate bookkeeping.
#[derive(Debug, Clone)]
pub struct FisherMatrix {
    pub coord: CoordSystem,
    /// Subset labeling the row/column at each position.
    pub index_order: Vec<SubsetIndex>,
    pub mat: Matrix,
}

fn index_order_for(n: usize, coord: CoordSystem) -> Vec<u32> {
    match coord {
        CoordSystem::Theta | CoordSystem::Eta => all_masks(n),
        CoordSystem::Mixed(l) => {
            let mut v = masks_up_to_order(n, l);
            v.extend(masks_above_order(n, l));
            v
        }
    }
}

fn wrap(coord: CoordSystem, masks: Vec<u32>, mat: Matrix) -> FisherMatrix {
    FisherMatrix {
        coord,
        index_order: masks.into_iter().map(SubsetIndex).collect(),
        mat,
    }
}

/// Full eta vector indexed by mask, eta[0] = 1.
fn eta_by_mask(t: &JointTable) -> Vec<f64> {
    let mut f = t.probs().to_vec();
    superset_sum_transform(&mut f);
    f
}

fn gtheta_block(eta: &[f64], rows: &[u32]) -> Matrix {
    Matrix::from_fn(rows.len(), |i, j| {
        let (a, b) = (rows[i], rows[j]);
        eta[(a | b) as usize] - eta[a as usize] * eta[b as usize]
    })
}

fn geta_block(recip_sums: &[f64], rows: &[u32]) -> Matrix {
    Matrix::from_fn(rows.len(), |i, j| {
        let (a, b) = (rows[i], rows[j]);
        let sign = if (a.count_ones() + b.count_ones()) % 2 == 0 {
            1.0
        } else {
            -1.0
        };
        sign * recip_sums[(a & b) as usize]
    })
}

/// Fisher matrix in theta coordinates.
pub fn fisher_theta(t: &JointTable) -> FisherMatrix {
    let eta = eta_by_mask(t);
    let masks = all_masks(t.n());
    let mat = gtheta_block(&eta, &masks);
    wrap(CoordSystem::Theta, masks, mat)
}

/// Fisher matrix in eta coordinates.
pub fn fisher_eta(t: &JointTable) -> FisherMatrix {
    let mut recip: Vec<f64> = t.probs().iter().map(|&p| 1.0 / p).collect();
    subset_sum_transform(&mut recip);
    let masks = all_masks(t.n());
    let mat = geta_block(&recip, &masks);
    wrap(CoordSystem::Eta, masks, mat)
}

/// Fisher matrix in l-mixed coordinates: blockdiag(A, B).
pub fn fisher_mixed(t: &JointTable, l: usize) -> Result<FisherMatrix> {
    let n = t.n();
    if l == 0 || l >= n {
        return Err(Error::OrderOutOfRange { l, n });
    }
    let low = masks_up_to_order(n, l);
    let high = masks_above_order(n, l);
    let eta = eta_by_mask(t);
    let a = gtheta_block(&eta, &low).inverse()?;
    let mut recip: Vec<f64> = t.probs().iter().map(|&p| 1.0 / p).collect();
    subset_sum_transform(&mut recip);
    let b = geta_block(&recip, &high).inverse()?;
    let k = low.len();
    let dim = k + high.len();
    let mut mat = Matrix::zeros(dim);
    for i in 0..k {
        for j in 0..k {
            mat.set(i, j, a.get(i, j));
        }
    }
    for i in 0..high.len() {
        for j in 0..high.len() {
            mat.set(k + i, k + j, b.get(i, j));
        }
    }
    let mut masks = low;
    masks.extend(high);
    Ok(wrap(CoordSystem::Mixed(l), masks, mat))
}

/// Coordinate vector of a table in the given system, matching
/// `index_order_for`.
pub fn coord_vector(t: &JointTable, coord: CoordSystem) -> Result<Vec<f64>> {
    match coord {
        CoordSystem::Theta => Ok(p_to_theta(t).values().to_vec()),
        CoordSystem::Eta => Ok(p_to_eta(t).values().to_vec()),
        CoordSystem::Mixed(l) => {
            let m = p_to_mixed(t, l)?;
            let mut v = m.eta_low().to_vec();
            v.extend_from_slice(m.theta_high());
            Ok(v)
        }
    }
}

/// Kullback-Leibler divergence sum t1 ln(t1/t2), natural log.
pub fn kl(t1: &JointTable, t2: &JointTable) -> f64 {
    assert_eq!(t1.n(), t2.n());
    t1.probs()
        .iter()
        .zip(t2.probs())
        .map(|(&p, &q)| p * (p / q).ln())
        .sum()
}

/// Fisher information distance sqrt(dxi^T G dxi) between t1 and t2 in the
/// given coordinates, with G evaluated at t1.
pub fn fid(t1: &JointTable, t2: &JointTable, coord: CoordSystem) -> Result<f64> {
    assert_eq!(t1.n(), t2.n());
    let g = match coord {
        CoordSystem::Theta => fisher_theta(t1),
        CoordSystem::Eta => fisher_eta(t1),
        CoordSystem::Mixed(l) => fisher_mixed(t1, l)?,
    };
    let x1 = coord_vector(t1, coord)?;
    let x2 = coord_vector(t2, coord)?;
    let d: Vec<f64> = x2.iter().zip(&x1).map(|(a, b)| a - b).collect();
    Ok(g.mat.quadratic_form(&d).max(0.0).sqrt())
}

/// Per-coordinate diagonal contributions dxi_i * G_ii * dxi_i (off-diagonal
/// terms excluded).
pub fn fid_decomposition(
    t1: &JointTable,
    t2: &JointTable,
    coord: CoordSystem,
) -> Result<Vec<f64>> {
    assert_eq!(t1.n(), t2.n());
    let g = match coord {
        CoordSystem::Theta => fisher_theta(t1),
        CoordSystem::Eta => fisher_eta(t1),
        CoordSystem::Mixed(l) => fisher_mixed(t1, l)?,
    };
    let x1 = coord_vector(t1, coord)?;
    let x2 = coord_vector(t2, coord)?;
    Ok((0..x1.len())
        .map(|i| {
            let d = x2[i] - x1[i];
            d * g.mat.get(i, i) * d
        })
        .collect())
}

/// Central-difference step for theta/eta scores.
const ORACLE_STEP: f64 = 5e-4;
/// Step for mixed coordinates: each evaluation is a Newton solve at tol
/// 2e-14, leaving Richardson truncation as the dominant error term.
const ORACLE_STEP_MIXED: f64 = 5e-4;

/// Finite-difference score-covariance estimate of the Fisher matrix:
/// G[i][j] = E_t[s_i s_j] with s_i = d ln p / d xi_i approximated by
/// Richardson-extrapolated central differences. Independent of the
/// closed-form constructions above.
pub fn fisher_oracle(t: &JointTable, coord: CoordSystem) -> Result<FisherMatrix> {
    let n = t.n();
    let masks = index_order_for(n, coord);
    let dim = masks.len();
    let base = coord_vector(t, coord)?;
    let step = match coord {
        CoordSystem::Mixed(_) => ORACLE_STEP_MIXED,
        _ => ORACLE_STEP,
    };
    let rebuild = |v: &[f64]| -> Result<JointTable> {
        match coord {
            CoordSystem::Theta => {
                theta_to_p(&ThetaVector::new(n, v.to_vec(), 0.0)?)
            }
            CoordSystem::Eta => eta_to_p(&EtaVector::new(n, v.to_vec())?),
            CoordSystem::Mixed(l) => {
                let k = masks_up_to_order(n, l).len();
                let m = MixedCoords::new(n, l, v[..k].to_vec(), v[k..].to_vec())?;
                from_mixed_with(
                    &m,
                    &NewtonOptions {
                        max_iter: 500,
                        tol: 2e-14,
                    },
                )
            }
        }
    };
    let score_at = |i: usize, h: f64| -> Result<Vec<f64>> {
        let mut v = base.clone();
        v[i] += h;
        let plus = rebuild(&v)?;
        v[i] = base[i] - h;
        let minus = rebuild(&v)?;
        Ok((0..t.len())
            .map(|x| (plus.prob(x).ln() - minus.prob(x).ln()) / (2.0 * h))
            .collect())
    };
    let mut scores: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for i in 0..dim {
        let s_h = score_at(i, step)?;
        let s_h2 = score_at(i, step / 2.0)?;
        scores.push(
            s_h2.iter()
                .zip(&s_h)
                .map(|(a, b)| (4.0 * a - b) / 3.0)
                .collect(),
        );
    }
    let mat = Matrix::from_fn(dim, |i, j| {
        (0..t.len())
            .map(|x| t.prob(x) * scores[i][x] * scores[j][x])
            .sum()
    });
    Ok(wrap(coord, masks, mat))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    use crate::testutil::random_interior_table;

    fn example_table() -> JointTable {
        JointTable::new(2, vec![0.4, 0.2, 0.3, 0.1]).unwrap()
    }

    #[test]
    fn gtheta_on_example() {
        let g = fisher_theta(&example_table());
        let expect = [
            [0.21, -0.02, 0.07],
            [-0.02, 0.24, 0.06],
            [0.07, 0.06, 0.09],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((g.mat.get(i, j) - expect[i][j]).abs() < 1e-12);
            }
        }
        assert_eq!(g.index_order, vec![SubsetIndex(1), SubsetIndex(2), SubsetIndex(3)]);
    }

    #[test]
    fn geta_closed_form_entries() {
        // n = 3: rows/cols run over masks 1..7; {1,2} = 3, {2,3} = 6,
        // {1,2,3} = 7. For I = {1,2}, J = {2,3}: 1/p_empty + 1/p_{2}.
        let t = random_interior_table(3, 7);
        let g = fisher_eta(&t);
        let e_12_23 = 1.0 / t.prob(0) + 1.0 / t.prob(0b010);
        assert!((g.mat.get(2, 5) - e_12_23).abs() < 1e-9);
        // I = {1,2}, J = {1,2,3}: odd |I|+|J| flips the sign.
        let e_12_123 =
            -(1.0 / t.prob(0) + 1.0 / t.prob(0b001) + 1.0 / t.prob(0b010) + 1.0 / t.prob(0b011));
        assert!((g.mat.get(2, 6) - e_12_123).abs() < 1e-9);
    }

    #[test]
    fn gtheta_geta_are_inverse() {
        let t = random_interior_table(3, 42);
        let prod = fisher_theta(&t).mat.mul(&fisher_eta(&t).mat);
        assert!(prod.max_abs_diff(&Matrix::identity(7)) < 1e-9);
    }

    #[test]
    fn oracle_matches_theta_and_eta() {
        let t = example_table();
        let g = fisher_theta(&t);
        let o = fisher_oracle(&t, CoordSystem::Theta).unwrap();
        assert!(g.mat.max_abs_diff(&o.mat) < 1e-8);
        let g = fisher_eta(&t);
        let o = fisher_oracle(&t, CoordSystem::Eta).unwrap();
        assert!(g.mat.max_abs_diff(&o.mat) < 1e-8);
    }

    #[test]
    fn mixed_matches_oracle_blocks() {
        let t = random_interior_table(3, 3);
        for l in [1usize, 2] {
            let g = fisher_mixed(&t, l).unwrap();
            let o = fisher_oracle(&t, CoordSystem::Mixed(l)).unwrap();
            assert!(
                g.mat.max_abs_diff(&o.mat) < 1e-6,
                "l={l} diff {:e}",
                g.mat.max_abs_diff(&o.mat)
            );
        }
    }

    #[test]
    fn mixed_block_bounds() {
        let t = random_interior_table(4, 11);
        let g = fisher_mixed(&t, 2).unwrap();
        let k = masks_up_to_order(4, 2).len();
        for i in 0..k {
            assert!(g.mat.get(i, i) >= 1.0 - 1e-9);
        }
        for i in k..g.mat.n {
            assert!(g.mat.get(i, i) <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn kl_values() {
        let t = example_table();
        assert_eq!(kl(&t, &t), 0.0);
        let u = JointTable::uniform(2);
        // -ln 4 - 0.25 ln(0.4 * 0.3 * 0.2 * 0.1)
        assert!((kl(&u, &t) - 0.121_777_2).abs() < 1e-6);
    }

    #[test]
    fn fid_squared_tracks_twice_kl_locally() {
        let t1 = random_interior_table(3, 5);
        // Nudge every cell slightly and renormalize.
        let w: Vec<f64> = t1
            .probs()
            .iter()
            .enumerate()
            .map(|(i, &p)| p * (1.0 + 1e-3 * if i % 2 == 0 { 1.0 } else { -1.0 }))
            .collect();
        let t2 = JointTable::from_unnormalized(3, &w).unwrap();
        for coord in [CoordSystem::Theta, CoordSystem::Eta, CoordSystem::Mixed(1)] {
            let d = fid(&t1, &t2, coord).unwrap();
            let ratio = d * d / (2.0 * kl(&t1, &t2));
            assert!((ratio - 1.0).abs() < 1e-2, "coord {coord:?} ratio {ratio}");
        }
    }

    #[test]
    fn fid_zero_for_identical() {
        let t = example_table();
        for coord in [CoordSystem::Theta, CoordSystem::Eta, CoordSystem::Mixed(1)] {
            assert_eq!(fid(&t, &t, coord).unwrap(), 0.0);
        }
    }

    #[test]
    fn decomposition_matches_diagonal() {
        let t1 = random_interior_table(3, 1);
        let t2 = random_interior_table(3, 2);
        let parts = fid_decomposition(&t1, &t2, CoordSystem::Mixed(2)).unwrap();
        assert_eq!(parts.len(), 7);
        assert!(parts.iter().all(|&v| v >= 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn fisher_matrices_are_spd(seed in 0u64..1000) {
            let t = random_interior_table(4, seed);
            assert!(fisher_theta(&t).mat.cholesky().is_some());
            assert!(fisher_eta(&t).mat.cholesky().is_some());
            assert!(fisher_mixed(&t, 2).unwrap().mat.cholesky().is_some());
        }

        #[test]
        fn product_is_identity(seed in 0u64..1000) {
            let t = random_interior_table(4, seed);
            let prod = fisher_theta(&t).mat.mul(&fisher_eta(&t).mat);
            prop_assert!(prod.max_abs_diff(&Matrix::identity(15)) < 1e-8);
        }

        #[test]
        fn kl_asymmetric_and_nonnegative(a in 0u64..500, b in 500u64..1000) {
            let t1 = random_interior_table(3, a);
            let t2 = random_interior_table(3, b);
            prop_assert!(kl(&t1, &t2) > 0.0);
            prop_assert!(kl(&t2, &t1) > 0.0);
            prop_assert!((kl(&t1, &t2) - kl(&t2, &t1)).abs() > 0.0);
        }
    }
}
