//! Coordinate systems for positive distributions over n binary variables.
//!
//! A distribution is a table of 2^n cell probabilities indexed by state
//! bitmask (variable i on bit i-1). Three equivalent coordinate systems are
//! supported:
//!
//! * p-coordinates: the cell probabilities themselves;
//! * eta-coordinates: moments eta_I = E[prod_{i in I} x_i] = sum_{K >= I} p_K;
//! * theta-coordinates: theta^I = sum_{K <= I} (-1)^{|I \ K|} ln p_K, the
//!   natural parameters, with potential psi(theta) = -ln p_{0..0};
//!
//! plus the l-mixed system zeta_l = (eta_I for |I| <= l, theta^J for |J| > l).
//! eta and theta are Legendre duals: psi(theta) + phi(eta) = sum theta^I eta_I
//! with phi = sum p ln p.

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::subset::{
    masks_above_order, masks_up_to_order, subset_moebius_transform, subset_sum_transform,
    superset_moebius_transform, superset_sum_transform,
};

/// Exact enumeration cap: operations materialize 2^n cells.
pub const MAX_N: usize = 20;

/// Floor applied to external (empirical) tables before renormalization.
pub const EPS_P: f64 = 1e-9;

/// Tolerance on sum(p) = 1 at construction.
pub const NORM_TOL: f64 = 1e-12;

fn check_n(n: usize) -> Result<()> {
    if n == 0 || n > MAX_N {
        return Err(Error::SizeCap { n, cap: MAX_N });
    }
    Ok(())
}

/// Strictly positive, normalized probability table over n binary variables.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    n: usize,
    probs: Vec<f64>,
}

impl JointTable {
    pub fn new(n: usize, probs: Vec<f64>) -> Result<JointTable> {
        check_n(n)?;
        if probs.len() != 1 << n {
            return Err(Error::DimensionMismatch {
                expected: 1 << n,
                got: probs.len(),
            });
        }
        for (cell, &p) in probs.iter().enumerate() {
            if !(p > 0.0) || !p.is_finite() {
                return Err(Error::NonPositiveProbability { cell, value: p });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORM_TOL {
            return Err(Error::Unnormalized { sum, tol: NORM_TOL });
        }
        Ok(JointTable { n, probs })
    }

    pub fn uniform(n: usize) -> JointTable {
        let size = 1usize << n;
        JointTable {
            n,
            probs: vec![1.0 / size as f64; size],
        }
    }

    /// Normalizes strictly positive weights.
    pub fn from_unnormalized(n: usize, weights: &[f64]) -> Result<JointTable> {
        check_n(n)?;
        if weights.len() != 1 << n {
            return Err(Error::DimensionMismatch {
                expected: 1 << n,
                got: weights.len(),
            });
        }
        let sum: f64 = weights.iter().sum();
        if !sum.is_finite() || sum <= 0.0 {
            return Err(Error::NonPositiveProbability {
                cell: 0,
                value: sum,
            });
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / sum).collect();
        JointTable::new(n, probs)
    }

    /// Empirical route: floors nonnegative weights at EPS_P, then normalizes.
    pub fn from_empirical(n: usize, weights: &[f64]) -> Result<JointTable> {
        check_n(n)?;
        if weights.len() != 1 << n {
            return Err(Error::DimensionMismatch {
                expected: 1 << n,
                got: weights.len(),
            });
        }
        for (cell, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::NonPositiveProbability { cell, value: w });
            }
        }
        let floored: Vec<f64> = weights.iter().map(|&w| w.max(EPS_P)).collect();
        JointTable::from_unnormalized(n, &floored)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Probability of the state with the given bitmask.
    #[inline]
    pub fn prob(&self, state: usize) -> f64 {
        self.probs[state]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Two-variable marginal over (var_i, var_j), 1-based; the result indexes
    /// var_i on bit 0 and var_j on bit 1.
    pub fn marginal_pair(&self, var_i: usize, var_j: usize) -> JointTable {
        assert!(var_i != var_j && var_i >= 1 && var_j >= 1);
        assert!(var_i <= self.n && var_j <= self.n);
        let bi = var_i - 1;
        let bj = var_j - 1;
        let mut out = [0.0f64; 4];
        for (state, &p) in self.probs.iter().enumerate() {
            let cell = (state >> bi & 1) | ((state >> bj & 1) << 1);
            out[cell] += p;
        }
        JointTable {
            n: 2,
            probs: out.to_vec(),
        }
    }
}

/// Total variation distance 0.5 * sum |a - b|.
pub fn total_variation(a: &JointTable, b: &JointTable) -> f64 {
    assert_eq!(a.n, b.n);
    0.5 * a
        .probs
        .iter()
        .zip(&b.probs)
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
}

/// phi(eta) = sum p ln p, the Legendre dual of psi.
pub fn neg_entropy(t: &JointTable) -> f64 {
    t.probs.iter().map(|&p| p * p.ln()).sum()
}

/// Moments eta_I for all nonempty I, indexed by mask - 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaVector {
    n: usize,
    values: Vec<f64>,
}

impl EtaVector {
    pub fn new(n: usize, values: Vec<f64>) -> Result<EtaVector> {
        check_n(n)?;
        if values.len() != (1 << n) - 1 {
            return Err(Error::DimensionMismatch {
                expected: (1 << n) - 1,
                got: values.len(),
            });
        }
        Ok(EtaVector { n, values })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// eta_I for the nonempty subset mask.
    #[inline]
    pub fn value(&self, mask: u32) -> f64 {
        self.values[mask as usize - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Natural parameters theta^I for all nonempty I plus the potential psi.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector {
    n: usize,
    values: Vec<f64>,
    psi: f64,
}

impl ThetaVector {
    pub fn new(n: usize, values: Vec<f64>, psi: f64) -> Result<ThetaVector> {
        check_n(n)?;
        if values.len() != (1 << n) - 1 {
            return Err(Error::DimensionMismatch {
                expected: (1 << n) - 1,
                got: values.len(),
            });
        }
        Ok(ThetaVector { n, values, psi })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn value(&self, mask: u32) -> f64 {
        self.values[mask as usize - 1]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// psi = -ln p_{0..0}.
    #[inline]
    pub fn psi(&self) -> f64 {
        self.psi
    }
}

/// l-mixed coordinates: low-order moments plus high-order natural parameters.
/// Both blocks run in increasing-bitmask order.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedCoords {
    n: usize,
    l: usize,
    eta_low: Vec<f64>,
    theta_high: Vec<f64>,
}

impl MixedCoords {
    pub fn new(n: usize, l: usize, eta_low: Vec<f64>, theta_high: Vec<f64>) -> Result<MixedCoords> {
        check_n(n)?;
        if l == 0 || l >= n {
            return Err(Error::OrderOutOfRange { l, n });
        }
        let k = masks_up_to_order(n, l).len();
        if eta_low.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: eta_low.len(),
            });
        }
        let h = ((1usize << n) - 1) - k;
        if theta_high.len() != h {
            return Err(Error::DimensionMismatch {
                expected: h,
                got: theta_high.len(),
            });
        }
        Ok(MixedCoords {
            n,
            l,
            eta_low,
            theta_high,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn l(&self) -> usize {
        self.l
    }

    pub fn eta_low(&self) -> &[f64] {
        &self.eta_low
    }

    pub fn theta_high(&self) -> &[f64] {
        &self.theta_high
    }

    /// Masks of the eta block, increasing bitmask order.
    pub fn low_masks(&self) -> Vec<u32> {
        masks_up_to_order(self.n, self.l)
    }

    /// Masks of the theta block, increasing bitmask order.
    pub fn high_masks(&self) -> Vec<u32> {
        masks_above_order(self.n, self.l)
    }
}

/// eta_I = sum over states containing I.
pub fn p_to_eta(t: &JointTable) -> EtaVector {
    let mut f = t.probs().to_vec();
    superset_sum_transform(&mut f);
    EtaVector {
        n: t.n(),
        values: f[1..].to_vec(),
    }
}

/// p_K = sum over supersets J of K of (-1)^|J \ K| eta_J, with eta_empty = 1.
pub fn eta_to_p(eta: &EtaVector) -> Result<JointTable> {
    let mut f = Vec::with_capacity(1usize << eta.n);
    f.push(1.0);
    f.extend_from_slice(&eta.values);
    superset_moebius_transform(&mut f);
    if f.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidMoments);
    }
    // Analytically sum(p) = eta_empty = 1; divide out accumulated roundoff.
    JointTable::from_unnormalized(eta.n, &f)
}

/// theta^I = sum over subsets K of I of (-1)^|I \ K| ln p_K.
pub fn p_to_theta(t: &JointTable) -> ThetaVector {
    let mut f: Vec<f64> = t.probs().iter().map(|&p| p.ln()).collect();
    subset_moebius_transform(&mut f);
    ThetaVector {
        n: t.n(),
        values: f[1..].to_vec(),
        psi: -t.prob(0).ln(),
    }
}

/// ln p_K = sum over subsets I of K of theta^I - psi, with psi fixed by
/// normalization. Overflow signals non-finite input or a cell underflowing
/// to zero; nothing is clamped.
pub fn theta_to_p(theta: &ThetaVector) -> Result<JointTable> {
    if !theta.values.iter().all(|v| v.is_finite()) {
        return Err(Error::Overflow);
    }
    let probs = theta_template_to_probs(theta.n, &full_template(theta.n, &theta.values))
        .ok_or(Error::Overflow)?;
    if probs.iter().any(|&p| p <= 0.0) {
        return Err(Error::Overflow);
    }
    JointTable::new(theta.n, probs)
}

/// Splits a table into (eta up to order l, theta above order l).
pub fn p_to_mixed(t: &JointTable, l: usize) -> Result<MixedCoords> {
    let n = t.n();
    if l == 0 || l >= n {
        return Err(Error::OrderOutOfRange { l, n });
    }
    let eta = p_to_eta(t);
    let theta = p_to_theta(t);
    let eta_low = masks_up_to_order(n, l)
        .into_iter()
        .map(|m| eta.value(m))
        .collect();
    let theta_high = masks_above_order(n, l)
        .into_iter()
        .map(|m| theta.value(m))
        .collect();
    MixedCoords::new(n, l, eta_low, theta_high)
}

/// Newton solve controls for `from_mixed`.
#[derive(Debug, Clone)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Convergence threshold on max |eta(theta) - target|.
    pub tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> NewtonOptions {
        NewtonOptions {
            max_iter: 500,
            tol: 1e-10,
        }
    }
}

/// Reconstructs the unique table with the given low-order moments and
/// high-order natural parameters.
pub fn from_mixed(mixed: &MixedCoords) -> Result<JointTable> {
    from_mixed_with(mixed, &NewtonOptions::default())
}

pub fn from_mixed_with(mixed: &MixedCoords, opts: &NewtonOptions) -> Result<JointTable> {
    let n = mixed.n;
    let free = mixed.low_masks();
    let mut template = vec![0.0f64; 1 << n];
    for (m, &v) in mixed.high_masks().iter().zip(&mixed.theta_high) {
        template[*m as usize] = v;
    }
    // Independence-fit start: logit on singleton moments, zero elsewhere.
    for (&m, &target) in free.iter().zip(&mixed.eta_low) {
        if m.count_ones() == 1 {
            let e = target.clamp(1e-12, 1.0 - 1e-12);
            template[m as usize] = (e / (1.0 - e)).ln();
        }
    }
    let probs = solve_theta_by_moments(n, &free, &mixed.eta_low, &mut template, opts, None)?;
    JointTable::new(n, probs)
}

fn full_template(n: usize, values: &[f64]) -> Vec<f64> {
    let mut g = Vec::with_capacity(1 << n);
    g.push(0.0);
    g.extend_from_slice(values);
    g
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalized table for a full theta template (entry per mask, mask 0 ignored).
/// None when the accumulation is non-finite.
pub(crate) fn theta_template_to_probs(n: usize, template: &[f64]) -> Option<Vec<f64>> {
    theta_template_to_probs_psi(n, template).map(|(p, _)| p)
}

/// As `theta_template_to_probs`, also returning psi = ln Z.
pub(crate) fn theta_template_to_probs_psi(n: usize, template: &[f64]) -> Option<(Vec<f64>, f64)> {
    debug_assert_eq!(template.len(), 1 << n);
    let mut g = template.to_vec();
    g[0] = 0.0;
    subset_sum_transform(&mut g);
    if !g.iter().all(|v| v.is_finite()) {
        return None;
    }
    let lse = log_sum_exp(&g);
    if !lse.is_finite() {
        return None;
    }
    Some((g.into_iter().map(|u| (u - lse).exp()).collect(), lse))
}

/// Cheap necessary feasibility checks on a target moment block.
fn check_moment_feasibility(free: &[u32], target: &[f64]) -> Result<()> {
    for &t in target {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::InfeasibleMoments);
        }
    }
    for (i, &a) in free.iter().enumerate() {
        for (j, &b) in free.iter().enumerate() {
            if i == j {
                continue;
            }
            // Containment: I <= J forces eta_J <= eta_I.
            if a & b == a && target[j] > target[i] + 1e-12 {
                return Err(Error::InfeasibleMoments);
            }
        }
    }
    // Frechet lower bound on pair moments from singleton moments.
    let pos = |m: u32| free.iter().position(|&x| x == m);
    for (j, &b) in free.iter().enumerate() {
        if b.count_ones() == 2 {
            let lo = b & b.wrapping_neg();
            let hi = b & !lo;
            if let (Some(pi), Some(pj)) = (pos(lo), pos(hi)) {
                if target[j] < target[pi] + target[pj] - 1.0 - 1e-12 {
                    return Err(Error::InfeasibleMoments);
                }
            }
        }
    }
    Ok(())
}

/// Solves eta_free(theta) = target with the remaining theta entries fixed.
///
/// The system is the stationarity condition of the strictly convex dual
/// potential f(theta_free) = psi(theta) - theta_free . target, whose gradient
/// is eta_free - target and whose Hessian is the Fisher block
/// J[i][j] = eta_{Ai u Aj} - eta_Ai eta_Aj. Damped Newton descent on f with
/// Armijo backtracking therefore converges from any start; a Levenberg shift
/// covers numerically singular Hessians near degenerate tables.
///
/// `template` holds theta for every mask; entries at `free` masks are the
/// initial guess and are updated in place. Returns the solution table.
pub(crate) fn solve_theta_by_moments(
    n: usize,
    free: &[u32],
    target: &[f64],
    template: &mut [f64],
    opts: &NewtonOptions,
    mut on_iter: Option<&mut dyn FnMut(usize, f64, &[f64])>,
) -> Result<Vec<f64>> {
    check_moment_feasibility(free, target)?;
    let k = free.len();
    let dot_free = |template: &[f64]| -> f64 {
        free.iter()
            .enumerate()
            .map(|(i, &m)| template[m as usize] * target[i])
            .sum()
    };
    let (mut probs, mut psi) =
        theta_template_to_probs_psi(n, template).ok_or(Error::Overflow)?;
    let mut obj = psi - dot_free(template);
    for iter in 0..opts.max_iter {
        let mut eta = probs.clone();
        superset_sum_transform(&mut eta);
        let grad: Vec<f64> = (0..k)
            .map(|i| eta[free[i] as usize] - target[i])
            .collect();
        let res_max = grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if let Some(cb) = on_iter.as_deref_mut() {
            cb(iter, res_max, &probs);
        }
        if res_max < opts.tol {
            return Ok(probs);
        }
        let jac = Matrix::from_fn(k, |i, j| {
            let (a, b) = (free[i], free[j]);
            eta[(a | b) as usize] - eta[a as usize] * eta[b as usize]
        });
        let delta = newton_direction(&jac, &grad).ok_or(Error::NoConvergence {
            residual: res_max,
            iters: iter,
        })?;
        let slope: f64 = grad.iter().zip(&delta).map(|(g, d)| g * d).sum();
        // Armijo backtracking on the convex objective. Near the optimum the
        // objective improvement drops below f64 resolution, so a step is also
        // accepted when the moment residual itself contracts.
        let base: Vec<f64> = free.iter().map(|&m| template[m as usize]).collect();
        let mut lambda = 1.0f64;
        loop {
            for (i, &m) in free.iter().enumerate() {
                template[m as usize] = base[i] + lambda * delta[i];
            }
            if let Some((p_new, psi_new)) = theta_template_to_probs_psi(n, template) {
                let obj_new = psi_new - dot_free(template);
                let mut eta_new = p_new.clone();
                superset_sum_transform(&mut eta_new);
                let res_new = (0..k)
                    .map(|i| (eta_new[free[i] as usize] - target[i]).abs())
                    .fold(0.0f64, f64::max);
                // Second branch: endgame only. Near the optimum the true
                // objective change (~residual^2) sits below f64 resolution,
                // so require the objective to be flat, not merely allow it
                // to grow.
                let flat = obj_new <= obj + 1e-11 * (1.0 + obj.abs());
                if obj_new <= obj + 1e-4 * lambda * slope || (res_new < 0.9 * res_max && flat) {
                    probs = p_new;
                    psi = psi_new;
                    obj = obj_new;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-14 {
                for (i, &m) in free.iter().enumerate() {
                    template[m as usize] = base[i];
                }
                let _ = psi;
                return Err(Error::NoConvergence {
                    residual: res_max,
                    iters: iter,
                });
            }
        }
    }
    let mut eta = probs.clone();
    superset_sum_transform(&mut eta);
    let res = (0..k)
        .map(|i| (eta[free[i] as usize] - target[i]).abs())
        .fold(0.0f64, f64::max);
    if res < opts.tol {
        return Ok(probs);
    }
    Err(Error::NoConvergence {
        residual: res,
        iters: opts.max_iter,
    })
}

/// Newton direction -J^{-1} g, escalating a Levenberg diagonal shift when the
/// Hessian block is numerically singular.
fn newton_direction(jac: &Matrix, grad: &[f64]) -> Option<Vec<f64>> {
    let neg: Vec<f64> = grad.iter().map(|v| -v).collect();
    if let Ok(lu) = jac.factor() {
        return Some(lu.solve(&neg));
    }
    let scale = jac.max_abs().max(f64::MIN_POSITIVE);
    let mut mu = 1e-10 * scale;
    while mu < 1e3 * scale {
        let mut shifted = jac.clone();
        for i in 0..shifted.n {
            let d = shifted.get(i, i);
            shifted.set(i, i, d + mu);
        }
        if let Ok(lu) = shifted.factor() {
            return Some(lu.solve(&neg));
        }
        mu *= 100.0;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    /// Storage order for the worked (0.4, 0.3, 0.2, 0.1) table: index 1 is
    /// the x1=1 state, so p10 sits at index 1 and p01 at index 2.
    fn example_table() -> JointTable {
        JointTable::new(2, vec![0.4, 0.2, 0.3, 0.1]).unwrap()
    }

    #[test]
    fn construction_validates() {
        assert!(matches!(
            JointTable::new(2, vec![0.5, 0.5, 0.0, 0.0]),
            Err(Error::NonPositiveProbability { cell: 2, .. })
        ));
        assert!(matches!(
            JointTable::new(2, vec![0.4, 0.2, 0.3, 0.2]),
            Err(Error::Unnormalized { .. })
        ));
        assert!(matches!(
            JointTable::new(2, vec![0.5, 0.5]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            JointTable::new(21, vec![]),
            Err(Error::SizeCap { .. })
        ));
    }

    #[test]
    fn empirical_floors_zeros() {
        let t = JointTable::from_empirical(2, &[3.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(t.prob(2) > 0.0);
        assert!(t.prob(2) < 1e-9);
        let sum: f64 = t.probs().iter().sum();
        assert!((sum - 1.0).abs() < TOL);
    }

    #[test]
    fn eta_of_example() {
        let eta = p_to_eta(&example_table());
        assert!((eta.value(0b01) - 0.3).abs() < TOL);
        assert!((eta.value(0b10) - 0.4).abs() < TOL);
        assert!((eta.value(0b11) - 0.1).abs() < TOL);
    }

    #[test]
    fn theta_of_example() {
        let th = p_to_theta(&example_table());
        assert!((th.value(0b01) - (0.5f64).ln()).abs() < TOL);
        assert!((th.value(0b10) - (0.75f64).ln()).abs() < TOL);
        assert!((th.value(0b11) - (2.0f64 / 3.0).ln()).abs() < TOL);
        assert!((th.psi() - -(0.4f64).ln()).abs() < TOL);
    }

    #[test]
    fn uniform_has_zero_theta_and_dyadic_eta() {
        let u = JointTable::uniform(3);
        let th = p_to_theta(&u);
        for m in 1u32..8 {
            assert!(th.value(m).abs() < TOL);
        }
        assert!((th.psi() - 3.0 * (2.0f64).ln()).abs() < TOL);
        let eta = p_to_eta(&u);
        for m in 1u32..8 {
            let expect = 0.5f64.powi(m.count_ones() as i32);
            assert!((eta.value(m) - expect).abs() < TOL);
        }
    }

    #[test]
    fn transforms_roundtrip_on_example() {
        let t = example_table();
        let back = eta_to_p(&p_to_eta(&t)).unwrap();
        for s in 0..4 {
            assert!((back.prob(s) - t.prob(s)).abs() < TOL);
        }
        let back = theta_to_p(&p_to_theta(&t)).unwrap();
        for s in 0..4 {
            assert!((back.prob(s) - t.prob(s)).abs() < TOL);
        }
    }

    #[test]
    fn eta_outside_simplex_rejected() {
        let eta = EtaVector::new(2, vec![0.9, 0.9, 0.05]).unwrap();
        assert!(matches!(eta_to_p(&eta), Err(Error::InvalidMoments)));
    }

    #[test]
    fn theta_overflow_signals() {
        let th = ThetaVector::new(2, vec![f64::NAN, 0.0, 0.0], 0.0).unwrap();
        assert!(matches!(theta_to_p(&th), Err(Error::Overflow)));
        let th = ThetaVector::new(2, vec![-800.0, -800.0, 0.0], 0.0).unwrap();
        assert!(matches!(theta_to_p(&th), Err(Error::Overflow)));
    }

    #[test]
    fn mixed_split_of_example() {
        let t = example_table();
        let m = p_to_mixed(&t, 1).unwrap();
        assert!((m.eta_low()[0] - 0.3).abs() < TOL);
        assert!((m.eta_low()[1] - 0.4).abs() < TOL);
        assert!((m.theta_high()[0] - (2.0f64 / 3.0).ln()).abs() < TOL);
        assert!(matches!(
            p_to_mixed(&t, 2),
            Err(Error::OrderOutOfRange { .. })
        ));
    }

    #[test]
    fn from_mixed_recovers_example() {
        let t = example_table();
        let m = p_to_mixed(&t, 1).unwrap();
        let back = from_mixed(&m).unwrap();
        for s in 0..4 {
            assert!((back.prob(s) - t.prob(s)).abs() < 1e-11);
        }
    }

    #[test]
    fn from_mixed_with_zero_high_is_product() {
        // Dropping theta_12 from the worked table yields the independent
        // table with the same marginals: (0.42, 0.18, 0.28, 0.12).
        let m = MixedCoords::new(2, 1, vec![0.3, 0.4], vec![0.0]).unwrap();
        let t = from_mixed(&m).unwrap();
        let expect = [0.42, 0.18, 0.28, 0.12];
        for s in 0..4 {
            assert!((t.prob(s) - expect[s]).abs() < 1e-10);
        }
    }

    #[test]
    fn infeasible_moments_rejected() {
        // eta_12 > eta_1 violates containment.
        let m = MixedCoords::new(3, 2, vec![0.3, 0.4, 0.35, 0.5, 0.2, 0.2], vec![0.0]).unwrap();
        assert!(matches!(from_mixed(&m), Err(Error::InfeasibleMoments)));
    }

    #[test]
    fn legendre_identity_on_example() {
        let t = example_table();
        let th = p_to_theta(&t);
        let eta = p_to_eta(&t);
        let dot: f64 = th
            .values()
            .iter()
            .zip(eta.values())
            .map(|(a, b)| a * b)
            .sum();
        let residual = th.psi() + neg_entropy(&t) - dot;
        assert!(residual.abs() < 1e-10);
    }

    #[test]
    fn pair_marginal_sums_cells() {
        let t = JointTable::new(3, vec![0.1, 0.2, 0.05, 0.15, 0.1, 0.1, 0.2, 0.1]).unwrap();
        let m = t.marginal_pair(1, 3);
        // bit0 = x1, bit1 = x3
        assert!((m.prob(0) - (0.1 + 0.05)).abs() < TOL);
        assert!((m.prob(1) - (0.2 + 0.15)).abs() < TOL);
        assert!((m.prob(2) - (0.1 + 0.2)).abs() < TOL);
        assert!((m.prob(3) - (0.1 + 0.1)).abs() < TOL);
    }

    /// Random positive table bounded away from zero.
    pub(crate) fn arb_table(n: usize) -> impl Strategy<Value = JointTable> {
        prop::collection::vec(0.05f64..1.0, 1 << n)
            .prop_map(move |w| JointTable::from_unnormalized(n, &w).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn roundtrip_eta(t in arb_table(4)) {
            let back = eta_to_p(&p_to_eta(&t)).unwrap();
            for s in 0..t.len() {
                prop_assert!((back.prob(s) - t.prob(s)).abs() < 1e-10);
            }
        }

        #[test]
        fn roundtrip_theta(t in arb_table(4)) {
            let back = theta_to_p(&p_to_theta(&t)).unwrap();
            for s in 0..t.len() {
                prop_assert!((back.prob(s) - t.prob(s)).abs() < 1e-10);
            }
        }

        #[test]
        fn roundtrip_mixed(t in arb_table(4), l in 1usize..4) {
            let back = from_mixed(&p_to_mixed(&t, l).unwrap()).unwrap();
            for s in 0..t.len() {
                prop_assert!((back.prob(s) - t.prob(s)).abs() < 1e-9);
            }
        }

        #[test]
        fn eta_monotone_under_containment(t in arb_table(4)) {
            let eta = p_to_eta(&t);
            for i in 1u32..16 {
                for j in 1u32..16 {
                    if i & j == i && i != j {
                        prop_assert!(eta.value(j) <= eta.value(i) + 1e-14);
                    }
                }
            }
        }

        #[test]
        fn legendre_identity(t in arb_table(4)) {
            let th = p_to_theta(&t);
            let eta = p_to_eta(&t);
            let dot: f64 = th.values().iter().zip(eta.values()).map(|(a, b)| a * b).sum();
            prop_assert!((th.psi() + neg_entropy(&t) - dot).abs() < 1e-10);
        }

        #[test]
        fn product_distribution_has_no_interactions(
            ps in prop::collection::vec(0.1f64..0.9, 3)
        ) {
            let mut w = vec![0.0f64; 8];
            for (s, slot) in w.iter_mut().enumerate() {
                *slot = (0..3)
                    .map(|b| if s >> b & 1 == 1 { ps[b] } else { 1.0 - ps[b] })
                    .product();
            }
            let t = JointTable::new(3, w).unwrap();
            let th = p_to_theta(&t);
            for m in 1u32..8 {
                if m.count_ones() >= 2 {
                    prop_assert!(th.value(m).abs() < 1e-10);
                }
            }
        }
    }
}
