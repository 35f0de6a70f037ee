//! Boltzmann machines over binary units: energies, exact distributions,
//! maximum-likelihood and contrastive-divergence training, Gibbs sampling,
//! and alternating projection learning for models with hidden units.
//!
//! Joint states pack visible bits low and hidden bits high: unit k is bit k,
//! visible units are 0..n_x, hidden units n_x..n_x+n_h.

use crate::coords::{theta_template_to_probs_psi, JointTable, NewtonOptions, ThetaVector, MAX_N};
use crate::coords::solve_theta_by_moments;
use crate::error::{Error, Result};
use crate::fisher::kl;
use crate::samples::BinaryMatrix;
use crate::stream::rng_stream;
use crate::subset::superset_sum_transform;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Gibbs states are u128 bitmasks.
pub const UNIT_CAP: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BmKind {
    Vbm,
    Rbm,
    Vrbm,
    General,
}

/// Connection enablement, mirroring the weight shapes. Disabled entries of
/// the weight arrays are exactly zero at all times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmMask {
    #[serde(rename = "U")]
    pub u: Vec<bool>,
    #[serde(rename = "V")]
    pub v: Vec<bool>,
    #[serde(rename = "W")]
    pub w: Vec<bool>,
}

/// Pairwise energy model over n_x visible and n_h hidden binary units:
/// E(x,h) = -x'Ux/2 - h'Vh/2 - x'Wh - b'x - d'h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BmModel {
    n_x: usize,
    n_h: usize,
    kind: BmKind,
    #[serde(rename = "U")]
    u: Vec<f64>,
    #[serde(rename = "V")]
    v: Vec<f64>,
    #[serde(rename = "W")]
    w: Vec<f64>,
    b: Vec<f64>,
    d: Vec<f64>,
    mask: BmMask,
}

/// One enabled parameter. Unit indices are 0-based; U and V carry i < j.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamId {
    B(usize),
    D(usize),
    U(usize, usize),
    W(usize, usize),
    V(usize, usize),
}

impl BmModel {
    fn blank(kind: BmKind, n_x: usize, n_h: usize, mask: BmMask) -> BmModel {
        BmModel {
            n_x,
            n_h,
            kind,
            u: vec![0.0; n_x * n_x],
            v: vec![0.0; n_h * n_h],
            w: vec![0.0; n_x * n_h],
            b: vec![0.0; n_x],
            d: vec![0.0; n_h],
            mask,
        }
    }

    fn full_sym_mask(n: usize) -> Vec<bool> {
        (0..n * n).map(|i| i / n != i % n).collect()
    }

    pub fn new(kind: BmKind, n_x: usize, n_h: usize) -> Result<BmModel> {
        if n_x == 0 || n_x + n_h > UNIT_CAP {
            return Err(Error::InvalidConfig(format!(
                "unit counts out of range: n_x = {n_x}, n_h = {n_h}"
            )));
        }
        let mask = match kind {
            BmKind::Vbm => {
                if n_h != 0 {
                    return Err(Error::InvalidConfig(format!(
                        "a VBM has no hidden units, got n_h = {n_h}"
                    )));
                }
                BmMask {
                    u: Self::full_sym_mask(n_x),
                    v: vec![],
                    w: vec![],
                }
            }
            BmKind::Rbm => BmMask {
                u: vec![false; n_x * n_x],
                v: vec![false; n_h * n_h],
                w: vec![true; n_x * n_h],
            },
            BmKind::Vrbm => BmMask {
                u: Self::full_sym_mask(n_x),
                v: vec![false; n_h * n_h],
                w: vec![true; n_x * n_h],
            },
            BmKind::General => BmMask {
                u: Self::full_sym_mask(n_x),
                v: Self::full_sym_mask(n_h),
                w: vec![true; n_x * n_h],
            },
        };
        Ok(Self::blank(kind, n_x, n_h, mask))
    }

    pub fn vbm(n_x: usize) -> Result<BmModel> {
        Self::new(BmKind::Vbm, n_x, 0)
    }

    pub fn rbm(n_x: usize, n_h: usize) -> Result<BmModel> {
        Self::new(BmKind::Rbm, n_x, n_h)
    }

    pub fn vrbm(n_x: usize, n_h: usize) -> Result<BmModel> {
        Self::new(BmKind::Vrbm, n_x, n_h)
    }

    pub fn general(n_x: usize, n_h: usize) -> Result<BmModel> {
        Self::new(BmKind::General, n_x, n_h)
    }

    /// VBM whose only enabled visible-visible connections are the given
    /// 0-based (i, j) pairs.
    pub fn vbm_with_edges(n_x: usize, edges: &[(usize, usize)]) -> Result<BmModel> {
        let mut m = Self::vbm(n_x)?;
        m.mask.u = vec![false; n_x * n_x];
        m.enable_u_edges(edges)?;
        Ok(m)
    }

    /// vRBM whose enabled visible-visible connections are the given 0-based
    /// (i, j) pairs; the bipartite block stays fully enabled.
    pub fn vrbm_with_edges(n_x: usize, n_h: usize, edges: &[(usize, usize)]) -> Result<BmModel> {
        let mut m = Self::vrbm(n_x, n_h)?;
        m.mask.u = vec![false; n_x * n_x];
        m.enable_u_edges(edges)?;
        Ok(m)
    }

    fn enable_u_edges(&mut self, edges: &[(usize, usize)]) -> Result<()> {
        for &(i, j) in edges {
            if i == j || i >= self.n_x || j >= self.n_x {
                return Err(Error::InvalidConfig(format!(
                    "bad visible edge ({i}, {j}) for n_x = {}",
                    self.n_x
                )));
            }
            self.mask.u[i * self.n_x + j] = true;
            self.mask.u[j * self.n_x + i] = true;
        }
        Ok(())
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn n_units(&self) -> usize {
        self.n_x + self.n_h
    }

    pub fn kind(&self) -> BmKind {
        self.kind
    }

    pub fn mask(&self) -> &BmMask {
        &self.mask
    }

    pub fn u(&self, i: usize, j: usize) -> f64 {
        self.u[i * self.n_x + j]
    }

    pub fn v(&self, j: usize, k: usize) -> f64 {
        self.v[j * self.n_h + k]
    }

    pub fn w(&self, i: usize, j: usize) -> f64 {
        self.w[i * self.n_h + j]
    }

    pub fn b(&self, i: usize) -> f64 {
        self.b[i]
    }

    pub fn d(&self, j: usize) -> f64 {
        self.d[j]
    }

    pub fn set_b(&mut self, i: usize, val: f64) {
        self.b[i] = val;
    }

    pub fn set_d(&mut self, j: usize, val: f64) {
        self.d[j] = val;
    }

    pub fn set_u(&mut self, i: usize, j: usize, val: f64) -> Result<()> {
        if i == j || i >= self.n_x || j >= self.n_x || !self.mask.u[i * self.n_x + j] {
            return Err(Error::InvalidConfig(format!(
                "visible connection ({i}, {j}) is not enabled"
            )));
        }
        self.u[i * self.n_x + j] = val;
        self.u[j * self.n_x + i] = val;
        Ok(())
    }

    pub fn set_v(&mut self, j: usize, k: usize, val: f64) -> Result<()> {
        if j == k || j >= self.n_h || k >= self.n_h || !self.mask.v[j * self.n_h + k] {
            return Err(Error::InvalidConfig(format!(
                "hidden connection ({j}, {k}) is not enabled"
            )));
        }
        self.v[j * self.n_h + k] = val;
        self.v[k * self.n_h + j] = val;
        Ok(())
    }

    pub fn set_w(&mut self, i: usize, j: usize, val: f64) -> Result<()> {
        if i >= self.n_x || j >= self.n_h || !self.mask.w[i * self.n_h + j] {
            return Err(Error::InvalidConfig(format!(
                "bipartite connection ({i}, {j}) is not enabled"
            )));
        }
        self.w[i * self.n_h + j] = val;
        Ok(())
    }

    /// Enabled weights drawn i.i.d. uniform in [-0.01, 0.01], biases zero.
    pub fn randomize_weights(mut self, rng: &mut impl Rng) -> BmModel {
        for i in 0..self.n_x {
            for j in i + 1..self.n_x {
                if self.mask.u[i * self.n_x + j] {
                    let val = 0.02 * rng.gen::<f64>() - 0.01;
                    self.u[i * self.n_x + j] = val;
                    self.u[j * self.n_x + i] = val;
                }
            }
        }
        for j in 0..self.n_h {
            for k in j + 1..self.n_h {
                if self.mask.v[j * self.n_h + k] {
                    let val = 0.02 * rng.gen::<f64>() - 0.01;
                    self.v[j * self.n_h + k] = val;
                    self.v[k * self.n_h + j] = val;
                }
            }
        }
        for i in 0..self.n_x {
            for j in 0..self.n_h {
                if self.mask.w[i * self.n_h + j] {
                    self.w[i * self.n_h + j] = 0.02 * rng.gen::<f64>() - 0.01;
                }
            }
        }
        self
    }

    /// Structural and kind invariants; run after deserializing.
    pub fn validate(&self) -> Result<()> {
        let (n_x, n_h) = (self.n_x, self.n_h);
        let shapes_ok = n_x >= 1
            && n_x + n_h <= UNIT_CAP
            && self.u.len() == n_x * n_x
            && self.v.len() == n_h * n_h
            && self.w.len() == n_x * n_h
            && self.b.len() == n_x
            && self.d.len() == n_h
            && self.mask.u.len() == n_x * n_x
            && self.mask.v.len() == n_h * n_h
            && self.mask.w.len() == n_x * n_h;
        if !shapes_ok {
            return Err(Error::InvalidConfig("model array shapes disagree".into()));
        }
        for i in 0..n_x {
            for j in 0..n_x {
                let (e, m) = (self.u[i * n_x + j], self.mask.u[i * n_x + j]);
                if e != self.u[j * n_x + i] || m != self.mask.u[j * n_x + i] {
                    return Err(Error::InvalidConfig("U must be symmetric".into()));
                }
                if i == j && (e != 0.0 || m) {
                    return Err(Error::InvalidConfig("U diagonal must be zero".into()));
                }
                if !m && e != 0.0 {
                    return Err(Error::InvalidConfig("masked U entry is nonzero".into()));
                }
            }
        }
        for j in 0..n_h {
            for k in 0..n_h {
                let (e, m) = (self.v[j * n_h + k], self.mask.v[j * n_h + k]);
                if e != self.v[k * n_h + j] || m != self.mask.v[k * n_h + j] {
                    return Err(Error::InvalidConfig("V must be symmetric".into()));
                }
                if j == k && (e != 0.0 || m) {
                    return Err(Error::InvalidConfig("V diagonal must be zero".into()));
                }
                if !m && e != 0.0 {
                    return Err(Error::InvalidConfig("masked V entry is nonzero".into()));
                }
            }
        }
        for (e, m) in self.w.iter().zip(&self.mask.w) {
            if !m && *e != 0.0 {
                return Err(Error::InvalidConfig("masked W entry is nonzero".into()));
            }
        }
        let kind_ok = match self.kind {
            BmKind::Vbm => n_h == 0,
            BmKind::Rbm => !self.mask.u.iter().any(|&m| m) && !self.mask.v.iter().any(|&m| m),
            BmKind::Vrbm => !self.mask.v.iter().any(|&m| m),
            BmKind::General => true,
        };
        if !kind_ok {
            return Err(Error::InvalidConfig(format!(
                "mask violates kind {:?}",
                self.kind
            )));
        }
        Ok(())
    }

    /// Bias of joint unit k.
    fn bias(&self, k: usize) -> f64 {
        if k < self.n_x {
            self.b[k]
        } else {
            self.d[k - self.n_x]
        }
    }

    /// Weight between distinct joint units a and b (zero when masked).
    fn weight(&self, a: usize, bb: usize) -> f64 {
        let (lo, hi) = if a < bb { (a, bb) } else { (bb, a) };
        if hi < self.n_x {
            self.u[lo * self.n_x + hi]
        } else if lo >= self.n_x {
            self.v[(lo - self.n_x) * self.n_h + (hi - self.n_x)]
        } else {
            self.w[lo * self.n_h + (hi - self.n_x)]
        }
    }

    /// E(x, h); masked connections contribute nothing.
    pub fn energy(&self, x: u128, h: u128) -> Result<f64> {
        if self.n_x < 128 && x >> self.n_x != 0 {
            return Err(Error::DimensionMismatch {
                expected: self.n_x,
                got: 128 - x.leading_zeros() as usize,
            });
        }
        if h >> self.n_h != 0 {
            return Err(Error::DimensionMismatch {
                expected: self.n_h,
                got: 128 - h.leading_zeros() as usize,
            });
        }
        let state = x | (h << self.n_x);
        let mut acc = 0.0;
        let mut rest = state;
        while rest != 0 {
            let k = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            acc += self.bias(k);
            let mut other = rest;
            while other != 0 {
                let i = other.trailing_zeros() as usize;
                other &= other - 1;
                acc += self.weight(k, i);
            }
        }
        Ok(-acc)
    }

    fn check_unit_cap(&self) -> Result<()> {
        if self.n_units() > MAX_N {
            return Err(Error::SizeCap {
                n: self.n_units(),
                cap: MAX_N,
            });
        }
        Ok(())
    }

    /// Unnormalized log-probability per joint state, built incrementally by
    /// peeling the lowest set bit.
    fn joint_log_weights(&self) -> Result<Vec<f64>> {
        self.check_unit_cap()?;
        let n = self.n_units();
        let mut lw = vec![0.0f64; 1 << n];
        for s in 1usize..1 << n {
            let k = s.trailing_zeros() as usize;
            let rest = s & (s - 1);
            let mut acc = lw[rest] + self.bias(k);
            let mut m = rest;
            while m != 0 {
                let i = m.trailing_zeros() as usize;
                m &= m - 1;
                acc += self.weight(k, i);
            }
            lw[s] = acc;
        }
        Ok(lw)
    }

    /// Normalized joint table over (x, h), x bits low.
    pub fn exact_distribution(&self) -> Result<JointTable> {
        let lw = self.joint_log_weights()?;
        let probs = normalize_log_weights(&lw)?;
        JointTable::new(self.n_units(), probs)
    }

    /// Visible marginal. With no hidden-hidden coupling the hidden units sum
    /// out per state as softplus terms over 2^n_x states only; otherwise the
    /// full joint is built and summed.
    pub fn marginal_visible(&self) -> Result<JointTable> {
        if self.n_h == 0 {
            return self.exact_distribution();
        }
        if self.v.iter().all(|&x| x == 0.0) {
            if self.n_x > MAX_N {
                return Err(Error::SizeCap {
                    n: self.n_x,
                    cap: MAX_N,
                });
            }
            let mut lw = vec![0.0f64; 1 << self.n_x];
            for s in 1usize..1 << self.n_x {
                let k = s.trailing_zeros() as usize;
                let rest = s & (s - 1);
                let mut acc = lw[rest] + self.b[k];
                let mut m = rest;
                while m != 0 {
                    let i = m.trailing_zeros() as usize;
                    m &= m - 1;
                    acc += self.u[k * self.n_x + i];
                }
                lw[s] = acc;
            }
            for (s, w) in lw.iter_mut().enumerate() {
                for j in 0..self.n_h {
                    *w += softplus(self.hidden_activation(s as u128, j));
                }
            }
            let probs = normalize_log_weights(&lw)?;
            return JointTable::new(self.n_x, probs);
        }
        let joint = self.exact_distribution()?;
        let mut probs = vec![0.0f64; 1 << self.n_x];
        for (s, &p) in joint.probs().iter().enumerate() {
            probs[s & ((1 << self.n_x) - 1)] += p;
        }
        JointTable::new(self.n_x, probs)
    }

    /// Input to hidden unit j given visible state x (V plays no part).
    fn hidden_activation(&self, x: u128, j: usize) -> f64 {
        let mut acc = self.d[j];
        let mut m = x;
        while m != 0 {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            acc += self.w[i * self.n_h + j];
        }
        acc
    }

    /// Conditional p(h | x) as a table over the 2^n_h hidden states.
    fn hidden_conditional(&self, x: u128) -> Result<Vec<f64>> {
        if self.n_h > MAX_N {
            return Err(Error::SizeCap {
                n: self.n_h,
                cap: MAX_N,
            });
        }
        let mut lw = vec![0.0f64; 1 << self.n_h];
        for s in 1usize..1 << self.n_h {
            let k = s.trailing_zeros() as usize;
            let rest = s & (s - 1);
            let mut acc = lw[rest] + self.hidden_activation(x, k);
            let mut m = rest;
            while m != 0 {
                let i = m.trailing_zeros() as usize;
                m &= m - 1;
                acc += self.v[k * self.n_h + i];
            }
            lw[s] = acc;
        }
        normalize_log_weights(&lw)
    }

    /// Natural parameters over the joint units: order one holds the biases,
    /// order two the weights, everything above is zero.
    pub fn bm_to_theta(&self) -> Result<ThetaVector> {
        self.check_unit_cap()?;
        let n = self.n_units();
        let mut template = vec![0.0f64; 1 << n];
        for k in 0..n {
            template[1 << k] = self.bias(k);
        }
        for a in 0..n {
            for bb in a + 1..n {
                template[(1 << a) | (1 << bb)] = self.weight(a, bb);
            }
        }
        let (_, psi) = theta_template_to_probs_psi(n, &template).ok_or(Error::Overflow)?;
        ThetaVector::new(n, template[1..].to_vec(), psi)
    }

    /// Enabled parameters in canonical order: visible biases, hidden biases,
    /// U pairs (i < j), W pairs (visible-major), V pairs (j < k).
    pub fn params(&self) -> Vec<ParamId> {
        let mut out = Vec::new();
        for i in 0..self.n_x {
            out.push(ParamId::B(i));
        }
        for j in 0..self.n_h {
            out.push(ParamId::D(j));
        }
        for i in 0..self.n_x {
            for j in i + 1..self.n_x {
                if self.mask.u[i * self.n_x + j] {
                    out.push(ParamId::U(i, j));
                }
            }
        }
        for i in 0..self.n_x {
            for j in 0..self.n_h {
                if self.mask.w[i * self.n_h + j] {
                    out.push(ParamId::W(i, j));
                }
            }
        }
        for j in 0..self.n_h {
            for k in j + 1..self.n_h {
                if self.mask.v[j * self.n_h + k] {
                    out.push(ParamId::V(j, k));
                }
            }
        }
        out
    }

    /// Joint state mask of the sufficient statistic for a parameter.
    fn param_mask(&self, p: ParamId) -> u32 {
        match p {
            ParamId::B(i) => 1 << i,
            ParamId::D(j) => 1 << (self.n_x + j),
            ParamId::U(i, j) => (1 << i) | (1 << j),
            ParamId::W(i, j) => (1 << i) | (1 << (self.n_x + j)),
            ParamId::V(j, k) => (1 << (self.n_x + j)) | (1 << (self.n_x + k)),
        }
    }

    fn get_param(&self, p: ParamId) -> f64 {
        match p {
            ParamId::B(i) => self.b[i],
            ParamId::D(j) => self.d[j],
            ParamId::U(i, j) => self.u[i * self.n_x + j],
            ParamId::W(i, j) => self.w[i * self.n_h + j],
            ParamId::V(j, k) => self.v[j * self.n_h + k],
        }
    }

    fn add_param(&mut self, p: ParamId, delta: f64) {
        match p {
            ParamId::B(i) => self.b[i] += delta,
            ParamId::D(j) => self.d[j] += delta,
            ParamId::U(i, j) => {
                self.u[i * self.n_x + j] += delta;
                self.u[j * self.n_x + i] += delta;
            }
            ParamId::W(i, j) => self.w[i * self.n_h + j] += delta,
            ParamId::V(j, k) => {
                self.v[j * self.n_h + k] += delta;
                self.v[k * self.n_h + j] += delta;
            }
        }
    }

    fn stepped(&self, params: &[ParamId], direction: &[f64], step: f64) -> BmModel {
        let mut out = self.clone();
        for (&p, &g) in params.iter().zip(direction) {
            out.add_param(p, step * g);
        }
        out
    }

    /// Exact likelihood gradient for the visible data distribution q_x:
    /// moment of each parameter's statistic under the data completion minus
    /// the model, data completion meaning q_x(x) p(h | x).
    pub fn ml_gradient_exact(&self, q_x: &JointTable) -> Result<Vec<f64>> {
        if q_x.n() != self.n_x {
            return Err(Error::DimensionMismatch {
                expected: self.n_x,
                got: q_x.n(),
            });
        }
        let params = self.params();
        if self.n_h == 0 {
            let model = self.exact_distribution()?;
            let mut eta_q = q_x.probs().to_vec();
            let mut eta_p = model.probs().to_vec();
            superset_sum_transform(&mut eta_q);
            superset_sum_transform(&mut eta_p);
            return Ok(params
                .iter()
                .map(|&p| {
                    let m = self.param_mask(p) as usize;
                    eta_q[m] - eta_p[m]
                })
                .collect());
        }
        if self.v.iter().all(|&x| x == 0.0) {
            return self.ml_gradient_factored(q_x, &params);
        }
        let model = self.exact_distribution()?;
        let completed = project_H(q_x, self)?;
        let mut eta_q = completed.probs().to_vec();
        let mut eta_p = model.probs().to_vec();
        superset_sum_transform(&mut eta_q);
        superset_sum_transform(&mut eta_p);
        Ok(params
            .iter()
            .map(|&p| {
                let m = self.param_mask(p) as usize;
                eta_q[m] - eta_p[m]
            })
            .collect())
    }

    /// Gradient via the factored hidden conditional: with V = 0 every hidden
    /// statistic is a sigmoid of its activation, so only visible states are
    /// enumerated.
    fn ml_gradient_factored(&self, q_x: &JointTable, params: &[ParamId]) -> Result<Vec<f64>> {
        let p_x = self.marginal_visible()?;
        let mut grad = vec![0.0f64; params.len()];
        let mut sig = vec![0.0f64; self.n_h];
        for s in 0..1usize << self.n_x {
            let diff = q_x.prob(s) - p_x.prob(s);
            if diff == 0.0 {
                continue;
            }
            for (j, g) in sig.iter_mut().enumerate() {
                *g = sigmoid(self.hidden_activation(s as u128, j));
            }
            for (gi, &p) in grad.iter_mut().zip(params) {
                let stat = match p {
                    ParamId::B(i) => ((s >> i) & 1) as f64,
                    ParamId::D(j) => sig[j],
                    ParamId::U(i, j) => (((s >> i) & (s >> j)) & 1) as f64,
                    ParamId::W(i, j) => ((s >> i) & 1) as f64 * sig[j],
                    ParamId::V(j, k) => sig[j] * sig[k],
                };
                *gi += diff * stat;
            }
        }
        Ok(grad)
    }
}

fn sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

fn softplus(a: f64) -> f64 {
    if a > 30.0 {
        a
    } else {
        a.exp().ln_1p()
    }
}

/// Log-sum-exp normalization of log weights into probabilities. Cells are
/// floored just above zero so extreme weights cannot underflow a state out
/// of the support.
fn normalize_log_weights(lw: &[f64]) -> Result<Vec<f64>> {
    let m = lw.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !m.is_finite() {
        return Err(Error::Overflow);
    }
    let w: Vec<f64> = lw.iter().map(|&x| (x - m).exp().max(1e-300)).collect();
    let z: f64 = w.iter().sum();
    Ok(w.iter().map(|&x| x / z).collect())
}

/// Bitmask of the n low bits, valid up to n = 128.
fn low_mask(n: usize) -> u128 {
    if n >= 128 {
        u128::MAX
    } else {
        (1u128 << n) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMethod {
    ExactMl,
    Cd { m: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: TrainMethod,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Convergence threshold on the gradient max-norm.
    pub tol: f64,
    /// Minibatch rows for CD; None trains full-batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            method: TrainMethod::ExactMl,
            learning_rate: 0.01,
            max_epochs: 2000,
            tol: 1e-7,
            batch_size: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let TrainMethod::Cd { m } = self.method {
            if m == 0 {
                return Err(Error::InvalidConfig("cd needs m >= 1".into()));
            }
        }
        Ok(())
    }
}

/// Training input: an explicit visible distribution or raw sample rows.
#[derive(Debug, Clone, Copy)]
pub enum TrainData<'a> {
    Exact(&'a JointTable),
    Samples(&'a BinaryMatrix),
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub grad_norm: f64,
    /// KL(data, model visible marginal); NaN when the marginal is over the
    /// exact-enumeration cap.
    pub kl_to_data: f64,
}

#[derive(Debug, Clone)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub converged: bool,
}

/// Fits the enabled parameters to the data. Exact ML solves visible models
/// by damped Newton on the moment match and hidden models by exact-gradient
/// ascent with an adaptive step; CD runs the stochastic rule. A model is
/// always returned; `converged` reports whether the budget sufficed.
pub fn train(model: &BmModel, data: TrainData, cfg: &TrainConfig) -> Result<(BmModel, TrainTrace)> {
    cfg.validate()?;
    match cfg.method {
        TrainMethod::ExactMl => {
            let owned;
            let q_x = match data {
                TrainData::Exact(t) => t,
                TrainData::Samples(s) => {
                    owned = s.empirical_table()?;
                    &owned
                }
            };
            if q_x.n() != model.n_x {
                return Err(Error::DimensionMismatch {
                    expected: model.n_x,
                    got: q_x.n(),
                });
            }
            if model.n_h == 0 {
                train_visible_newton(model, q_x, cfg)
            } else {
                train_hidden_ascent(model, q_x, cfg)
            }
        }
        TrainMethod::Cd { m } => {
            let samples = match data {
                TrainData::Samples(s) => s,
                TrainData::Exact(_) => {
                    return Err(Error::InvalidConfig(
                        "cd training needs sample rows, not an exact table".into(),
                    ))
                }
            };
            train_cd(model, samples, m, cfg)
        }
    }
}

/// Newton solve of the moment-matching equations for a fully visible model;
/// free masks are the biases plus the enabled pair connections.
fn train_visible_newton(
    model: &BmModel,
    q_x: &JointTable,
    cfg: &TrainConfig,
) -> Result<(BmModel, TrainTrace)> {
    model.check_unit_cap()?;
    if cfg.max_epochs == 0 {
        return Ok((
            model.clone(),
            TrainTrace {
                rows: vec![],
                converged: false,
            },
        ));
    }
    let n = model.n_x;
    let params = model.params();
    let free: Vec<u32> = params.iter().map(|&p| model.param_mask(p)).collect();
    let mut eta = q_x.probs().to_vec();
    superset_sum_transform(&mut eta);
    let target: Vec<f64> = free.iter().map(|&m| eta[m as usize]).collect();
    // Warm start from the model's own parameters; a cold all-zero model gets
    // the independent-bit logit start instead.
    let mut template = vec![0.0f64; 1 << n];
    for (&p, &mask) in params.iter().zip(&free) {
        template[mask as usize] = model.get_param(p);
    }
    if template.iter().all(|&t| t == 0.0) {
        for (&m, &t) in free.iter().zip(&target) {
            if m.count_ones() == 1 {
                let e = t.clamp(1e-12, 1.0 - 1e-12);
                template[m as usize] = (e / (1.0 - e)).ln();
            }
        }
    }
    let mut rows = Vec::new();
    let mut cb = |iter: usize, res: f64, probs: &[f64]| {
        let kl_to_data = q_x
            .probs()
            .iter()
            .zip(probs)
            .map(|(&q, &p)| q * (q / p).ln())
            .sum();
        rows.push(TraceRow {
            epoch: iter,
            grad_norm: res,
            kl_to_data,
        });
    };
    let opts = NewtonOptions {
        max_iter: cfg.max_epochs,
        tol: cfg.tol,
    };
    let solved = solve_theta_by_moments(n, &free, &target, &mut template, &opts, Some(&mut cb));
    let converged = match solved {
        Ok(_) => true,
        Err(Error::NoConvergence { .. }) => false,
        Err(e) => return Err(e),
    };
    let mut out = model.clone();
    for &p in &params {
        let cur = out.get_param(p);
        out.add_param(p, template[out.param_mask(p) as usize] - cur);
    }
    Ok((out, TrainTrace { rows, converged }))
}

/// Exact-gradient ascent on the marginal likelihood with a bold-driver step:
/// grow the step on improvement, halve and retry on regression.
fn train_hidden_ascent(
    model: &BmModel,
    q_x: &JointTable,
    cfg: &TrainConfig,
) -> Result<(BmModel, TrainTrace)> {
    let params = model.params();
    let mut cur = model.clone();
    let mut cur_kl = kl(q_x, &cur.marginal_visible()?);
    let mut lr = cfg.learning_rate;
    let mut rows = Vec::new();
    let mut converged = false;
    for epoch in 0..cfg.max_epochs {
        let grad = cur.ml_gradient_exact(q_x)?;
        let gnorm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        rows.push(TraceRow {
            epoch,
            grad_norm: gnorm,
            kl_to_data: cur_kl,
        });
        if gnorm < cfg.tol {
            converged = true;
            break;
        }
        let mut stepped_ok = false;
        while lr >= 1e-16 {
            let cand = cur.stepped(&params, &grad, lr);
            let cand_kl = kl(q_x, &cand.marginal_visible()?);
            if cand_kl <= cur_kl + 1e-15 {
                cur = cand;
                cur_kl = cand_kl;
                lr *= 1.1;
                stepped_ok = true;
                break;
            }
            lr *= 0.5;
        }
        if !stepped_ok {
            break;
        }
    }
    Ok((cur, TrainTrace { rows, converged }))
}

fn train_cd(
    model: &BmModel,
    samples: &BinaryMatrix,
    m: usize,
    cfg: &TrainConfig,
) -> Result<(BmModel, TrainTrace)> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    if samples.n_cols() != model.n_x {
        return Err(Error::DimensionMismatch {
            expected: model.n_x,
            got: samples.n_cols(),
        });
    }
    let mut rng = rng_stream(cfg.seed, &[]);
    let n_rows = samples.n_rows();
    let batch = cfg.batch_size.unwrap_or(n_rows).max(1);
    let mut order: Vec<usize> = (0..n_rows).collect();
    let empirical = if model.n_x <= MAX_N {
        Some(samples.empirical_table()?)
    } else {
        None
    };
    let mut cur = model.clone();
    let mut rows = Vec::new();
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut last_norm = 0.0;
        for chunk in order.chunks(batch) {
            let mini = samples.select_rows(chunk);
            let (next, norm) = cd_step(&cur, &mini, m, cfg.learning_rate, &mut rng)?;
            cur = next;
            last_norm = norm;
        }
        let kl_to_data = match (&empirical, cur.marginal_visible()) {
            (Some(emp), Ok(marg)) => kl(emp, &marg),
            _ => f64::NAN,
        };
        rows.push(TraceRow {
            epoch,
            grad_norm: last_norm,
            kl_to_data,
        });
    }
    // CD has no gradient-based stopping rule; the epoch budget is the run.
    Ok((cur, TrainTrace { rows, converged: true }))
}

/// One CD-m parameter update from a minibatch.
pub fn cd_update(
    model: &BmModel,
    minibatch: &BinaryMatrix,
    m: usize,
    learning_rate: f64,
    rng: &mut impl Rng,
) -> Result<BmModel> {
    if m == 0 {
        return Err(Error::InvalidConfig("cd needs m >= 1".into()));
    }
    Ok(cd_step(model, minibatch, m, learning_rate, rng)?.0)
}

/// Positive phase uses exact hidden conditionals at the data; negative phase
/// reads off states after m Gibbs sweeps started at the data. Returns the
/// updated model and the max-norm of the mean statistic gap.
fn cd_step(
    model: &BmModel,
    minibatch: &BinaryMatrix,
    m: usize,
    learning_rate: f64,
    rng: &mut impl Rng,
) -> Result<(BmModel, f64)> {
    if minibatch.is_empty() {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    let params = model.params();
    let mut gap = vec![0.0f64; params.len()];
    let rows = minibatch.n_rows();
    for r in 0..rows {
        let x = minibatch.row_bits(r);
        let (h_mean, h_pair, h_sample) = if model.n_h > 0 {
            let cond = model.hidden_conditional(x)?;
            let mut mean = vec![0.0f64; model.n_h];
            let mut pair = vec![0.0f64; model.n_h * model.n_h];
            for (hs, &p) in cond.iter().enumerate() {
                for j in 0..model.n_h {
                    if (hs >> j) & 1 == 1 {
                        mean[j] += p;
                        for k in j + 1..model.n_h {
                            if (hs >> k) & 1 == 1 {
                                pair[j * model.n_h + k] += p;
                            }
                        }
                    }
                }
            }
            (mean, pair, sample_index(&cond, rng) as u128)
        } else {
            (vec![], vec![], 0)
        };
        // Positive phase.
        for (g, &p) in gap.iter_mut().zip(&params) {
            *g += match p {
                ParamId::B(i) => ((x >> i) & 1) as f64,
                ParamId::D(j) => h_mean[j],
                ParamId::U(i, j) => (((x >> i) & (x >> j)) & 1) as f64,
                ParamId::W(i, j) => ((x >> i) & 1) as f64 * h_mean[j],
                ParamId::V(j, k) => h_pair[j * model.n_h + k],
            };
        }
        // Negative phase from the chain.
        let mut state = if model.n_h == 0 {
            x
        } else {
            x | (h_sample << model.n_x)
        };
        for _ in 0..m {
            state = gibbs_sweep(model, state, rng);
        }
        let xn = state & low_mask(model.n_x);
        let hn = if model.n_h == 0 { 0 } else { state >> model.n_x };
        for (g, &p) in gap.iter_mut().zip(&params) {
            *g -= match p {
                ParamId::B(i) => ((xn >> i) & 1) as f64,
                ParamId::D(j) => ((hn >> j) & 1) as f64,
                ParamId::U(i, j) => (((xn >> i) & (xn >> j)) & 1) as f64,
                ParamId::W(i, j) => (((xn >> i) & (hn >> j)) & 1) as f64,
                ParamId::V(j, k) => (((hn >> j) & (hn >> k)) & 1) as f64,
            };
        }
    }
    let mut out = model.clone();
    let mut norm = 0.0f64;
    for (&p, g) in params.iter().zip(&gap) {
        let mean_gap = g / rows as f64;
        norm = norm.max(mean_gap.abs());
        out.add_param(p, learning_rate * mean_gap);
    }
    Ok((out, norm))
}

/// Inverse-CDF draw of an index from a probability vector.
fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// One sequential Gibbs sweep in ascending unit order; each unit resamples
/// from the sigmoid of its weighted input. The zero diagonal makes the
/// unit's own bit harmless in the input sum.
pub fn gibbs_sweep(model: &BmModel, state: u128, rng: &mut impl Rng) -> u128 {
    let n = model.n_units();
    let mut s = state;
    for k in 0..n {
        let mut alpha = model.bias(k);
        let mut m = s;
        while m != 0 {
            let i = m.trailing_zeros() as usize;
            m &= m - 1;
            if i != k {
                alpha += model.weight(k, i);
            }
        }
        if rng.gen::<f64>() < sigmoid(alpha) {
            s |= 1 << k;
        } else {
            s &= !(1 << k);
        }
    }
    s
}

/// Data completion q(x, h) = q_x(x) p(h | x; model), the projection onto the
/// manifold of joints with visible marginal q_x.
#[allow(non_snake_case)]
pub fn project_H(q_x: &JointTable, model: &BmModel) -> Result<JointTable> {
    if q_x.n() != model.n_x() {
        return Err(Error::DimensionMismatch {
            expected: model.n_x(),
            got: q_x.n(),
        });
    }
    model.check_unit_cap()?;
    let joint = model.exact_distribution()?;
    let n_x = model.n_x();
    let mut out = vec![0.0f64; joint.len()];
    for xs in 0..1usize << n_x {
        let mut denom = 0.0;
        for hs in 0..1usize << model.n_h() {
            denom += joint.prob(xs | (hs << n_x));
        }
        let scale = q_x.prob(xs) / denom;
        for hs in 0..1usize << model.n_h() {
            let cell = xs | (hs << n_x);
            out[cell] = joint.prob(cell) * scale;
        }
    }
    JointTable::new(model.n_units(), out)
}

/// Gradient max-norm threshold for declaring the Gamma_B projection solved.
const PROJECT_B_TOL: f64 = 1e-8;

/// Projection onto the model's connectivity manifold, treating all units as
/// visible: Newton moment match of every bias plus the enabled pairs of
/// init's mask. The high-order theta of the result is structurally zero.
#[allow(non_snake_case)]
pub fn project_B(q_xh: &JointTable, init: &BmModel, cfg: &TrainConfig) -> Result<BmModel> {
    init.check_unit_cap()?;
    let n = init.n_units();
    if q_xh.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: q_xh.n(),
        });
    }
    let params = init.params();
    let free: Vec<u32> = params.iter().map(|&p| init.param_mask(p)).collect();
    let mut eta = q_xh.probs().to_vec();
    superset_sum_transform(&mut eta);
    let target: Vec<f64> = free.iter().map(|&m| eta[m as usize]).collect();
    let mut template = vec![0.0f64; 1 << n];
    for (&p, &mask) in params.iter().zip(&free) {
        template[mask as usize] = init.get_param(p);
    }
    if template.iter().all(|&t| t == 0.0) {
        for (&mask, &t) in free.iter().zip(&target) {
            if mask.count_ones() == 1 {
                let e = t.clamp(1e-12, 1.0 - 1e-12);
                template[mask as usize] = (e / (1.0 - e)).ln();
            }
        }
    }
    let opts = NewtonOptions {
        max_iter: cfg.max_epochs,
        tol: PROJECT_B_TOL,
    };
    solve_theta_by_moments(n, &free, &target, &mut template, &opts, None)?;
    let mut out = init.clone();
    for &p in &params {
        let cur = out.get_param(p);
        out.add_param(p, template[out.param_mask(p) as usize] - cur);
    }
    Ok(out)
}

/// Divergences of one projection round: D[q_{i+1}, p_i] after the H step and
/// D[q_{i+1}, p_{i+1}] after the B step.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionRound {
    pub d_h: f64,
    pub d_b: f64,
}

#[derive(Debug, Clone)]
pub struct ProjectionTrace {
    pub rounds: Vec<ProjectionRound>,
    pub converged: bool,
}

/// Stop when a round improves the divergence by less than this.
const ROUND_TOL: f64 = 1e-9;

/// Alternates the data completion and the model projection. The interleaved
/// divergence sequence d_h1 >= d_b1 >= d_h2 >= ... is non-increasing; rounds
/// stop when the improvement falls under ROUND_TOL or the budget runs out.
pub fn iterative_projection(
    q_x: &JointTable,
    init: &BmModel,
    cfg: &TrainConfig,
) -> Result<(BmModel, ProjectionTrace)> {
    let mut p = init.clone();
    let mut rounds = Vec::new();
    let mut converged = false;
    let mut prev_d_b = f64::INFINITY;
    for _ in 0..cfg.max_epochs.max(1) {
        let q_next = project_H(q_x, &p)?;
        let d_h = crate::fisher::kl(&q_next, &p.exact_distribution()?);
        p = project_B(&q_next, &p, cfg)?;
        let d_b = crate::fisher::kl(&q_next, &p.exact_distribution()?);
        rounds.push(ProjectionRound { d_h, d_b });
        if d_b < ROUND_TOL || prev_d_b - d_b < ROUND_TOL {
            converged = true;
            break;
        }
        prev_d_b = d_b;
    }
    Ok((p, ProjectionTrace { rounds, converged }))
}
