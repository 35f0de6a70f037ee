//! Sample-specific selection of pairwise connections: a per-edge
//! significance test on the confidence statistic, confidence ranking, and
//! cross-validated budget search over masked models.

use crate::boltzmann::{train, BmKind, BmModel, TrainConfig, TrainData};
use crate::cif::edge_confidence;
use crate::coords::JointTable;
use crate::error::{Error, Result};
use crate::samples::BinaryMatrix;
use crate::stream::rng_stream;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Undirected connections between 1-based visible variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSet {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    pub fn empty(n: usize) -> EdgeSet {
        EdgeSet {
            n,
            edges: BTreeSet::new(),
        }
    }

    pub fn complete(n: usize) -> EdgeSet {
        let mut edges = BTreeSet::new();
        for i in 1..=n {
            for j in i + 1..=n {
                edges.insert((i, j));
            }
        }
        EdgeSet { n, edges }
    }

    pub fn from_edges(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<EdgeSet> {
        let mut set = EdgeSet::empty(n);
        for (i, j) in pairs {
            set.insert(i, j)?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, i: usize, j: usize) -> Result<()> {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        if lo == hi || lo == 0 || hi > self.n {
            return Err(Error::InvalidConfig(format!(
                "bad edge ({i}, {j}) over {} variables",
                self.n
            )));
        }
        self.edges.insert((lo, hi));
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        self.edges.contains(&(lo, hi))
    }

    /// Edges in ascending lexicographic order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    /// 0-based pairs for model construction.
    pub fn to_model_edges(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|&(i, j)| (i - 1, j - 1)).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HtestConfig {
    /// Significance level of the inclusion rule.
    pub alpha: f64,
    /// Pseudo-count added to each cell of the pairwise marginals.
    pub smoothing: f64,
}

impl Default for HtestConfig {
    fn default() -> Self {
        HtestConfig {
            alpha: 0.05,
            smoothing: 0.5,
        }
    }
}

/// Survival function of the chi-square distribution with one degree of
/// freedom, exact through the error-function identity.
pub fn chi2_sf_1df(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::NegativeInput { value: x });
    }
    Ok(libm::erfc((x / 2.0).sqrt()))
}

/// Pairwise marginal of two 1-based variables with a pseudo-count per cell.
fn smoothed_pair(samples: &BinaryMatrix, i: usize, j: usize, pseudo: f64) -> Result<JointTable> {
    let c = samples.pair_counts(i, j);
    let w: Vec<f64> = c.iter().map(|&x| x + pseudo).collect();
    JointTable::from_unnormalized(2, &w)
}

/// Per-edge test outcome.
#[derive(Debug, Clone, Serialize)]
pub struct EdgeReport {
    pub i: usize,
    pub j: usize,
    pub rho: f64,
    pub p_value: f64,
    pub selected: bool,
}

/// Tests every variable pair: the scaled confidence N rho is referred to a
/// chi-square with one degree of freedom and the edge is included when the
/// doubled tail is strictly under alpha.
pub fn cif_htest_report(samples: &BinaryMatrix, cfg: &HtestConfig) -> Result<Vec<EdgeReport>> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha must be in (0, 1), got {}",
            cfg.alpha
        )));
    }
    if !(cfg.smoothing >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "smoothing must be nonnegative, got {}",
            cfg.smoothing
        )));
    }
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    let n = samples.n_cols();
    if n < 2 {
        return Err(Error::InvalidConfig(format!(
            "pair selection needs at least 2 variables, got {n}"
        )));
    }
    let big_n = samples.n_rows() as f64;
    let mut out = Vec::new();
    for i in 1..=n {
        for j in i + 1..=n {
            let rho = edge_confidence(&smoothed_pair(samples, i, j, cfg.smoothing)?)?;
            let p_value = chi2_sf_1df(big_n * rho)?;
            out.push(EdgeReport {
                i,
                j,
                rho,
                p_value,
                selected: 2.0 * p_value < cfg.alpha,
            });
        }
    }
    Ok(out)
}

pub fn cif_htest(samples: &BinaryMatrix, cfg: &HtestConfig) -> Result<EdgeSet> {
    let reports = cif_htest_report(samples, cfg)?;
    EdgeSet::from_edges(
        samples.n_cols(),
        reports.iter().filter(|r| r.selected).map(|r| (r.i, r.j)),
    )
}

/// Pseudo-count used when ranking confidences without an explicit config.
const RANK_SMOOTHING: f64 = 0.5;

/// Candidate edges ordered by descending confidence; exact ties fall back to
/// ascending lexicographic order.
pub fn cif_rank(
    samples: &BinaryMatrix,
    candidates: &EdgeSet,
) -> Result<Vec<((usize, usize), f64)>> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    let mut out = Vec::with_capacity(candidates.len());
    for (i, j) in candidates.iter() {
        let rho = edge_confidence(&smoothed_pair(samples, i, j, RANK_SMOOTHING)?)?;
        out.push(((i, j), rho));
    }
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectMethod {
    Cif,
    Rand,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvConfig {
    pub k: usize,
    /// Edge-count budgets to evaluate; empty means an evenly spaced
    /// 11-point grid from zero to the full candidate count.
    pub grid: Vec<usize>,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            k: 5,
            grid: vec![],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CvRow {
    pub budget: usize,
    pub fold: usize,
    /// Held-out mean log-likelihood.
    pub score: f64,
}

/// Evenly spaced edge budgets from 0 to full, at most 11 after rounding.
pub fn default_grid(full: usize) -> Vec<usize> {
    let mut g: Vec<usize> = (0..=10)
        .map(|i| ((i * full) as f64 / 10.0).round() as usize)
        .collect();
    g.dedup();
    g
}

/// The template's enabled visible-visible connections as 1-based pairs.
fn template_u_edges(template: &BmModel) -> Vec<(usize, usize)> {
    let n = template.n_x();
    let mask = &template.mask().u;
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if mask[i * n + j] {
                out.push((i + 1, j + 1));
            }
        }
    }
    out
}

/// The template with its visible-visible connections restricted to the set.
pub fn masked_model(template: &BmModel, set: &EdgeSet) -> Result<BmModel> {
    let edges = set.to_model_edges();
    match template.kind() {
        BmKind::Vbm => BmModel::vbm_with_edges(template.n_x(), &edges),
        BmKind::Vrbm => BmModel::vrbm_with_edges(template.n_x(), template.n_h(), &edges),
        k => Err(Error::InvalidConfig(format!(
            "budget selection needs a vbm or vrbm template, got {k:?}"
        ))),
    }
}

/// Cross-validated budget search. Confidence ranking is recomputed on each
/// fold's training rows so held-out rows never influence which prefix is
/// scored; the returned set ranks on the full sample at the winning budget.
/// The rand baseline draws one uniform candidate subset per budget. Each
/// budget's masked model is trained on k-1 folds and scored by held-out mean
/// log-likelihood; the winning budget maximizes the mean score, ties to the
/// smaller budget.
pub fn cv_select(
    samples: &BinaryMatrix,
    template: &BmModel,
    method: SelectMethod,
    cfg: &CvConfig,
    train_cfg: &TrainConfig,
) -> Result<(EdgeSet, Vec<CvRow>)> {
    if cfg.k < 2 {
        return Err(Error::InvalidConfig(format!(
            "cross validation needs k >= 2, got {}",
            cfg.k
        )));
    }
    let n_rows = samples.n_rows();
    if n_rows < cfg.k {
        return Err(Error::InsufficientSamples {
            need: cfg.k,
            got: n_rows,
        });
    }
    let n = samples.n_cols();
    if n != template.n_x() {
        return Err(Error::DimensionMismatch {
            expected: template.n_x(),
            got: n,
        });
    }
    let candidates = template_u_edges(template);
    let full = candidates.len();
    let mut grid = if cfg.grid.is_empty() {
        default_grid(full)
    } else {
        cfg.grid.clone()
    };
    for &b in &grid {
        if b > full {
            return Err(Error::InvalidConfig(format!(
                "budget {b} exceeds the {full} candidate edges"
            )));
        }
    }
    let mut seen = BTreeSet::new();
    grid.retain(|&b| seen.insert(b));

    let ranked = cif_rank(samples, &EdgeSet::from_edges(n, candidates.iter().copied())?)?;
    let mut rng = rng_stream(cfg.seed, &[]);
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut rng);
    let mut train_parts = Vec::with_capacity(cfg.k);
    let mut held_parts = Vec::with_capacity(cfg.k);
    for f in 0..cfg.k {
        let (mut held, mut tr) = (Vec::new(), Vec::new());
        for (pos, &r) in order.iter().enumerate() {
            if pos % cfg.k == f {
                held.push(r);
            } else {
                tr.push(r);
            }
        }
        held_parts.push(samples.select_rows(&held));
        train_parts.push(samples.select_rows(&tr));
    }
    let candidate_set = EdgeSet::from_edges(n, candidates.iter().copied())?;
    let fold_ranked: Vec<Vec<((usize, usize), f64)>> = match method {
        SelectMethod::Cif => train_parts
            .iter()
            .map(|part| cif_rank(part, &candidate_set))
            .collect::<Result<_>>()?,
        SelectMethod::Rand => Vec::new(),
    };

    let mut rows = Vec::new();
    let mut sets: Vec<(usize, EdgeSet)> = Vec::new();
    for &budget in &grid {
        let shared = match method {
            SelectMethod::Cif => {
                EdgeSet::from_edges(n, ranked.iter().take(budget).map(|r| r.0))?
            }
            SelectMethod::Rand => {
                let pick = rand::seq::index::sample(&mut rng, full, budget);
                EdgeSet::from_edges(n, pick.iter().map(|i| candidates[i]))?
            }
        };
        for f in 0..cfg.k {
            let fold_set = match method {
                SelectMethod::Cif => EdgeSet::from_edges(
                    n,
                    fold_ranked[f].iter().take(budget).map(|r| r.0),
                )?,
                SelectMethod::Rand => shared.clone(),
            };
            let masked = masked_model(template, &fold_set)?;
            let (fit, _) = train(&masked, TrainData::Samples(&train_parts[f]), train_cfg)?;
            let marg = fit.marginal_visible()?;
            let held = &held_parts[f];
            let mut total = 0.0;
            for r in 0..held.n_rows() {
                total += marg.prob(held.row_bits(r) as usize).ln();
            }
            rows.push(CvRow {
                budget,
                fold: f,
                score: total / held.n_rows() as f64,
            });
        }
        sets.push((budget, shared));
    }

    let mut best: Option<(usize, f64)> = None;
    for &(budget, _) in &sets {
        let scores: Vec<f64> = rows
            .iter()
            .filter(|r| r.budget == budget)
            .map(|r| r.score)
            .collect();
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        best = Some(match best {
            None => (budget, mean),
            Some((bb, bm)) => {
                if mean > bm || (mean == bm && budget < bb) {
                    (budget, mean)
                } else {
                    (bb, bm)
                }
            }
        });
    }
    let best_budget = best.expect("grid is non-empty").0;
    let chosen = sets
        .into_iter()
        .find(|(b, _)| *b == best_budget)
        .expect("winner comes from the grid")
        .1;
    Ok((chosen, rows))
}

/// Share of total confidence carried by the selected edges. When every
/// confidence is zero the count share is reported instead.
pub fn model_complexity_ratio(selected: &EdgeSet, all_rho: &[((usize, usize), f64)]) -> f64 {
    if all_rho.is_empty() {
        return 0.0;
    }
    let total: f64 = all_rho.iter().map(|r| r.1).sum();
    if total <= 0.0 {
        let kept = all_rho
            .iter()
            .filter(|r| selected.contains(r.0 .0, r.0 .1))
            .count();
        return kept as f64 / all_rho.len() as f64;
    }
    let kept: f64 = all_rho
        .iter()
        .filter(|r| selected.contains(r.0 .0, r.0 .1))
        .map(|r| r.1)
        .sum();
    (kept / total).clamp(0.0, 1.0)
}
