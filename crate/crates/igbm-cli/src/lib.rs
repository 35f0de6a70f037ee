//! Job configs, outcome shapes, and error classification shared by the
//! binary and its tests.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use igbm::boltzmann::{BmKind, BmModel, TrainConfig};
use igbm::harness::Method;
use igbm::selection::{CvRow, EdgeReport, EdgeSet};
use igbm::{Error, Result};

/// Process exit code for a failed run: 2 for configuration and input
/// problems, 3 for numerical failures.
pub fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::NoConvergence { .. }
        | Error::Overflow
        | Error::SingularBlock { .. }
        | Error::InfeasibleMoments
        | Error::InvalidMoments => 3,
        _ => 2,
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn default_alpha() -> f64 {
    0.05
}

fn default_smoothing() -> f64 {
    0.5
}

fn default_folds() -> usize {
    5
}

/// Edge-selection job: the hypothesis test or a cross-validated budget
/// search. `n_hidden` shapes the template the cv methods train.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectJob {
    pub method: Method,
    #[serde(default)]
    pub n_hidden: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    #[serde(default = "default_folds")]
    pub k: usize,
    /// Edge-count budgets; empty means the evenly spaced default grid.
    #[serde(default)]
    pub grid: Vec<usize>,
    #[serde(default)]
    pub train_cfg: TrainConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

/// Selection result: 1-based edges, with the per-edge test reports or the
/// cross-validation scores that produced them.
#[derive(Debug, Serialize)]
pub struct SelectOutcome {
    pub n_vars: usize,
    pub method: Method,
    pub edges: EdgeSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reports: Option<Vec<EdgeReport>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cv_rows: Option<Vec<CvRow>>,
}

/// Training job for one model built from scratch; `edges` lists 1-based
/// visible-visible connections, omitted meaning all enabled.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainJob {
    pub kind: BmKind,
    pub n_vars: usize,
    #[serde(default)]
    pub n_hidden: usize,
    #[serde(default)]
    pub edges: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub train_cfg: TrainConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl TrainJob {
    /// Zero-initialized model with the requested connectivity.
    pub fn build_model(&self) -> Result<BmModel> {
        let to_zero_based = |edges: &[(usize, usize)]| -> Result<Vec<(usize, usize)>> {
            Ok(EdgeSet::from_edges(self.n_vars, edges.iter().copied())?.to_model_edges())
        };
        match self.kind {
            BmKind::Vbm => match &self.edges {
                None => BmModel::vbm(self.n_vars),
                Some(e) => BmModel::vbm_with_edges(self.n_vars, &to_zero_based(e)?),
            },
            BmKind::Rbm => {
                if self.edges.is_some() {
                    return Err(Error::InvalidConfig(
                        "rbm has no visible-visible edges".into(),
                    ));
                }
                BmModel::rbm(self.n_vars, self.n_hidden)
            }
            BmKind::Vrbm => match &self.edges {
                None => BmModel::vrbm(self.n_vars, self.n_hidden),
                Some(e) => BmModel::vrbm_with_edges(self.n_vars, self.n_hidden, &to_zero_based(e)?),
            },
            BmKind::General => Err(Error::InvalidConfig(
                "train builds vbm, rbm, or vrbm models".into(),
            )),
        }
    }
}

/// Training result wrapper; the model field round-trips through
/// `load_model`.
#[derive(Debug, Serialize)]
pub struct TrainOutcome {
    pub converged: bool,
    pub epochs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_grad_norm: Option<f64>,
    pub model: BmModel,
}

/// Hamming-evaluation job; `n_gen` defaults to the dataset's row count.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalJob {
    #[serde(default)]
    pub n_gen: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
pub struct EvalOutcome {
    pub d_ham: f64,
    pub n_gen: usize,
    pub seed: u64,
}

#[derive(Deserialize)]
struct ModelWrapper {
    model: BmModel,
}

/// Reads a model from either a bare model JSON or a train-outcome wrapper,
/// and validates it.
pub fn load_model(path: &Path) -> Result<BmModel> {
    let text = std::fs::read_to_string(path)?;
    let model = match serde_json::from_str::<BmModel>(&text) {
        Ok(m) => m,
        Err(_) => serde_json::from_str::<ModelWrapper>(&text)?.model,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_split_config_from_numerics() {
        assert_eq!(exit_code_for(&Error::InvalidConfig("x".into())), 2);
        assert_eq!(
            exit_code_for(&Error::ParseError {
                row: 1,
                col: 1,
                message: "x".into()
            }),
            2
        );
        assert_eq!(
            exit_code_for(&Error::DimensionMismatch { expected: 1, got: 2 }),
            2
        );
        assert_eq!(
            exit_code_for(&Error::NoConvergence {
                residual: 1.0,
                iters: 9
            }),
            3
        );
        assert_eq!(exit_code_for(&Error::Overflow), 3);
        assert_eq!(exit_code_for(&Error::SingularBlock { pivot: 0.0 }), 3);
    }

    #[test]
    fn select_job_defaults_fill_in() {
        let job: SelectJob = serde_json::from_str(r#"{"method": "cif_htest"}"#).unwrap();
        assert_eq!(job.alpha, 0.05);
        assert_eq!(job.smoothing, 0.5);
        assert_eq!(job.k, 5);
        assert!(job.grid.is_empty() && job.out.is_none());
        assert!(serde_json::from_str::<SelectJob>(r#"{"method": "cif_htest", "x": 1}"#).is_err());
    }

    #[test]
    fn train_job_builds_the_requested_shapes() {
        let job: TrainJob =
            serde_json::from_str(r#"{"kind": "vbm", "n_vars": 4, "edges": [[1, 2]]}"#).unwrap();
        let model = job.build_model().unwrap();
        assert_eq!((model.n_x(), model.n_h()), (4, 0));
        assert!(model.mask().u[1]);
        assert!(!model.mask().u[2 * 4 + 3]);

        let rbm: TrainJob =
            serde_json::from_str(r#"{"kind": "rbm", "n_vars": 3, "n_hidden": 2}"#).unwrap();
        assert_eq!(rbm.build_model().unwrap().n_h(), 2);
        let bad: TrainJob = serde_json::from_str(
            r#"{"kind": "rbm", "n_vars": 3, "n_hidden": 2, "edges": [[1, 2]]}"#,
        )
        .unwrap();
        assert!(bad.build_model().is_err());
        let general: TrainJob =
            serde_json::from_str(r#"{"kind": "general", "n_vars": 3}"#).unwrap();
        assert!(general.build_model().is_err());
    }
}
