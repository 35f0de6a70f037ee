//! Seeded experiment runner: random targets, density-estimation protocols
//! for visible and hidden models, Hamming goodness-of-fit, and result files.
//!
//! Every runner is a pure function of its config: per-cell RNG streams are
//! derived from (seed, sample size, replicate), so re-running a config gives
//! byte-identical records regardless of which cells ran before.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::boltzmann::{train, BmModel, TrainConfig, TrainData};
use crate::cif::{simulate_table1, PerturbationConfig};
use crate::coords::JointTable;
use crate::error::{Error, Result};
use crate::fisher::kl;
use crate::samples::{sample_rows, BinaryMatrix};
use crate::selection::{
    cif_htest, cif_rank, cv_select, masked_model, model_complexity_ratio, CvConfig, EdgeSet,
    HtestConfig, SelectMethod,
};
use crate::stream::rng_stream;

/// Largest n the random-target generator will enumerate.
pub const TARGET_CAP: usize = 12;

/// Experiment family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    FidTable,
    VbmDensity,
    VrbmDensity,
    RealData,
}

impl ExperimentKind {
    pub fn tag(self) -> &'static str {
        match self {
            ExperimentKind::FidTable => "fid_table",
            ExperimentKind::VbmDensity => "vbm_density",
            ExperimentKind::VrbmDensity => "vrbm_density",
            ExperimentKind::RealData => "real_data",
        }
    }
}

/// Estimator run inside a density or real-data experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// All visible-visible connections enabled.
    Full,
    /// Cross-validated budget over uniformly drawn edge subsets.
    RandCv,
    /// Cross-validated budget over the confidence ranking.
    CifCv,
    /// Per-edge hypothesis test at a fixed level.
    CifHtest,
    /// Bipartite model without visible-visible connections.
    RbmBaseline,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::RandCv => "rand_cv",
            Method::CifCv => "cif_cv",
            Method::CifHtest => "cif_htest",
            Method::RbmBaseline => "rbm_baseline",
        }
    }
}

/// Declarative experiment description; the JSON config mirrors these fields.
///
/// `sample_sizes` and `methods` drive the density and real-data protocols
/// and may be omitted for the FID table. For real data, each sample size
/// takes a prefix of the shuffled train split.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n_vars: usize,
    #[serde(default)]
    pub n_hidden: usize,
    #[serde(default)]
    pub sample_sizes: Vec<usize>,
    pub replicates: usize,
    #[serde(default)]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub train_cfg: TrainConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be >= 1".into()));
        }
        self.train_cfg.validate()?;
        if self.experiment == ExperimentKind::FidTable {
            return Ok(());
        }
        if self.sample_sizes.is_empty() {
            return Err(Error::InvalidConfig("sample_sizes must be non-empty".into()));
        }
        if self.sample_sizes.contains(&0) {
            return Err(Error::InvalidConfig("sample sizes must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("methods must be non-empty".into()));
        }
        let hidden = self.experiment != ExperimentKind::VbmDensity && self.n_hidden > 0;
        if self.methods.contains(&Method::RbmBaseline) && !hidden {
            return Err(Error::InvalidConfig(
                "rbm_baseline needs hidden units".into(),
            ));
        }
        Ok(())
    }

    /// Canonical records file inside the output directory.
    pub fn records_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.csv", self.experiment.tag()))
    }
}

pub const METRIC_KL_TO_TARGET: &str = "kl_to_target";
pub const METRIC_KL_TO_SAMPLE: &str = "kl_to_sample";
pub const METRIC_D_HAM: &str = "d_ham";
pub const METRIC_FID_RATIO: &str = "fid_ratio";
pub const METRIC_COMPLEXITY_RATIO: &str = "complexity_ratio";

/// One output row. `n_samples` is the dataset size for density and real-data
/// runs and the variable count for FID-table rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub seed: u64,
    pub method: String,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub replicate: usize,
    pub metric: String,
    pub value: f64,
}

/// Draws a table from the symmetric Dirichlet(1/2) over the 2^n cells, the
/// Jeffreys prior on the simplex. Zero-mass draws are floored at EPS_P.
pub fn gen_jeffreys_target(n: usize, rng: &mut impl Rng) -> Result<JointTable> {
    if n == 0 || n > TARGET_CAP {
        return Err(Error::SizeCap { n, cap: TARGET_CAP });
    }
    let gamma = Gamma::new(0.5, 1.0).expect("positive shape and scale");
    let weights: Vec<f64> = (0..1usize << n).map(|_| gamma.sample(rng)).collect();
    JointTable::from_empirical(n, &weights)
}

/// Runs the experiment named by the config; real-data runs take the ingested
/// matrix, the synthetic ones refuse it.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data: Option<&BinaryMatrix>,
) -> Result<Vec<RunRecord>> {
    if cfg.experiment != ExperimentKind::RealData && data.is_some() {
        return Err(Error::InvalidConfig(format!(
            "{} runs on synthetic data; drop the data matrix",
            cfg.experiment.tag()
        )));
    }
    match cfg.experiment {
        ExperimentKind::FidTable => run_fid_table(cfg),
        ExperimentKind::VbmDensity => run_vbm_density(cfg),
        ExperimentKind::VrbmDensity => run_vrbm_density(cfg),
        ExperimentKind::RealData => {
            let data = data.ok_or_else(|| {
                Error::InvalidConfig("real_data needs an input matrix".into())
            })?;
            run_real_data(cfg, data)
        }
    }
}

/// FID-preservation table: parameter and FID ratios of the order-2 tailored
/// reduction for every variable count from 3 to `n_vars`. The parameter
/// ratio is combinatorial and lands in the complexity column.
pub fn run_fid_table(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if !(3..=7).contains(&cfg.n_vars) {
        return Err(Error::InvalidConfig(format!(
            "fid table needs 3 <= n_vars <= 7, got {}",
            cfg.n_vars
        )));
    }
    let pcfg = PerturbationConfig {
        seed: cfg.seed,
        ..PerturbationConfig::default()
    };
    let mut out = Vec::new();
    for n in 3..=cfg.n_vars {
        for row in simulate_table1(&pcfg, n, cfg.replicates)? {
            let mut push = |metric: &str, value: f64| {
                out.push(RunRecord {
                    experiment: cfg.experiment.tag().into(),
                    seed: cfg.seed,
                    method: "tailored".into(),
                    n_samples: row.n,
                    replicate: row.replicate,
                    metric: metric.into(),
                    value,
                });
            };
            push(METRIC_FID_RATIO, row.fid_ratio);
            push(METRIC_COMPLEXITY_RATIO, row.param_ratio);
        }
    }
    Ok(out)
}

/// Fits one estimator: edge selection on the sample, then training the
/// masked model on the full sample. Sub-seeds for cross validation and
/// training are drawn from the cell stream in a fixed order.
fn fit_with_method(
    method: Method,
    template: &BmModel,
    data: &BinaryMatrix,
    train_cfg: &TrainConfig,
    rng: &mut impl Rng,
) -> Result<(BmModel, EdgeSet)> {
    let n = template.n_x();
    let set = match method {
        Method::Full => EdgeSet::complete(n),
        Method::RbmBaseline => EdgeSet::empty(n),
        Method::CifHtest => cif_htest(data, &HtestConfig::default())?,
        Method::RandCv | Method::CifCv => {
            let select = if method == Method::RandCv {
                SelectMethod::Rand
            } else {
                SelectMethod::Cif
            };
            let cv = CvConfig {
                seed: rng.gen(),
                ..CvConfig::default()
            };
            cv_select(data, template, select, &cv, train_cfg)?.0
        }
    };
    let init = if method == Method::RbmBaseline {
        BmModel::rbm(template.n_x(), template.n_h())?
    } else {
        masked_model(template, &set)?
    };
    let mut tcfg = train_cfg.clone();
    tcfg.seed = rng.gen();
    let (fit, _) = train(&init, TrainData::Samples(data), &tcfg)?;
    Ok((fit, set))
}

/// Shared density protocol: per (N, replicate) cell, draw a fresh Jeffreys
/// target, sample N rows, fit every configured method, and score each fit
/// against the target, the sample, and the confidence ranking.
fn density_records(cfg: &ExperimentConfig, template: &BmModel) -> Result<Vec<RunRecord>> {
    let n = cfg.n_vars;
    let mut out = Vec::new();
    for &n_samples in &cfg.sample_sizes {
        for rep in 0..cfg.replicates {
            let mut rng = rng_stream(cfg.seed, &[n_samples as u64, rep as u64]);
            let target = gen_jeffreys_target(n, &mut rng)?;
            let data = sample_rows(&target, n_samples, &mut rng);
            let empirical = data.empirical_table()?;
            let ranked = cif_rank(&data, &EdgeSet::complete(n))?;
            for &method in &cfg.methods {
                let (model, set) =
                    fit_with_method(method, template, &data, &cfg.train_cfg, &mut rng)?;
                let marginal = model.marginal_visible()?;
                let mut push = |metric: &str, value: f64| {
                    out.push(RunRecord {
                        experiment: cfg.experiment.tag().into(),
                        seed: cfg.seed,
                        method: method.tag().into(),
                        n_samples,
                        replicate: rep,
                        metric: metric.into(),
                        value,
                    });
                };
                push(METRIC_KL_TO_TARGET, kl(&target, &marginal));
                push(METRIC_KL_TO_SAMPLE, kl(&empirical, &marginal));
                push(METRIC_COMPLEXITY_RATIO, model_complexity_ratio(&set, &ranked));
            }
        }
    }
    Ok(out)
}

/// Visible-model density estimation over random targets.
pub fn run_vbm_density(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if cfg.experiment != ExperimentKind::VbmDensity {
        return Err(Error::InvalidConfig(format!(
            "config names experiment {}, not vbm_density",
            cfg.experiment.tag()
        )));
    }
    if !(2..=TARGET_CAP).contains(&cfg.n_vars) {
        return Err(Error::SizeCap {
            n: cfg.n_vars,
            cap: TARGET_CAP,
        });
    }
    density_records(cfg, &BmModel::vbm(cfg.n_vars)?)
}

/// Hidden-model density estimation: same protocol with a bipartite baseline
/// and visible-visible variants; divergences are taken on the visible
/// marginal.
pub fn run_vrbm_density(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if cfg.experiment != ExperimentKind::VrbmDensity {
        return Err(Error::InvalidConfig(format!(
            "config names experiment {}, not vrbm_density",
            cfg.experiment.tag()
        )));
    }
    if !(2..=TARGET_CAP).contains(&cfg.n_vars) {
        return Err(Error::SizeCap {
            n: cfg.n_vars,
            cap: TARGET_CAP,
        });
    }
    if cfg.n_hidden == 0 {
        return Err(Error::InvalidConfig(
            "vrbm_density needs n_hidden >= 1".into(),
        ));
    }
    density_records(cfg, &BmModel::vrbm(cfg.n_vars, cfg.n_hidden)?)
}

/// Real-dataset protocol: per (N, replicate), an 80/20 seeded split, training
/// on the first N shuffled train rows, and the mean minimum Hamming distance
/// from test rows to model samples. Divergence metrics need 2^n enumeration
/// and are deliberately absent.
pub fn run_real_data(cfg: &ExperimentConfig, data: &BinaryMatrix) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if cfg.experiment != ExperimentKind::RealData {
        return Err(Error::InvalidConfig(format!(
            "config names experiment {}, not real_data",
            cfg.experiment.tag()
        )));
    }
    if data.n_cols() != cfg.n_vars {
        return Err(Error::DimensionMismatch {
            expected: cfg.n_vars,
            got: data.n_cols(),
        });
    }
    if data.n_rows() < 5 {
        return Err(Error::InsufficientSamples {
            need: 5,
            got: data.n_rows(),
        });
    }
    let template = if cfg.n_hidden == 0 {
        BmModel::vbm(cfg.n_vars)?
    } else {
        BmModel::vrbm(cfg.n_vars, cfg.n_hidden)?
    };
    let mut out = Vec::new();
    for &n_samples in &cfg.sample_sizes {
        for rep in 0..cfg.replicates {
            let mut rng = rng_stream(cfg.seed, &[n_samples as u64, rep as u64]);
            let (train_split, test_split) = split_train_test(data, &mut rng);
            let used = if n_samples < train_split.n_rows() {
                let head: Vec<usize> = (0..n_samples).collect();
                train_split.select_rows(&head)
            } else {
                train_split.clone()
            };
            let ranked = cif_rank(&used, &EdgeSet::complete(cfg.n_vars))?;
            for &method in &cfg.methods {
                let (model, set) =
                    fit_with_method(method, &template, &used, &cfg.train_cfg, &mut rng)?;
                let d_ham = hamming_eval(&test_split, &model, test_split.n_rows(), &mut rng)?;
                let mut push = |metric: &str, value: f64| {
                    out.push(RunRecord {
                        experiment: cfg.experiment.tag().into(),
                        seed: cfg.seed,
                        method: method.tag().into(),
                        n_samples,
                        replicate: rep,
                        metric: metric.into(),
                        value,
                    });
                };
                push(METRIC_D_HAM, d_ham);
                push(METRIC_COMPLEXITY_RATIO, model_complexity_ratio(&set, &ranked));
            }
        }
    }
    Ok(out)
}

/// Seeded 80/20 row split: shuffled order, first four fifths train.
pub fn split_train_test(data: &BinaryMatrix, rng: &mut impl Rng) -> (BinaryMatrix, BinaryMatrix) {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..data.n_rows()).collect();
    order.shuffle(rng);
    let cut = data.n_rows() * 4 / 5;
    (
        data.select_rows(&order[..cut]),
        data.select_rows(&order[cut..]),
    )
}

pub const GIBBS_BURN_IN: usize = 1000;
pub const GIBBS_THIN: usize = 10;

/// Draws visible rows from the model along one Gibbs chain: burn-in sweeps
/// from the all-zeros state, then one row every `GIBBS_THIN` sweeps.
pub fn gibbs_sample_rows(model: &BmModel, n_rows: usize, rng: &mut impl Rng) -> BinaryMatrix {
    use crate::boltzmann::gibbs_sweep;
    let n_x = model.n_x();
    let mut out = BinaryMatrix::new(n_x);
    let mut state = 0u128;
    for _ in 0..GIBBS_BURN_IN {
        state = gibbs_sweep(model, state, rng);
    }
    for _ in 0..n_rows {
        for _ in 0..GIBBS_THIN {
            state = gibbs_sweep(model, state, rng);
        }
        let bits: Vec<bool> = (0..n_x).map(|c| (state >> c) & 1 == 1).collect();
        out.push_row_bits(&bits).expect("row width matches the chain");
    }
    out
}

/// Mean over data rows of the minimum Hamming distance to any of `n_gen`
/// model-generated rows. Bounded by the row width.
pub fn hamming_eval(
    data: &BinaryMatrix,
    model: &BmModel,
    n_gen: usize,
    rng: &mut impl Rng,
) -> Result<f64> {
    if data.n_cols() != model.n_x() {
        return Err(Error::DimensionMismatch {
            expected: model.n_x(),
            got: data.n_cols(),
        });
    }
    if data.is_empty() || n_gen == 0 {
        return Err(Error::InsufficientSamples {
            need: 1,
            got: data.n_rows().min(n_gen),
        });
    }
    let generated = gibbs_sample_rows(model, n_gen, rng);
    let mut total = 0.0;
    for r in 0..data.n_rows() {
        let best = (0..generated.n_rows())
            .map(|g| data.hamming(r, &generated, g))
            .min()
            .expect("n_gen >= 1");
        total += best as f64;
    }
    Ok(total / data.n_rows() as f64)
}

fn from_csv(e: csv::Error) -> Error {
    let message = e.to_string();
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        _ => Error::ParseError {
            row: 0,
            col: 0,
            message,
        },
    }
}

/// Reads a strict 0/1 matrix from CSV; `header` skips the first row. Error
/// positions are 1-based file coordinates.
pub fn load_binary_csv(path: &Path, header: bool) -> Result<BinaryMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(from_csv)?;
    let offset = if header { 2 } else { 1 };
    let mut matrix: Option<BinaryMatrix> = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(from_csv)?;
        let row = idx + offset;
        if record.is_empty() || (record.len() == 1 && record[0].is_empty()) {
            return Err(Error::ParseError {
                row,
                col: 1,
                message: "empty row".into(),
            });
        }
        let m = matrix.get_or_insert_with(|| BinaryMatrix::new(record.len()));
        if record.len() != m.n_cols() {
            return Err(Error::ParseError {
                row,
                col: record.len().min(m.n_cols()) + 1,
                message: format!("row has {} fields, expected {}", record.len(), m.n_cols()),
            });
        }
        let mut bits = Vec::with_capacity(record.len());
        for (c, field) in record.iter().enumerate() {
            bits.push(match field {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::ParseError {
                        row,
                        col: c + 1,
                        message: format!("expected 0 or 1, got {other:?}"),
                    })
                }
            });
        }
        m.push_row_bits(&bits)?;
    }
    matrix.ok_or(Error::InsufficientSamples { need: 1, got: 0 })
}

/// Aggregate of one (method, N, metric) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub method: String,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
}

/// Per (method, N, metric) mean and sample standard deviation, in sorted
/// key order.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryCell> {
    let mut groups: BTreeMap<(&str, usize, &str), Vec<f64>> = BTreeMap::new();
    for r in records {
        groups
            .entry((&r.method, r.n_samples, &r.metric))
            .or_default()
            .push(r.value);
    }
    groups
        .into_iter()
        .map(|((method, n_samples, metric), values)| {
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let var = if count > 1 {
                values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count - 1) as f64
            } else {
                0.0
            };
            SummaryCell {
                method: method.into(),
                n_samples,
                metric: metric.into(),
                count,
                mean,
                std: var.sqrt(),
            }
        })
        .collect()
}

/// Summary file written next to a records CSV.
pub fn summary_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("summary.json")
}

/// Writes records as CSV in fixed column order plus the JSON summary
/// alongside.
pub fn write_records(records: &[RunRecord], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(from_csv)?;
    for r in records {
        writer.serialize(r).map_err(from_csv)?;
    }
    writer.flush()?;
    let summary = serde_json::to_string_pretty(&summarize(records))?;
    std::fs::write(summary_path(path), summary + "\n")?;
    Ok(())
}

/// Reads back a records CSV written by `write_records`.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(from_csv)?;
    let mut out = Vec::new();
    for row in reader.deserialize::<RunRecord>() {
        out.push(row.map_err(from_csv)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cif::tailored_param_ratio;
    use crate::coords::total_variation;

    fn density_config(experiment: ExperimentKind) -> ExperimentConfig {
        ExperimentConfig {
            experiment,
            n_vars: 3,
            n_hidden: 0,
            sample_sizes: vec![60],
            replicates: 2,
            methods: vec![Method::Full, Method::CifHtest],
            train_cfg: TrainConfig::default(),
            seed: 11,
            output_dir: PathBuf::from("."),
        }
    }

    #[test]
    fn jeffreys_cell_means_match_the_dirichlet() {
        // Dirichlet(1/2) marginal is Beta(1/2, (2^n - 1)/2): mean 2^-n,
        // variance for n=3 is 0.5*3.5 / (16*5).
        let n = 3;
        let draws = 10_000;
        let mut rng = rng_stream(5, &[]);
        let mut sums = vec![0.0f64; 1 << n];
        for _ in 0..draws {
            let t = gen_jeffreys_target(n, &mut rng).unwrap();
            for (s, &p) in sums.iter_mut().zip(t.probs()) {
                *s += p;
            }
        }
        let se = (0.5 * 3.5 / (16.0 * 5.0) / draws as f64).sqrt();
        for &s in &sums {
            let mean = s / draws as f64;
            assert!((mean - 0.125).abs() < 3.0 * se, "cell mean {mean}");
        }
    }

    #[test]
    fn jeffreys_draws_are_positive_and_seeded() {
        let t = gen_jeffreys_target(6, &mut rng_stream(1, &[])).unwrap();
        assert!(t.probs().iter().all(|&p| p > 0.0));
        let again = gen_jeffreys_target(6, &mut rng_stream(1, &[])).unwrap();
        assert_eq!(t, again);
        assert!(matches!(
            gen_jeffreys_target(13, &mut rng_stream(1, &[])),
            Err(Error::SizeCap { n: 13, cap: 12 })
        ));
    }

    #[test]
    fn sampled_rows_concentrate_at_spec_scale() {
        let mut rng = rng_stream(2, &[]);
        let t = gen_jeffreys_target(4, &mut rng).unwrap();
        let m = sample_rows(&t, 100_000, &mut rng);
        let emp = m.empirical_table().unwrap();
        assert!(total_variation(&emp, &t) < 0.05);
    }

    #[test]
    fn gibbs_rows_and_hamming_agree_on_shared_seed() {
        let mut model = BmModel::vbm(4).unwrap();
        model.set_b(0, 0.4);
        model.set_u(1, 2, -0.8).unwrap();
        let data = gibbs_sample_rows(&model, 30, &mut rng_stream(9, &[]));
        let d = hamming_eval(&data, &model, 30, &mut rng_stream(9, &[])).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn point_mass_model_vs_complement_data_scores_full_width() {
        let mut model = BmModel::vbm(5).unwrap();
        for i in 0..5 {
            model.set_b(i, 20.0);
        }
        let mut data = BinaryMatrix::new(5);
        data.push_row_bits(&[false; 5]).unwrap();
        let d = hamming_eval(&data, &model, 20, &mut rng_stream(3, &[])).unwrap();
        assert_eq!(d, 5.0);
    }

    #[test]
    fn hamming_rejects_mismatched_width() {
        let model = BmModel::vbm(4).unwrap();
        let mut data = BinaryMatrix::new(3);
        data.push_row_bits(&[true, false, true]).unwrap();
        assert!(matches!(
            hamming_eval(&data, &model, 5, &mut rng_stream(0, &[])),
            Err(Error::DimensionMismatch { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn eighty_twenty_split_partitions_the_rows() {
        let mut data = BinaryMatrix::new(3);
        for s in 0..10u32 {
            data.push_mask(s % 8);
        }
        let (tr, te) = split_train_test(&data, &mut rng_stream(4, &[]));
        assert_eq!((tr.n_rows(), te.n_rows()), (8, 2));
        let mut counts = [0usize; 8];
        for r in 0..tr.n_rows() {
            counts[tr.row_mask(r) as usize] += 1;
        }
        for r in 0..te.n_rows() {
            counts[te.row_mask(r) as usize] += 1;
        }
        assert_eq!(counts, [2, 2, 1, 1, 1, 1, 1, 1]);
        let (tr2, _) = split_train_test(&data, &mut rng_stream(4, &[]));
        assert_eq!(tr, tr2);
    }

    #[test]
    fn binary_csv_round_trips_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let bare = dir.path().join("bare.csv");
        std::fs::write(&bare, "0,1,1\n1,0,0\n").unwrap();
        let m = load_binary_csv(&bare, false).unwrap();
        assert_eq!((m.n_rows(), m.n_cols()), (2, 3));
        assert_eq!(m.row_mask(0), 0b110);
        assert_eq!(m.row_mask(1), 0b001);

        let headed = dir.path().join("headed.csv");
        std::fs::write(&headed, "a,b,c\n0,1,1\n1,0,0\n").unwrap();
        assert_eq!(load_binary_csv(&headed, true).unwrap(), m);
    }

    #[test]
    fn binary_csv_reports_bad_cells() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.csv");
        std::fs::write(&bad, "0,1\n0,2\n").unwrap();
        assert!(matches!(
            load_binary_csv(&bad, false),
            Err(Error::ParseError { row: 2, col: 2, .. })
        ));

        let ragged = dir.path().join("ragged.csv");
        std::fs::write(&ragged, "0,1\n1\n").unwrap();
        assert!(matches!(
            load_binary_csv(&ragged, false),
            Err(Error::ParseError { row: 2, col: 2, .. })
        ));

        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, "").unwrap();
        assert!(matches!(
            load_binary_csv(&empty, false),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn records_csv_and_summary_round_trip() {
        let rec = |value: f64| RunRecord {
            experiment: "vbm_density".into(),
            seed: 7,
            method: "full".into(),
            n_samples: 100,
            replicate: 0,
            metric: METRIC_KL_TO_TARGET.into(),
            value,
        };
        let records = vec![rec(0.25), rec(0.75)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.csv");
        write_records(&records, &path).unwrap();
        assert_eq!(read_records(&path).unwrap(), records);

        let raw = std::fs::read_to_string(&path).unwrap();
        assert!(raw.starts_with("experiment,seed,method,N,replicate,metric,value\n"));

        let cells: Vec<SummaryCell> =
            serde_json::from_str(&std::fs::read_to_string(summary_path(&path)).unwrap()).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].count, 2);
        assert!((cells[0].mean - 0.5).abs() < 1e-15);
        let expect_std = (2.0 * 0.25f64 * 0.25 / 1.0).sqrt();
        assert!((cells[0].std - expect_std).abs() < 1e-15);
    }

    #[test]
    fn fid_table_rows_carry_exact_param_ratios() {
        let cfg = ExperimentConfig {
            experiment: ExperimentKind::FidTable,
            n_vars: 4,
            n_hidden: 0,
            sample_sizes: vec![],
            replicates: 3,
            methods: vec![],
            train_cfg: TrainConfig::default(),
            seed: 20,
            output_dir: PathBuf::from("."),
        };
        let records = run_fid_table(&cfg).unwrap();
        assert_eq!(records.len(), 2 * 3 * 2);
        for r in &records {
            assert_eq!(r.method, "tailored");
            match r.metric.as_str() {
                METRIC_COMPLEXITY_RATIO => {
                    assert_eq!(r.value, tailored_param_ratio(r.n_samples, 2));
                }
                METRIC_FID_RATIO => assert!(r.value > 0.5 && r.value <= 1.0),
                other => panic!("unexpected metric {other}"),
            }
        }
        assert_eq!(run_fid_table(&cfg).unwrap(), records);
    }

    #[test]
    fn vbm_density_emits_three_metrics_per_cell_and_is_deterministic() {
        let cfg = density_config(ExperimentKind::VbmDensity);
        let records = run_vbm_density(&cfg).unwrap();
        assert_eq!(records.len(), 2 * 2 * 3);
        for r in &records {
            assert!(r.value.is_finite());
            if r.metric != METRIC_COMPLEXITY_RATIO {
                assert!(r.value >= 0.0, "{r:?}");
            }
            if r.method == "full" && r.metric == METRIC_COMPLEXITY_RATIO {
                assert_eq!(r.value, 1.0);
            }
        }
        assert_eq!(run_vbm_density(&cfg).unwrap(), records);
        assert_eq!(run_experiment(&cfg, None).unwrap(), records);
    }

    #[test]
    fn full_budget_cv_coincides_with_the_full_fit() {
        let mut cfg = density_config(ExperimentKind::VbmDensity);
        cfg.sample_sizes = vec![400];
        cfg.replicates = 1;
        cfg.methods = vec![Method::Full, Method::CifCv];
        cfg.seed = 3;
        let records = run_vbm_density(&cfg).unwrap();
        let get = |method: &str, metric: &str| {
            records
                .iter()
                .find(|r| r.method == method && r.metric == metric)
                .unwrap()
                .value
        };
        // The pinned seed makes cross validation keep the complete set.
        assert_eq!(get("cif_cv", METRIC_COMPLEXITY_RATIO), 1.0);
        assert_eq!(
            get("cif_cv", METRIC_KL_TO_TARGET),
            get("full", METRIC_KL_TO_TARGET)
        );
        assert_eq!(
            get("cif_cv", METRIC_KL_TO_SAMPLE),
            get("full", METRIC_KL_TO_SAMPLE)
        );
    }

    #[test]
    fn edgeless_vrbm_matches_the_rbm_baseline() {
        let mut rng = rng_stream(17, &[]);
        let target = gen_jeffreys_target(4, &mut rng).unwrap();
        let data = sample_rows(&target, 300, &mut rng);
        let cfg = TrainConfig {
            max_epochs: 400,
            ..TrainConfig::default()
        };
        let rbm = BmModel::rbm(4, 2).unwrap();
        let vrbm0 = BmModel::vrbm_with_edges(4, 2, &[]).unwrap();
        let (fit_rbm, _) = train(&rbm, TrainData::Samples(&data), &cfg).unwrap();
        let (fit_vrbm, _) = train(&vrbm0, TrainData::Samples(&data), &cfg).unwrap();
        let emp = data.empirical_table().unwrap();
        let kl_rbm = kl(&emp, &fit_rbm.marginal_visible().unwrap());
        let kl_vrbm = kl(&emp, &fit_vrbm.marginal_visible().unwrap());
        assert!((kl_rbm - kl_vrbm).abs() < 1e-9, "{kl_rbm} vs {kl_vrbm}");
    }

    #[test]
    fn vrbm_density_scores_the_baseline_and_variants() {
        let cfg = ExperimentConfig {
            experiment: ExperimentKind::VrbmDensity,
            n_vars: 3,
            n_hidden: 2,
            sample_sizes: vec![80],
            replicates: 1,
            methods: vec![Method::RbmBaseline, Method::CifHtest],
            train_cfg: TrainConfig {
                max_epochs: 300,
                ..TrainConfig::default()
            },
            seed: 6,
            output_dir: PathBuf::from("."),
        };
        let records = run_vrbm_density(&cfg).unwrap();
        assert_eq!(records.len(), 2 * 3);
        let baseline_complexity = records
            .iter()
            .find(|r| r.method == "rbm_baseline" && r.metric == METRIC_COMPLEXITY_RATIO)
            .unwrap();
        assert_eq!(baseline_complexity.value, 0.0);
        assert_eq!(run_vrbm_density(&cfg).unwrap(), records);
    }

    #[test]
    fn real_data_records_hamming_per_cell() {
        let mut rng = rng_stream(31, &[]);
        let target = gen_jeffreys_target(4, &mut rng).unwrap();
        let data = sample_rows(&target, 40, &mut rng);
        let cfg = ExperimentConfig {
            experiment: ExperimentKind::RealData,
            n_vars: 4,
            n_hidden: 0,
            sample_sizes: vec![16],
            replicates: 2,
            methods: vec![Method::Full],
            train_cfg: TrainConfig::default(),
            seed: 8,
            output_dir: PathBuf::from("."),
        };
        let records = run_real_data(&cfg, &data).unwrap();
        assert_eq!(records.len(), 2 * 2);
        for r in &records {
            assert_eq!(r.n_samples, 16);
            if r.metric == METRIC_D_HAM {
                assert!(r.value >= 0.0 && r.value <= 4.0);
            }
        }
        assert_eq!(run_experiment(&cfg, Some(&data)).unwrap(), records);
        assert!(matches!(
            run_experiment(&cfg, None),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn config_json_round_trips_and_validates() {
        let json = r#"{
            "experiment": "vbm_density",
            "n_vars": 10,
            "sample_sizes": [100, 300],
            "replicates": 20,
            "methods": ["full", "rand_cv", "cif_cv", "cif_htest"],
            "train_cfg": {
                "method": "exact_ml",
                "learning_rate": 0.01,
                "max_epochs": 2000,
                "tol": 1e-7,
                "batch_size": null,
                "seed": 0
            },
            "seed": 42,
            "output_dir": "out"
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.n_hidden, 0);
        assert_eq!(cfg.records_path(), PathBuf::from("out/vbm_density.csv"));
        let back: ExperimentConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back.methods, cfg.methods);

        assert!(serde_json::from_str::<ExperimentConfig>(
            &json.replace("\"seed\": 42", "\"seed\": 42, \"typo\": 1")
        )
        .is_err());

        let mut bad = cfg.clone();
        bad.replicates = 0;
        assert!(bad.validate().is_err());
        let mut bad = cfg.clone();
        bad.methods.push(Method::RbmBaseline);
        assert!(bad.validate().is_err());
        let mut bad = cfg;
        bad.sample_sizes.clear();
        assert!(bad.validate().is_err());
    }
}
