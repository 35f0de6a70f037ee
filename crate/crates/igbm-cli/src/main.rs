//! Experiment, selection, training, and evaluation subcommands over JSON
//! configs. Status lines go to stdout; JSON outcomes go to --out or stdout.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use igbm::boltzmann::{train, BmModel, TrainData};
use igbm::harness::{
    hamming_eval, load_binary_csv, run_experiment, write_records, ExperimentConfig,
    ExperimentKind, Method,
};
use igbm::samples::BinaryMatrix;
use igbm::selection::{
    cif_htest_report, cv_select, CvConfig, EdgeSet, HtestConfig, SelectMethod,
};
use igbm::stream::rng_stream;
use igbm::{Error, Result};
use igbm_cli::{
    exit_code_for, load_model, read_json, EvalJob, EvalOutcome, SelectJob, SelectOutcome,
    TrainJob, TrainOutcome,
};

#[derive(Parser)]
#[command(name = "igbm", version, about = "Exact information-geometry experiments for binary Boltzmann machines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the config's output location.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DataInput {
    /// 0/1 CSV dataset, one observation per row.
    #[arg(long)]
    data: PathBuf,
    /// Skip the dataset's first row.
    #[arg(long)]
    header: bool,
}

#[derive(Subcommand)]
enum Command {
    /// FID-preservation table for the order-2 tailored reduction.
    FidTable(Common),
    /// Visible-model density estimation over random targets.
    VbmDensity(Common),
    /// Hidden-model density estimation with a bipartite baseline.
    VrbmDensity(Common),
    /// Edge selection on a dataset.
    Select {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: DataInput,
    },
    /// Trains one model on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: DataInput,
    },
    /// Mean minimum Hamming distance from data rows to model samples.
    EvalHamming {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: DataInput,
        /// Trained model JSON.
        #[arg(long)]
        model: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::FidTable(c) => run_experiment_cmd(&c, ExperimentKind::FidTable),
        Command::VbmDensity(c) => run_experiment_cmd(&c, ExperimentKind::VbmDensity),
        Command::VrbmDensity(c) => run_experiment_cmd(&c, ExperimentKind::VrbmDensity),
        Command::Select { common, input } => run_select(&common, &input),
        Command::Train { common, input } => run_train(&common, &input),
        Command::EvalHamming {
            common,
            input,
            model,
        } => run_eval_hamming(&common, &input, &model),
    }
}

fn run_experiment_cmd(common: &Common, want: ExperimentKind) -> Result<()> {
    let mut cfg: ExperimentConfig = read_json(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if cfg.experiment != want {
        return Err(Error::InvalidConfig(format!(
            "config names experiment {}, expected {}",
            cfg.experiment.tag(),
            want.tag()
        )));
    }
    let records = run_experiment(&cfg, None)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.records_path();
    write_records(&records, &path)?;
    println!("wrote {} records to {}", records.len(), path.display());
    Ok(())
}

fn load_data(input: &DataInput) -> Result<BinaryMatrix> {
    load_binary_csv(&input.data, input.header)
}

fn run_select(common: &Common, input: &DataInput) -> Result<()> {
    let mut job: SelectJob = read_json(&common.config)?;
    if let Some(seed) = common.seed {
        job.seed = seed;
    }
    if let Some(out) = &common.out {
        job.out = Some(out.clone());
    }
    let data = load_data(input)?;
    let n = data.n_cols();
    let outcome = match job.method {
        Method::CifHtest => {
            let cfg = HtestConfig {
                alpha: job.alpha,
                smoothing: job.smoothing,
            };
            let reports = cif_htest_report(&data, &cfg)?;
            let edges = EdgeSet::from_edges(
                n,
                reports.iter().filter(|r| r.selected).map(|r| (r.i, r.j)),
            )?;
            SelectOutcome {
                n_vars: n,
                method: job.method,
                edges,
                reports: Some(reports),
                cv_rows: None,
            }
        }
        Method::RandCv | Method::CifCv => {
            let template = if job.n_hidden == 0 {
                BmModel::vbm(n)?
            } else {
                BmModel::vrbm(n, job.n_hidden)?
            };
            let select = if job.method == Method::RandCv {
                SelectMethod::Rand
            } else {
                SelectMethod::Cif
            };
            let cv = CvConfig {
                k: job.k,
                grid: job.grid.clone(),
                seed: job.seed,
            };
            let (edges, cv_rows) = cv_select(&data, &template, select, &cv, &job.train_cfg)?;
            SelectOutcome {
                n_vars: n,
                method: job.method,
                edges,
                reports: None,
                cv_rows: Some(cv_rows),
            }
        }
        other => {
            return Err(Error::InvalidConfig(format!(
                "select supports rand_cv, cif_cv, and cif_htest, got {}",
                other.tag()
            )))
        }
    };
    emit_json(&outcome, job.out.as_deref())
}

fn run_train(common: &Common, input: &DataInput) -> Result<()> {
    let mut job: TrainJob = read_json(&common.config)?;
    if let Some(seed) = common.seed {
        job.train_cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        job.out = Some(out.clone());
    }
    let data = load_data(input)?;
    if data.n_cols() != job.n_vars {
        return Err(Error::DimensionMismatch {
            expected: job.n_vars,
            got: data.n_cols(),
        });
    }
    let init = job.build_model()?;
    let (model, trace) = train(&init, TrainData::Samples(&data), &job.train_cfg)?;
    let outcome = TrainOutcome {
        converged: trace.converged,
        epochs: trace.rows.len(),
        final_grad_norm: trace.rows.last().map(|r| r.grad_norm),
        model,
    };
    emit_json(&outcome, job.out.as_deref())
}

fn run_eval_hamming(common: &Common, input: &DataInput, model_path: &Path) -> Result<()> {
    let mut job: EvalJob = read_json(&common.config)?;
    if let Some(seed) = common.seed {
        job.seed = seed;
    }
    if let Some(out) = &common.out {
        job.out = Some(out.clone());
    }
    let data = load_data(input)?;
    let model = load_model(model_path)?;
    let n_gen = job.n_gen.unwrap_or_else(|| data.n_rows());
    let mut rng = rng_stream(job.seed, &[]);
    let d_ham = hamming_eval(&data, &model, n_gen, &mut rng)?;
    emit_json(
        &EvalOutcome {
            d_ham,
            n_gen,
            seed: job.seed,
        },
        job.out.as_deref(),
    )
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => {
            if let Some(dir) = path.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir)?;
                }
            }
            std::fs::write(path, text)?;
            println!("wrote {}", path.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
