//! Command-line experiment harness.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Parser, ValueEnum};

use fewbit::data::{load_csv_heart, load_idx_files, synthetic, Dataset};
use fewbit::ensemble::serialize_ensemble;
use fewbit::experiment::{emit_report, run_ensemble_experiment, run_pair_experiment, DataSource, ExperimentConfig, ReportFormat};
use fewbit::model::{make_encoding, Architecture, ClassId};
use fewbit::solver::ProcessBackend;
use fewbit::train::{StageBudget, TrainOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DatasetKind {
    Mnist,
    Fashion,
    Heart,
    Synthetic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BackendProfile {
    /// COIN-OR CBC command-line solver
    Cbc,
}

/// Train few-bit integer networks with MILP and evaluate voting ensembles.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[arg(long, value_enum, default_value = "mnist")]
    dataset: DatasetKind,
    /// Directory with IDX files, or the Heart Disease CSV (file or directory
    /// containing heart.csv)
    #[arg(long, default_value = "data/mnist")]
    data_dir: PathBuf,
    /// Classes of the ensemble [default: every class of the dataset]
    #[arg(long, value_delimiter = ',', conflicts_with = "pair")]
    classes: Option<Vec<ClassId>>,
    /// Two classes separated by a single network
    #[arg(long, value_delimiter = ',', num_args = 1, conflicts_with = "m")]
    pair: Option<Vec<ClassId>>,
    /// Classes per member network
    #[arg(long, default_value_t = 2)]
    m: usize,
    /// Layer sizes n0,n1,...,nL [default: inputs,4,4,output bits]
    #[arg(long, value_delimiter = ',')]
    arch: Option<Vec<usize>>,
    /// Weight bound P
    #[arg(long, default_value_t = 1)]
    p_bound: i32,
    /// Training samples per class
    #[arg(long, default_value_t = 10)]
    images_per_class: usize,
    /// Test samples per class
    #[arg(long, default_value_t = 100)]
    test_per_class: usize,
    /// Stage time limits in seconds: SM,MM,MW
    #[arg(long, value_delimiter = ',', num_args = 1, default_value = "60,60,20")]
    budget: Vec<f64>,
    /// Stage plan: sm, sm+mw, sm+mm or sm+mm+mw
    #[arg(long, default_value = "sm+mm+mw")]
    stages: String,
    /// Seeds; each gives an independent sample and run
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Strict-inequality offset [default: 0.1 for integer features, 1e-6 otherwise]
    #[arg(long)]
    epsilon: Option<f64>,
    /// Block-mean image downsampling factor
    #[arg(long, default_value_t = 1)]
    downsample: usize,
    #[arg(long, value_enum, default_value = "cbc")]
    backend: BackendProfile,
    /// Run one solve at a time (for license-limited solvers)
    #[arg(long)]
    serial_solves: bool,
    /// Member networks trained concurrently [default: hardware threads]
    #[arg(long)]
    parallel: Option<usize>,
    /// Moves of the warm-start local search
    #[arg(long, default_value_t = TrainOptions::DEFAULT_SEARCH_MOVES)]
    search_moves: usize,
    /// Test fraction of the Heart Disease split
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

fn load_source(cli: &Cli) -> anyhow::Result<DataSource> {
    let source = match cli.dataset {
        DatasetKind::Mnist | DatasetKind::Fashion => {
            let name = if cli.dataset == DatasetKind::Mnist { "mnist" } else { "fashion-mnist" };
            let train = load_idx_files(&cli.data_dir, "train", name)
                .with_context(|| format!("loading {name} from {}", cli.data_dir.display()))?;
            let test = if cli.data_dir.join("t10k-images-idx3-ubyte").exists() {
                Some(load_idx_files(&cli.data_dir, "t10k", &format!("{name}-test"))?)
            } else {
                log::info!("no t10k files; test samples come from the unused training images");
                None
            };
            DataSource { train, test }
        }
        DatasetKind::Heart => {
            let path = if cli.data_dir.is_dir() { cli.data_dir.join("heart.csv") } else { cli.data_dir.clone() };
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let split = load_csv_heart(&text, cli.test_fraction, 0)?;
            if split.dropped_rows > 0 {
                log::warn!("dropped {} rows with missing values", split.dropped_rows);
            }
            DataSource {
                train: split.train,
                test: Some(split.test),
            }
        }
        DatasetKind::Synthetic => {
            let classes = cli
                .pair
                .as_ref()
                .or(cli.classes.as_ref())
                .map_or(4, |c| c.iter().copied().max().unwrap_or(0) as usize + 1);
            let features = cli.arch.as_ref().map_or(16, |a| a[0]);
            let per_class = cli.images_per_class + cli.test_per_class;
            let train = synthetic(classes.max(2), per_class, features, 3, 0.1, 0)?;
            DataSource { train, test: None }
        }
    };
    if cli.downsample > 1 {
        let shrink = |d: &Dataset| d.downsampled(cli.downsample);
        return Ok(DataSource {
            train: shrink(&source.train)?,
            test: source.test.as_ref().map(shrink).transpose()?,
        });
    }
    Ok(source)
}

fn write_out(dir: &Path, name: &str, content: &str) -> anyhow::Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let source = load_source(&cli)?;
    let (classes, m) = match (&cli.pair, &cli.classes) {
        (Some(pair), _) => {
            if pair.len() != 2 {
                bail!("--pair takes exactly two classes");
            }
            (pair.clone(), 2)
        }
        (None, Some(classes)) => (classes.clone(), cli.m),
        (None, None) => (source.train.classes(), cli.m),
    };
    let available = source.train.classes();
    if let Some(c) = classes.iter().find(|c| !available.contains(c)) {
        bail!("class {c} does not occur in {}", source.train.name);
    }
    let inputs = source.train.feature_count();
    let layers = match &cli.arch {
        Some(a) => a.clone(),
        None => {
            let bits = make_encoding(&classes[..m.min(classes.len())])?.bit_width();
            vec![inputs, 4, 4, bits]
        }
    };
    if layers[0] != inputs {
        bail!("--arch starts with {} inputs, the data has {inputs} features", layers[0]);
    }
    let arch = Architecture::new(layers, cli.p_bound)?;

    let secs = |i: usize| -> anyhow::Result<Duration> {
        let s = *cli.budget.get(i).context("--budget needs three values: SM,MM,MW")?;
        Duration::try_from_secs_f64(s).with_context(|| format!("invalid time limit {s}"))
    };
    let budget = StageBudget::for_plan(&cli.stages, secs(0)?, secs(1)?, secs(2)?)?;
    let backend = match cli.backend {
        BackendProfile::Cbc => ProcessBackend::cbc()?.serialized(cli.serial_solves),
    };
    let parallel = cli
        .parallel
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let config = ExperimentConfig {
        epsilon: cli.epsilon,
        seeds: cli.seeds.clone(),
        parallel,
        search_moves: cli.search_moves,
        ..ExperimentConfig::new(classes.clone(), m, arch, cli.images_per_class, cli.test_per_class, budget)
    };
    let outcome = if cli.pair.is_some() {
        run_pair_experiment(&backend, &source, (classes[0], classes[1]), &config)?
    } else {
        run_ensemble_experiment(&backend, &source, &config)?
    };

    std::fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let format = match cli.format {
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
    };
    for doc in emit_report(&outcome.report, format) {
        write_out(&cli.out, &doc.name, &doc.content)?;
    }
    for (seed, ens) in &outcome.ensembles {
        write_out(&cli.out, &format!("ensemble-seed{seed}.json"), &serialize_ensemble(ens)?)?;
    }
    if let Some(acc) = outcome.report.summary_metric("correct_pct") {
        println!(
            "accuracy {:.2}% (min {:.2}, max {:.2}) over {} run(s)",
            acc.mean, acc.min, acc.max, acc.runs
        );
    }
    Ok(outcome.report.partial)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            log::warn!("some member networks failed; the report is partial");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
