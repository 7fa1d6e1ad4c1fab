//! Experiment harness: per seed, draw training and test samples, train one
//! network per class subset, evaluate the vote on the test set, and fold
//! everything into an [`ExperimentReport`] that [`emit_report`] renders as
//! JSON or CSV tables.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{build_test_set, sample_per_class, Dataset, ExclusionSet, RawSample};
use crate::ensemble::{build_members, resolve, status, tally, Ensemble, LabelStatus};
use crate::error::{Error, Result};
use crate::milp::Tolerances;
use crate::model::{Architecture, ClassId};
use crate::solver::{Backend, SolveStatus};
use crate::train::{training_accuracy, Stage, StageBudget, TrainOptions};

/// Offset separating the test-set draw from the training draw of a seed.
/// Added to the run seed when drawing the test set, so test draws do not
/// replay the training draws.
pub const TEST_SEED_OFFSET: u64 = 0x7e57_5eed;

/// Training data and, optionally, a separate test pool. Without one, test
/// samples are drawn from the training pool, excluding the training draw.
#[derive(Debug, Clone)]
pub struct DataSource {
    pub train: Dataset,
    pub test: Option<Dataset>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub classes: Vec<ClassId>,
    /// Classes per member network (2 for one-vs-one).
    pub m: usize,
    pub arch: Architecture,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub budget: StageBudget,
    /// `None` picks the default for the training features.
    pub epsilon: Option<f64>,
    pub seeds: Vec<u64>,
    /// Member networks trained concurrently.
    pub parallel: usize,
    pub search_moves: usize,
}

impl ExperimentConfig {
    /// One seed (0), serial training, default ε and search budget.
    pub fn new(
        classes: Vec<ClassId>,
        m: usize,
        arch: Architecture,
        train_per_class: usize,
        test_per_class: usize,
        budget: StageBudget,
    ) -> Self {
        ExperimentConfig {
            classes,
            m,
            arch,
            train_per_class,
            test_per_class,
            budget,
            epsilon: None,
            seeds: vec![0],
            parallel: 1,
            search_moves: TrainOptions::DEFAULT_SEARCH_MOVES,
        }
    }
}

/// Share of one label status among the test samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusShare {
    pub status: String,
    pub count: usize,
    pub share_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRow {
    pub truth: ClassId,
    /// Count per predicted class, in the order of [`ConfusionMatrix::classes`].
    pub predicted: Vec<usize>,
    pub unclassified: usize,
}

impl ConfusionRow {
    pub fn total(&self) -> usize {
        self.predicted.iter().sum::<usize>() + self.unclassified
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<ClassId>,
    pub rows: Vec<ConfusionRow>,
}

/// Voted predictions on a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub test_size: usize,
    pub correct_pct: f64,
    pub wrong_pct: f64,
    pub unclassified_pct: f64,
    /// All seven statuses, in [`LabelStatus::ALL`] order.
    pub statuses: Vec<StatusShare>,
    pub confusion: ConfusionMatrix,
}

impl Evaluation {
    pub fn status_count(&self, status: LabelStatus, m: usize) -> usize {
        let name = status.render(m);
        self.statuses
            .iter()
            .find(|s| s.status == name)
            .map_or(0, |s| s.count)
    }
}

/// Vote every sample of `test` through `ens` and tabulate the outcome.
/// Returns `None` for an empty test set.
pub fn evaluate<'a>(ens: &Ensemble, test: impl IntoIterator<Item = &'a RawSample>) -> Result<Option<Evaluation>> {
    let classes = ens.classes().to_vec();
    let mut statuses: BTreeMap<LabelStatus, usize> = LabelStatus::ALL.iter().map(|&s| (s, 0)).collect();
    let mut rows: Vec<ConfusionRow> = classes
        .iter()
        .map(|&truth| ConfusionRow {
            truth,
            predicted: vec![0; classes.len()],
            unclassified: 0,
        })
        .collect();
    let (mut total, mut correct, mut wrong, mut unclassified) = (0usize, 0usize, 0usize, 0usize);
    for sample in test {
        let row = classes
            .binary_search(&sample.class)
            .map_err(|_| Error::invalid(format!("test class {} is not in the ensemble", sample.class)))?;
        let votes = tally(&sample.features, ens)?;
        let prediction = resolve(&votes);
        *statuses.get_mut(&status(prediction, &votes, sample.class)).expect("all statuses") += 1;
        match prediction {
            Some(p) => {
                let col = classes.binary_search(&p).expect("ensemble class");
                rows[row].predicted[col] += 1;
                if p == sample.class {
                    correct += 1;
                } else {
                    wrong += 1;
                }
            }
            None => {
                rows[row].unclassified += 1;
                unclassified += 1;
            }
        }
        total += 1;
    }
    if total == 0 {
        return Ok(None);
    }
    let pct = |n: usize| 100.0 * n as f64 / total as f64;
    Ok(Some(Evaluation {
        test_size: total,
        correct_pct: pct(correct),
        wrong_pct: pct(wrong),
        unclassified_pct: pct(unclassified),
        statuses: statuses
            .into_iter()
            .map(|(s, count)| StatusShare {
                status: s.render(ens.m()),
                count,
                share_pct: pct(count),
            })
            .collect(),
        confusion: ConfusionMatrix { classes, rows },
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub weight: i32,
    pub count: usize,
}

/// Weight values of all member networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightHistogram {
    pub weight_bound: i32,
    /// One bin per value in `−P..=P`.
    pub bins: Vec<HistogramBin>,
    pub minus_p_pct: f64,
    pub zero_pct: f64,
    pub plus_p_pct: f64,
    /// Weights with `0 < |w| < P`.
    pub others_pct: f64,
}

impl WeightHistogram {
    fn from_counts(weight_bound: i32, counts: &[usize]) -> Self {
        let total: usize = counts.iter().sum();
        let bins: Vec<HistogramBin> = (-weight_bound..=weight_bound)
            .zip(counts)
            .map(|(weight, &count)| HistogramBin { weight, count })
            .collect();
        let pct = |pred: &dyn Fn(i32) -> bool| {
            let n: usize = bins.iter().filter(|b| pred(b.weight)).map(|b| b.count).sum();
            if total == 0 {
                0.0
            } else {
                100.0 * n as f64 / total as f64
            }
        };
        WeightHistogram {
            weight_bound,
            minus_p_pct: pct(&|w| w == -weight_bound),
            zero_pct: pct(&|w| w == 0),
            plus_p_pct: pct(&|w| w == weight_bound),
            others_pct: pct(&|w| w != 0 && w.abs() < weight_bound),
            bins,
        }
    }

    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }
}

/// Runtimes and gaps of one stage across the member networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: String,
    pub nets: usize,
    /// Solves that proved optimality.
    pub optimal: usize,
    pub runtime_mean_s: f64,
    pub runtime_max_s: f64,
    /// Relative MIP gap in percent, over solves that report one.
    pub gap_mean_pct: Option<f64>,
    pub gap_max_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberFailure {
    pub subset: Vec<ClassId>,
    pub error: String,
}

/// Properties of the trained member networks of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkStats {
    pub members: usize,
    pub failures: Vec<MemberFailure>,
    /// Links over all trained members.
    pub total_links: usize,
    /// Nonzero links over all trained members.
    pub active_links: usize,
    pub nonzero_after_sm_pct: Option<f64>,
    pub nonzero_after_mm_pct: Option<f64>,
    pub nonzero_after_mw_pct: Option<f64>,
    /// Training samples confidently classified by Sat-Margin (`|T̂|`).
    pub sm_confident_pct: f64,
    /// Accuracy of the final weights on each member's training set.
    pub train_accuracy_pct: f64,
    pub histogram: WeightHistogram,
    pub stages: Vec<StageStats>,
}

/// One seed of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub epsilon: f64,
    /// Training indices per class into the training pool.
    pub train_indices: BTreeMap<ClassId, Vec<usize>>,
    /// Test indices into the test pool.
    pub test_indices: Vec<usize>,
    /// `None` when the test set is empty.
    pub evaluation: Option<Evaluation>,
    pub network: NetworkStats,
    pub partial: bool,
}

impl RunReport {
    /// Scalar metrics in a fixed order, `None` where not applicable.
    pub fn metrics(&self, m: usize) -> Vec<(String, Option<f64>)> {
        let eval = self.evaluation.as_ref();
        let net = &self.network;
        let mut out = vec![
            ("correct_pct".to_string(), eval.map(|e| e.correct_pct)),
            ("wrong_pct".to_string(), eval.map(|e| e.wrong_pct)),
            ("unclassified_pct".to_string(), eval.map(|e| e.unclassified_pct)),
        ];
        for s in LabelStatus::ALL {
            let name = s.render(m);
            let share = eval.and_then(|e| e.statuses.iter().find(|x| x.status == name).map(|x| x.share_pct));
            out.push((format!("status_{name}_pct"), share));
        }
        out.extend([
            ("sm_confident_pct".to_string(), Some(net.sm_confident_pct)),
            ("train_accuracy_pct".to_string(), Some(net.train_accuracy_pct)),
            ("nonzero_after_sm_pct".to_string(), net.nonzero_after_sm_pct),
            ("nonzero_after_mm_pct".to_string(), net.nonzero_after_mm_pct),
            ("nonzero_after_mw_pct".to_string(), net.nonzero_after_mw_pct),
            ("active_links".to_string(), Some(net.active_links as f64)),
            ("minus_p_pct".to_string(), Some(net.histogram.minus_p_pct)),
            ("zero_pct".to_string(), Some(net.histogram.zero_pct)),
            ("plus_p_pct".to_string(), Some(net.histogram.plus_p_pct)),
            ("others_pct".to_string(), Some(net.histogram.others_pct)),
        ]);
        for st in &net.stages {
            out.push((format!("{}_runtime_mean_s", st.stage), Some(st.runtime_mean_s)));
            out.push((format!("{}_runtime_max_s", st.stage), Some(st.runtime_max_s)));
            out.push((format!("{}_gap_mean_pct", st.stage), st.gap_mean_pct));
            out.push((format!("{}_gap_max_pct", st.stage), st.gap_max_pct));
        }
        out
    }
}

/// Mean and min/max envelope of a metric over the runs that have it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricEnvelope {
    pub metric: String,
    pub runs: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub dataset: String,
    pub dataset_digest: String,
    pub classes: Vec<ClassId>,
    pub m: usize,
    pub layer_sizes: Vec<usize>,
    pub weight_bound: i32,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub stages: String,
    pub budget_sm_s: f64,
    pub budget_mm_s: Option<f64>,
    pub budget_mw_s: Option<f64>,
    pub runs: Vec<RunReport>,
    pub summary: Vec<MetricEnvelope>,
    /// Some member network failed to train in some run.
    pub partial: bool,
}

impl ExperimentReport {
    pub fn summary_metric(&self, name: &str) -> Option<&MetricEnvelope> {
        self.summary.iter().find(|e| e.metric == name)
    }
}

/// Report plus the ensemble trained for each seed.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub ensembles: Vec<(u64, Ensemble)>,
}

/// Two-class experiment: one network separating `pair` per seed.
pub fn run_pair_experiment(
    backend: &dyn Backend,
    source: &DataSource,
    pair: (ClassId, ClassId),
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    if pair.0 == pair.1 {
        return Err(Error::invalid("the two classes of a pair must differ"));
    }
    let config = ExperimentConfig {
        classes: vec![pair.0, pair.1],
        m: 2,
        ..config.clone()
    };
    run_ensemble_experiment(backend, source, &config)
}

/// Full ensemble experiment over every seed of `config`.
pub fn run_ensemble_experiment(
    backend: &dyn Backend,
    source: &DataSource,
    config: &ExperimentConfig,
) -> Result<ExperimentOutcome> {
    let mut classes = config.classes.clone();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::invalid("an experiment needs at least two classes"));
    }
    if config.seeds.is_empty() {
        return Err(Error::invalid("an experiment needs at least one seed"));
    }
    let tolerances = match config.epsilon {
        Some(eps) => Tolerances::new(eps)?,
        None => Tolerances::for_features(source.train.samples.iter().flat_map(|s| s.features.iter())),
    };
    let mut runs = Vec::new();
    let mut ensembles = Vec::new();
    for &seed in &config.seeds {
        log::info!("seed {seed}: training {} classes, m = {}", classes.len(), config.m);
        let (run, ens) = run_seed(backend, source, config, &classes, tolerances, seed)?;
        runs.push(run);
        ensembles.push((seed, ens));
    }
    let summary = summarize(&runs, config.m);
    let partial = runs.iter().any(|r| r.partial);
    let report = ExperimentReport {
        dataset: source.train.name.clone(),
        dataset_digest: source.train.digest.clone(),
        classes,
        m: config.m,
        layer_sizes: config.arch.layer_sizes().to_vec(),
        weight_bound: config.arch.weight_bound(),
        train_per_class: config.train_per_class,
        test_per_class: config.test_per_class,
        stages: config.budget.label(),
        budget_sm_s: config.budget.sat_margin.as_secs_f64(),
        budget_mm_s: config.budget.max_margin.map(|d| d.as_secs_f64()),
        budget_mw_s: config.budget.min_weight.map(|d| d.as_secs_f64()),
        runs,
        summary,
        partial,
    };
    Ok(ExperimentOutcome { report, ensembles })
}

fn run_seed(
    backend: &dyn Backend,
    source: &DataSource,
    config: &ExperimentConfig,
    classes: &[ClassId],
    tolerances: Tolerances,
    seed: u64,
) -> Result<(RunReport, Ensemble)> {
    let (train_ids, used) = sample_per_class(&source.train, classes, config.train_per_class, seed, &ExclusionSet::new())?;
    let test_seed = seed.wrapping_add(TEST_SEED_OFFSET);
    let (test_pool, test_ids) = match &source.test {
        Some(pool) => (
            pool,
            build_test_set(pool, classes, config.test_per_class, test_seed, &ExclusionSet::new())?,
        ),
        None => (
            &source.train,
            build_test_set(&source.train, classes, config.test_per_class, test_seed, &used)?,
        ),
    };
    let per_class: BTreeMap<ClassId, Vec<Vec<f64>>> = train_ids
        .iter()
        .map(|(&c, ids)| (c, ids.iter().map(|&k| source.train.samples[k].features.clone()).collect()))
        .collect();
    let options = TrainOptions {
        search_moves: config.search_moves,
        ..TrainOptions::new(tolerances, seed)
    };
    let built = build_members(
        backend,
        classes,
        config.m,
        &per_class,
        &config.arch,
        &config.budget,
        &options,
        config.parallel,
    )?;
    let failures: Vec<MemberFailure> = built
        .failures
        .iter()
        .map(|(subset, e)| {
            log::error!("seed {seed}: member {subset:?} failed: {e}");
            MemberFailure {
                subset: subset.clone(),
                error: e.to_string(),
            }
        })
        .collect();
    let ensemble = Ensemble::partial(classes, config.m, built.members)?;
    let evaluation = evaluate(&ensemble, test_ids.iter().map(|&k| &test_pool.samples[k]))?;
    let network = network_stats(&ensemble, &per_class, failures)?;
    let run = RunReport {
        seed,
        epsilon: tolerances.epsilon(),
        train_indices: train_ids,
        test_indices: test_ids,
        evaluation,
        partial: !network.failures.is_empty(),
        network,
    };
    Ok((run, ensemble))
}

fn network_stats(
    ens: &Ensemble,
    per_class: &BTreeMap<ClassId, Vec<Vec<f64>>>,
    failures: Vec<MemberFailure>,
) -> Result<NetworkStats> {
    let members = ens.members();
    let p = members.first().map_or(0, |mb| mb.weights.architecture().weight_bound());
    let mut counts = vec![0usize; (2 * p + 1) as usize];
    let mut total_links = 0;
    let mut active_links = 0;
    let mut confident = 0.0;
    let mut accuracy = 0.0;
    for mb in members {
        for (c, n) in counts.iter_mut().zip(mb.weights.value_histogram()) {
            *c += n;
        }
        total_links += mb.weights.architecture().total_links();
        active_links += mb.weights.nonzero_count();
        confident += 100.0 * mb.meta.t_hat_size as f64 / mb.meta.train_samples.max(1) as f64;
        let (_, samples) = crate::ensemble::member_training_set(&mb.subset, per_class)?;
        accuracy += 100.0 * training_accuracy(&mb.weights, &samples)?;
    }
    let mean = |sum: f64| if members.is_empty() { 0.0 } else { sum / members.len() as f64 };
    let nonzero_after = |stage: Stage| {
        let (mut nz, mut links) = (0, 0);
        for mb in members {
            if let Some(r) = mb.meta.stages.iter().find(|r| r.stage == stage) {
                nz += r.nonzeros;
                links += mb.weights.architecture().total_links();
            }
        }
        (links > 0).then(|| 100.0 * nz as f64 / links as f64)
    };
    let stages = [Stage::SatMargin, Stage::MaxMargin, Stage::MinWeight]
        .into_iter()
        .filter_map(|stage| {
            let reports: Vec<_> = members
                .iter()
                .filter_map(|mb| mb.meta.stages.iter().find(|r| r.stage == stage))
                .collect();
            if reports.is_empty() {
                return None;
            }
            let times: Vec<f64> = reports.iter().map(|r| r.wall_time_s).collect();
            let gaps: Vec<f64> = reports.iter().filter_map(|r| r.mip_gap).map(|g| 100.0 * g).collect();
            Some(StageStats {
                stage: stage.short().to_string(),
                nets: reports.len(),
                optimal: reports.iter().filter(|r| r.status == SolveStatus::Optimal).count(),
                runtime_mean_s: times.iter().sum::<f64>() / times.len() as f64,
                runtime_max_s: times.iter().copied().fold(0.0, f64::max),
                gap_mean_pct: (!gaps.is_empty()).then(|| gaps.iter().sum::<f64>() / gaps.len() as f64),
                gap_max_pct: gaps.iter().copied().reduce(f64::max),
            })
        })
        .collect();
    Ok(NetworkStats {
        members: members.len(),
        failures,
        total_links,
        active_links,
        nonzero_after_sm_pct: nonzero_after(Stage::SatMargin),
        nonzero_after_mm_pct: nonzero_after(Stage::MaxMargin),
        nonzero_after_mw_pct: nonzero_after(Stage::MinWeight),
        sm_confident_pct: mean(confident),
        train_accuracy_pct: mean(accuracy),
        histogram: WeightHistogram::from_counts(p, &counts),
        stages,
    })
}

fn summarize(runs: &[RunReport], m: usize) -> Vec<MetricEnvelope> {
    let mut order: Vec<String> = Vec::new();
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for run in runs {
        for (name, value) in run.metrics(m) {
            if !values.contains_key(&name) {
                order.push(name.clone());
            }
            let entry = values.entry(name).or_default();
            if let Some(v) = value {
                entry.push(v);
            }
        }
    }
    order
        .into_iter()
        .filter_map(|name| {
            let vs = &values[&name];
            (!vs.is_empty()).then(|| MetricEnvelope {
                runs: vs.len(),
                mean: vs.iter().sum::<f64>() / vs.len() as f64,
                min: vs.iter().copied().fold(f64::INFINITY, f64::min),
                max: vs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                metric: name,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// A named output document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub name: String,
    pub content: String,
}

/// Round to the two decimals used for percentages and seconds.
fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn fixed2(x: f64) -> String {
    format!("{x:.2}")
}

fn opt2(x: Option<f64>) -> String {
    x.map(fixed2).unwrap_or_default()
}

/// Round every number stored under a percentage, seconds or envelope key.
fn round_fields(value: &mut Value) {
    match value {
        Value::Object(map) => {
            for (key, v) in map.iter_mut() {
                let rounded = key.ends_with("_pct") || key.ends_with("_s") || matches!(key.as_str(), "mean" | "min" | "max");
                match v {
                    Value::Number(n) if rounded => {
                        if let Some(x) = n.as_f64() {
                            *v = Value::from(round2(x));
                        }
                    }
                    _ => round_fields(v),
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_fields),
        _ => {}
    }
}

fn csv_document(name: &str, header: Vec<String>, rows: Vec<Vec<String>>) -> Document {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(&header).expect("in-memory write");
    for row in rows {
        writer.write_record(&row).expect("in-memory write");
    }
    let bytes = writer.into_inner().expect("in-memory write");
    Document {
        name: name.to_string(),
        content: String::from_utf8(bytes).expect("CSV of UTF-8 fields"),
    }
}

/// Render `report`: one `report.json`, or one CSV table each for accuracy
/// and label statuses, weights, stages, histogram, confusion matrices and
/// the seed summary. Percentages and seconds have two decimals.
pub fn emit_report(report: &ExperimentReport, format: ReportFormat) -> Vec<Document> {
    match format {
        ReportFormat::Json => {
            let mut value = serde_json::to_value(report).expect("report serializes");
            round_fields(&mut value);
            let mut content = serde_json::to_string_pretty(&value).expect("report serializes");
            content.push('\n');
            vec![Document {
                name: "report.json".into(),
                content,
            }]
        }
        ReportFormat::Csv => csv_documents(report),
    }
}

fn csv_documents(report: &ExperimentReport) -> Vec<Document> {
    let m = report.m;
    let p = report.weight_bound;

    let mut header: Vec<String> = ["seed", "test_size", "correct", "wrong", "n.l."].map(String::from).to_vec();
    header.extend(LabelStatus::ALL.iter().map(|s| s.render(m)));
    let rows = report
        .runs
        .iter()
        .filter_map(|run| {
            let e = run.evaluation.as_ref()?;
            let mut row = vec![
                run.seed.to_string(),
                e.test_size.to_string(),
                fixed2(e.correct_pct),
                fixed2(e.wrong_pct),
                fixed2(e.unclassified_pct),
            ];
            row.extend(e.statuses.iter().map(|s| fixed2(s.share_pct)));
            Some(row)
        })
        .collect();
    let accuracy = csv_document("accuracy.csv", header, rows);

    let header = [
        "seed",
        "members",
        "failed_members",
        "total_links",
        "active_links",
        "links_sm_pct",
        "links_mm_pct",
        "links_mw_pct",
        "sm_confident_pct",
        "train_accuracy_pct",
    ]
    .map(String::from)
    .into_iter()
    .chain([format!("w=-{p}"), "w=0".into(), format!("w={p}"), "others".into()])
    .collect();
    let rows = report
        .runs
        .iter()
        .map(|run| {
            let n = &run.network;
            vec![
                run.seed.to_string(),
                n.members.to_string(),
                n.failures.len().to_string(),
                n.total_links.to_string(),
                n.active_links.to_string(),
                opt2(n.nonzero_after_sm_pct),
                opt2(n.nonzero_after_mm_pct),
                opt2(n.nonzero_after_mw_pct),
                fixed2(n.sm_confident_pct),
                fixed2(n.train_accuracy_pct),
                fixed2(n.histogram.minus_p_pct),
                fixed2(n.histogram.zero_pct),
                fixed2(n.histogram.plus_p_pct),
                fixed2(n.histogram.others_pct),
            ]
        })
        .collect();
    let weights = csv_document("weights.csv", header, rows);

    let header = [
        "seed",
        "stage",
        "nets",
        "optimal",
        "runtime_mean_s",
        "runtime_max_s",
        "gap_mean_pct",
        "gap_max_pct",
    ]
    .map(String::from)
    .to_vec();
    let rows = report
        .runs
        .iter()
        .flat_map(|run| {
            run.network.stages.iter().map(move |st| {
                vec![
                    run.seed.to_string(),
                    st.stage.clone(),
                    st.nets.to_string(),
                    st.optimal.to_string(),
                    fixed2(st.runtime_mean_s),
                    fixed2(st.runtime_max_s),
                    opt2(st.gap_mean_pct),
                    opt2(st.gap_max_pct),
                ]
            })
        })
        .collect();
    let stages = csv_document("stages.csv", header, rows);

    let header = ["seed", "weight", "count"].map(String::from).to_vec();
    let rows = report
        .runs
        .iter()
        .flat_map(|run| {
            run.network
                .histogram
                .bins
                .iter()
                .map(move |b| vec![run.seed.to_string(), b.weight.to_string(), b.count.to_string()])
        })
        .collect();
    let histogram = csv_document("histogram.csv", header, rows);

    let mut header = vec!["seed".to_string(), "true_class".to_string()];
    header.extend(report.classes.iter().map(|c| c.to_string()));
    header.push("unclassified".into());
    let rows = report
        .runs
        .iter()
        .filter_map(|run| run.evaluation.as_ref().map(|e| (run.seed, e)))
        .flat_map(|(seed, e)| {
            e.confusion.rows.iter().map(move |r| {
                let mut row = vec![seed.to_string(), r.truth.to_string()];
                row.extend(r.predicted.iter().map(|n| n.to_string()));
                row.push(r.unclassified.to_string());
                row
            })
        })
        .collect();
    let confusion = csv_document("confusion.csv", header, rows);

    let header = ["metric", "runs", "mean", "min", "max"].map(String::from).to_vec();
    let rows = report
        .summary
        .iter()
        .map(|e| vec![e.metric.clone(), e.runs.to_string(), fixed2(e.mean), fixed2(e.min), fixed2(e.max)])
        .collect();
    let summary = csv_document("summary.csv", header, rows);

    vec![accuracy, weights, stages, histogram, confusion, summary]
}
