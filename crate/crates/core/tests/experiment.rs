//! The experiment harness on synthetic data: report invariants, subset
//! ensembles with three classes per member, ablation grids, empty test
//! sets, reproducibility and the command-line exit codes.

mod common;

use std::process::Command;
use std::time::Duration;

use fewbit::data::synthetic;
use fewbit::ensemble::{binomial, tally};
use fewbit::experiment::{
    emit_report, run_ensemble_experiment, run_pair_experiment, DataSource, ExperimentConfig, ExperimentReport,
    ReportFormat,
};
use fewbit::model::Architecture;
use fewbit::train::StageBudget;

fn source(classes: usize, features: usize, seed: u64) -> DataSource {
    DataSource {
        train: synthetic(classes, 40, features, 3, 0.1, seed).unwrap(),
        test: None,
    }
}

fn budget(plan: &str, secs: u64) -> StageBudget {
    let d = Duration::from_secs(secs);
    StageBudget::for_plan(plan, d, d, d).unwrap()
}

fn config(classes: Vec<u32>, m: usize, layers: Vec<usize>, r: usize, test: usize, plan: &str) -> ExperimentConfig {
    ExperimentConfig {
        search_moves: 20_000,
        ..ExperimentConfig::new(classes, m, Architecture::new(layers, 1).unwrap(), r, test, budget(plan, 5))
    }
}

/// Invariants every emitted report must satisfy.
fn check_report(report: &ExperimentReport) {
    for run in &report.runs {
        let net = &run.network;
        let bins: usize = net.histogram.bins.iter().map(|b| b.count).sum();
        assert_eq!(bins, net.total_links, "histogram covers every link");
        if let Some(eval) = &run.evaluation {
            assert!((eval.correct_pct + eval.wrong_pct + eval.unclassified_pct - 100.0).abs() < 0.01);
            let statuses: usize = eval.statuses.iter().map(|s| s.count).sum();
            assert_eq!(statuses, eval.test_size);
            assert_eq!(eval.statuses.len(), 7);
            for row in &eval.confusion.rows {
                assert_eq!(row.total(), report.test_per_class, "class {}", row.truth);
            }
        }
    }
    for format in [ReportFormat::Json, ReportFormat::Csv] {
        for doc in emit_report(report, format) {
            if doc.name.ends_with(".json") {
                serde_json::from_str::<serde_json::Value>(&doc.content).unwrap();
            } else {
                let mut reader = csv::Reader::from_reader(doc.content.as_bytes());
                let width = reader.headers().unwrap().len();
                for record in reader.records() {
                    assert_eq!(record.unwrap().len(), width, "{}", doc.name);
                }
            }
        }
    }
}

#[test]
fn four_class_pair_ensemble_report() {
    let backend = common::solver();
    let cfg = ExperimentConfig {
        seeds: vec![3],
        ..config(vec![0, 1, 2, 3], 2, vec![10, 3, 1], 6, 10, "sm+mm+mw")
    };
    let outcome = run_ensemble_experiment(&backend, &source(4, 10, 1), &cfg).unwrap();
    let report = &outcome.report;
    check_report(report);
    assert!(!report.partial);
    let run = &report.runs[0];
    assert_eq!(run.network.members, binomial(4, 2));
    assert_eq!(run.network.total_links, 6 * (10 * 3 + 3));
    let eval = run.evaluation.as_ref().unwrap();
    assert_eq!(eval.test_size, 40);
    let correct = eval.statuses[0].count + eval.statuses[2].count; // 1C + 2C
    assert!((eval.correct_pct - 100.0 * correct as f64 / 40.0).abs() < 1e-9);
    // prototypes with 10% noise are easy: the vote should mostly be right
    assert!(eval.correct_pct >= 50.0, "accuracy {}", eval.correct_pct);
    let csv = emit_report(report, ReportFormat::Csv);
    let names: Vec<&str> = csv.iter().map(|d| d.name.as_str()).collect();
    assert_eq!(
        names,
        ["accuracy.csv", "weights.csv", "stages.csv", "histogram.csv", "confusion.csv", "summary.csv"]
    );
    let header = csv[0].content.lines().next().unwrap();
    assert_eq!(header, "seed,test_size,correct,wrong,n.l.,1C,1I,2C,2I′,2I″,oI′,oI″");
    let header = csv[1].content.lines().next().unwrap();
    assert!(header.ends_with("w=-1,w=0,w=1,others"), "{header}");
}

#[test]
fn three_class_members_cover_every_triple() {
    let backend = common::solver();
    let cfg = config(vec![0, 1, 2, 3], 3, vec![10, 3, 2], 5, 8, "sm");
    let data = source(4, 10, 2);
    let outcome = run_ensemble_experiment(&backend, &data, &cfg).unwrap();
    check_report(&outcome.report);
    let (_, ens) = &outcome.ensembles[0];
    assert_eq!(ens.members().len(), binomial(4, 3));
    assert!(ens.is_complete());
    let run = &outcome.report.runs[0];
    let eval = run.evaluation.as_ref().unwrap();
    assert!(eval.statuses.iter().any(|s| s.status == "3C"));
    for &k in &run.test_indices {
        let t = tally(&data.train.samples[k].features, ens).unwrap();
        assert!(t.counts().values().all(|&c| c <= binomial(3, 2)));
        assert!(t.counts().values().sum::<usize>() <= ens.members().len());
    }
}

#[test]
fn ablation_grid_gives_twelve_rows() {
    let backend = common::solver();
    let data = source(2, 8, 3);
    let mut rows = Vec::new();
    for plan in ["sm", "sm+mw", "sm+mm", "sm+mm+mw"] {
        for r in [2, 6, 10] {
            let cfg = ExperimentConfig {
                budget: budget(plan, 2),
                ..config(vec![0, 1], 2, vec![8, 2, 1], r, 5, plan)
            };
            let report = run_pair_experiment(&backend, &data, (0, 1), &cfg).unwrap().report;
            check_report(&report);
            assert_eq!(report.stages, plan.to_uppercase());
            let net = &report.runs[0].network;
            assert_eq!(net.nonzero_after_mm_pct.is_some(), plan.contains("mm"));
            assert_eq!(net.nonzero_after_mw_pct.is_some(), plan.contains("mw"));
            if let (Some(before), Some(after)) = (
                net.nonzero_after_mm_pct.or(net.nonzero_after_sm_pct),
                net.nonzero_after_mw_pct,
            ) {
                assert!(after <= before);
            }
            let accuracy = emit_report(&report, ReportFormat::Csv).remove(0);
            rows.extend(accuracy.content.lines().skip(1).map(str::to_string));
        }
    }
    assert_eq!(rows.len(), 12);
}

#[test]
fn empty_test_set_still_gives_valid_documents() {
    let backend = common::solver();
    let cfg = config(vec![0, 1], 2, vec![8, 2, 1], 3, 0, "sm");
    let report = run_pair_experiment(&backend, &source(2, 8, 4), (0, 1), &cfg).unwrap().report;
    check_report(&report);
    assert!(report.runs[0].evaluation.is_none());
    let docs = emit_report(&report, ReportFormat::Csv);
    for name in ["accuracy.csv", "confusion.csv"] {
        let doc = docs.iter().find(|d| d.name == name).unwrap();
        assert_eq!(doc.content.lines().count(), 1, "{name} has only its header");
    }
    let json = &emit_report(&report, ReportFormat::Json)[0];
    let value: serde_json::Value = serde_json::from_str(&json.content).unwrap();
    assert!(value["runs"][0]["evaluation"].is_null());
}

#[test]
fn same_seeds_draw_the_same_samples() {
    let backend = common::solver();
    let data = source(3, 8, 5);
    let cfg = ExperimentConfig {
        seeds: vec![11, 12],
        ..config(vec![0, 1, 2], 2, vec![8, 2, 1], 4, 6, "sm")
    };
    let a = run_ensemble_experiment(&backend, &data, &cfg).unwrap().report;
    let b = run_ensemble_experiment(&backend, &data, &cfg).unwrap().report;
    for (x, y) in a.runs.iter().zip(&b.runs) {
        assert_eq!(x.train_indices, y.train_indices);
        assert_eq!(x.test_indices, y.test_indices);
        let train: Vec<usize> = x.train_indices.values().flatten().copied().collect();
        assert!(x.test_indices.iter().all(|k| !train.contains(k)), "test overlaps training");
    }
    assert_ne!(a.runs[0].train_indices, a.runs[1].train_indices);
}

#[test]
fn capacity_errors_propagate() {
    let backend = common::solver();
    let cfg = config(vec![0, 1], 2, vec![8, 2, 1], 30, 20, "sm");
    let err = run_pair_experiment(&backend, &source(2, 8, 6), (0, 1), &cfg).unwrap_err();
    assert!(err.to_string().contains("insufficient data"), "{err}");
}

fn cli(out: &std::path::Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fewbit"));
    cmd.args(["--dataset", "synthetic", "--classes", "0,1,2", "--arch", "8,2,1"])
        .args(["--images-per-class", "3", "--test-per-class", "4", "--budget", "2,2,2"])
        .args(["--seeds", "1", "--search-moves", "2000", "--format", "csv", "--out"])
        .arg(out)
        .env("RUST_LOG", "warn");
    cmd
}

#[test]
fn cli_writes_reports_and_ensembles() {
    let dir = tempfile::tempdir().unwrap();
    let status = cli(dir.path()).status().unwrap();
    assert_eq!(status.code(), Some(0));
    for name in ["accuracy.csv", "summary.csv", "ensemble-seed1.json"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn cli_exit_codes_for_bad_input_and_partial_runs() {
    let dir = tempfile::tempdir().unwrap();
    let status = cli(dir.path()).args(["--stages", "mm+sm"]).status().unwrap();
    assert_eq!(status.code(), Some(1), "an unknown stage plan is fatal");

    // a solver that declares every model infeasible makes each member fail
    let fake = dir.path().join("fake-solver");
    std::fs::write(
        &fake,
        "#!/bin/sh\nwhile [ $# -gt 0 ]; do\n  if [ \"$1\" = -solu ]; then echo 'Infeasible - objective value 0' > \"$2\"; fi\n  shift\ndone\n",
    )
    .unwrap();
    use std::os::unix::fs::PermissionsExt;
    std::fs::set_permissions(&fake, std::fs::Permissions::from_mode(0o755)).unwrap();
    let out = dir.path().join("partial");
    let status = cli(&out).env("FEWBIT_SOLVER", &fake).status().unwrap();
    assert_eq!(status.code(), Some(2));
    let weights = std::fs::read_to_string(out.join("weights.csv")).unwrap();
    assert!(weights.lines().nth(1).unwrap().starts_with("1,0,3,"), "{weights}");
}
