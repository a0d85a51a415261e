use std::fs;
use std::path::{Path, PathBuf};

use simxfer::checkpoint::load_checkpoint;
use simxfer::experiment::{emit_table, run_experiment, ExperimentReport, ExperimentSpec, RunMode};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn spec(extra: &str) -> ExperimentSpec {
    let mut text = format!(
        "name = toy\nscore_lo = 0\nscore_hi = 5\ntrain = toy/train.tsv\ndev = toy/dev.tsv\ntest = toy/test.tsv\n\
         embeddings = embeddings50.txt\nembedding_dim = 50\nencoder = bilstm-max\nhidden = 4\nseed = 5\n{extra}"
    );
    for (key, value) in [("batch_sizes", "16"), ("learning_rates", "0.01"), ("epochs", "3")] {
        if !extra.contains(key) {
            text.push_str(&format!("{key} = {value}\n"));
        }
    }
    ExperimentSpec::parse(&text).unwrap().with_data_dir(&fixtures())
}

#[test]
fn unsupervised_report_has_no_hyperparameters() {
    let report = run_experiment(&spec("setting = ue\n"), RunMode::Evaluate, 1).unwrap();
    assert_eq!(report.setting, "[UE]");
    assert!(report.best.is_none() && report.dev_score.is_none() && report.cells.is_empty());
    assert_eq!(report.test_n, 18);
    assert!(report.test_score.unwrap().abs() <= 1.0);
}

#[test]
fn eval_mode_overrides_trained_setting() {
    let a = run_experiment(&spec("setting = dnt\n"), RunMode::Evaluate, 1).unwrap();
    let b = run_experiment(&spec("setting = ue\n"), RunMode::Evaluate, 1).unwrap();
    assert_eq!(a.to_tsv(), b.to_tsv());
}

#[test]
fn singleton_grid_trains_one_cell_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.ckpt");
    let s = spec(&format!(
        "setting = nt\nloss = kl\nfreeze_wem = true\ncheckpoint = {}\n",
        ckpt.display()
    ));
    let report = run_experiment(&s, RunMode::Grid, 1).unwrap();
    assert_eq!(report.cells.len(), 1);
    assert_eq!(report.setting, "[NT] KL locked");
    assert!(report.test_score.is_some());
    let back = ExperimentReport::parse_tsv(&report.to_tsv()).unwrap();
    assert_eq!(back.to_tsv(), report.to_tsv());
    let model = load_checkpoint(&ckpt).unwrap();
    assert!(model.classifier.is_some());
}

#[test]
fn run_mode_uses_first_grid_values() {
    let s = spec("setting = dnt\nlearning_rates = 0.01, 0.1\n");
    let report = run_experiment(&s, RunMode::Single, 1).unwrap();
    assert_eq!(report.cells.len(), 1);
    assert_eq!(report.best.unwrap().learning_rate, 0.01);
}

#[test]
fn test_split_does_not_influence_selection() {
    let extra = "setting = dnt\nlearning_rates = 0.1, 0.01\nepochs = 2, 4\n";
    let with_test = run_experiment(&spec(extra), RunMode::Grid, 1).unwrap();
    let mut no_test = spec(extra);
    no_test.test = None;
    let without = run_experiment(&no_test, RunMode::Grid, 1).unwrap();
    assert_eq!(with_test.best, without.best);
    assert_eq!(with_test.cells, without.cells);
    assert!(without.test_score.is_none());
}

#[test]
fn failing_stage_is_named() {
    let mut s = spec("setting = dnt\n");
    s.train = fixtures().join("missing.tsv");
    let err = run_experiment(&s, RunMode::Single, 1).unwrap_err();
    assert!(err.to_string().starts_with("loading data"), "{err}");
    assert!(err.is_data_error());

    let mut s = spec("setting = dnt\n");
    s.embedding_dim = 40;
    let err = run_experiment(&s, RunMode::Single, 1).unwrap_err();
    assert!(err.to_string().starts_with("loading embeddings"), "{err}");
}

#[test]
fn dev_split_carved_from_train_when_absent() {
    let mut s = spec("setting = dnt\ndev_fraction = 0.25\n");
    s.dev = None;
    let report = run_experiment(&s, RunMode::Single, 1).unwrap();
    assert!(report.dev_score.is_some());
}

#[test]
fn table_from_saved_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for (i, extra) in ["setting = ue\n", "setting = dnt\n"].iter().enumerate() {
        let mode = if i == 0 { RunMode::Evaluate } else { RunMode::Single };
        let r = run_experiment(&spec(extra), mode, 1).unwrap();
        let p = dir.path().join(format!("r{i}.tsv"));
        r.save(&p).unwrap();
        paths.push(p);
    }
    let reports: Vec<_> = paths.iter().map(|p| ExperimentReport::load(p).unwrap()).collect();
    let table = emit_table(&reports).unwrap();
    assert_eq!(table.rows.len(), 2);
    assert_eq!(table.columns.len(), 1);
    assert!(table.best.iter().any(|r| r[0]));
    fs::write(dir.path().join("t.tsv"), table.to_tsv()).unwrap();
}
