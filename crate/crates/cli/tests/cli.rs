use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn simxfer(args: &[&str], spec_text: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_simxfer"));
    cmd.args(args).env("SIMXFER_DATA_DIR", fixtures()).current_dir(dir);
    if let Some(text) = spec_text {
        std::fs::write(dir.join("exp.spec"), text).unwrap();
        cmd.args(["--spec", "exp.spec"]);
    }
    cmd.output().unwrap()
}

const BASE: &str = "name = toy\nscore_lo = 0\nscore_hi = 5\ntrain = toy/train.tsv\ndev = toy/dev.tsv\n\
                    test = toy/test.tsv\nembeddings = embeddings50.txt\nembedding_dim = 50\n\
                    encoder = word-average\nbatch_sizes = 16\nlearning_rates = 0.01\nepochs = 2\n";

#[test]
fn eval_writes_report_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let out = simxfer(&["eval"], Some(&format!("{BASE}setting = ue\n")), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("dataset\ttoy\n"));
    assert!(text.contains("setting\t[UE]\n"));
}

#[test]
fn run_then_table() {
    let dir = tempfile::tempdir().unwrap();
    let spec = format!("{BASE}setting = dnt\nfreeze_wem = true\n");
    let out = simxfer(&["run", "--out", "dnt.tsv", "--seed", "3"], Some(&spec), dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = simxfer(&["eval", "--out", "ue.tsv"], Some(&spec), dir.path());
    assert!(out.status.success());
    let out = simxfer(&["table", "dnt.tsv", "ue.tsv", "--out", "table.tsv"], None, dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let aligned = String::from_utf8(out.stdout).unwrap();
    assert!(aligned.contains("[DNT] locked") && aligned.contains("[UE]"));
    let tsv = std::fs::read_to_string(dir.path().join("table.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 3);
    assert!(tsv.starts_with("encoder\tsetting\ttoy (pearson)\ttoy best\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |o: Output| o.status.code().unwrap();

    assert_eq!(code(simxfer(&["frobnicate"], None, dir.path())), 1);
    assert_eq!(code(simxfer(&["run"], None, dir.path())), 1);
    assert_eq!(
        code(simxfer(&["run"], Some(&format!("{BASE}setting = warp\n")), dir.path())),
        1
    );
    assert_eq!(code(simxfer(&["run", "--spec", "missing.spec"], None, dir.path())), 1);

    let missing_data = format!("{BASE}setting = dnt\n").replace("toy/train.tsv", "toy/nowhere.tsv");
    let out = simxfer(&["run"], Some(&missing_data), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("loading data"));

    // Every prediction identical under word averaging of a single repeated token.
    std::fs::write(dir.path().join("flat.tsv"), "1\tcat\tcat\n2\tcat\tcat\n3\tcat\tcat\n").unwrap();
    let flat =
        format!("{BASE}setting = ue\n").replace("toy/test.tsv", &dir.path().join("flat.tsv").display().to_string());
    let out = simxfer(&["eval"], Some(&flat), dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));

    assert_eq!(code(simxfer(&["table", "nope.tsv"], None, dir.path())), 2);
    assert_eq!(code(simxfer(&["--help"], None, dir.path())), 0);
}
