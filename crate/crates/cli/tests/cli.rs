use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn routescope(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_routescope")).current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = routescope(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").canonicalize().unwrap()
}

/// Records plus traces for a small synthetic WiC run in a fresh directory.
fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let sim = data_dir().join("sim.toml");
    ok(
        dir.path(),
        &[
            "records",
            "synth",
            "--kind",
            "wic",
            "--n",
            "120",
            "--vocab-size",
            "256",
            "--n-senses",
            "32",
            "--out",
            "wic.jsonl",
        ],
    );
    ok(
        dir.path(),
        &["simulate", "--config", sim.to_str().unwrap(), "--records", "wic.jsonl", "--out", "wic.traces.jsonl"],
    );
    dir
}

#[test]
fn simulate_is_byte_identical_across_runs_and_thread_counts() {
    let dir = workspace();
    let sim = data_dir().join("sim.toml");
    let sim = sim.to_str().unwrap();
    ok(dir.path(), &["--threads", "1", "simulate", "--config", sim, "--records", "wic.jsonl", "--out", "again.jsonl"]);
    let a = fs::read(dir.path().join("wic.traces.jsonl")).unwrap();
    let b = fs::read(dir.path().join("again.jsonl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn report_has_the_fixed_header_and_manifest() {
    let dir = workspace();
    ok(
        dir.path(),
        &["experiment", "wic", "--records", "wic.jsonl", "--traces", "wic.traces.jsonl", "--out", "report.csv"],
    );
    let report = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(report.lines().next().unwrap(), "layer,condition,mean_o,expected_o,mean_score,n_pairs,se_o,se_score");
    assert_eq!(report.lines().count(), 1 + 4 * 2);

    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "experiment");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["outputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn flags_override_config_files() {
    let dir = workspace();
    fs::write(
        dir.path().join("exp.toml"),
        "records = \"wic.jsonl\"\ntraces = \"wic.traces.jsonl\"\nout = \"from_config.csv\"\n",
    )
    .unwrap();
    ok(dir.path(), &["experiment", "wic", "--config", "exp.toml", "--out", "from_flag.csv"]);
    assert!(dir.path().join("from_flag.csv").exists());
    assert!(!dir.path().join("from_config.csv").exists());
}

#[test]
fn stats_prints_one_json_line_per_column() {
    let dir = workspace();
    ok(
        dir.path(),
        &[
            "experiment",
            "wic",
            "--records",
            "wic.jsonl",
            "--traces",
            "wic.traces.jsonl",
            "--out",
            "r.csv",
            "--diffs",
            "d.csv",
        ],
    );
    let stdout = ok(dir.path(), &["stats", "--diffs", "d.csv", "--per-layer", "--out", "s.json"]);
    let lines: Vec<Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[0]["column"], "layer_averaged");
    for line in &lines {
        let p = line["p_value"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert!(line["decision"] == "reject" || line["decision"] == "fail_to_reject");
    }
    let perm = ok(dir.path(), &["--seed", "5", "stats", "--diffs", "d.csv", "--method", "perm", "--out", "p.json"]);
    let again = ok(dir.path(), &["--seed", "5", "stats", "--diffs", "d.csv", "--method", "perm", "--out", "p.json"]);
    assert_eq!(perm, again);
}

#[test]
fn replay_reproduces_outputs_and_notices_changed_inputs() {
    let dir = workspace();
    ok(
        dir.path(),
        &[
            "--out-dir",
            "out",
            "experiment",
            "wic",
            "--records",
            "wic.jsonl",
            "--traces",
            "wic.traces.jsonl",
            "--out",
            "r.csv",
            "--diffs",
            "d.csv",
        ],
    );
    let stdout = ok(dir.path(), &["replay", "out/r.csv.manifest.json"]);
    assert!(stdout.contains("identical"));

    let records = dir.path().join("wic.jsonl");
    let mut text = fs::read_to_string(&records).unwrap();
    text.push('\n');
    fs::write(&records, text).unwrap();
    let out = routescope(dir.path(), &["replay", "out/r.csv.manifest.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}

#[test]
fn missing_input_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = routescope(dir.path(), &["validate", "--traces", "nope.jsonl"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn schema_violation_exits_with_field_path() {
    let dir = workspace();
    let text = fs::read_to_string(dir.path().join("wic.traces.jsonl")).unwrap();
    // Push the first routed expert id out of range.
    let broken = text.replacen("\"routed_experts\":[", "\"routed_experts\":[9999,", 1);
    fs::write(dir.path().join("bad.jsonl"), broken).unwrap();
    let out = routescope(dir.path(), &["validate", "--traces", "bad.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("routed_experts"), "{stderr}");
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(routescope(dir.path(), &["experiment", "wic"]).status.code(), Some(1));
    assert_eq!(routescope(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(routescope(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn imports_shipped_samples() {
    let data = data_dir();
    let dir = tempfile::tempdir().unwrap();
    let wic = ok(
        dir.path(),
        &[
            "records",
            "import-wic",
            "--data",
            data.join("wic/sample.data.tsv").to_str().unwrap(),
            "--gold",
            data.join("wic/sample.gold.txt").to_str().unwrap(),
            "--out",
            "wic.jsonl",
            "--skipped",
            "skipped.jsonl",
        ],
    );
    let wic: Value = serde_json::from_str(wic.trim()).unwrap();
    assert_eq!((wic["records"].as_u64(), wic["skipped"].as_u64()), (Some(4), Some(1)));

    let swords = ok(
        dir.path(),
        &["records", "import-swords", "--data", data.join("swords/sample.json").to_str().unwrap(), "--out", "s.jsonl"],
    );
    let swords: Value = serde_json::from_str(swords.trim()).unwrap();
    assert_eq!(swords["records"].as_u64(), Some(2));
}

#[test]
fn sae_and_atlas_run_from_the_command_line() {
    let dir = workspace();
    ok(
        dir.path(),
        &[
            "sae",
            "train",
            "--preset",
            "desk",
            "--traces",
            "wic.traces.jsonl",
            "--layer",
            "2",
            "--steps",
            "200",
            "--width",
            "32",
            "--out",
            "sae.json",
            "--log",
            "log.csv",
        ],
    );
    let log = fs::read_to_string(dir.path().join("log.csv")).unwrap();
    assert!(log.starts_with("step,loss,mse,l1,l0,dead,resets"));
    ok(
        dir.path(),
        &[
            "atlas",
            "--model",
            "sae.json",
            "--traces",
            "wic.traces.jsonl",
            "--layer",
            "2",
            "--feature",
            "3",
            "--top-m",
            "5",
            "--out",
            "atlas.csv",
        ],
    );
    let atlas = fs::read_to_string(dir.path().join("atlas.csv")).unwrap();
    assert!(atlas.starts_with("token,sae_value,expert_1,count_1,marked_1"));
}

#[test]
fn plotdata_has_a_column_per_condition() {
    let dir = workspace();
    ok(dir.path(), &["experiment", "wic", "--records", "wic.jsonl", "--traces", "wic.traces.jsonl", "--out", "r.csv"]);
    ok(dir.path(), &["plotdata", "--report", "r.csv", "--value", "overlap", "--out", "plot.csv"]);
    let plot = fs::read_to_string(dir.path().join("plot.csv")).unwrap();
    assert_eq!(plot.lines().next().unwrap(), "layer,same_sense,different_sense,difference");
    assert_eq!(plot.lines().count(), 5);
}
