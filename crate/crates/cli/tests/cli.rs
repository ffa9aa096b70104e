//! The `netpomdp` binary: exit codes, reports and trace files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn netpomdp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netpomdp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TWO_STATES: &str = r#"
format_version = 1

[simulation]
discount = 0.9

[[agents]]
actions = ["a"]
observations = ["o"]
transition = [[[[ROW]]], [[[0.5, 0.5]]]]
observation = [[[[1.0]]], [[[1.0]]]]
reward = [[[0.0]], [[1.0]]]
belief = [0.5, 0.5]
"#;

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn bundled_scenarios_validate() {
    for name in ["tiger.toml", "spectrum.toml", "chain.toml", "pair.toml"] {
        let out = netpomdp(&["validate", "--config", scenario(name).to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{name}: {}", stderr(&out));
    }
}

#[test]
fn bad_rows_are_named_in_the_report() {
    let dir = TempDir::new().unwrap();
    let good = write(&dir, "good.toml", &TWO_STATES.replace("ROW", "0.5, 0.5"));
    let bad = write(&dir, "bad.toml", &TWO_STATES.replace("ROW", "0.4, 0.5"));
    assert_eq!(code(&netpomdp(&["validate", "--config", good.to_str().unwrap()])), 0);
    let out = netpomdp(&["validate", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("transition[s=0, a=0, n=0] sums to 0.9"), "{}", stderr(&out));
}

#[test]
fn unreadable_files_exit_with_parse_code() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(scenario("tiger.toml")).unwrap();
    // Cut inside a quoted string so the remainder is not valid TOML.
    let cut = text.find("\"action\"").unwrap() + 4;
    let truncated = write(&dir, "cut.toml", &text[..cut]);
    assert_eq!(code(&netpomdp(&["validate", "--config", truncated.to_str().unwrap()])), 2);
    let missing = dir.path().join("absent.toml");
    assert_eq!(code(&netpomdp(&["validate", "--config", missing.to_str().unwrap()])), 2);
}

#[test]
fn chain_run_reports_its_value() {
    let out = netpomdp(&["run", "--config", scenario("chain.toml").to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["type"], "summary");
    assert_eq!(summary["converged"], true);
    let value = summary["final_values"][0].as_f64().unwrap();
    assert!((value - 2.0).abs() <= 1e-6, "{value}");
}

#[test]
fn explicit_pair_converges_for_every_message_type() {
    for kind in ["action", "observation", "belief"] {
        let out = netpomdp(&["run", "--config", scenario("pair.toml").to_str().unwrap(), "--message-type", kind]);
        assert_eq!(code(&out), 0, "{kind}: {}", stderr(&out));
    }
}

#[test]
fn round_limit_exits_with_not_converged() {
    let out = netpomdp(&["run", "--config", scenario("tiger.toml").to_str().unwrap(), "--max-rounds", "1"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn traces_are_reproducible() {
    let dir = TempDir::new().unwrap();
    let config = scenario("tiger.toml");
    let mut traces = Vec::new();
    for (k, workers) in ["1", "1", "3"].iter().enumerate() {
        let path = dir.path().join(format!("trace{k}.jsonl"));
        let out = netpomdp(&[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--trace-out",
            path.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        traces.push(std::fs::read(&path).unwrap());
    }
    assert!(!traces[0].is_empty());
    assert_eq!(traces[0], traces[1]);
    assert_eq!(traces[0], traces[2]);
    let text = String::from_utf8(traces.swap_remove(0)).unwrap();
    let last: serde_json::Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(last["type"], "summary");
}

#[test]
fn exact_model_frontier_aborts_the_spectrum_run() {
    let dir = TempDir::new().unwrap();
    let text = std::fs::read_to_string(scenario("spectrum.toml"))
        .unwrap()
        .replace("model_lookup = \"nearest\"", "model_lookup = \"exact\"");
    let config = write(&dir, "exact.toml", &text);
    let out = netpomdp(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
}

#[test]
fn diagnose_exit_codes() {
    let out = netpomdp(&["diagnose", "--trials", "0"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let out = netpomdp(&["diagnose", "--trials", "20"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("contraction: 20 trials, 0 violations"), "{report}");
    assert_eq!(code(&netpomdp(&["diagnose", "--discount", "1.0"])), 1);
}
