use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vnet-morl"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = cli(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn one_episode_smoke_run_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["train", "--episodes", "1", "--out", "run"], dir.path());
    let csv = String::from_utf8(read(dir.path().join("run/metrics.csv"))).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "episode,r_tran,r_tele,delta_e,xi_e,omega_tran,steps");
    assert_eq!(lines.len(), 2);
    let run: serde_json::Value = serde_json::from_slice(&read(dir.path().join("run/run.json"))).unwrap();
    assert_eq!(run["metrics_schema_version"], 1);
    assert!(dir.path().join("run/checkpoint.json").is_file());
    assert!(dir.path().join("run/timing.csv").is_file());
}

#[test]
fn train_and_eval_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for run in ["a", "b"] {
        ok(&["train", "--episodes", "6", "--seed", "3", "--set", "checkpoint_every=3", "--out", run], d);
        ok(
            &["eval", "--checkpoint", &format!("{run}/checkpoint.json"), "--episodes", "4", "--omega", "sweep:3", "--out", &format!("{run}/eval")],
            d,
        );
    }
    for f in ["metrics.csv", "config.toml", "checkpoint.json", "checkpoints/episode_000003.json", "eval/eval_metrics.csv", "eval/returns.csv"] {
        assert_eq!(read(d.join("a").join(f)), read(d.join("b").join(f)), "{f} differs");
    }
    let rows = String::from_utf8(read(d.join("a/eval/returns.csv"))).unwrap();
    assert_eq!(rows.lines().count(), 4);
    let summary: serde_json::Value = serde_json::from_slice(&read(d.join("a/eval/summary.json"))).unwrap();
    assert_eq!(summary["rows"].as_array().unwrap().len(), 3);

    ok(&["train", "--episodes", "6", "--seed", "4", "--out", "c"], d);
    assert_ne!(read(d.join("a/metrics.csv")), read(d.join("c/metrics.csv")));
}

#[test]
fn sequential_and_parallel_runs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["train", "--episodes", "4", "--set", "execution=sequential", "--out", "s"], d);
    ok(&["train", "--episodes", "4", "--set", "execution=parallel", "--out", "p"], d);
    assert_eq!(read(d.join("s/metrics.csv")), read(d.join("p/metrics.csv")));
    assert_eq!(read(d.join("s/checkpoint.json")), read(d.join("p/checkpoint.json")));
}

#[test]
fn eval_rejects_bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["train", "--episodes", "1", "--set", "algorithm=mo_dqn", "--out", "dqn"], d);
    assert!(!cli(&["eval", "--checkpoint", "dqn/checkpoint.json", "--episodes", "0"], d).status.success());
    let mismatch = cli(
        &["eval", "--checkpoint", "dqn/checkpoint.json", "--config", "dqn/config.toml", "--set", "algorithm=mo_ddqn_envelope"],
        d,
    );
    assert!(!mismatch.status.success());
    assert!(String::from_utf8_lossy(&mismatch.stderr).contains("mismatch"));
    assert!(!cli(&["train", "--set", "episodes=0", "--out", "x"], d).status.success());
    assert!(!cli(&["train", "--set", "radio.bogus=1", "--out", "x"], d).status.success());
}

#[test]
fn corrupted_checkpoint_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["train", "--episodes", "1", "--out", "r"], d);
    let text = fs::read_to_string(d.join("r/checkpoint.json")).unwrap();
    fs::write(d.join("r/truncated.json"), &text[..text.len() / 2]).unwrap();
    fs::write(d.join("r/renamed.json"), text.replace("\"bias\"", "\"biases\"")).unwrap();
    for bad in ["r/truncated.json", "r/renamed.json"] {
        let out = cli(&["check", "--suite", "channel", "--checkpoint", bad], d);
        assert!(!out.status.success());
        assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
        assert!(!cli(&["eval", "--checkpoint", bad, "--config", "r/config.toml"], d).status.success());
    }
    ok(&["check", "--suite", "channel", "--checkpoint", "r/checkpoint.json"], d);
}

#[test]
fn check_filters_suites() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["check", "--suite", "channel"], dir.path());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("PASS  channel"));
    assert_eq!(text.lines().count(), 1);
    assert!(!cli(&["check", "--suite", "nope"], dir.path()).status.success());
}

#[test]
fn pareto_reports_front_ccs_and_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("one.csv"), "label,r_tran,r_tele\nsolo,0.5,0.5\n").unwrap();
    fs::write(d.join("two.csv"), "label,r_tran,r_tele\nx,1,0.2\ny,0.2,1\nmid,0.4,0.4\n").unwrap();
    let out = ok(&["pareto", "one.csv", "two.csv", "--out", "p"], d);
    let report: serde_json::Value = serde_json::from_slice(&read(d.join("p/report.json"))).unwrap();
    let ranking = report["ranking"].as_array().unwrap();
    assert_eq!(ranking[0]["source"], "two.csv");
    let hv = ranking[0]["hypervolume"].as_f64().unwrap();
    assert!((hv - (0.6 * 0.2 + 0.2 * 0.4 + 0.2 * 1.0)).abs() < 1e-12);
    assert_eq!(ranking[1]["hypervolume"], 0.25);
    let ccs = String::from_utf8(read(d.join("p/ccs.csv"))).unwrap();
    assert!(!ccs.contains("mid"));
    assert!(ccs.contains(",x,") && ccs.contains(",y,"));
    assert!(String::from_utf8(out.stdout).unwrap().contains("two.csv"));
    fs::write(d.join("empty.csv"), "label,r_tran,r_tele\n").unwrap();
    assert!(!cli(&["pareto", "empty.csv"], d).status.success());
}

#[test]
fn single_point_pareto() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("one.csv"), "label,r_tran,r_tele\nsolo,2,3\n").unwrap();
    ok(&["pareto", "one.csv", "--out", "p"], d);
    let report: serde_json::Value = serde_json::from_slice(&read(d.join("p/report.json"))).unwrap();
    assert_eq!(report["hypervolume"], 6.0);
    assert_eq!(report["front_size"], 1);
    assert_eq!(report["ccs_size"], 1);
}
