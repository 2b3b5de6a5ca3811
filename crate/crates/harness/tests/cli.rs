use std::path::Path;

use seqtransfer_harness::cli::run;
use seqtransfer_harness::output::Summary;

const SMALL: &str = r#"{
    "environment": {"scenario": "two-rooms", "width": 6, "height": 6, "num_tasks": 4, "gamma": 0.9},
    "ptum": {"epsilon": 0.5, "delta": 0.1, "budget": 20000},
    "num_runs": 6,
    "base_seed": 3,
    "output": {"dir": "unused", "prefix": "small"}
}"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("seqtransfer").chain(args.iter().copied()))
}

#[test]
fn empty_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.json", "");
    assert_eq!(cli(&["run-ptum", &empty]), 2);
    assert_eq!(cli(&["diagnose", &dir.path().join("missing.json").to_string_lossy()]), 2);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(cli(&["frobnicate"]), 2);
    assert_eq!(cli(&["run-ptum"]), 2);
    assert_eq!(cli(&["run-ptum", "x.json", "--bogus"]), 2);
}

#[test]
fn wrong_section_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.json", SMALL);
    assert_eq!(cli(&["run-sequential", &cfg]), 2);
    assert_eq!(cli(&["learn-hmm", &cfg]), 2);
}

#[test]
fn run_ptum_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.json", SMALL);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert_eq!(cli(&["run-ptum", &cfg, "--output-dir", &out_a.to_string_lossy()]), 0);
    assert_eq!(cli(&["run-ptum", &cfg, "--output-dir", &out_b.to_string_lossy()]), 0);
    let a = std::fs::read(out_a.join("small_ptum.csv")).unwrap();
    let b = std::fs::read(out_b.join("small_ptum.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("run,seed,hidden,epsilon,mode,tau,"));
    assert_eq!(text.lines().count(), 7);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("small_ptum_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["metrics"]["eps_optimal"]["mean"], 1.0);
}

#[test]
fn summary_files_follow_the_schema() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.json", SMALL);
    let out = dir.path().join("o");
    assert_eq!(cli(&["diagnose", &cfg, "--output-dir", &out.to_string_lossy()]), 0);
    let text = std::fs::read_to_string(out.join("small_diagnose_summary.json")).unwrap();
    let s: Summary = serde_json::from_str(&text).unwrap();
    s.validate().unwrap();
    assert_eq!(s.command, "diagnose");
    assert!(s.metrics.contains_key("bound"));
}

#[test]
fn export_env_writes_every_task() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.json", SMALL);
    let out = dir.path().join("e");
    assert_eq!(cli(&["export-env", &cfg, "--output-dir", &out.to_string_lossy()]), 0);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("small_env.json")).unwrap()).unwrap();
    assert_eq!(v["tasks"].as_array().unwrap().len(), 4);
    assert_eq!(v["scenario"], "two-rooms");
}

#[test]
fn sequential_and_hmm_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    let seq = r#"{
        "environment": {"scenario": "objectworld", "spec": {"side": 3, "item_values": [0.0, 0.5, 1.0],
            "base_values": [0.0, 1.0], "empty_prob": 0.5, "reward_failure_prob": 0.0, "transition_failure_prob": 0.1,
            "upgrade_prob": 0.9, "gamma": 0.9}, "num_tasks": 3, "chain": {"next": 0.9, "skip": 0.05, "stay": 0.05}},
        "sequential": {"num_tasks": 12, "epsilon": 0.5, "delta": 0.05, "delta_prime": 0.1, "budget": 5000,
            "rho": {"burn_in": 0.01, "reward": 0.01, "transition": 0.01, "sigma_reward": 0.01, "sigma_transition": 0.01},
            "startup_tasks": 8, "startup_per_pair": 20, "post_per_pair": 10,
            "pre_elimination": {"eta": 0.05, "rho_t": 0.001}},
        "num_runs": 2,
        "output": {"dir": "unused", "prefix": "seq"}
    }"#;
    let cfg = write(dir.path(), "seq.json", seq);
    let out = dir.path().join("s").to_string_lossy().into_owned();
    assert_eq!(cli(&["run-sequential", &cfg, "--output-dir", &out]), 0);
    assert_eq!(cli(&["run-sequential", &cfg, "--static", "--output-dir", &out]), 0);
    let rows = std::fs::read_to_string(Path::new(&out).join("seq_sequential.csv")).unwrap();
    assert!(rows.starts_with("run,h,true_task,mode,queries,eps_optimal,active_set_size,delta_h,o_col_err_max,t_err_max"));
    assert_eq!(rows.lines().count(), 1 + 2 * 12);
    assert!(Path::new(&out).join("seq_static.csv").exists());

    let hmm = r#"{"environment": {"scenario": "synthetic-hmm", "k": 2, "blocks": [4, 4], "triples": [200]},
        "num_runs": 3, "output": {"dir": "unused", "prefix": "hmm"}}"#;
    let cfg = write(dir.path(), "hmm.json", hmm);
    assert_eq!(cli(&["learn-hmm", &cfg, "--output-dir", &out]), 0);
    assert!(Path::new(&out).join("hmm_hmm_m200.csv").exists());
}
