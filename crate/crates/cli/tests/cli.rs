use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn grokedge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grokedge")).args(args).output().expect("binary runs")
}

fn run_with(experiment: &str, config: &str, dir: &Path, extra: &[&str]) -> Output {
    let path = dir.join(format!("{experiment}.json"));
    fs::write(&path, config).unwrap();
    let out = dir.join("out");
    let mut args = vec![experiment, "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    grokedge(&args)
}

const SMALL_DYNAMICS: &str = r#"{
    "lambdas": [0.1, 0.6],
    "n": 20,
    "sigma": 1.0,
    "optimizer": {"method": {"kind": "gradient_flow", "eta": 0.1}, "max_time": 1e4}
}"#;

#[test]
fn dynamics_writes_the_documented_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_with("dynamics", SMALL_DYNAMICS, tmp.path(), &["--seed", "7", "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let root = tmp.path().join("out/dynamics");
    let summary = fs::read_to_string(root.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(fs::read_dir(&root).unwrap().any(|e| e.unwrap().path().extension().is_some_and(|x| x == "svg")));
    for cell in ["lambda_0.1_seed_7", "lambda_0.6_seed_7"] {
        let text = fs::read_to_string(root.join(cell).join("trajectory.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,tau,s_norm,b,log_train_loss,train_acc,log_gen_loss,gen_acc"));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 8);
        // 17 significant digits: one before the point and sixteen after
        let mantissa = first[2].split('e').next().unwrap();
        assert_eq!(mantissa.trim_start_matches('-').replace('.', "").len(), 17, "{}", first[2]);
        assert!(lines.all(|l| l.split(',').all(|v| v.parse::<f64>().is_ok())));
    }
}

#[test]
fn output_depends_on_the_seed_but_not_the_worker_count() {
    let read = |seed: &str, workers: &str| {
        let tmp = tempfile::tempdir().unwrap();
        let o = run_with("dynamics", SMALL_DYNAMICS, tmp.path(), &["--seed", seed, "--workers", workers]);
        assert_eq!(o.status.code(), Some(0));
        let root = tmp.path().join("out/dynamics");
        let traj = fs::read_to_string(root.join("lambda_0.6_seed_3/trajectory.csv")).unwrap_or_default();
        (fs::read_to_string(root.join("summary.csv")).unwrap(), traj)
    };
    assert_eq!(read("3", "1"), read("3", "3"));
    assert_ne!(read("3", "1").0, read("4", "1").0);
}

#[test]
fn unknown_config_keys_exit_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_with("dynamics", r#"{"lambdas": [0.1], "bogus": 1}"#, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));
    let o = run_with("toy", r#"{"lambdas": [0.1], "regression": {"gapz": [0.1]}}"#, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_values_and_missing_files_exit_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_with("wendel", r#"{"ns": [], "ds": [3]}"#, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = run_with("dynamics", "{not json", tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    let o = grokedge(&["toy", "--config", tmp.path().join("absent.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergent_optimizer_exits_with_numerical_abort() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{
        "lambdas": [0.6],
        "n": 20,
        "sigma": 1.0,
        "optimizer": {"method": {"kind": "gd", "eta": 1e300}, "loss": "exponential", "max_time": 100}
    }"#;
    let o = run_with("dynamics", cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("numerical abort"));
    // the partial trajectory is still written
    assert!(tmp.path().join("out/dynamics/summary.csv").exists());
}

#[test]
fn printed_defaults_are_valid_json() {
    for experiment in ["dynamics", "lambda-sweep", "grok-heatmap", "wendel", "toy", "projection-hist", "extensions"] {
        let o = grokedge(&[experiment, "--print-config"]);
        assert_eq!(o.status.code(), Some(0));
        let text = String::from_utf8(o.stdout).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap_or_else(|e| panic!("{experiment}: {e}"));
        assert!(parsed.is_object());
    }
}

#[test]
fn toy_and_wendel_run_from_small_configs() {
    let tmp = tempfile::tempdir().unwrap();
    let toy = r#"{"lambdas": [0.25, 0.8], "sigma": 1.0, "eta": 0.1, "log_t_max": 30.0, "fit_decades": 5.0, "regression": null}"#;
    let o = run_with("toy", toy, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(tmp.path().join("out/toy/summary.csv").exists());
    let wendel = r#"{"ns": [10], "ds": [3, 5], "trials": 50}"#;
    let o = run_with("wendel", wendel, tmp.path(), &["--seed", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(tmp.path().join("out/wendel/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}

#[test]
fn usage_errors_are_reported_by_the_parser() {
    let o = grokedge(&["no-such-experiment"]);
    assert!(!o.status.success());
    let o = grokedge(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let help = String::from_utf8_lossy(&o.stdout);
    for sub in ["dynamics", "lambda-sweep", "grok-heatmap", "wendel", "toy", "projection-hist", "extensions"] {
        assert!(help.contains(sub), "{sub} missing from help");
    }
}
