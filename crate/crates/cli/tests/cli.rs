use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lpo_cli::{load_config, read_metrics_csv, Aggregate, ExperimentConfig};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn lpo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpo")).args(args).output().expect("spawn lpo")
}

fn files_in(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    names
}

// Small enough to run in well under a second.
const TINY: &str = r#"
[environment]
generator = "chain"
length = 5
slip = 0.1
gamma = 0.8

[lpo]
n_outer = 20
k_inner = 8
m_rollouts = 50
eta = 2.0
kappa = 1
beta = 0.3
w_bound = 80.0
c_mult = 0.001
c_epsilon = 0.01
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("c.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn minimal_chain5_run_writes_two_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = configs().join("chain5.toml");
    let o = lpo(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(files_in(&out), ["metrics_seed0.csv", "summary_seed0.json"]);
    let rows = read_metrics_csv(&out.join("metrics_seed0.csv")).unwrap();
    assert_eq!(rows.len(), 100);
}

#[test]
fn same_manifest_twice_gives_identical_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        let o = lpo(&["run", "--config", cfg.to_str().unwrap(), "--seeds", "4", "--out", d.to_str().unwrap()]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(a.join("metrics_seed4.csv")).unwrap(), fs::read(b.join("metrics_seed4.csv")).unwrap());
}

#[test]
fn five_seed_sweep_aggregate_matches_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("sweep");
    let o = lpo(&["run", "--config", cfg.to_str().unwrap(), "--seeds", "1,2,3,4,5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let names = files_in(&out);
    assert_eq!(names.len(), 11);
    assert!(names.contains(&"aggregate.json".to_string()));

    let finals: Vec<f64> = (1..=5)
        .map(|s| {
            let text = fs::read_to_string(out.join(format!("summary_seed{s}.json"))).unwrap();
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["seed"], s);
            v["final_value"].as_f64().unwrap()
        })
        .collect();
    let mean = finals.iter().sum::<f64>() / 5.0;
    let std = (finals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0).sqrt();
    let agg: Aggregate = serde_json::from_str(&fs::read_to_string(out.join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg.seeds, vec![1, 2, 3, 4, 5]);
    assert!((agg.final_value_mean - mean).abs() < 1e-12);
    assert!((agg.final_value_std - std).abs() < 1e-12);
}

#[test]
fn summary_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("o");
    assert!(lpo(&["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary_seed0.json")).unwrap()).unwrap();
    assert_eq!(v["environment"]["generator"], "chain");
    assert_eq!(v["config"]["n_outer"], 20);
    assert_eq!(v["config"]["seed"], 0);
}

#[test]
fn invalid_value_exits_2_naming_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &TINY.replace("beta = 0.3", "beta = 1.5"));
    let o = lpo(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("beta"));
}

#[test]
fn unknown_key_exits_2_naming_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &TINY.replace("kappa = 1", "kappa = 1\nbogus_knob = 3"));
    let o = lpo(&["run", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus_knob"));
}

#[test]
fn repeated_seeds_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let o = lpo(&["run", "--config", cfg.to_str().unwrap(), "--seeds", "1,1", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plotdata_is_long_format_from_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), TINY);
    let out = tmp.path().join("p");
    assert!(lpo(&["run", "--config", cfg.to_str().unwrap(), "--seeds", "0,1", "--out", out.to_str().unwrap()])
        .status
        .success());
    assert!(lpo(&["plotdata", "--out", out.to_str().unwrap()]).status.success());
    let text = fs::read_to_string(out.join("plotdata.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,series"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2 * 2 * 20);
    assert!(rows.iter().all(|r| r.len() == 3));

    // last switch count of seed 0 equals the summary's
    let metrics = read_metrics_csv(&out.join("metrics_seed0.csv")).unwrap();
    let switches = metrics.iter().filter(|r| r.switched).count();
    let last = rows.iter().rfind(|r| r[2] == "switches_seed0").unwrap();
    assert_eq!(last[1].parse::<usize>().unwrap(), switches);
}

#[test]
fn check_runs_over_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let text = TINY.replace("c_epsilon = 0.01", "c_epsilon = 0.01\nmode = \"exact\"");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("c");
    let o = lpo(&["run", "--config", cfg.to_str().unwrap(), "--artifacts", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = lpo(&["check", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let reports: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("checks_seed0.json")).unwrap()).unwrap();
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 6);
    // 20 iterations is far too short for the bonus-sum scale, so that one may fail;
    // the exit code has to say so.
    let all_pass = reports.iter().all(|r| r["pass"] == true);
    assert_eq!(o.status.code(), Some(if all_pass { 0 } else { 1 }));
    for r in &reports[..5] {
        assert_eq!(r["pass"], true, "{r}");
    }
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    for entry in fs::read_dir(configs()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            let c = load_config(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            let back: ExperimentConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
            assert_eq!(back, c, "{}", p.display());
        }
    }
}
