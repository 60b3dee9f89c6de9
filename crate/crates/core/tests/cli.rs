use std::fs;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};

use horizonlab::diagnostics::read_records_jsonl;
use horizonlab::schema::load_environment;
use tempfile::TempDir;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_horizonlab"))
        .args(args)
        .env_remove("HORIZONLAB_EVALUATOR_URL")
        .env_remove("HORIZONLAB_PROPOSER_URL")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

const CAMPAIGN: &str = r#"{
    "env": {"family": "graph", "answer_distances": [2, 3]},
    "policies": [{"policy": "greedy"}, {"policy": "beam", "config": {"beam_width": 2}}, {"policy": "flare"}],
    "episodes": 6,
    "base_seed": 11,
    "parallel_workers": 3
}"#;

#[test]
fn props_default_grid_passes() {
    let o = cli(&["props"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("51/51 checks passed"));
}

#[test]
fn props_writes_report_file() {
    let dir = TempDir::new().unwrap();
    let grid = write(
        &dir,
        "g.json",
        r#"{"greedy_trap": {"M": [3], "H": [4]}, "beam_trap": {"B": [], "M": 7, "H": 3}, "lookahead_chain": []}"#,
    );
    let out = path(&dir, "nested/report.txt");
    let o = cli(&["props", "--grid", &grid, "--out", &out]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(out).unwrap();
    assert!(text.ends_with("3/3 checks passed\n"), "{text}");
}

#[test]
fn props_config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let invalid = write(&dir, "a.json", r#"{"greedy_trap": {"M": [-1], "H": [3]}}"#);
    let unknown = write(&dir, "b.json", r#"{"greedy": {}}"#);
    let broken = write(&dir, "c.json", "{");
    for grid in [invalid.as_str(), unknown.as_str(), broken.as_str(), "/nonexistent/grid.json"] {
        assert_eq!(code(&cli(&["props", "--grid", grid])), 2, "{grid}");
    }
}

#[test]
fn gen_env_is_deterministic_and_loadable() {
    let dir = TempDir::new().unwrap();
    let spec = write(&dir, "spec.json", r#"{"seed": 5, "answer_distance": 4}"#);
    let (a, b) = (path(&dir, "a.json"), path(&dir, "b.json"));
    assert_eq!(code(&cli(&["gen-env", "--family", "graph", "--spec", &spec, "--out", &a])), 0);
    assert_eq!(code(&cli(&["gen-env", "--family", "graph", "--spec", &spec, "--out", &b])), 0);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let env = load_environment(Path::new(&a)).unwrap();
    assert_eq!(env.episode_horizon(), 4 + 3);

    let params = write(&dir, "p.json", r#"{"reward": 5, "horizon": 3}"#);
    let g = path(&dir, "g.json");
    assert_eq!(code(&cli(&["gen-env", "--family", "greedy-trap", "--params", &params, "--out", &g])), 0);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(g).unwrap()).unwrap();
    assert_eq!(doc["optimal_return"], 5.0);
}

#[test]
fn gen_env_without_params_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = cli(&["gen-env", "--family", "beam-trap", "--out", &path(&dir, "x.json")]);
    assert_eq!(code(&o), 2);
    let o = cli(&["gen-env", "--family", "graph", "--top-tier-quantile", "0", "--out", &path(&dir, "x.json")]);
    assert_eq!(code(&o), 2);
}

#[test]
fn diagnose_writes_identical_outputs_on_rerun() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", CAMPAIGN);
    let mut runs = Vec::new();
    for tag in ["1", "2"] {
        let rec = path(&dir, &format!("r{tag}.jsonl"));
        let sum = path(&dir, &format!("s{tag}.csv"));
        let o = cli(&["diagnose", "--config", &cfg, "--out-records", &rec, "--out-summary", &sum]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let json = dir.path().join(format!("s{tag}.json"));
        runs.push((fs::read(&rec).unwrap(), fs::read(&sum).unwrap(), fs::read(json).unwrap()));
    }
    assert_eq!(runs[0], runs[1]);
    let records = read_records_jsonl(&String::from_utf8(runs[0].0.clone()).unwrap()).unwrap();
    assert_eq!(records.len(), 6 * 3);
    let csv = String::from_utf8(runs[0].1.clone()).unwrap();
    // header plus policy x {all, 2, 3}
    assert_eq!(csv.lines().count(), 1 + 3 * 3);
}

#[test]
fn diagnose_policy_override() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", CAMPAIGN);
    let pc = write(&dir, "p.json", r#"{"k": 3}"#);
    let rec = path(&dir, "r.jsonl");
    let o =
        cli(&["diagnose", "--config", &cfg, "--policy", "lookahead", "--policy-config", &pc, "--out-records", &rec]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("policy,"));
    let records = read_records_jsonl(&fs::read_to_string(rec).unwrap()).unwrap();
    assert!(records.iter().all(|r| r.policy_name == "lookahead"));

    let bad = write(&dir, "bad.json", r#"{"k": 0}"#);
    assert_eq!(code(&cli(&["diagnose", "--config", &cfg, "--policy", "lookahead", "--policy-config", &bad])), 2);
}

#[test]
fn diagnose_config_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let zero = write(&dir, "a.json", &CAMPAIGN.replace("\"episodes\": 6", "\"episodes\": 0"));
    let extra = write(&dir, "b.json", &CAMPAIGN.replace("\"episodes\": 6", "\"episodes\": 6, \"typo\": 1"));
    let dup = write(&dir, "c.json", &CAMPAIGN.replace(r#"{"policy": "flare"}"#, r#"{"policy": "greedy"}"#));
    for cfg in [zero, extra, dup] {
        assert_eq!(code(&cli(&["diagnose", "--config", &cfg])), 2, "{cfg}");
    }
}

#[test]
fn sweep_emits_one_row_per_policy_and_value() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.json", CAMPAIGN);
    let out = path(&dir, "sweep.csv");
    let o = cli(&["sweep", "--config", &cfg, "--axis", "S=1,4", "--out", &out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 3);
    assert!(text.starts_with("axis,value,policy,episodes,success_rate"));
    assert_eq!(code(&cli(&["sweep", "--config", &cfg, "--axis", "T=1"])), 2);
}

#[test]
fn run_prints_the_trajectory() {
    let dir = TempDir::new().unwrap();
    let params = write(&dir, "p.json", r#"{"reward": 5, "horizon": 3}"#);
    let env = path(&dir, "e.json");
    assert_eq!(code(&cli(&["gen-env", "--family", "greedy-trap", "--params", &params, "--out", &env])), 0);
    let o = cli(&["run", "--env", &env, "--policy", "greedy"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["return"], 0.0);
    let o = cli(&["run", "--env", &env, "--policy", "flare"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["return"], 5.0);
}

#[test]
fn unreachable_evaluator_is_a_runtime_failure() {
    let dir = TempDir::new().unwrap();
    let params = write(&dir, "p.json", r#"{"reward": 5, "horizon": 3}"#);
    let env = path(&dir, "e.json");
    assert_eq!(code(&cli(&["gen-env", "--family", "greedy-trap", "--params", &params, "--out", &env])), 0);
    // bind then drop to get a port with nothing listening
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let o = Command::new(env!("CARGO_BIN_EXE_horizonlab"))
        .args(["run", "--env", &env, "--policy", "flare"])
        .env("HORIZONLAB_EVALUATOR_URL", format!("http://127.0.0.1:{port}"))
        .env_remove("HORIZONLAB_PROPOSER_URL")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("remote"));
}
