use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_congestion-sim"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    std::fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

const SMALL: &str = r#"{"c": 0.1, "horizon": 40, "replications": 2,
    "game": {"routing": {"nodes": 8, "agents": 3}}}"#;

const TINY_INLINE: &str = r#"{"c": 0.5, "horizon": 200, "alpha": 0.003125, "replications": 2,
    "game": {"inline": {"resources": 2, "capacities": [0.4, 1.0],
        "losses": [[0, 1, 0], [0, 1, 0]],
        "agents": [{"mass": 1.0, "bundles": [[0], [1]]}]}}}"#;

#[test]
fn run_writes_series_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    let out = sim(&["run", "--config", &cfg, "--out", "res/out.csv", "--emit-prices", "0,1"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mean = std::fs::read_to_string(dir.path().join("res/out.csv")).unwrap();
    assert_eq!(mean.lines().count(), 41);
    assert!(mean.starts_with("round,acv,acv_avg,ad_avg,price_norm,max_price\n"));
    let rep = std::fs::read_to_string(dir.path().join("res/out.rep1.csv")).unwrap();
    assert!(rep.starts_with("round,acv,acv_avg,ad_avg,price_norm,max_price,price_r0,price_r1\n"));
    assert!(dir.path().join("res/out.csv.meta.json").exists());
}

#[test]
fn flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    let out = sim(
        &["run", "--config", &cfg, "--out", "one.csv", "--replications", "1", "--seed", "9", "--no-pricing"],
        dir.path(),
    );
    assert!(out.status.success());
    let meta: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("one.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["seed"], 9);
    assert_eq!(meta["config"]["pricing_enabled"], false);
    assert_eq!(meta["replications"].as_array().unwrap().len(), 1);
    assert!(!dir.path().join("one.rep0.csv").exists());
}

#[test]
fn sweep_writes_one_result_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", SMALL);
    let out = sim(
        &["sweep", "--config", &cfg, "--out", "sw.csv", "--beta-multipliers", "0.1,10", "--capacities", "14,11"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["sw.beta0.1.cap14.csv", "sw.beta0.1.cap11.csv", "sw.beta10.cap14.csv", "sw.beta10.cap11.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn gen_game_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = sim(&["gen-game", "--seed", "4"], dir.path());
    let b = sim(&["gen-game", "--seed", "4"], dir.path());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let inst: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(inst["game"]["agents"].as_array().unwrap().len(), 10);
}

#[test]
fn check_bounds_passes_on_a_feasible_instance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", TINY_INLINE);
    let out = sim(&["check-bounds", "--config", &cfg], dir.path());
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    assert!(text.contains("[PASS]") && !text.contains("[FAIL]"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let both = write(dir.path(), "both.json", r#"{"c": 0.1, "gamma": 0.01}"#);
    assert_eq!(sim(&["run", "--config", &both], dir.path()).status.code(), Some(1));
    let garbled = write(dir.path(), "bad.json", "{not json");
    assert_eq!(sim(&["run", "--config", &garbled], dir.path()).status.code(), Some(1));
    assert_eq!(sim(&["run", "--config", "missing.json"], dir.path()).status.code(), Some(1));
    let unreachable = write(
        dir.path(),
        "gen.json",
        r#"{"c": 0.1, "game": {"routing": {"nodes": 6, "edge_prob": 0.0}}}"#,
    );
    assert_eq!(sim(&["run", "--config", &unreachable], dir.path()).status.code(), Some(2));
}
