use std::fs;
use std::path::{Path, PathBuf};

use starvrjp::cli::main_with_args;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/configs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("starvrjp-cli-test-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> i32 {
    let mut all = vec!["starvrjp"];
    all.extend_from_slice(args);
    main_with_args(all)
}

#[test]
fn validate_exit_codes() {
    let c = configs();
    assert_eq!(run(&["validate", "--config", c.join("simulate.toml").to_str().unwrap()]), 0);
    assert_eq!(run(&["validate", "--config", c.join("asymmetric.toml").to_str().unwrap()]), 2);
    let dir = scratch("disconnected");
    let cfg = dir.join("g.toml");
    fs::write(
        &cfg,
        "[graph]\nvertices = [\"a\", \"b\", \"c\"]\nedges = [{ from = \"a\", to = \"b\", weight = 1.0 }, { from = \"b\", to = \"a\", weight = 1.0 }]\n",
    )
    .unwrap();
    assert_eq!(run(&["validate", "--config", cfg.to_str().unwrap()]), 2);
}

#[test]
fn verify_writes_records_and_rejects_unknown_identities() {
    let dir = scratch("verify");
    let c = configs();
    assert_eq!(run(&["verify", "--config", c.join("verify.toml").to_str().unwrap(), "--out", dir.to_str().unwrap()]), 0);
    let text = fs::read_to_string(dir.join("report.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in ["name", "instance_hash", "discrepancy", "tolerance", "pass"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    let cfg = dir.join("bad.toml");
    fs::write(&cfg, "[graph]\nbuiltin = \"dual_pair\"\n[verify]\nidentities = [\"no-such-identity\"]\n").unwrap();
    assert_eq!(run(&["verify", "--config", cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]), 2);
}

#[test]
fn simulate_dumps_trajectories_and_needs_a_seed() {
    let dir = scratch("simulate");
    let cfg = dir.join("sim.toml");
    let graph = configs().join("four_vertex.toml");
    let body = format!(
        "[graph]\nfile = {:?}\n[simulate]\nmodel = \"vrjp\"\ni0 = \"a\"\nt_max = 3.0\nn_traj = 4\ndump = 2\ntail_tolerance = 1e9\n",
        graph.to_str().unwrap()
    );
    fs::write(&cfg, body).unwrap();
    let out = dir.join("out");
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]), 2);
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "5", "--out", out.to_str().unwrap()]), 0);
    let dump = fs::read_to_string(out.join("trajectory_0.txt")).unwrap();
    assert!(dump.starts_with("# graph_hash = "));
    assert!(dump.contains("# seed = 5") && dump.contains("# scheme = event_driven") && dump.contains("# tau = "));
    assert!(out.join("trajectory_1.txt").exists() && !out.join("trajectory_2.txt").exists());
    let csv = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);

    let again = dir.join("again");
    assert_eq!(run(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", "5", "--out", again.to_str().unwrap()]), 0);
    assert_eq!(dump, fs::read_to_string(again.join("trajectory_0.txt")).unwrap());
}
