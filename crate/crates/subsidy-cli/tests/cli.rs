use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn subsidy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subsidy")).args(args).env("SUBSIDY_LOG", "quiet").output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn run(kind: &str, dir: &TempDir, config: &str, out: &str) -> Output {
    let cfg = write_config(dir.path(), &format!("{out}.toml"), config);
    let out = dir.path().join(out).display().to_string();
    subsidy(&[kind, "--config", &cfg, "--out", &out])
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_ZERO: &str = r#"
[spec]
kind = "zero"

[params]
incumbent_synergy = 0.0

[solver]
grid_n = 65
action_n = 33
"#;

const SMALL_GAME: &str = r#"
allow_non_convergence = true

[params]
incumbent_synergy = 0.5
adjustment_cost = 5.0

[spec]
kind = "power_affine"
lin = 0.4
coef = 0.0
exp = 2.0

[solver]
grid_n = 65
action_n = 33
max_iter = 60

[simulation]
horizon = 20
m0 = 0.5
seed = 3
paths = 3
"#;

#[test]
fn degenerate_solve_succeeds_and_lists_its_outputs() {
    let dir = TempDir::new().unwrap();
    let o = run("solve", &dir, SMALL_ZERO, "zero");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let root = dir.path().join("zero");
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(root.join("manifest.json")).unwrap()).unwrap();
    let files: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert_eq!(files, ["solution.csv", "summary.json"]);
    assert_eq!(manifest["jobs"][0]["status"], "ok");
    let csv = fs::read_to_string(root.join("solution.csv")).unwrap();
    assert!(csv.starts_with("m,v_I,v_E,s_I,s_E\n"));
    assert_eq!(csv.lines().count(), 66);
}

#[test]
fn configuration_errors_exit_with_code_two() {
    let dir = TempDir::new().unwrap();
    let o = run("solve", &dir, "[params]\nm_min = 0.7\n", "bad_mmin");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("m_min"), "{}", stderr(&o));

    let o = run("solve", &dir, "[params]\ndelta = 1.0\n", "bad_delta");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("delta"), "{}", stderr(&o));

    let o = run("solve", &dir, "[params]\ngamma = \n", "syntax");
    assert_eq!(o.status.code(), Some(2));

    let o = run("solve", &dir, "\n\n[params]\ngama = 0.5\n", "unknown");
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));

    let o = run("solve", &dir, "job = \"welfare\"\n", "mismatch");
    assert_eq!(o.status.code(), Some(2));

    let o = subsidy(&["solve", "--config", "/nonexistent/config.toml", "--out", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_convergence_is_exit_three_but_outputs_are_kept() {
    let dir = TempDir::new().unwrap();
    let strict = SMALL_GAME.replace("allow_non_convergence = true", "allow_non_convergence = false").replace("max_iter = 60", "max_iter = 3");
    let o = run("solve", &dir, &strict, "strict");
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let root = dir.path().join("strict");
    assert!(root.join("solution.csv").exists() && root.join("manifest.json").exists());
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(root.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["jobs"][0]["status"], "non_converged");
}

#[test]
fn simulation_is_reproducible_and_seed_sensitive() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "sim.toml", SMALL_GAME);
    let out = |name: &str| dir.path().join(name).display().to_string();
    for name in ["a", "b"] {
        let o = subsidy(&["simulate", "--config", &cfg, "--out", &out(name)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let o = subsidy(&["simulate", "--config", &cfg, "--out", &out("c"), "--seed", "99"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let read = |d: &str, f: &str| fs::read(dir.path().join(d).join(f)).unwrap();
    for f in ["paths/path_000.csv", "paths/path_002.csv", "simulation.json"] {
        assert_eq!(read("a", f), read("b", f), "{f} differs between identical runs");
    }
    assert_ne!(read("a", "paths/path_000.csv"), read("c", "paths/path_000.csv"));
    let header = String::from_utf8(read("a", "paths/path_001.csv")).unwrap();
    assert!(header.starts_with(
        "t,m,s_I,s_E,eta,profit_I,profit_E_primary,psi_flow,profit_E_total,cum_I,cum_E\n"
    ));
}

#[test]
fn welfare_preset_reproduces_the_three_regimes() {
    let dir = TempDir::new().unwrap();
    let o = run("welfare", &dir, "preset = \"figure4\"\n", "fig4");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("fig4/regimes.csv")).unwrap();
    let rows: Vec<Vec<String>> = csv.lines().map(|l| l.split(',').map(String::from).collect()).collect();
    assert_eq!(rows[0], ["regime", "Q", "P", "CS", "PS", "transfer", "loss"]);
    let find = |name: &str| rows.iter().find(|r| r[0] == name).unwrap().clone();
    let q = |r: &[String], i: usize| r[i].parse::<f64>().unwrap();
    let cournot = find("cournot");
    assert!((q(&cournot, 1) - 160.0 / 3.0).abs() < 1e-9);
    let opt = find("social_optimum");
    assert_eq!((q(&opt, 1), q(&opt, 2), q(&opt, 6)), (80.0, 20.0, 0.0));
    let inv = find("involution");
    assert_eq!((q(&inv, 1), q(&inv, 6)), (90.0, 50.0));
}

#[test]
fn help_lists_every_subcommand() {
    let o = subsidy(&["--help"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for cmd in ["solve", "simulate", "deviation", "sweep", "region", "welfare", "signal", "check"] {
        assert!(text.contains(cmd), "missing {cmd}");
    }
}
