use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/configs")
        .join(name)
}

fn pglab(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pglab"))
        .env_remove("PGLAB_OUT")
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bandit_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("fig3_a005.json");
    let o = pglab(
        dir.path(),
        &["bandit", "--config", cfg.to_str().unwrap(), "--runs", "50"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("optimal"));
    for name in [
        "trajectories.csv",
        "outcomes.csv",
        "expected_reward.csv",
        "summary.json",
        "manifest.json",
    ] {
        assert!(dir.path().join("fig3_a005").join(name).exists(), "{name}");
    }
    let outcomes = std::fs::read_to_string(dir.path().join("fig3_a005/outcomes.csv")).unwrap();
    assert_eq!(outcomes.lines().count(), 51);
}

#[test]
fn bandit_command_rejects_gridworld_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("fig2_b0_5.json");
    let o = pglab(dir.path(), &["bandit", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("gridworld"), "{}", stderr(&o));
}

#[test]
fn gridworld_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("fig2_b0_5.json");
    let o = pglab(
        dir.path(),
        &[
            "gridworld",
            "--config",
            cfg.to_str().unwrap(),
            "--runs",
            "2",
            "--steps",
            "20",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let traces = std::fs::read_to_string(dir.path().join("fig2_b0_5/traces.csv")).unwrap();
    assert!(traces.starts_with("run_id,step,return,action_entropy,state_entropy\n"));
}

#[test]
fn missing_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let o = pglab(dir.path(), &["bandit", "--config", "/nonexistent/x.json"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/nonexistent/x.json"));
}

#[test]
fn unknown_figure_lists_valid_ids() {
    let dir = tempfile::tempdir().unwrap();
    let o = pglab(dir.path(), &["figure", "nope"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    for id in ["fig1", "fig3", "fig5", "fig9"] {
        assert!(err.contains(id), "{err}");
    }
}

#[test]
fn figures_lists_ids() {
    let dir = tempfile::tempdir().unwrap();
    let o = pglab(dir.path(), &["figures"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 8);
}

#[test]
fn variance_map_with_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("variance_bstar_over_is.json");
    let o = pglab(
        dir.path(),
        &[
            "variance-map",
            "--config",
            cfg.to_str().unwrap(),
            "--resolution",
            "21",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("bstar_over_is.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 21 * 22 / 2);
}

#[test]
fn bound_check_with_small_sample() {
    let dir = tempfile::tempdir().unwrap();
    let o = pglab(
        dir.path(),
        &["bound-check", "--runs", "200", "--steps", "200"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("bound_check/bound_check.csv")).unwrap();
    assert!(text.starts_with("theta0,alpha,b,bound_stmt,bound_proof,mc_estimate,mc_stderr\n"));
    assert_eq!(text.lines().count(), 65);
    assert!(dir.path().join("bound_check/manifest.json").exists());
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pglab"))
        .env("PGLAB_OUT", dir.path())
        .args(["figure", "fig5", "--resolution", "5"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("fig5/manifest.json").exists());
}
