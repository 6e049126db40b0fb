use std::path::PathBuf;
use std::process::{Command, Output};

fn ionfield(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ionfield"))
        .args(args)
        .env("RUST_LOG", "off")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn default_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../config/default.toml")
}

#[test]
fn help_lists_every_subcommand() {
    let text = stdout(&ionfield(&["--help"]));
    for cmd in [
        "field-map",
        "dsv",
        "transitions",
        "clock-field",
        "sense-acz",
        "ramsey-sim",
        "echo-sim",
        "stabilize-sim",
    ] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn shipped_config_matches_defaults() {
    let path = default_config();
    let path = path.to_str().unwrap();
    for cmd in ["transitions", "sense-acz", "clock-field"] {
        assert_eq!(stdout(&ionfield(&[cmd])), stdout(&ionfield(&["--config", path, cmd])), "{cmd}");
    }
}

#[test]
fn transitions_at_operating_field() {
    let text = stdout(&ionfield(&["transitions", "--B", "10.9584 mT"]));
    let row = text.lines().find(|l| l.starts_with("MW2,")).unwrap();
    let nu: f64 = row.rsplit(',').nth(3).unwrap().parse().unwrap();
    assert!((nu - 1_762.973_811_6e6).abs() < 5e3, "{nu}");
}

#[test]
fn field_map_rows_follow_step() {
    let rows = |step: &str| stdout(&ionfield(&["field-map", "--range", "2 mm", "--step", step])).lines().count() - 1;
    assert_eq!(rows("0.1 mm"), 41);
    assert_eq!(rows("0.2 mm"), 21);
}

#[test]
fn summary_written_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    stdout(&ionfield(&["clock-field", "--summary", path.to_str().unwrap()]));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    let b = v["clock_field_T"].as_f64().unwrap();
    assert!((b - 10.958e-3).abs() < 0.02e-3);
}

#[test]
fn repeated_runs_are_identical() {
    for args in [
        &["echo-sim", "--seed", "3", "--shots", "100"][..],
        &["ramsey-sim", "--transition", "MW1", "--seed", "3"],
        &["stabilize-sim", "--seed", "3", "--interval", "900 s"],
    ] {
        assert_eq!(stdout(&ionfield(args)), stdout(&ionfield(args)), "{args:?}");
    }
    let a = stdout(&ionfield(&["ramsey-sim", "--transition", "MW1", "--seed", "3"]));
    let b = stdout(&ionfield(&["ramsey-sim", "--transition", "MW1", "--seed", "4"]));
    assert_ne!(a, b);
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[magnet]\ninner_radius = \"60 mm\"\n").unwrap();
    let out = ionfield(&["--config", bad.to_str().unwrap(), "transitions"]);
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(&bad, "[magnet]\nradius = \"20 mm\"\n").unwrap();
    assert_eq!(ionfield(&["--config", bad.to_str().unwrap(), "transitions"]).status.code(), Some(2));

    assert_eq!(ionfield(&["--config", "/nonexistent/x.toml", "transitions"]).status.code(), Some(2));
    assert_eq!(ionfield(&["field-map", "--step", "0 mm"]).status.code(), Some(2));
    assert_eq!(ionfield(&["field-map", "--range", "2 kg"]).status.code(), Some(2));
    assert_eq!(ionfield(&["stabilize-sim", "--interval", "200 s"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let out = ionfield(&["clock-field", "--transition", "MW0"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}
