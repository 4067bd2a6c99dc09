use std::fs;
use std::path::Path;
use std::process::Command;

use uav_secrecy::{Direction, Scenario};
use uav_secrecy_cli::config::{Layers, RunConfig};
use uav_secrecy_cli::error::{ConfigParseError, RunError};
use uav_secrecy_cli::run::{execute, resolve, Invocation, MANIFEST_FILE};

const BIN: &str = env!("CARGO_BIN_EXE_uav-secrecy");

const FULL: &str = "\
direction = u2g
ground_x_m = 0
ground_y_m = 0
eaves_x_m = 200
eaves_y_m = 0
altitude_m = 100
start_x_m = 100   # trailing comment
start_y_m = 600
final_x_m = 100
final_y_m = -600
v_max = 3
ref_snr_db = 80
flight_period_s = 500
slot_len_s = 5
avg_power_dbm = -5
";

fn preset(name: &str) -> Invocation {
    Invocation { preset: Some(name.into()), ..Invocation::default() }
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.conf");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn presets_reproduce_reference_scenarios() {
    let cfg = resolve(&preset("case1-u2g")).unwrap();
    let (s, rounded) = cfg.scenario();
    assert!(!rounded);
    assert_eq!(s, Scenario::case1(Direction::U2G, 600.0, -5.0));

    let cfg = resolve(&preset("case2-g2u")).unwrap();
    assert_eq!(cfg.scenario().0, Scenario::case2(Direction::G2U, 600.0, -5.0));
}

#[test]
fn unknown_preset_is_rejected() {
    let err = resolve(&preset("case3")).unwrap_err();
    assert!(matches!(err, ConfigParseError::UnknownPreset(_)));
}

#[test]
fn missing_key_is_named() {
    let text: String = FULL.lines().filter(|l| !l.starts_with("v_max")).map(|l| format!("{l}\n")).collect();
    let mut layers = Layers::new();
    layers.merge_text(&text, "run.conf").unwrap();
    let err = RunConfig::from_layers(&layers).unwrap_err();
    assert!(matches!(err, ConfigParseError::MissingKey { key: "v_max" }));
    assert!(err.to_string().contains("v_max"));
}

#[test]
fn unknown_key_reports_position() {
    let mut layers = Layers::new();
    let err = layers.merge_text("v_max = 3\n  vmax = 4\n", "run.conf").unwrap_err();
    match &err {
        ConfigParseError::UnknownKey { line, column, key, .. } => {
            assert_eq!((*line, *column, key.as_str()), (2, 3, "vmax"));
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.to_string().starts_with("run.conf:2:3:"));
}

#[test]
fn duplicate_key_is_rejected() {
    let mut layers = Layers::new();
    let err = layers.merge_text("v_max = 3\nv_max = 4\n", "run.conf").unwrap_err();
    assert!(matches!(err, ConfigParseError::DuplicateKey { line: 2, first: 1, .. }));
}

#[test]
fn invalid_value_names_key_and_origin() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), &FULL.replace("v_max = 3", "v_max = fast"));
    let inv = Invocation { config_path: Some(path), ..Invocation::default() };
    let err = resolve(&inv).unwrap_err();
    assert!(matches!(err, ConfigParseError::InvalidValue { key: "v_max", line: 11, .. }), "{err}");
}

#[test]
fn precedence_is_preset_file_set_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "flight_period_s = 500\nseed = 3\n");
    let inv = Invocation {
        preset: Some("case1-u2g".into()),
        config_path: Some(path),
        overrides: vec!["seed=7".into(), "avg_power_dbm = 10".into()],
        seed: Some(11),
        desk_scale: true,
        ..Invocation::default()
    };
    let cfg = resolve(&inv).unwrap();
    assert_eq!(cfg.flight_period_s, 500.0);
    assert_eq!(cfg.avg_power_dbm, 10.0);
    assert_eq!(cfg.seed, 11);
    assert_eq!(cfg.slot_len_s, 5.0);
}

#[test]
fn set_overrides_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), FULL);
    let inv = Invocation {
        config_path: Some(path),
        overrides: vec!["v_max=4".into()],
        ..Invocation::default()
    };
    assert_eq!(resolve(&inv).unwrap().v_max, 4.0);
}

#[test]
fn scheme_list_is_parsed() {
    let inv = Invocation {
        schemes: Some("bet-without-pc, T-OPT-With-PC".into()),
        ..preset("case1-u2g")
    };
    let names: Vec<_> = resolve(&inv).unwrap().schemes.iter().map(|s| s.name()).collect();
    assert_eq!(names, ["BET-Without-PC", "T-OPT-With-PC"]);
}

fn desk_run(out: &Path) -> Invocation {
    Invocation {
        out_dir: Some(out.to_path_buf()),
        desk_scale: true,
        overrides: vec![
            "sweep_values = 450, 600".into(),
            "mc_samples = 200".into(),
            "flight_period_s = 450".into(),
        ],
        ..preset("case1-g2u")
    }
}

#[test]
fn outputs_have_exact_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = resolve(&desk_run(dir.path())).unwrap();
    let summary = execute(&cfg).unwrap();
    assert_eq!(summary.base.len(), 4);
    assert_eq!(summary.sweep.as_ref().unwrap().points.len(), 8);

    let first_line = |p: &Path| fs::read_to_string(p).unwrap().lines().next().unwrap().to_string();
    let scheme_dir = dir.path().join("T-OPT-With-PC");
    assert_eq!(first_line(&scheme_dir.join("trajectory.csv")), "slot,time_s,x_m,y_m");
    assert_eq!(first_line(&scheme_dir.join("power.csv")), "slot,time_s,power_W,d_ug_m,d_ue_m");
    assert_eq!(
        first_line(&dir.path().join("sweep.csv")),
        "axis_name,axis_value,scheme,secrecy_bps_hz,mc_secrecy_bps_hz,mc_stderr,iterations,converged"
    );
    let traj = fs::read_to_string(scheme_dir.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 91);
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 8);
    for row in sweep.lines().skip(1) {
        assert_eq!(row.split(',').count(), 8);
        assert!(!row.split(',').nth(4).unwrap().is_empty(), "G2U rows carry an MC estimate");
    }
}

#[test]
fn manifest_rerun_is_byte_identical() {
    let first = tempfile::tempdir().unwrap();
    let cfg = resolve(&desk_run(first.path())).unwrap();
    execute(&cfg).unwrap();

    let second = tempfile::tempdir().unwrap();
    let inv = Invocation {
        config_path: Some(first.path().join(MANIFEST_FILE)),
        out_dir: Some(second.path().to_path_buf()),
        ..Invocation::default()
    };
    let replay = resolve(&inv).unwrap();
    assert_eq!(RunConfig { out_dir: cfg.out_dir.clone(), ..replay.clone() }, cfg);
    execute(&replay).unwrap();

    let mut files = vec!["sweep.csv".to_string()];
    for s in &cfg.schemes {
        files.push(format!("{}/trajectory.csv", s.name()));
        files.push(format!("{}/power.csv", s.name()));
    }
    for f in files {
        let a = fs::read(first.path().join(&f)).unwrap();
        let b = fs::read(second.path().join(&f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
}

#[test]
fn infeasible_sweep_point_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let mut inv = desk_run(dir.path());
    inv.overrides.push("sweep_values = 300, 600, 350".into());
    let cfg = resolve(&inv).unwrap();
    let err = execute(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    match err {
        RunError::Validation(v) => assert_eq!(v.violations.len(), 2),
        other => panic!("unexpected {other}"),
    }
    assert!(!dir.path().join("sweep.csv").exists());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["--preset", "case1-u2g", "--desk-scale", "--set", "flight_period_s=300", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid scenario"));

    let out = Command::new(BIN).args(["--preset", "case1-u2g", "--set", "bogus=1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = Command::new(BIN).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing required key"));
}

#[test]
fn binary_desk_run_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args([
            "--preset",
            "case2-u2g",
            "--desk-scale",
            "--set",
            "sweep_axis=avg_power",
            "--set",
            "sweep_values=-5,10",
            "--schemes",
            "T-OPT-With-PC,BET-With-PC",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 4);
    assert!(sweep.lines().nth(1).unwrap().starts_with("avg_power_dbm,"));
    assert!(dir.path().join("manifest.conf").exists());
    assert!(!dir.path().join("BET-Without-PC").exists());
}
