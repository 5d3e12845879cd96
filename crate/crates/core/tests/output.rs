use dubins_core::emit::{csv_string, emit, emit_run, emit_sweep, Format, CSV_HEADER};
use dubins_core::model::ControllerKind;
use dubins_core::reference::PathSpec;
use dubins_core::scenario::{ObstacleSampler, ScenarioConfig};
use dubins_core::sim::run_scenario;
use dubins_core::sweep::run_sweep;
use dubins_core::Error;

fn cfg(kind: ControllerKind) -> ScenarioConfig {
    ScenarioConfig::new(
        kind,
        PathSpec::Polyline {
            waypoints: vec![[0.0, 0.0], [20.0, 0.0]],
            speed: 1.0,
            corner_radius: 0.5,
        },
    )
}

#[test]
fn csv_layout() {
    let r = run_scenario(&cfg(ControllerKind::Heol)).unwrap();
    let text = csv_string(&r);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2002);
    assert_eq!(lines[0], "t,x,y,x_meas,y_meas,x_ref,y_ref,u1,u2,nu1,nu2,Fhat_x,Fhat_y,p");
    assert_eq!(lines[0], CSV_HEADER);
    for l in &lines[1..] {
        let cells: Vec<&str> = l.split(',').collect();
        assert_eq!(cells.len(), 14);
        for c in cells {
            assert!(!c.is_empty());
            let digits = c.split('e').next().unwrap().chars().filter(|ch| ch.is_ascii_digit()).count();
            assert!(digits <= 10, "{c}");
            c.parse::<f64>().unwrap();
        }
    }
    assert!(lines[1].starts_with("0,0,0,0,0,0,0,1,0,1,0,"));
}

#[test]
fn mfpc_leaves_auxiliary_columns_empty() {
    let r = run_scenario(&cfg(ControllerKind::Mfpc)).unwrap();
    for l in csv_string(&r).lines().skip(1) {
        let cells: Vec<&str> = l.split(',').collect();
        assert_eq!((cells[9], cells[10]), ("", ""));
        assert!(!cells[8].is_empty());
    }
}

#[test]
fn values_round_trip_to_nine_digits() {
    let mut c = cfg(ControllerKind::Heol);
    c.noise.enabled = true;
    c.seed = 8;
    let r = run_scenario(&c).unwrap();
    let text = csv_string(&r);
    for (row, line) in r.rows.iter().zip(text.lines().skip(1)) {
        let x_meas: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!((x_meas - row.x_meas).abs() <= 1e-8 * row.x_meas.abs().max(1e-300));
    }
}

#[test]
fn re_emitting_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let r = run_scenario(&cfg(ControllerKind::Mfpc)).unwrap();
    let p1 = emit(&r, Format::Csv, dir.path(), "one").unwrap();
    let p2 = emit(&r, Format::Csv, dir.path(), "two").unwrap();
    assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    let paths = emit_run(&r, dir.path(), "run").unwrap();
    let summary = std::fs::read_to_string(&paths[1]).unwrap();
    assert!(summary.contains("rms_tracking = "));
    assert!(summary.contains("status: completed"));
}

#[test]
fn unwritable_destination_reports_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let r = run_scenario(&cfg(ControllerKind::Heol)).unwrap();
    let err = emit(&r, Format::Csv, &blocker.join("sub"), "run").unwrap_err();
    match err {
        Error::Io { path, .. } => assert!(path.starts_with(&blocker)),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn config_defaults_and_schema() {
    let text = r#"{"controller": "heol", "path": {"kind": "polyline", "waypoints": [[0,0],[1,0]], "speed": 1}}"#;
    let c = ScenarioConfig::from_json(text).unwrap();
    assert_eq!((c.version, c.dt, c.duration), (1, 0.01, 20.0));
    assert_eq!(c.noise.sigma, 0.1);
    assert_eq!(c.perturbation.switch_interval, 2.0);
    let back = ScenarioConfig::from_json(&c.to_json()).unwrap();
    assert_eq!(back, c);

    for bad in [
        r#"{"version": 2, "controller": "heol", "path": {"kind": "polyline", "waypoints": [[0,0],[1,0]], "speed": 1}}"#,
        r#"{"controller": "heol", "dt": 0.03, "path": {"kind": "polyline", "waypoints": [[0,0],[1,0]], "speed": 1}}"#,
        r#"{"controller": "pid", "path": {"kind": "polyline", "waypoints": [[0,0],[1,0]], "speed": 1}}"#,
        r#"{"controller": "heol", "colour": 1, "path": {"kind": "polyline", "waypoints": [[0,0],[1,0]], "speed": 1}}"#,
        r#"{"controller": "heol", "path": {"kind": "polyline", "waypoints": [[0,0]], "speed": 1}}"#,
    ] {
        assert!(matches!(ScenarioConfig::from_json(bad), Err(Error::Config(_))), "{bad}");
    }
}

fn sweep_cfg(kind: ControllerKind) -> ScenarioConfig {
    let mut c = cfg(kind);
    c.noise.enabled = true;
    c.avoidance.lead = 1.5;
    c.sweep.obstacles = Some(ObstacleSampler::default());
    c
}

#[test]
fn single_run_sweep_matches_the_run() {
    let base = sweep_cfg(ControllerKind::Heol);
    let report = run_sweep(&base, 1, 42).unwrap();
    let run = run_scenario(&base.variant(report.runs[0].seed).unwrap()).unwrap();
    assert_eq!(report.runs[0].metrics, run.metrics);
    for (name, value) in run.metrics.scalars() {
        let s = report.stat(name).unwrap();
        assert_eq!((s.min, s.median, s.max), (value, value, value), "{name}");
    }
}

#[test]
fn sweeps_are_reproducible_and_varied() {
    let base = sweep_cfg(ControllerKind::Mfpc);
    let a = run_sweep(&base, 8, 3).unwrap();
    let b = run_sweep(&base, 8, 3).unwrap();
    assert_eq!(a, b);
    assert!(a.runs.iter().enumerate().all(|(i, r)| r.index == i));
    let c = run_sweep(&base, 8, 4).unwrap();
    assert_ne!(a.runs[0].metrics, c.runs[0].metrics);
    let v0 = base.variant(a.runs[0].seed).unwrap();
    let v1 = base.variant(a.runs[1].seed).unwrap();
    assert_ne!(v0.obstacles, v1.obstacles);
    assert_ne!(v0.seed, v1.seed);
}

#[test]
fn aborted_runs_are_counted_not_fatal() {
    let mut base = cfg(ControllerKind::Heol);
    base.sweep.obstacles = Some(ObstacleSampler {
        count: 1,
        radius: [0.5, 0.5],
        t_range: [5.0, 5.0],
        lateral_fraction: 0.0,
        t_appear: 5.0,
    });
    let report = run_sweep(&base, 3, 1).unwrap();
    assert_eq!(report.aborted, 3);
    assert!(report.stats.is_empty());
    assert!(run_sweep(&base, 0, 1).is_err());
}

#[test]
fn sweep_reports_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_sweep(&sweep_cfg(ControllerKind::Heol), 4, 9).unwrap();
    let paths = emit_sweep(&report, dir.path()).unwrap();
    let runs = std::fs::read_to_string(&paths[1]).unwrap();
    assert_eq!(runs.lines().count(), 5);
    assert!(std::fs::read_to_string(&paths[0]).unwrap().contains("safety_violations: 0"));
}
