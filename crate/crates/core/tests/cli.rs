use std::path::Path;
use std::process::Command;

fn ctrcac(args: &[&str], cwd: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ctrcac")).args(args).current_dir(cwd).output().unwrap()
}

#[test]
fn fly_bundled_gains_on_target() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctrcac(&["fly", "--gains", "table2_waypoint.json", "--env", "target", "--duration", "20", "--out", "run"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("run");
    let csv = std::fs::read_to_string(run.join("telemetry.csv")).unwrap();
    assert!(csv.starts_with("t,r1,r2,r3,phi,theta,psi,f,tau1,tau2,tau3,z1,"));
    assert_eq!(csv.lines().count(), 1 + 2000);
    let resolved = std::fs::read_to_string(run.join("config.resolved.json")).unwrap();
    assert!(resolved.contains("\"kind\": \"target\""));
}

#[test]
fn validation_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctrcac(&["fly", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gains"));

    std::fs::write(dir.path().join("bad.json"), r#"{"trajectory":{"kind":"waypoint"},"integrator":{"dt":-1}}"#).unwrap();
    let out = ctrcac(&["learn", "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    std::fs::write(dir.path().join("typo.json"), r#"{"trajectory":{"kind":"waypoint"},"seeed":1}"#).unwrap();
    let out = ctrcac(&["learn", "--config", "typo.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seeed"));
}

#[test]
fn oracle_check_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctrcac(&["oracle-check", "--duration", "2", "--out", "oc"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(dir.path().join("oc/oracle_check.json").exists());
}

#[test]
fn learn_writes_gains_with_positive_vertical_entries() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("waypoint.json"), r#"{"trajectory":{"kind":"waypoint"}}"#).unwrap();
    let out = ctrcac(&["learn", "--config", "waypoint.json", "--out", "l"], dir.path());
    let gains_path = dir.path().join("l/gains.json");
    assert!(out.status.success() || !gains_path.exists());
    let doc = ctrcac::harness::GainsDocument::load(&gains_path).expect("learn wrote a gains file");
    let r3 = doc.outer.r3;
    assert!(doc.provenance.scenario_hash.is_some());
    for v in [r3.kp1, r3.kp2, r3.ki] {
        assert!(v.is_finite() && v > 0.0, "outer r3 gains {r3:?}");
    }
}

#[test]
fn sweep_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("sweep.json"),
        r#"{"base":{"trajectory":{"kind":"waypoint"},"mode":"fly","gains_file":"table2_helix.json","duration":1,
            "environment":{"kind":"target"}},"grid":{"environment.actuator_tau":[0.01,0.03]},"seeds":[1,2,3]}"#,
    )
    .unwrap();
    let out = ctrcac(&["sweep", "--config", "sweep.json", "--out", "s"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("s/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
}
