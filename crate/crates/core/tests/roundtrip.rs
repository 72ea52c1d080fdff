use ctrcac::environments::{run, run_from, ClosedLoop, Environment, Mode, SimConfig, TargetPerturbations};
use ctrcac::harness::{learned_gains, GainsDocument, ScenarioFile};
use nalgebra::Vector3;

#[test]
fn learn_save_load_fly_matches_frozen_continuation() {
    let scenario = ScenarioFile::waypoint().resolve().unwrap();
    let learned = run(&scenario.sim, &scenario.reference, 0.5).unwrap();

    let doc = learned_gains(&scenario, &learned);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gains.json");
    doc.save(&path).unwrap();
    let loaded = GainsDocument::load(&path).unwrap();
    assert_eq!(loaded.to_array(), learned.final_gains);

    let continue_with = |gains| {
        let cfg = SimConfig { mode: Mode::Fly, gains, ..scenario.sim.clone() };
        let cl = ClosedLoop::new(&cfg, &scenario.reference).unwrap();
        run_from(&cl, learned.final_state.clone().frozen(), 1.0).unwrap().telemetry.to_csv()
    };
    let direct = continue_with(learned.final_gains);
    let via_file = continue_with(loaded.to_array());
    assert_eq!(direct, via_file);
    assert!(direct.lines().nth(1).unwrap().starts_with("0.5,"));
}

#[test]
fn fly_from_rest_is_deterministic_on_target() {
    let gains = GainsDocument::builtin("table2_waypoint").unwrap().to_array();
    let mut cfg = SimConfig::flying(
        ctrcac::rigid_body::VehicleParams::x500(),
        gains,
        Environment::Target(TargetPerturbations::default()),
    );
    cfg.seed = 5;
    let r = |_t: f64| Vector3::new(1.0, 1.0, 1.0);
    let a = run(&cfg, &r, 3.0).unwrap();
    let b = run(&cfg, &r, 3.0).unwrap();
    assert_eq!(a.telemetry.to_csv().as_bytes(), b.telemetry.to_csv().as_bytes());
}
