use std::path::PathBuf;
use tvcflight_core::config::RunConfig;
use tvcflight_core::control::{tune_gains, TuningTarget};
use tvcflight_core::robot::{builtin_posture, geometry_from_posture, FanLimits, GeometryParams};
use tvcflight_core::sim::run_scenario;
use tvcflight_core::trim::hover_trim;

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

#[test]
fn shipped_gains_match_the_tuning_procedure() {
    let cfg = RunConfig::from_path(&shipped("default.toml")).unwrap();
    let geo =
        geometry_from_posture(&builtin_posture("P1").unwrap(), &GeometryParams::default()).unwrap();
    let trim = hover_trim(&geo, &FanLimits::default(), true).unwrap();
    let tuned = tune_gains(&geo, &trim, &TuningTarget::default());
    assert_eq!(cfg.scenario.gains.as_ref(), Some(&tuned));
}

#[test]
fn shipped_default_equals_builtin_default() {
    let file = RunConfig::from_path(&shipped("default.toml")).unwrap();
    let mut builtin = RunConfig::default();
    builtin.scenario.gains = file.scenario.gains.clone();
    // The rate limit is written in degrees per second.
    let rate = &mut builtin.scenario.limits.foot_pitch_rate_max;
    assert!((file.scenario.limits.foot_pitch_rate_max - *rate).abs() < 1e-12);
    *rate = file.scenario.limits.foot_pitch_rate_max;
    assert_eq!(file, builtin);

    let a = run_scenario(&file.scenario).unwrap();
    let b = run_scenario(&RunConfig::default().scenario).unwrap();
    assert_eq!(a.events.max_abs_pitch_deg, b.events.max_abs_pitch_deg);
}
