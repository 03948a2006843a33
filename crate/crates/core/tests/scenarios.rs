use std::path::PathBuf;

use overtake_core::sim::{Scenario, ScenarioError};

fn path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

#[test]
fn shipped_scenarios_validate() {
    for name in ["abort_retry.toml", "sweep.toml"] {
        let s = Scenario::load(&path(name), &[]).unwrap();
        s.validate().unwrap();
        assert_eq!(s.road.lane_width, 4.0);
    }
}

#[test]
fn missing_file_is_io_error() {
    let err = Scenario::load(&path("nope.toml"), &[]).unwrap_err();
    assert!(matches!(err, ScenarioError::Io { .. }));
}

#[test]
fn invalid_override_names_the_field() {
    let err = Scenario::load(&path("abort_retry.toml"), &["traffic.0.lane=7".into()]).unwrap_err();
    assert_eq!(err.field(), Some("traffic[0].lane"));
}

#[test]
fn toml_round_trip_preserves_scenario() {
    let s = Scenario::load(&path("abort_retry.toml"), &[]).unwrap();
    let again = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
    assert_eq!(s, again);
}
