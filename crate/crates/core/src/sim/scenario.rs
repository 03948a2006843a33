//! Scenario files: TOML with a `schema_version` field, validated into a
//! [`Scenario`]. Dotted-path overrides are applied to the parsed document
//! before deserialisation, so anything settable in the file is settable
//! from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::BehaviorParams;
use crate::dynamics::{ControlLimits, VehicleGeometry, VehicleState};
use crate::nmpc::NmpcParams;
use crate::riskmap::RiskParams;
use crate::road::RoadModel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("bad override `{0}`: expected key.path=value")]
    Override(String),
}

impl ScenarioError {
    fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        ScenarioError::Invalid { field: field.into(), message: message.into() }
    }

    /// Offending field path for validation errors.
    pub fn field(&self) -> Option<&str> {
        match self {
            ScenarioError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec {
    pub lane_count: usize,
    pub lane_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centerline: Option<Vec<[f64; 2]>>,
}

impl RoadSpec {
    pub fn model(&self) -> RoadModel {
        let mut road = RoadModel::straight(self.lane_count, self.lane_width);
        if let Some(c) = &self.centerline {
            road.centerline = c.clone();
        }
        road
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoSpec {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub psi: f64,
    #[serde(default)]
    pub v: f64,
    #[serde(default)]
    pub geometry: VehicleGeometry,
    #[serde(default)]
    pub limits: ControlLimits,
    /// First-order steering lag time constant (s); zero disables it.
    #[serde(default)]
    pub steering_lag: f64,
}

impl EgoSpec {
    pub fn state(&self) -> VehicleState {
        VehicleState::new(self.x, self.y, self.psi, self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Forward,
    Oncoming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    pub id: String,
    pub lane: usize,
    /// Initial station along the road (m).
    pub s0: f64,
    #[serde(default)]
    pub direction: Direction,
    /// `[t, v]` breakpoints, linearly interpolated and held past the ends.
    pub speed_profile: Vec<[f64; 2]>,
    #[serde(default)]
    pub geometry: VehicleGeometry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    TriggerOvertake,
    TriggerAbort,
    SpawnOncoming { speed: f64, gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSpec {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub behavior: BehaviorParams,
    pub risk: RiskParams,
    pub nmpc: NmpcParams,
    /// Samples per steering-extreme trail of the reachable polygon.
    pub reach_samples: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            behavior: BehaviorParams::default(),
            risk: RiskParams::default(),
            nmpc: NmpcParams::default(),
            reach_samples: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub duration: f64,
    #[serde(default = "default_plant_dt")]
    pub plant_dt: f64,
    #[serde(default = "default_planner_period")]
    pub planner_period: f64,
    #[serde(default)]
    pub seed: u64,
    pub road: RoadSpec,
    pub ego: EgoSpec,
    #[serde(default)]
    pub traffic: Vec<ActorSpec>,
    #[serde(default)]
    pub events: Vec<EventSpec>,
    #[serde(default)]
    pub planner: PlannerConfig,
}

fn default_plant_dt() -> f64 {
    0.05
}

fn default_planner_period() -> f64 {
    0.1
}

fn positive(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::invalid(field, format!("must be positive, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(ScenarioError::invalid(field, format!("must be non-negative, got {v}")))
    }
}

fn ordered(field: &str, lo: f64, hi: f64) -> Result<(), ScenarioError> {
    if lo.is_finite() && hi.is_finite() && lo < hi {
        Ok(())
    } else {
        Err(ScenarioError::invalid(field, format!("need min < max, got {lo} and {hi}")))
    }
}

fn check_geometry(prefix: &str, g: &VehicleGeometry) -> Result<(), ScenarioError> {
    positive(&format!("{prefix}.l_f"), g.l_f)?;
    positive(&format!("{prefix}.l_r"), g.l_r)?;
    positive(&format!("{prefix}.length"), g.length)?;
    positive(&format!("{prefix}.width"), g.width)
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        Self::from_toml_with_overrides(text, &[])
    }

    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ScenarioError> {
        let mut doc: toml::Value = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let scenario: Scenario = doc.try_into().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    /// Number of plant steps per planner period.
    pub fn substeps(&self) -> usize {
        (self.planner_period / self.plant_dt).round() as usize
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::invalid(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        positive("duration", self.duration)?;
        positive("plant_dt", self.plant_dt)?;
        positive("planner_period", self.planner_period)?;
        let ratio = self.planner_period / self.plant_dt;
        if ratio < 0.5 || (ratio - ratio.round()).abs() > 1e-9 {
            return Err(ScenarioError::invalid("planner_period", "must be a whole multiple of plant_dt"));
        }

        if self.road.lane_count == 0 {
            return Err(ScenarioError::invalid("road.lane_count", "must be at least 1"));
        }
        positive("road.lane_width", self.road.lane_width)?;
        if let Some(c) = &self.road.centerline {
            if c.len() < 2 {
                return Err(ScenarioError::invalid("road.centerline", "needs at least two vertices"));
            }
            if c.windows(2).any(|w| w[0] == w[1]) {
                return Err(ScenarioError::invalid("road.centerline", "repeated vertex"));
            }
        }

        for (f, v) in [("ego.x", self.ego.x), ("ego.y", self.ego.y), ("ego.psi", self.ego.psi)] {
            if !v.is_finite() {
                return Err(ScenarioError::invalid(f, "must be finite"));
            }
        }
        non_negative("ego.v", self.ego.v)?;
        non_negative("ego.steering_lag", self.ego.steering_lag)?;
        check_geometry("ego.geometry", &self.ego.geometry)?;
        let l = &self.ego.limits;
        ordered("ego.limits.a_min", l.a_min, l.a_max)?;
        ordered("ego.limits.delta_min", l.delta_min, l.delta_max)?;

        for (i, a) in self.traffic.iter().enumerate() {
            let p = format!("traffic[{i}]");
            if a.id.is_empty() {
                return Err(ScenarioError::invalid(format!("{p}.id"), "must not be empty"));
            }
            if self.traffic[..i].iter().any(|b| b.id == a.id) {
                return Err(ScenarioError::invalid(format!("{p}.id"), format!("duplicate id `{}`", a.id)));
            }
            if a.lane >= self.road.lane_count {
                return Err(ScenarioError::invalid(format!("{p}.lane"), "no such lane"));
            }
            if !a.s0.is_finite() {
                return Err(ScenarioError::invalid(format!("{p}.s0"), "must be finite"));
            }
            if a.speed_profile.is_empty() {
                return Err(ScenarioError::invalid(format!("{p}.speed_profile"), "needs at least one point"));
            }
            for (k, pt) in a.speed_profile.iter().enumerate() {
                non_negative(&format!("{p}.speed_profile[{k}]"), pt[1])?;
                if !pt[0].is_finite() || (k > 0 && pt[0] <= a.speed_profile[k - 1][0]) {
                    return Err(ScenarioError::invalid(format!("{p}.speed_profile[{k}]"), "times must increase"));
                }
            }
            check_geometry(&format!("{p}.geometry"), &a.geometry)?;
        }

        for (i, e) in self.events.iter().enumerate() {
            non_negative(&format!("events[{i}].t"), e.t)?;
            if let EventKind::SpawnOncoming { speed, gap } = e.kind {
                positive(&format!("events[{i}].speed"), speed)?;
                positive(&format!("events[{i}].gap"), gap)?;
                if self.planner.behavior.ego_lane + 1 >= self.road.lane_count {
                    return Err(ScenarioError::invalid(format!("events[{i}].kind"), "no adjacent lane to spawn into"));
                }
            }
        }

        let b = &self.planner.behavior;
        if b.ego_lane >= self.road.lane_count {
            return Err(ScenarioError::invalid("planner.behavior.ego_lane", "no such lane"));
        }
        non_negative("planner.behavior.v_des", b.v_des)?;
        positive("planner.behavior.v_max", b.v_max)?;
        positive("planner.behavior.corridor_step", b.corridor_step)?;
        positive("planner.behavior.ttc_abort", b.ttc_abort)?;
        let r = &self.planner.risk;
        positive("planner.risk.resolution", r.resolution)?;
        positive("planner.risk.sensing_radius", r.sensing_radius)?;
        positive("planner.risk.threshold", r.threshold)?;
        let n = &self.planner.nmpc;
        if n.horizon == 0 {
            return Err(ScenarioError::invalid("planner.nmpc.horizon", "must be at least 1"));
        }
        positive("planner.nmpc.horizon_time", n.horizon_time)?;
        if n.stage_q.is_empty() {
            return Err(ScenarioError::invalid("planner.nmpc.stage_q", "needs at least one entry"));
        }
        if n.stage_r.is_empty() {
            return Err(ScenarioError::invalid("planner.nmpc.stage_r", "needs at least one entry"));
        }
        if n.stage_r.iter().flatten().any(|&w| w.is_nan() || w <= 0.0) {
            return Err(ScenarioError::invalid("planner.nmpc.stage_r", "control weights must be positive"));
        }
        if n.ellipse_exponent < 2 || n.ellipse_exponent % 2 != 0 {
            return Err(ScenarioError::invalid("planner.nmpc.ellipse_exponent", "must be an even integer >= 2"));
        }
        positive("planner.nmpc.inflation", n.inflation)?;
        ordered("planner.nmpc.v_min", n.v_min, n.v_max)?;
        if self.planner.reach_samples == 0 {
            return Err(ScenarioError::invalid("planner.reach_samples", "must be at least 1"));
        }
        Ok(())
    }
}

fn parse_value(raw: &str) -> toml::Value {
    // Reuse the TOML value grammar; anything that does not parse is a string.
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies `a.b.c=value` to a parsed document, creating tables as needed.
/// `traffic.0.s0=30` indexes into arrays.
pub fn apply_override(doc: &mut toml::Value, spec: &str) -> Result<(), ScenarioError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ScenarioError::Override(spec.to_string()))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ScenarioError::Override(spec.to_string()));
    }
    let mut node = doc;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        node = match node {
            toml::Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), parse_value(raw.trim()));
                    return Ok(());
                }
                t.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()))
            }
            toml::Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| ScenarioError::Override(spec.to_string()))?;
                let slot = a.get_mut(idx).ok_or_else(|| ScenarioError::Override(spec.to_string()))?;
                if last {
                    *slot = parse_value(raw.trim());
                    return Ok(());
                }
                slot
            }
            _ => return Err(ScenarioError::Override(spec.to_string())),
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
duration = 5.0
[road]
lane_count = 2
lane_width = 4.0
[ego]
x = 0.0
y = 0.0
"#;

    #[test]
    fn minimal_file_gets_defaults() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(s.plant_dt, 0.05);
        assert_eq!(s.substeps(), 2);
        assert_eq!(s.planner.nmpc.horizon, 10);
        assert_eq!(s.ego.geometry, VehicleGeometry::default());
    }

    #[test]
    fn zero_lane_width_names_field() {
        let err = Scenario::from_toml_with_overrides(MINIMAL, &["road.lane_width=0".into()]).unwrap_err();
        assert_eq!(err.field(), Some("road.lane_width"));
    }

    #[test]
    fn overrides_reach_nested_tables() {
        let s = Scenario::from_toml_with_overrides(
            MINIMAL,
            &["planner.behavior.v_des=15".into(), "name=sweep".into(), "planner.behavior.auto_overtake=false".into()],
        )
        .unwrap();
        assert_eq!(s.planner.behavior.v_des, 15.0);
        assert!(!s.planner.behavior.auto_overtake);
        assert_eq!(s.name, "sweep");
    }

    #[test]
    fn round_trip_through_toml() {
        let text = format!(
            "{MINIMAL}\n[[traffic]]\nid = \"lv\"\nlane = 0\ns0 = 25.0\ndirection = \"forward\"\nspeed_profile = [[0.0, 5.0]]\n\n[[events]]\nt = 3.0\nkind = \"spawn_oncoming\"\nspeed = 8.0\ngap = 60.0\n"
        );
        let s = Scenario::from_toml_str(&text).unwrap();
        assert_eq!(s.events[0].kind, EventKind::SpawnOncoming { speed: 8.0, gap: 60.0 });
        let again = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn bad_planner_period() {
        let err = Scenario::from_toml_with_overrides(MINIMAL, &["planner_period=0.075".into()]).unwrap_err();
        assert_eq!(err.field(), Some("planner_period"));
    }
}
