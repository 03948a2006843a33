//! Maneuver state machine, per-maneuver reference targets and the
//! intermediate reference picked from the safe-and-reachable set.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{VehicleGeometry, VehicleState};
use crate::geometry::{ConvexPolygon, Point};
use crate::reachability::SafeReachableSet;
use crate::riskmap::{ObstacleVehicle, RiskField, SafeSet, SafetyTriangles};
use crate::road::RoadModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum ManeuverState {
    #[default]
    #[serde(rename = "L")]
    LaneKeep,
    #[serde(rename = "F")]
    Follow,
    #[serde(rename = "O")]
    Overtake,
    #[serde(rename = "A")]
    Abort,
}

impl ManeuverState {
    pub fn letter(&self) -> &'static str {
        match self {
            ManeuverState::LaneKeep => "L",
            ManeuverState::Follow => "F",
            ManeuverState::Overtake => "O",
            ManeuverState::Abort => "A",
        }
    }
}

impl fmt::Display for ManeuverState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.letter())
    }
}

/// The five input symbols of the state machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sigma {
    /// Lead vehicle detected within the follow distance.
    S1,
    /// Overtake requested or judged favourable.
    S2,
    /// Overtake completed.
    S3,
    /// Overtake must be aborted.
    S4,
    /// Abort completed, back in lane behind the lead vehicle.
    S5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventSource {
    Rule,
    Manual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub sigma: Sigma,
    pub source: EventSource,
}

impl TransitionEvent {
    pub fn rule(sigma: Sigma) -> Self {
        Self { sigma, source: EventSource::Rule }
    }

    pub fn manual(sigma: Sigma) -> Self {
        Self { sigma, source: EventSource::Manual }
    }
}

/// Operator request; only overtake (σ2) and abort (σ4) can be forced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManualRequest {
    Overtake,
    Abort,
}

impl ManualRequest {
    pub fn sigma(&self) -> Sigma {
        match self {
            ManualRequest::Overtake => Sigma::S2,
            ManualRequest::Abort => Sigma::S4,
        }
    }
}

/// Total transition function; pairs not in the table leave the state as is.
pub fn transition(current: ManeuverState, event: TransitionEvent) -> ManeuverState {
    use ManeuverState::*;
    match (current, event.sigma) {
        (LaneKeep, Sigma::S1) => Follow,
        (Follow, Sigma::S2) => Overtake,
        (Overtake, Sigma::S3) => LaneKeep,
        (Overtake, Sigma::S4) => Abort,
        (Abort, Sigma::S5) => Follow,
        (s, _) => s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BehaviorParams {
    /// Cruise speed in lane keeping (m/s).
    pub v_des: f64,
    pub v_max: f64,
    pub d_lanekeep: f64,
    pub d_follow_trigger: f64,
    pub d_safe_overtake_zone: f64,
    pub overtake_speed_margin: f64,
    pub abort_speed_margin: f64,
    pub ttc_abort: f64,
    /// Range within which oncoming traffic feeds the time-to-collision rule.
    pub oncoming_detection_range: f64,
    /// Fire σ2 from the corridor rule, not only on request.
    pub auto_overtake: bool,
    /// Lane the ego drives in and returns to.
    pub ego_lane: usize,
    /// Spacing of corridor samples (m).
    pub corridor_step: f64,
}

impl Default for BehaviorParams {
    fn default() -> Self {
        Self {
            v_des: 10.0,
            v_max: 25.0,
            d_lanekeep: 15.0,
            d_follow_trigger: 15.0,
            d_safe_overtake_zone: 5.0,
            overtake_speed_margin: 5.0,
            abort_speed_margin: 2.0,
            ttc_abort: 4.0,
            oncoming_detection_range: 100.0,
            auto_overtake: true,
            ego_lane: 0,
            corridor_step: 0.5,
        }
    }
}

impl BehaviorParams {
    pub fn overtake_speed(&self, v_lv: f64) -> f64 {
        self.v_max.min(v_lv + self.overtake_speed_margin)
    }

    pub fn abort_speed(&self, v_lv: f64) -> f64 {
        (v_lv - self.abort_speed_margin).max(0.0)
    }
}

/// Tracked lead vehicle with the triangles the risk map uses for it.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadVehicle {
    pub vehicle: ObstacleVehicle,
    pub triangles: SafetyTriangles,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTarget {
    pub p_ref: [f64; 2],
    pub v_ref: f64,
    pub psi_ref: f64,
}

impl ReferenceTarget {
    pub fn point(&self) -> Point {
        Point::new(self.p_ref[0], self.p_ref[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntermediateReference {
    pub p_interim: [f64; 2],
    pub psi_ref: f64,
    pub v_ref: f64,
    /// Set when the safe-and-reachable set was empty and an emergency stop
    /// target was substituted.
    pub emergency: bool,
}

impl IntermediateReference {
    pub fn point(&self) -> Point {
        Point::new(self.p_interim[0], self.p_interim[1])
    }

    /// `[x, y, psi, v]` reference for the trajectory optimiser.
    pub fn as_state(&self) -> VehicleState {
        VehicleState::new(self.p_interim[0], self.p_interim[1], self.psi_ref, self.v_ref)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BehaviorError {
    #[error("maneuver {0} needs a lead vehicle but none is tracked")]
    MissingLeadVehicle(ManeuverState),
}

/// Inputs for one round of event detection.
pub struct EventContext<'a> {
    pub ev: &'a VehicleState,
    pub ev_geom: &'a VehicleGeometry,
    pub state: ManeuverState,
    /// Nearest in-lane vehicle ahead while lane keeping, otherwise the
    /// vehicle being followed/overtaken.
    pub lv: Option<&'a LeadVehicle>,
    pub oncoming: &'a [ObstacleVehicle],
    pub manual: Option<ManualRequest>,
    pub road: &'a RoadModel,
    pub risk: &'a RiskField,
}

fn station(road: &RoadModel, p: &Point) -> f64 {
    road.project(p).s
}

/// Bumper-to-bumper gap from the ego to a vehicle ahead along the road.
pub fn longitudinal_gap(road: &RoadModel, ev: &VehicleState, ev_geom: &VehicleGeometry, other: &ObstacleVehicle) -> f64 {
    station(road, &other.state.position()) - 0.5 * other.geom.length
        - station(road, &ev.position())
        - 0.5 * ev_geom.length
}

/// Constant-velocity time to collision with an oncoming vehicle, measured
/// front bumper to front bumper along the road. Infinite when not closing.
pub fn time_to_collision(road: &RoadModel, ev: &VehicleState, ev_geom: &VehicleGeometry, onc: &ObstacleVehicle) -> f64 {
    let gap = longitudinal_gap(road, ev, ev_geom, onc);
    let heading = road.heading_at(station(road, &ev.position()));
    let closing = ev.v * (ev.psi - heading).cos() - onc.state.v * (onc.state.psi - heading).cos();
    if gap <= 0.0 || closing <= 0.0 {
        return f64::INFINITY;
    }
    gap / closing
}

/// Length of the adjacent-lane corridor that must be clear to start passing.
pub fn required_overtake_distance(ev: &VehicleState, road: &RoadModel, lv: &LeadVehicle, params: &BehaviorParams, sensing_radius: f64) -> f64 {
    let v_lv = lv.vehicle.state.v;
    let v_ot = params.overtake_speed(v_lv);
    let gap = station(road, &lv.triangles.front_vertex) + params.d_safe_overtake_zone - station(road, &ev.position());
    if v_ot <= v_lv {
        return sensing_radius;
    }
    (gap.max(0.0) * v_ot / (v_ot - v_lv)).min(sensing_radius)
}

fn corridor_clear(ctx: &EventContext<'_>, lv: &LeadVehicle, params: &BehaviorParams) -> bool {
    let road = ctx.road;
    let lane = params.ego_lane + 1;
    if lane >= road.lane_count {
        return false;
    }
    let radius = ctx.risk.params.sensing_radius;
    let length = required_overtake_distance(ctx.ev, road, lv, params, radius);
    let s0 = station(road, &ctx.ev.position());
    let n = (length / params.corridor_step).ceil() as usize;
    (0..=n).all(|k| {
        let s = s0 + (k as f64 * params.corridor_step).min(length);
        let p = road.lane_center(lane, s);
        (p - ctx.ev.position()).norm() > radius || ctx.risk.is_safe(&p)
    })
}

/// Evaluates the heuristic rules (and the optional operator request) into
/// events, manual ones first.
pub fn detect_events(ctx: &EventContext<'_>, params: &BehaviorParams) -> Vec<TransitionEvent> {
    use ManeuverState::*;
    let mut events = Vec::new();
    if let Some(m) = ctx.manual {
        events.push(TransitionEvent::manual(m.sigma()));
    }
    let road = ctx.road;
    let ev_s = station(road, &ctx.ev.position());

    if let Some(lv) = ctx.lv {
        let gap = longitudinal_gap(road, ctx.ev, ctx.ev_geom, &lv.vehicle);
        if gap >= 0.0 && gap <= params.d_follow_trigger {
            events.push(TransitionEvent::rule(Sigma::S1));
        }
        if ctx.state == Follow && params.auto_overtake && corridor_clear(ctx, lv, params) {
            events.push(TransitionEvent::rule(Sigma::S2));
        }
        let front_s = station(road, &lv.triangles.front_vertex);
        if ev_s > front_s + params.d_safe_overtake_zone {
            events.push(TransitionEvent::rule(Sigma::S3));
        }
        if ctx.state == Overtake && ev_s < front_s {
            let min_ttc = ctx
                .oncoming
                .iter()
                .map(|o| time_to_collision(road, ctx.ev, ctx.ev_geom, o))
                .fold(f64::INFINITY, f64::min);
            if min_ttc < params.ttc_abort {
                events.push(TransitionEvent::rule(Sigma::S4));
            }
        }
        if ctx.state == Abort {
            let (lo, hi) = road.lane_bounds(params.ego_lane);
            let body = ConvexPolygon::rectangle(ctx.ev.position(), ctx.ev.psi, ctx.ev_geom.length, ctx.ev_geom.width);
            let corners: Vec<_> = body.vertices.iter().map(|v| road.project(v)).collect();
            let in_lane = corners.iter().all(|f| f.d >= lo && f.d <= hi);
            let rear_s = station(road, &lv.triangles.rear_vertex);
            let behind = corners.iter().all(|f| f.s <= rear_s);
            if in_lane && behind {
                events.push(TransitionEvent::rule(Sigma::S5));
            }
        }
    }
    events
}

/// Reference pose and speed for a maneuver.
pub fn reference_for(
    state: ManeuverState,
    ev: &VehicleState,
    lv: Option<&LeadVehicle>,
    road: &RoadModel,
    params: &BehaviorParams,
) -> Result<ReferenceTarget, BehaviorError> {
    let lane = params.ego_lane;
    let target = |s: f64, v_ref: f64| {
        let p = road.lane_center(lane, s);
        ReferenceTarget { p_ref: [p.x, p.y], v_ref, psi_ref: road.heading_at(s) }
    };
    if state == ManeuverState::LaneKeep {
        return Ok(target(station(road, &ev.position()) + params.d_lanekeep, params.v_des));
    }
    let lv = lv.ok_or(BehaviorError::MissingLeadVehicle(state))?;
    let v_lv = lv.vehicle.state.v;
    let rear_s = station(road, &lv.triangles.rear_vertex);
    Ok(match state {
        ManeuverState::Follow => target(rear_s, v_lv),
        ManeuverState::Overtake => target(
            station(road, &lv.triangles.front_vertex) + params.d_safe_overtake_zone,
            params.overtake_speed(v_lv),
        ),
        ManeuverState::Abort => target(rear_s, params.abort_speed(v_lv)),
        ManeuverState::LaneKeep => unreachable!(),
    })
}

fn nearest_point(points: &[Point], target: &Point, road: &RoadModel, lane: usize) -> Option<Point> {
    let lane_d = road.lane_offset(lane);
    let mut best: Option<(f64, f64, Point)> = None;
    for p in points {
        let dist = (p - target).norm();
        let lateral = (road.project(p).d - lane_d).abs();
        let better = match best {
            None => true,
            Some((bd, bl, _)) => dist < bd - 1e-9 || (dist <= bd + 1e-9 && lateral < bl - 1e-9),
        };
        if better {
            best = Some((dist, lateral, *p));
        }
    }
    best.map(|b| b.2)
}

/// Picks the safe-and-reachable point closest to the final target. Ties go
/// to the smaller offset from the ego lane centre, then to the earlier point.
/// With no candidates, the nearest safe point to the ego becomes a stop target.
pub fn intermediate_ref(
    target: &ReferenceTarget,
    ssr: &SafeReachableSet,
    safe: &SafeSet,
    ev: &VehicleState,
    road: &RoadModel,
    params: &BehaviorParams,
) -> IntermediateReference {
    let lane = params.ego_lane;
    let heading = |p: &Point| road.heading_at(road.project(p).s);
    if let Some(p) = nearest_point(&ssr.points, &target.point(), road, lane) {
        return IntermediateReference { p_interim: [p.x, p.y], psi_ref: heading(&p), v_ref: target.v_ref, emergency: false };
    }
    let p = nearest_point(&safe.points, &ev.position(), road, lane).unwrap_or_else(|| ev.position());
    IntermediateReference { p_interim: [p.x, p.y], psi_ref: heading(&p), v_ref: 0.0, emergency: true }
}
