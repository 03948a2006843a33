//! Closed-loop engine. Each planner tick runs perception, the state
//! machine, safe/reachable set construction, intermediate reference
//! selection and the NMPC solve, then holds the first control over the
//! plant sub-steps.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::behavior::{
    detect_events, intermediate_ref, reference_for, transition, EventContext, EventSource, IntermediateReference,
    LeadVehicle, ManeuverState, ManualRequest, ReferenceTarget, TransitionEvent,
};
use crate::dynamics::{step, ControlInput, VehicleState};
use crate::geometry::{polygon_distance, ConvexPolygon};
use crate::nmpc::{ellipse_for, solve_with, stage_ellipse, HorizonSolution, ObstacleEllipse, SolveStatus};
use crate::reachability::{intersect, reachable_polygon, ReachablePolygon, SafeReachableSet};
use crate::riskmap::{
    build_safe_set, build_safe_set_from_field, velocity_triangles_relative, ObstacleVehicle, RiskField, RiskGrid, SafeSet,
};
use crate::road::RoadModel;

use super::actors::Actor;
use super::log::{ActorRecord, TickLog};
use super::metrics::{RunMetrics, TimelineEntry, TransitionRecord};
use super::scenario::{Direction, EventKind, Scenario};

/// External request fed through the engine's command queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Command {
    TriggerOvertake,
    TriggerAbort,
    SpawnOncoming { speed: f64, gap: f64 },
}

impl Command {
    fn manual(&self) -> Option<ManualRequest> {
        match self {
            Command::TriggerOvertake => Some(ManualRequest::Overtake),
            Command::TriggerAbort => Some(ManualRequest::Abort),
            Command::SpawnOncoming { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandAck {
    pub id: u64,
    pub command: Command,
    /// Planner tick at which the command was consumed.
    pub tick: u64,
    /// The command had no effect (e.g. an abort request outside an overtake).
    pub ignored: bool,
}

/// Everything the planner computed on one tick.
#[derive(Debug, Clone)]
pub struct PlannerSnapshot {
    pub t: f64,
    pub tick: u64,
    pub fsm: ManeuverState,
    pub lead: Option<String>,
    pub events: Vec<TransitionEvent>,
    pub transition: Option<TransitionRecord>,
    pub target: ReferenceTarget,
    pub interim: IntermediateReference,
    pub safe: SafeSet,
    pub reach: ReachablePolygon,
    pub ssr: SafeReachableSet,
    pub ellipses: Vec<ObstacleEllipse>,
    pub solution: HorizonSolution,
    pub control: ControlInput,
    pub clamped: bool,
}

pub struct Simulation {
    scenario: Scenario,
    road: RoadModel,
    ego: VehicleState,
    delta_actual: f64,
    actors: Vec<Actor>,
    fsm: ManeuverState,
    lead_id: Option<String>,
    step_index: u64,
    total_steps: u64,
    tick: u64,
    logs: Vec<TickLog>,
    metrics: RunMetrics,
    warm: Option<HorizonSolution>,
    pending: VecDeque<(u64, Command)>,
    next_id: u64,
    next_event: usize,
    spawned: usize,
    snapshot: Option<PlannerSnapshot>,
}

fn ego_body(ego: &VehicleState, scenario: &Scenario) -> ConvexPolygon {
    let g = &scenario.ego.geometry;
    ConvexPolygon::rectangle(ego.position(), ego.psi, g.length, g.width)
}

impl Simulation {
    pub fn new(scenario: Scenario) -> Self {
        let road = scenario.road.model();
        let mut events: Vec<_> = scenario.events.clone();
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        let total_steps = (scenario.duration / scenario.plant_dt).round() as u64;
        let actors = scenario.traffic.iter().map(Actor::from_spec).collect();
        let ego = scenario.ego.state();
        Self {
            scenario: Scenario { events, ..scenario },
            road,
            ego,
            delta_actual: 0.0,
            actors,
            fsm: ManeuverState::LaneKeep,
            lead_id: None,
            step_index: 0,
            total_steps,
            tick: 0,
            logs: Vec::new(),
            metrics: RunMetrics::default(),
            warm: None,
            pending: VecDeque::new(),
            next_id: 1,
            next_event: 0,
            spawned: 0,
            snapshot: None,
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn road(&self) -> &RoadModel {
        &self.road
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.scenario.plant_dt
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn ego(&self) -> VehicleState {
        self.ego
    }

    pub fn fsm(&self) -> ManeuverState {
        self.fsm
    }

    pub fn is_finished(&self) -> bool {
        self.step_index >= self.total_steps
    }

    pub fn logs(&self) -> &[TickLog] {
        &self.logs
    }

    pub fn metrics(&self) -> &RunMetrics {
        &self.metrics
    }

    pub fn snapshot(&self) -> Option<&PlannerSnapshot> {
        self.snapshot.as_ref()
    }

    pub fn actor_states(&self) -> Vec<(String, VehicleState)> {
        let t = self.time();
        self.actors.iter().map(|a| (a.id.clone(), a.state(&self.road, t))).collect()
    }

    /// Risk raster around the ego from the vehicles the planner would sense now.
    pub fn risk_grid(&self) -> RiskGrid {
        let risk = &self.scenario.planner.risk;
        let sensed: Vec<ObstacleVehicle> = self
            .obstacles()
            .into_iter()
            .filter(|o| (o.state.position() - self.ego.position()).norm() <= risk.sensing_radius)
            .collect();
        build_safe_set(&self.ego, &self.road, &sensed, risk).0
    }

    /// Queues a command for the next planner tick and returns its id.
    pub fn enqueue(&mut self, command: Command) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.pending.push_back((id, command));
        id
    }

    pub fn finish(self) -> (Vec<TickLog>, RunMetrics) {
        (self.logs, self.metrics)
    }

    fn station(&self, p: &crate::geometry::Point) -> f64 {
        self.road.project(p).s
    }

    fn spawn_oncoming(&mut self, speed: f64, gap: f64) {
        self.spawned += 1;
        let lane = self.scenario.planner.behavior.ego_lane + 1;
        let s = self.station(&self.ego.position()) + gap;
        let id = format!("oncoming-{}", self.spawned);
        self.actors.push(Actor::spawned(id, lane, Direction::Oncoming, s, speed, self.time()));
    }

    fn obstacles(&self) -> Vec<ObstacleVehicle> {
        let t = self.time();
        self.actors.iter().map(|a| a.obstacle(&self.road, t)).collect()
    }

    /// Nearest same-direction vehicle ahead in the ego lane.
    fn find_lead(&self, obstacles: &[ObstacleVehicle]) -> Option<String> {
        let lane = self.scenario.planner.behavior.ego_lane;
        let (lo, hi) = self.road.lane_bounds(lane);
        let ev_s = self.station(&self.ego.position());
        let range = self.scenario.planner.behavior.oncoming_detection_range;
        self.actors
            .iter()
            .zip(obstacles)
            .filter(|(a, o)| {
                let f = self.road.project(&o.state.position());
                a.direction == Direction::Forward && f.d >= lo && f.d <= hi && f.s > ev_s && f.s - ev_s <= range
            })
            .min_by(|(_, a), (_, b)| {
                self.station(&a.state.position()).total_cmp(&self.station(&b.state.position()))
            })
            .map(|(a, _)| a.id.clone())
    }

    /// Runs one planner period. Returns acknowledgements for the commands
    /// consumed on this tick.
    pub fn step_planner(&mut self) -> Vec<CommandAck> {
        let t = self.time();
        let mut acks = Vec::new();
        while self.next_event < self.scenario.events.len() && self.scenario.events[self.next_event].t <= t + 1e-9 {
            let cmd = match self.scenario.events[self.next_event].kind {
                EventKind::TriggerOvertake => Command::TriggerOvertake,
                EventKind::TriggerAbort => Command::TriggerAbort,
                EventKind::SpawnOncoming { speed, gap } => Command::SpawnOncoming { speed, gap },
            };
            self.enqueue(cmd);
            self.next_event += 1;
        }

        // spawns take effect now; at most one manual request per tick
        let mut manual: Option<(u64, Command)> = None;
        let mut rest = VecDeque::new();
        while let Some((id, cmd)) = self.pending.pop_front() {
            match cmd {
                Command::SpawnOncoming { speed, gap } => {
                    self.spawn_oncoming(speed, gap);
                    acks.push(CommandAck { id, command: cmd, tick: self.tick, ignored: false });
                }
                _ if manual.is_none() => manual = Some((id, cmd)),
                _ => rest.push_back((id, cmd)),
            }
        }
        self.pending = rest;

        let cfg = self.scenario.planner.clone();
        let geom = self.scenario.ego.geometry;
        let limits = self.scenario.ego.limits;
        let ev = self.ego;
        let obstacles = self.obstacles();
        let sensed: Vec<ObstacleVehicle> = obstacles
            .iter()
            .filter(|o| (o.state.position() - ev.position()).norm() <= cfg.risk.sensing_radius)
            .cloned()
            .collect();
        let lead_vehicle = |id: &Option<String>| -> Option<LeadVehicle> {
            let id = id.as_ref()?;
            let vehicle = obstacles.iter().find(|o| &o.id == id)?.clone();
            let triangles = velocity_triangles_relative(&vehicle, &ev, &cfg.risk);
            Some(LeadVehicle { vehicle, triangles })
        };
        let candidate = if self.fsm == ManeuverState::LaneKeep { self.find_lead(&obstacles) } else { self.lead_id.clone() };
        let lv = lead_vehicle(&candidate);
        let ev_s = self.station(&ev.position());
        let oncoming: Vec<ObstacleVehicle> = self
            .actors
            .iter()
            .zip(&obstacles)
            .filter(|(a, o)| {
                let ds = self.station(&o.state.position()) - ev_s;
                a.direction == Direction::Oncoming && ds.abs() <= cfg.behavior.oncoming_detection_range
            })
            .map(|(_, o)| o.clone())
            .collect();
        let field = RiskField::new(&self.road, &ev, &sensed, &cfg.risk);

        let ctx = EventContext {
            ev: &ev,
            ev_geom: &geom,
            state: self.fsm,
            lv: lv.as_ref(),
            oncoming: &oncoming,
            manual: manual.and_then(|(_, c)| c.manual()),
            road: &self.road,
            risk: &field,
        };
        let events = detect_events(&ctx, &cfg.behavior);
        let mut record = None;
        for e in &events {
            let next = transition(self.fsm, *e);
            if next != self.fsm {
                record = Some(TransitionRecord { t, tick: self.tick, from: self.fsm, to: next, sigma: e.sigma, source: e.source });
                break;
            }
        }
        if let Some((id, cmd)) = manual {
            let applied = record.as_ref().is_some_and(|r| r.source == EventSource::Manual);
            acks.push(CommandAck { id, command: cmd, tick: self.tick, ignored: !applied });
        }
        if let Some(r) = &record {
            if r.from == ManeuverState::LaneKeep {
                self.lead_id = candidate.clone();
            }
            self.fsm = r.to;
            if r.to == ManeuverState::LaneKeep {
                self.lead_id = None;
                if r.from == ManeuverState::Overtake {
                    self.metrics.completion = true;
                }
            }
            self.metrics.timeline.push(TimelineEntry { state: r.to, t_enter: t });
            self.metrics.transitions.push(r.clone());
        }

        let lead = if self.fsm == ManeuverState::LaneKeep { None } else { lead_vehicle(&self.lead_id) };
        let target = reference_for(self.fsm, &ev, lead.as_ref(), &self.road, &cfg.behavior)
            .or_else(|_| reference_for(ManeuverState::LaneKeep, &ev, None, &self.road, &cfg.behavior))
            .expect("lane keeping needs no lead vehicle");

        let (_, safe) = build_safe_set_from_field(&ev, &field);
        let reach = reachable_polygon(&ev, target.v_ref, &limits, &geom, cfg.nmpc.horizon_time, cfg.reach_samples);
        let ssr = intersect(&safe, &reach);
        let interim = intermediate_ref(&target, &ssr, &safe, &ev, &self.road, &cfg.behavior);

        let mut near: Vec<&ObstacleVehicle> = sensed.iter().collect();
        near.sort_by(|a, b| {
            let da = (a.state.position() - ev.position()).norm();
            let db = (b.state.position() - ev.position()).norm();
            da.total_cmp(&db)
        });
        let ellipses: Vec<ObstacleEllipse> = near
            .iter()
            .take(cfg.nmpc.max_ellipses)
            .map(|o| ellipse_for(o, &geom, cfg.nmpc.inflation, cfg.nmpc.ellipse_exponent))
            .collect();

        let problem = cfg.nmpc.problem(ev, interim.as_state(), geom, limits, ellipses.clone());
        let warm = self.warm.as_ref().map(|w| w.shifted_controls());
        let solution = solve_with(&problem, warm.as_deref(), &cfg.nmpc.solver);
        let raw = solution.first_control();
        let clamped = !limits.contains(raw, 1e-9);
        let control = limits.clamp(raw);

        let m = &mut self.metrics;
        m.planner_ticks += 1;
        match solution.status {
            SolveStatus::Converged => {
                m.converged_ticks += 1;
                for (k, x) in solution.states.iter().enumerate() {
                    for i in 0..ellipses.len() {
                        let e = stage_ellipse(&problem, i, k + 1);
                        m.min_converged_g = m.min_converged_g.min(e.value_at(x.x, x.y));
                    }
                }
            }
            SolveStatus::MaxIter => m.max_iter_ticks += 1,
            SolveStatus::InfeasibleFallback => m.fallback_ticks += 1,
        }
        if solution.kkt_residual.is_finite() {
            m.max_kkt_residual = m.max_kkt_residual.max(solution.kkt_residual);
        }
        if ssr.is_empty() {
            m.empty_ssr_ticks += 1;
        }
        if clamped {
            m.clamped_controls += 1;
        }

        for _ in 0..self.scenario.substeps() {
            if self.is_finished() {
                break;
            }
            self.record(t, &interim, &target, &solution, control, clamped, safe.len(), ssr.len(), &ellipses);
            self.advance_plant(control);
        }

        self.warm = Some(solution.clone());
        self.snapshot = Some(PlannerSnapshot {
            t,
            tick: self.tick,
            fsm: self.fsm,
            lead: self.lead_id.clone(),
            events,
            transition: record,
            target,
            interim,
            safe,
            reach,
            ssr,
            ellipses,
            solution,
            control,
            clamped,
        });
        self.tick += 1;
        acks
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        t_plan: f64,
        interim: &IntermediateReference,
        target: &ReferenceTarget,
        solution: &HorizonSolution,
        control: ControlInput,
        clamped: bool,
        safe_count: usize,
        ssr_count: usize,
        ellipses: &[ObstacleEllipse],
    ) {
        let t = self.time();
        let body = ego_body(&self.ego, &self.scenario);
        let actors: Vec<ActorRecord> = self
            .actors
            .iter()
            .map(|a| {
                let o = a.obstacle(&self.road, t);
                let clearance = polygon_distance(&body, &o.body());
                ActorRecord { id: a.id.clone(), state: o.state, clearance }
            })
            .collect();
        let min_clearance = actors.iter().map(|a| a.clearance).fold(f64::INFINITY, f64::min);
        let (_, left) = self.road.lane_bounds(self.scenario.planner.behavior.ego_lane);
        let excursion = body
            .vertices
            .iter()
            .map(|v| self.road.project(v).d - left)
            .fold(0.0, f64::max);

        let m = &mut self.metrics;
        m.min_clearance = m.min_clearance.min(min_clearance);
        if min_clearance <= 0.0 {
            m.collision_occurred = true;
        }
        m.max_intrusion = m.max_intrusion.max(excursion);
        m.intrusion_area += excursion * self.scenario.plant_dt;

        self.logs.push(TickLog {
            t,
            tick: self.tick,
            ego: self.ego,
            delta_actual: self.delta_actual,
            fsm: self.fsm,
            lead: self.lead_id.clone(),
            p_ref: target.p_ref,
            p_interim: interim.p_interim,
            v_ref: interim.v_ref,
            emergency: interim.emergency,
            control,
            clamped,
            solver_status: solution.status,
            iterations: solution.iterations,
            kkt_residual: solution.kkt_residual,
            objective: solution.objective,
            safe_count,
            ssr_count,
            min_clearance,
            excursion,
            actors,
            g_values: ellipses.iter().map(|e| e.at_time(t - t_plan).value_at(self.ego.x, self.ego.y)).collect(),
        });
    }

    fn advance_plant(&mut self, control: ControlInput) {
        let dt = self.scenario.plant_dt;
        let tau = self.scenario.ego.steering_lag;
        self.delta_actual = if tau > 0.0 {
            control.delta + (self.delta_actual - control.delta) * (-dt / tau).exp()
        } else {
            control.delta
        };
        let applied = ControlInput::new(control.a, self.delta_actual);
        self.ego = step(&self.ego, &applied, &self.scenario.ego.geometry, dt);
        let t = self.time();
        for a in &mut self.actors {
            a.advance(t, dt);
        }
        self.step_index += 1;
    }
}

/// Runs a scenario to its end.
pub fn run(scenario: &Scenario) -> (Vec<TickLog>, RunMetrics) {
    let mut sim = Simulation::new(scenario.clone());
    while !sim.is_finished() {
        sim.step_planner();
    }
    sim.finish()
}
