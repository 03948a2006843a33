//! Network-free session state: a simulation plus run control. The server
//! drives it from its simulation thread; tests drive it directly.

use std::collections::HashMap;

use overtake_core::geometry::Point;
use overtake_core::sim::{Command, Scenario, Simulation, SCHEMA_VERSION};

use crate::protocol::{
    Ack, ActorFrame, CommandKind, Hello, MetricsSoFar, RoadInfo, ServerMessage, SessionCommand, StateFrame,
    PROTOCOL_VERSION,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Shutdown,
}

pub struct Session {
    scenario: Scenario,
    sim: Simulation,
    running: bool,
    speed_factor: f64,
    /// Engine command id to the client command it came from.
    in_flight: HashMap<u64, SessionCommand>,
    finished_sent: bool,
    last_frame: Option<StateFrame>,
}

impl Session {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            sim: Simulation::new(scenario.clone()),
            scenario,
            running: false,
            speed_factor: 1.0,
            in_flight: HashMap::new(),
            finished_sent: false,
            last_frame: None,
        }
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn is_running(&self) -> bool {
        self.running && !self.sim.is_finished()
    }

    pub fn speed_factor(&self) -> f64 {
        self.speed_factor
    }

    pub fn set_speed_factor(&mut self, factor: f64) {
        self.speed_factor = factor;
    }

    pub fn planner_period(&self) -> f64 {
        self.scenario.planner_period
    }

    pub fn last_frame(&self) -> Option<&StateFrame> {
        self.last_frame.as_ref()
    }

    pub fn hello(&self) -> ServerMessage {
        ServerMessage::Hello(Hello {
            protocol_version: PROTOCOL_VERSION,
            schema_version: SCHEMA_VERSION,
            scenario: self.scenario.name.clone(),
            road: RoadInfo { lane_count: self.scenario.road.lane_count, lane_width: self.scenario.road.lane_width },
            plant_dt: self.scenario.plant_dt,
            planner_period: self.scenario.planner_period,
            running: self.is_running(),
            speed_factor: self.speed_factor,
        })
    }

    pub fn start(&mut self) {
        self.running = true;
    }

    pub fn pause(&mut self) {
        self.running = false;
    }

    fn ack(&self, cmd: &SessionCommand, ignored: bool) -> ServerMessage {
        ServerMessage::Ack(Ack { id: cmd.id, kind: cmd.kind, tick: self.sim.tick(), ignored })
    }

    fn error(cmd: &SessionCommand, message: impl Into<String>) -> ServerMessage {
        ServerMessage::Error { id: Some(cmd.id), message: message.into() }
    }

    /// Applies one client command. Run-control commands are acknowledged at
    /// once; simulation commands when the engine consumes them.
    pub fn handle(&mut self, cmd: SessionCommand) -> (Vec<ServerMessage>, Flow) {
        let out = match cmd.kind {
            CommandKind::Start | CommandKind::Resume => {
                let ignored = self.is_running() || self.sim.is_finished();
                self.running = true;
                vec![self.ack(&cmd, ignored)]
            }
            CommandKind::Pause => {
                let ignored = !self.is_running();
                self.running = false;
                vec![self.ack(&cmd, ignored)]
            }
            CommandKind::Reset => {
                self.sim = Simulation::new(self.scenario.clone());
                self.running = false;
                self.in_flight.clear();
                self.finished_sent = false;
                self.last_frame = None;
                vec![self.ack(&cmd, false)]
            }
            CommandKind::SetSpeedFactor { factor } => {
                if !(factor.is_finite() && factor > 0.0) {
                    vec![Self::error(&cmd, format!("speed factor must be positive, got {factor}"))]
                } else {
                    self.speed_factor = factor;
                    vec![self.ack(&cmd, false)]
                }
            }
            CommandKind::TriggerOvertake => self.forward(cmd, Command::TriggerOvertake),
            CommandKind::TriggerAbort => self.forward(cmd, Command::TriggerAbort),
            CommandKind::SpawnOncoming { speed, gap } => {
                if !(speed.is_finite() && speed > 0.0 && gap.is_finite() && gap > 0.0) {
                    vec![Self::error(&cmd, format!("spawn needs positive speed and gap, got {speed} and {gap}"))]
                } else {
                    self.forward(cmd, Command::SpawnOncoming { speed, gap })
                }
            }
            CommandKind::Shutdown => return (vec![self.ack(&cmd, false)], Flow::Shutdown),
        };
        (out, Flow::Continue)
    }

    fn forward(&mut self, cmd: SessionCommand, command: Command) -> Vec<ServerMessage> {
        if self.sim.is_finished() {
            return vec![self.ack(&cmd, true)];
        }
        let engine_id = self.sim.enqueue(command);
        self.in_flight.insert(engine_id, cmd);
        Vec::new()
    }

    /// Runs one planner tick and returns the acknowledgements, the frame and,
    /// once the run is over, the final metrics.
    pub fn step(&mut self) -> Vec<ServerMessage> {
        let mut out = Vec::new();
        if self.sim.is_finished() {
            return out;
        }
        for a in self.sim.step_planner() {
            if let Some(cmd) = self.in_flight.remove(&a.id) {
                out.push(ServerMessage::Ack(Ack { id: cmd.id, kind: cmd.kind, tick: a.tick, ignored: a.ignored }));
            }
        }
        if let Some(frame) = self.frame() {
            self.last_frame = Some(frame.clone());
            out.push(ServerMessage::Frame(Box::new(frame)));
        }
        if self.sim.is_finished() && !self.finished_sent {
            self.finished_sent = true;
            self.running = false;
            out.push(ServerMessage::Finished { metrics: Box::new(self.sim.metrics().clone()) });
        }
        out
    }

    /// Frame for the latest planner tick, built from the same log rows
    /// written to disk.
    fn frame(&self) -> Option<StateFrame> {
        let snap = self.sim.snapshot()?;
        let logs = self.sim.logs();
        let row = logs.iter().rev().take_while(|l| l.tick == snap.tick).last()?;
        let xy = |p: &Point| [p.x, p.y];
        Some(StateFrame {
            t: row.t,
            tick: snap.tick,
            ego: row.ego,
            actors: row.actors.iter().map(|a| ActorFrame { id: a.id.clone(), state: a.state }).collect(),
            fsm: row.fsm,
            lead: row.lead.clone(),
            p_ref: row.p_ref,
            p_interim: row.p_interim,
            emergency: row.emergency,
            horizon: snap.solution.states.iter().map(|s| [s.x, s.y]).collect(),
            reachable_outline: snap.reach.boundary.iter().map(xy).collect(),
            safe_reachable: snap.ssr.points.iter().map(xy).collect(),
            safe_count: snap.safe.len(),
            control: row.control,
            solver_status: row.solver_status,
            iterations: row.iterations,
            metrics: MetricsSoFar::from(self.sim.metrics()),
        })
    }
}
