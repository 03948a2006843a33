//! Deterministic closed-loop simulation: scenario files, scripted traffic,
//! the planner loop, per-step logs and run metrics.

mod actors;
mod engine;
mod log;
mod metrics;
mod scenario;

pub use actors::Actor;
pub use engine::{run, Command, CommandAck, PlannerSnapshot, Simulation};
pub use log::{to_csv, ActorRecord, TickLog, CSV_HEADER};
pub use metrics::{RunMetrics, TimelineEntry, TransitionRecord};
pub use scenario::{
    apply_override, ActorSpec, Direction, EgoSpec, EventKind, EventSpec, PlannerConfig, RoadSpec, Scenario,
    ScenarioError, SCHEMA_VERSION,
};
