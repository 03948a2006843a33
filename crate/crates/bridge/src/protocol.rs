//! Messages exchanged with the operator client. Every message is one JSON
//! object in one WebSocket text frame, discriminated by `type`.

use serde::{Deserialize, Serialize};

use overtake_core::behavior::ManeuverState;
use overtake_core::dynamics::{ControlInput, VehicleState};
use overtake_core::nmpc::SolveStatus;
use overtake_core::sim::RunMetrics;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommandKind {
    Start,
    Pause,
    Resume,
    Reset,
    SetSpeedFactor { factor: f64 },
    TriggerOvertake,
    TriggerAbort,
    SpawnOncoming { speed: f64, gap: f64 },
    Shutdown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionCommand {
    /// Client-chosen id echoed in the acknowledgement.
    pub id: u64,
    #[serde(flatten)]
    pub kind: CommandKind,
    /// Client timestamp, informational only.
    #[serde(default)]
    pub issued_at: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Command(SessionCommand),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadInfo {
    pub lane_count: usize,
    pub lane_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub protocol_version: u32,
    pub schema_version: u32,
    pub scenario: String,
    pub road: RoadInfo,
    pub plant_dt: f64,
    pub planner_period: f64,
    pub running: bool,
    pub speed_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorFrame {
    pub id: String,
    #[serde(flatten)]
    pub state: VehicleState,
}

/// Running totals sent with every frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSoFar {
    pub collision_occurred: bool,
    pub min_clearance: f64,
    pub max_intrusion: f64,
    pub completion: bool,
    pub planner_ticks: u64,
    pub converged_ticks: u64,
    pub fallback_ticks: u64,
}

impl From<&RunMetrics> for MetricsSoFar {
    fn from(m: &RunMetrics) -> Self {
        Self {
            collision_occurred: m.collision_occurred,
            min_clearance: m.min_clearance,
            max_intrusion: m.max_intrusion,
            completion: m.completion,
            planner_ticks: m.planner_ticks,
            converged_ticks: m.converged_ticks,
            fallback_ticks: m.fallback_ticks,
        }
    }
}

/// One planner tick, self-contained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub t: f64,
    pub tick: u64,
    pub ego: VehicleState,
    pub actors: Vec<ActorFrame>,
    pub fsm: ManeuverState,
    pub lead: Option<String>,
    pub p_ref: [f64; 2],
    pub p_interim: [f64; 2],
    pub emergency: bool,
    /// Planned positions `x_1 .. x_N`.
    pub horizon: Vec<[f64; 2]>,
    pub reachable_outline: Vec<[f64; 2]>,
    pub safe_reachable: Vec<[f64; 2]>,
    pub safe_count: usize,
    pub control: ControlInput,
    pub solver_status: SolveStatus,
    pub iterations: usize,
    pub metrics: MetricsSoFar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub id: u64,
    pub kind: CommandKind,
    /// Planner tick at which the command took effect or was dropped.
    pub tick: u64,
    pub ignored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello(Hello),
    Frame(Box<StateFrame>),
    Ack(Ack),
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        message: String,
    },
    Finished {
        metrics: Box<RunMetrics>,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server message serialises")
    }
}

pub fn parse_client(text: &str) -> Result<SessionCommand, String> {
    match serde_json::from_str::<ClientMessage>(text) {
        Ok(ClientMessage::Command(c)) => Ok(c),
        Err(e) => Err(format!("malformed message: {e}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_wire_format() {
        let c = parse_client(r#"{"type":"command","id":3,"kind":"spawn_oncoming","speed":8,"gap":60,"issued_at":1.5}"#).unwrap();
        assert_eq!(c.id, 3);
        assert_eq!(c.kind, CommandKind::SpawnOncoming { speed: 8.0, gap: 60.0 });
        let c = parse_client(r#"{"type":"command","id":4,"kind":"trigger_abort"}"#).unwrap();
        assert_eq!(c.kind, CommandKind::TriggerAbort);
    }

    #[test]
    fn malformed_commands_rejected() {
        assert!(parse_client("not json").is_err());
        assert!(parse_client(r#"{"type":"command","id":1,"kind":"fly"}"#).is_err());
        assert!(parse_client(r#"{"type":"command","id":1,"kind":"spawn_oncoming","speed":8}"#).is_err());
    }

    #[test]
    fn ack_round_trip() {
        let m = ServerMessage::Ack(Ack { id: 9, kind: CommandKind::SetSpeedFactor { factor: 2.0 }, tick: 4, ignored: false });
        let text = m.to_json();
        assert!(text.contains(r#""type":"ack""#));
        assert_eq!(serde_json::from_str::<ServerMessage>(&text).unwrap(), m);
    }
}
