//! Per-plant-step records and their CSV form.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::behavior::ManeuverState;
use crate::dynamics::{ControlInput, VehicleState};
use crate::nmpc::SolveStatus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorRecord {
    pub id: String,
    pub state: VehicleState,
    /// Body-to-body distance to the ego (m), zero on contact.
    pub clearance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickLog {
    pub t: f64,
    /// Planner tick that produced the applied control.
    pub tick: u64,
    pub ego: VehicleState,
    /// Steering angle at the wheels after the actuator lag.
    pub delta_actual: f64,
    pub fsm: ManeuverState,
    pub lead: Option<String>,
    pub p_ref: [f64; 2],
    pub p_interim: [f64; 2],
    pub v_ref: f64,
    pub emergency: bool,
    pub control: ControlInput,
    /// Solver output had to be clamped to the control limits.
    pub clamped: bool,
    pub solver_status: SolveStatus,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub objective: f64,
    pub safe_count: usize,
    pub ssr_count: usize,
    pub min_clearance: f64,
    /// Ego body excursion beyond the left edge of its lane (m).
    pub excursion: f64,
    pub actors: Vec<ActorRecord>,
    /// Obstacle constraint values at the ego position, one per ellipse in use.
    pub g_values: Vec<f64>,
}

pub const CSV_HEADER: &str = "t,tick,x,y,psi,v,delta_actual,fsm,lead,p_ref_x,p_ref_y,p_interim_x,p_interim_y,v_ref,emergency,a,delta,clamped,solver_status,iterations,kkt_residual,objective,safe_count,ssr_count,min_clearance,excursion,actors,g_values";

impl TickLog {
    /// One CSV row in [`CSV_HEADER`] order. Actors are `id:x:y:psi:v:clearance`
    /// joined by `;`, constraint values likewise.
    pub fn csv_row(&self) -> String {
        let mut row = String::new();
        let e = &self.ego;
        let _ = write!(
            row,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},",
            self.t,
            self.tick,
            e.x,
            e.y,
            e.psi,
            e.v,
            self.delta_actual,
            self.fsm,
            self.lead.as_deref().unwrap_or(""),
            self.p_ref[0],
            self.p_ref[1],
            self.p_interim[0],
            self.p_interim[1],
            self.v_ref,
            self.emergency,
            self.control.a,
            self.control.delta,
            self.clamped,
            self.solver_status.as_str(),
            self.iterations,
            self.kkt_residual,
            self.objective,
            self.safe_count,
            self.ssr_count,
            self.min_clearance,
            self.excursion,
        );
        let actors: Vec<String> = self
            .actors
            .iter()
            .map(|a| format!("{}:{}:{}:{}:{}:{}", a.id, a.state.x, a.state.y, a.state.psi, a.state.v, a.clearance))
            .collect();
        row.push_str(&actors.join(";"));
        row.push(',');
        let g: Vec<String> = self.g_values.iter().map(|g| g.to_string()).collect();
        row.push_str(&g.join(";"));
        row
    }
}

pub fn to_csv(logs: &[TickLog]) -> String {
    let mut out = String::with_capacity(256 * (logs.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for l in logs {
        out.push_str(&l.csv_row());
        out.push('\n');
    }
    out
}
