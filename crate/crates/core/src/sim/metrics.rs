//! Run summary written next to the tick log.

use serde::{Deserialize, Serialize};

use crate::behavior::{EventSource, ManeuverState, Sigma};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub state: ManeuverState,
    pub t_enter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub t: f64,
    pub tick: u64,
    pub from: ManeuverState,
    pub to: ManeuverState,
    pub sigma: Sigma,
    pub source: EventSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub collision_occurred: bool,
    /// Smallest body-to-body distance to any actor over the run (m).
    pub min_clearance: f64,
    /// Largest ego body excursion beyond its lane's left edge (m).
    pub max_intrusion: f64,
    /// Time integral of the positive excursion (m s).
    pub intrusion_area: f64,
    pub timeline: Vec<TimelineEntry>,
    pub transitions: Vec<TransitionRecord>,
    /// An overtake was completed.
    pub completion: bool,
    pub planner_ticks: u64,
    pub converged_ticks: u64,
    pub max_iter_ticks: u64,
    pub fallback_ticks: u64,
    pub empty_ssr_ticks: u64,
    pub clamped_controls: u64,
    /// Most negative obstacle constraint value over converged solutions.
    pub min_converged_g: f64,
    pub max_kkt_residual: f64,
}

impl Default for RunMetrics {
    fn default() -> Self {
        Self {
            collision_occurred: false,
            min_clearance: f64::INFINITY,
            max_intrusion: 0.0,
            intrusion_area: 0.0,
            timeline: vec![TimelineEntry { state: ManeuverState::LaneKeep, t_enter: 0.0 }],
            transitions: Vec::new(),
            completion: false,
            planner_ticks: 0,
            converged_ticks: 0,
            max_iter_ticks: 0,
            fallback_ticks: 0,
            empty_ssr_ticks: 0,
            clamped_controls: 0,
            min_converged_g: f64::INFINITY,
            max_kkt_residual: 0.0,
        }
    }
}

impl RunMetrics {
    /// Timeline as a compact letter sequence, e.g. `LFOAFOL`.
    pub fn timeline_letters(&self) -> String {
        self.timeline.iter().map(|e| e.state.letter()).collect()
    }

    /// JSON with non-finite numbers written as `null`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialise")
    }
}
