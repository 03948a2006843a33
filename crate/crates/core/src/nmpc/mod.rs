//! Receding-horizon trajectory optimisation.
//!
//! Single shooting over the control sequence: the states are eliminated by
//! rolling the bicycle model forward, so every iterate is dynamically
//! consistent. Obstacles enter as rotated superellipse constraints on the
//! predicted CoM positions.

mod qp;
mod rollout;
mod sqp;

pub use qp::{solve_qp, QpError, QpSolution};
pub use rollout::{
    analytic_gradients, constraint_values, lagrangian_gradient, objective, rollout, stage_ellipse, ConstraintKind,
    Gradients, Rollout,
};
pub use sqp::{solve, solve_from, solve_with, HorizonSolution, SolveStatus, SolverOptions};

use serde::{Deserialize, Serialize};

use crate::dynamics::{ControlLimits, VehicleGeometry, VehicleState};
use crate::riskmap::ObstacleVehicle;

/// Rotated superellipse `((dx c + dy s)/a)^n + ((dx s - dy c)/b)^n - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleEllipse {
    pub x_e: f64,
    pub y_e: f64,
    pub a: f64,
    pub b: f64,
    pub phi: f64,
    /// Even exponent.
    pub n: i32,
    /// Centre velocity used to predict the ellipse over the horizon.
    #[serde(default)]
    pub vx: f64,
    #[serde(default)]
    pub vy: f64,
}

impl ObstacleEllipse {
    /// Static ellipse.
    pub fn fixed(x_e: f64, y_e: f64, a: f64, b: f64, phi: f64, n: i32) -> Self {
        Self { x_e, y_e, a, b, phi, n, vx: 0.0, vy: 0.0 }
    }

    /// The ellipse moved along its velocity for `t` seconds.
    pub fn at_time(&self, t: f64) -> Self {
        Self { x_e: self.x_e + self.vx * t, y_e: self.y_e + self.vy * t, ..*self }
    }

    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.phi.sin_cos();
        let (dx, dy) = (x - self.x_e, y - self.y_e);
        ((dx * c + dy * s) / self.a, (dx * s - dy * c) / self.b)
    }

    /// Constraint value at a position; non-negative outside the obstacle.
    pub fn value_at(&self, x: f64, y: f64) -> f64 {
        let (u1, u2) = self.local(x, y);
        u1.powi(self.n) + u2.powi(self.n) - 1.0
    }

    /// Gradient of [`Self::value_at`] with respect to `(x, y)`.
    pub fn gradient_at(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.phi.sin_cos();
        let (u1, u2) = self.local(x, y);
        let n = self.n as f64;
        let d1 = n * u1.powi(self.n - 1);
        let d2 = n * u2.powi(self.n - 1);
        (d1 * c / self.a + d2 * s / self.b, d1 * s / self.a - d2 * c / self.b)
    }
}

/// Ellipse around an obstacle body, padded by the ego footprint and scaled
/// by `alpha`, moving with the obstacle's current velocity. Safety
/// triangles are deliberately not included.
pub fn ellipse_for(obs: &ObstacleVehicle, ev_geom: &VehicleGeometry, alpha: f64, n: i32) -> ObstacleEllipse {
    let (s, c) = obs.state.psi.sin_cos();
    ObstacleEllipse {
        x_e: obs.state.x,
        y_e: obs.state.y,
        a: alpha * (obs.geom.length + ev_geom.length) / 2.0,
        b: alpha * (obs.geom.width + ev_geom.width) / 2.0,
        phi: obs.state.psi,
        n,
        vx: obs.state.v * c,
        vy: obs.state.v * s,
    }
}

pub fn constraint_value(x: &VehicleState, e: &ObstacleEllipse) -> f64 {
    e.value_at(x.x, x.y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageWeights {
    /// Diagonal of the state weight over `[x, y, psi, v]`.
    pub q: [f64; 4],
    /// Diagonal of the control weight over `[a, delta]`.
    pub r: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBounds {
    pub min: [f64; 4],
    pub max: [f64; 4],
}

impl StateBounds {
    pub fn speed_only(v_min: f64, v_max: f64) -> Self {
        let inf = f64::INFINITY;
        Self { min: [-inf, -inf, -inf, v_min], max: [inf, inf, inf, v_max] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonProblem {
    /// Measured state at the start of the horizon.
    pub x0: VehicleState,
    /// Reference `[p_interim, psi_ref, v_ref]`.
    pub x_ref: VehicleState,
    pub horizon: usize,
    pub dt: f64,
    /// One entry per stage `k = 0..N-1`.
    pub stage_weights: Vec<StageWeights>,
    pub terminal_weight: [f64; 4],
    pub state_bounds: StateBounds,
    pub control_limits: ControlLimits,
    pub geometry: VehicleGeometry,
    /// Obstacle ellipses at `t = 0`; stage `k` sees them at `k * dt`.
    pub ellipses: Vec<ObstacleEllipse>,
}

impl HorizonProblem {
    pub fn num_controls(&self) -> usize {
        2 * self.horizon
    }
}

/// Tuning and limits of the trajectory planner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmpcParams {
    pub horizon: usize,
    pub horizon_time: f64,
    /// Stage weights; the last entry is reused for stages beyond the list.
    pub stage_q: Vec<[f64; 4]>,
    pub stage_r: Vec<[f64; 2]>,
    pub terminal_q: [f64; 4],
    pub v_min: f64,
    pub v_max: f64,
    pub ellipse_exponent: i32,
    pub inflation: f64,
    pub max_ellipses: usize,
    pub solver: SolverOptions,
}

impl Default for NmpcParams {
    fn default() -> Self {
        let mut stage_q = vec![[0.0, 5.0, 20.0, 10.0]; 5];
        stage_q.extend([[0.0, 10.0, 20.0, 10.0]; 2]);
        stage_q.extend([[0.0, 10.0, 50.0, 10.0]; 2]);
        stage_q.push([0.0, 50.0, 50.0, 30.0]);
        Self {
            horizon: 10,
            horizon_time: 1.0,
            stage_q,
            stage_r: vec![[5.0, 50.0]; 10],
            terminal_q: [0.0, 50.0, 50.0, 30.0],
            v_min: 0.0,
            v_max: 25.0,
            ellipse_exponent: 4,
            inflation: 1.4,
            max_ellipses: 4,
            solver: SolverOptions::default(),
        }
    }
}

impl NmpcParams {
    pub fn dt(&self) -> f64 {
        self.horizon_time / self.horizon as f64
    }

    pub fn stage_weights(&self) -> Vec<StageWeights> {
        (0..self.horizon)
            .map(|k| StageWeights {
                q: self.stage_q[k.min(self.stage_q.len() - 1)],
                r: self.stage_r[k.min(self.stage_r.len() - 1)],
            })
            .collect()
    }

    pub fn problem(
        &self,
        x0: VehicleState,
        x_ref: VehicleState,
        geometry: VehicleGeometry,
        control_limits: ControlLimits,
        ellipses: Vec<ObstacleEllipse>,
    ) -> HorizonProblem {
        HorizonProblem {
            x0,
            x_ref,
            horizon: self.horizon,
            dt: self.dt(),
            stage_weights: self.stage_weights(),
            terminal_weight: self.terminal_q,
            state_bounds: StateBounds::speed_only(self.v_min, self.v_max),
            control_limits,
            geometry,
            ellipses,
        }
    }
}
