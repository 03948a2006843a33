//! Forward simulation of a control sequence plus the derivatives the SQP
//! iteration needs. Controls are stored flat as `[a_0, delta_0, a_1, ...]`.

use nalgebra::{DMatrix, DVector, Matrix4, Matrix4x2, Vector4};

use super::{HorizonProblem, ObstacleEllipse};
use crate::dynamics::{step_with_jacobian, wrap_angle, ControlInput, VehicleState};

#[derive(Debug, Clone)]
pub struct Rollout {
    /// `x_0 .. x_N`.
    pub states: Vec<VehicleState>,
    pub a_mats: Vec<Matrix4<f64>>,
    pub b_mats: Vec<Matrix4x2<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    StateLower { stage: usize, component: usize },
    StateUpper { stage: usize, component: usize },
    Ellipse { stage: usize, index: usize },
}

impl ConstraintKind {
    pub fn stage(&self) -> usize {
        match *self {
            ConstraintKind::StateLower { stage, .. }
            | ConstraintKind::StateUpper { stage, .. }
            | ConstraintKind::Ellipse { stage, .. } => stage,
        }
    }
}

pub fn controls_at(flat: &[f64], k: usize) -> ControlInput {
    ControlInput::new(flat[2 * k], flat[2 * k + 1])
}

pub fn rollout(problem: &HorizonProblem, controls: &[f64]) -> Rollout {
    let n = problem.horizon;
    let mut states = Vec::with_capacity(n + 1);
    let mut a_mats = Vec::with_capacity(n);
    let mut b_mats = Vec::with_capacity(n);
    states.push(problem.x0);
    for k in 0..n {
        let (next, a, b) = step_with_jacobian(&states[k], &controls_at(controls, k), &problem.geometry, problem.dt);
        states.push(next);
        a_mats.push(a);
        b_mats.push(b);
    }
    Rollout { states, a_mats, b_mats }
}

fn state_error(x: &VehicleState, r: &VehicleState) -> Vector4<f64> {
    Vector4::new(x.x - r.x, x.y - r.y, wrap_angle(x.psi - r.psi), x.v - r.v)
}

fn quad(w: &[f64; 4], e: &Vector4<f64>) -> f64 {
    (0..4).map(|i| w[i] * e[i] * e[i]).sum()
}

fn state_weight(problem: &HorizonProblem, k: usize) -> [f64; 4] {
    if k == problem.horizon {
        problem.terminal_weight
    } else {
        problem.stage_weights[k].q
    }
}

pub fn objective(problem: &HorizonProblem, states: &[VehicleState], controls: &[f64]) -> f64 {
    let mut j = 0.0;
    for (k, x) in states.iter().enumerate().take(problem.horizon + 1) {
        j += quad(&state_weight(problem, k), &state_error(x, &problem.x_ref));
        if k < problem.horizon {
            let r = problem.stage_weights[k].r;
            let u = controls_at(controls, k);
            j += r[0] * u.a * u.a + r[1] * u.delta * u.delta;
        }
    }
    j
}

/// Constraint layout for stages `1..=N`: finite state bounds first, then
/// one row per obstacle ellipse.
pub fn constraint_layout(problem: &HorizonProblem) -> Vec<ConstraintKind> {
    let mut kinds = Vec::new();
    for stage in 1..=problem.horizon {
        for component in 0..4 {
            if problem.state_bounds.min[component].is_finite() {
                kinds.push(ConstraintKind::StateLower { stage, component });
            }
            if problem.state_bounds.max[component].is_finite() {
                kinds.push(ConstraintKind::StateUpper { stage, component });
            }
        }
        for index in 0..problem.ellipses.len() {
            kinds.push(ConstraintKind::Ellipse { stage, index });
        }
    }
    kinds
}

pub fn stage_ellipse(problem: &HorizonProblem, index: usize, stage: usize) -> ObstacleEllipse {
    problem.ellipses[index].at_time(stage as f64 * problem.dt)
}

fn constraint_value(problem: &HorizonProblem, kind: &ConstraintKind, states: &[VehicleState]) -> f64 {
    match *kind {
        ConstraintKind::StateLower { stage, component } => {
            states[stage].to_array()[component] - problem.state_bounds.min[component]
        }
        ConstraintKind::StateUpper { stage, component } => {
            problem.state_bounds.max[component] - states[stage].to_array()[component]
        }
        ConstraintKind::Ellipse { stage, index } => {
            stage_ellipse(problem, index, stage).value_at(states[stage].x, states[stage].y)
        }
    }
}

fn constraint_state_gradient(problem: &HorizonProblem, kind: &ConstraintKind, states: &[VehicleState]) -> Vector4<f64> {
    let mut g = Vector4::zeros();
    match *kind {
        ConstraintKind::StateLower { component, .. } => g[component] = 1.0,
        ConstraintKind::StateUpper { component, .. } => g[component] = -1.0,
        ConstraintKind::Ellipse { stage, index } => {
            let (gx, gy) = stage_ellipse(problem, index, stage).gradient_at(states[stage].x, states[stage].y);
            g[0] = gx;
            g[1] = gy;
        }
    }
    g
}

/// Values of all path constraints (`>= 0` when satisfied), in layout order.
pub fn constraint_values(problem: &HorizonProblem, states: &[VehicleState]) -> Vec<f64> {
    constraint_layout(problem).iter().map(|k| constraint_value(problem, k, states)).collect()
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub rollout: Rollout,
    pub objective: f64,
    pub gradient: DVector<f64>,
    pub constraints: DVector<f64>,
    pub jacobian: DMatrix<f64>,
    pub kinds: Vec<ConstraintKind>,
}

/// Reverse sweep over `grad_x` terms (one per state `x_0..x_N`), returning
/// the gradient with respect to the flat controls, control-cost term included.
fn adjoint_sweep(problem: &HorizonProblem, ro: &Rollout, controls: &[f64], grad_x: &[Vector4<f64>]) -> DVector<f64> {
    let n = problem.horizon;
    let mut grad = DVector::zeros(2 * n);
    let mut lambda = grad_x[n];
    for k in (0..n).rev() {
        let r = problem.stage_weights[k].r;
        let gu = ro.b_mats[k].transpose() * lambda;
        grad[2 * k] = 2.0 * r[0] * controls[2 * k] + gu[0];
        grad[2 * k + 1] = 2.0 * r[1] * controls[2 * k + 1] + gu[1];
        lambda = grad_x[k] + ro.a_mats[k].transpose() * lambda;
    }
    grad
}

fn cost_state_gradients(problem: &HorizonProblem, ro: &Rollout) -> Vec<Vector4<f64>> {
    ro.states
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let w = state_weight(problem, k);
            let e = state_error(x, &problem.x_ref);
            Vector4::new(2.0 * w[0] * e[0], 2.0 * w[1] * e[1], 2.0 * w[2] * e[2], 2.0 * w[3] * e[3])
        })
        .collect()
}

/// Objective, its gradient (reverse sweep), constraint values and the
/// constraint Jacobian (forward sensitivities).
pub fn analytic_gradients(problem: &HorizonProblem, controls: &[f64]) -> Gradients {
    let n = problem.horizon;
    let ro = rollout(problem, controls);
    let objective = objective(problem, &ro.states, controls);
    let gradient = adjoint_sweep(problem, &ro, controls, &cost_state_gradients(problem, &ro));

    // sens[k] = d x_k / d u, 4 x 2N
    let mut sens = vec![DMatrix::<f64>::zeros(4, 2 * n)];
    for k in 0..n {
        let mut next = DMatrix::<f64>::zeros(4, 2 * n);
        if k > 0 {
            let a = DMatrix::from_fn(4, 4, |i, j| ro.a_mats[k][(i, j)]);
            next.columns_mut(0, 2 * k).copy_from(&(a * sens[k].columns(0, 2 * k)));
        }
        for i in 0..4 {
            next[(i, 2 * k)] = ro.b_mats[k][(i, 0)];
            next[(i, 2 * k + 1)] = ro.b_mats[k][(i, 1)];
        }
        sens.push(next);
    }

    let kinds = constraint_layout(problem);
    let mut constraints = DVector::zeros(kinds.len());
    let mut jacobian = DMatrix::zeros(kinds.len(), 2 * n);
    for (row, kind) in kinds.iter().enumerate() {
        let stage = kind.stage();
        constraints[row] = constraint_value(problem, kind, &ro.states);
        let g = constraint_state_gradient(problem, kind, &ro.states);
        let jr = g.transpose() * &sens[stage];
        jacobian.row_mut(row).copy_from(&jr);
    }

    Gradients { rollout: ro, objective, gradient, constraints, jacobian, kinds }
}

/// Gradient of `f - sum(mu_i c_i)` over the path constraints.
pub fn lagrangian_gradient(problem: &HorizonProblem, controls: &[f64], multipliers: &[f64]) -> DVector<f64> {
    let ro = rollout(problem, controls);
    let mut grad_x = cost_state_gradients(problem, &ro);
    for (kind, mu) in constraint_layout(problem).iter().zip(multipliers) {
        if *mu != 0.0 {
            grad_x[kind.stage()] -= constraint_state_gradient(problem, kind, &ro.states) * *mu;
        }
    }
    adjoint_sweep(problem, &ro, controls, &grad_x)
}
