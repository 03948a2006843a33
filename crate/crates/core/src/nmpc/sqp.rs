//! SQP iteration with an l1 merit line search.
//!
//! The Lagrangian Hessian comes from central differences of the adjoint
//! gradient and is pushed to positive definiteness by eigenvalue clamping.
//! When the linearised constraints are inconsistent the step is taken from
//! an elastic QP that penalises constraint slacks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::qp::{solve_qp, QpSolution};
use super::rollout::{analytic_gradients, constraint_values, lagrangian_gradient, objective, rollout, Gradients};
use super::HorizonProblem;
use crate::dynamics::{ControlInput, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    InfeasibleFallback,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max_iter",
            SolveStatus::InfeasibleFallback => "infeasible_fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub kkt_tol: f64,
    pub constraint_tol: f64,
    /// Difference step for the Hessian.
    pub hessian_step: f64,
    pub min_eigenvalue: f64,
    pub elastic_penalty: f64,
    /// Violation above which the best iterate is discarded for full braking.
    pub fallback_violation: f64,
    pub max_backtracks: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 40,
            kkt_tol: 1e-4,
            constraint_tol: 1e-6,
            hessian_step: 1e-5,
            min_eigenvalue: 1e-2,
            elastic_penalty: 1e4,
            fallback_violation: 1e-3,
            max_backtracks: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonSolution {
    /// Predicted states `x_1 .. x_N`.
    pub states: Vec<VehicleState>,
    pub controls: Vec<ControlInput>,
    pub objective: f64,
    pub kkt_residual: f64,
    /// Largest path-constraint violation (`max(0, -c)`).
    pub constraint_violation: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl HorizonSolution {
    /// Controls advanced by one stage, last control repeated.
    pub fn shifted_controls(&self) -> Vec<ControlInput> {
        let mut u: Vec<ControlInput> = self.controls.iter().skip(1).copied().collect();
        if let Some(last) = self.controls.last() {
            u.push(*last);
        }
        u
    }

    pub fn first_control(&self) -> ControlInput {
        self.controls[0]
    }
}

struct Iterate {
    u: Vec<f64>,
    objective: f64,
    violation: f64,
    kkt: f64,
}

fn flatten(controls: &[ControlInput], n: usize) -> Vec<f64> {
    let mut flat = Vec::with_capacity(2 * n);
    for k in 0..n {
        let c = controls.get(k).or(controls.last()).copied().unwrap_or_default();
        flat.push(c.a);
        flat.push(c.delta);
    }
    flat
}

fn unflatten(flat: &[f64]) -> Vec<ControlInput> {
    flat.chunks(2).map(|c| ControlInput::new(c[0], c[1])).collect()
}

fn bounds(problem: &HorizonProblem) -> (Vec<f64>, Vec<f64>) {
    let l = &problem.control_limits;
    let lo = (0..problem.horizon).flat_map(|_| [l.a_min, l.delta_min]).collect();
    let hi = (0..problem.horizon).flat_map(|_| [l.a_max, l.delta_max]).collect();
    (lo, hi)
}

fn violation(c: &[f64]) -> f64 {
    c.iter().fold(0.0, |m, &v| m.max(-v))
}

fn l1_violation(c: &[f64]) -> f64 {
    c.iter().map(|&v| (-v).max(0.0)).sum()
}

fn merit(problem: &HorizonProblem, u: &[f64], rho: f64) -> (f64, f64, Vec<f64>) {
    let ro = rollout(problem, u);
    let f = objective(problem, &ro.states, u);
    let c = constraint_values(problem, &ro.states);
    (f + rho * l1_violation(&c), f, c)
}

fn hessian(problem: &HorizonProblem, u: &[f64], mu: &[f64], h: f64, floor: f64) -> DMatrix<f64> {
    let n = u.len();
    let mut hess = DMatrix::zeros(n, n);
    let mut up = u.to_vec();
    for i in 0..n {
        up[i] = u[i] + h;
        let gp = lagrangian_gradient(problem, &up, mu);
        up[i] = u[i] - h;
        let gm = lagrangian_gradient(problem, &up, mu);
        up[i] = u[i];
        hess.set_column(i, &((gp - gm) / (2.0 * h)));
    }
    let sym = (&hess + hess.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.amax();
    let lo = floor.max(1e-8 * scale);
    let clamped = eig.eigenvalues.map(|l| l.max(lo));
    &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}

/// Linearised constraint rows `C d >= b`: path constraints, then the
/// control box as lower/upper pairs.
fn linearised_rows(gr: &Gradients, u: &[f64], lo: &[f64], hi: &[f64], shift: Option<&DVector<f64>>) -> (DMatrix<f64>, DVector<f64>) {
    let n = u.len();
    let m = gr.constraints.len();
    let mut c = DMatrix::zeros(m + 2 * n, n);
    let mut b = DVector::zeros(m + 2 * n);
    c.rows_mut(0, m).copy_from(&gr.jacobian);
    for i in 0..m {
        b[i] = -shift.map_or(gr.constraints[i], |s| s[i]);
    }
    for i in 0..n {
        c[(m + 2 * i, i)] = 1.0;
        b[m + 2 * i] = lo[i] - u[i];
        c[(m + 2 * i + 1, i)] = -1.0;
        b[m + 2 * i + 1] = u[i] - hi[i];
    }
    (c, b)
}

/// Step from the regular QP, or from the elastic QP if that is infeasible.
/// Returned multipliers cover the regular row layout.
fn qp_step(h: &DMatrix<f64>, g: &DVector<f64>, c: &DMatrix<f64>, b: &DVector<f64>, m: usize, penalty: f64) -> Option<QpSolution> {
    if let Ok(sol) = solve_qp(h, g, c, b) {
        return Some(sol);
    }
    let n = h.nrows();
    let rows = c.nrows();
    let mut he = DMatrix::zeros(n + m, n + m);
    he.view_mut((0, 0), (n, n)).copy_from(h);
    for j in 0..m {
        he[(n + j, n + j)] = 1e-2;
    }
    let mut ge = DVector::zeros(n + m);
    ge.rows_mut(0, n).copy_from(g);
    ge.rows_mut(n, m).fill(penalty);
    let mut ce = DMatrix::zeros(rows + m, n + m);
    ce.view_mut((0, 0), (rows, n)).copy_from(c);
    let mut be = DVector::zeros(rows + m);
    be.rows_mut(0, rows).copy_from(b);
    for j in 0..m {
        ce[(j, n + j)] = 1.0;
        ce[(rows + j, n + j)] = 1.0;
    }
    let sol = solve_qp(&he, &ge, &ce, &be).ok()?;
    Some(QpSolution {
        x: sol.x.rows(0, n).into_owned(),
        multipliers: sol.multipliers.rows(0, rows).into_owned(),
        active: sol.active.into_iter().filter(|&i| i < rows).collect(),
    })
}

fn kkt_residual(gr: &Gradients, u: &[f64], lo: &[f64], hi: &[f64], mult: &DVector<f64>) -> f64 {
    let n = u.len();
    let m = gr.constraints.len();
    let mut stat = gr.gradient.clone();
    let mut comp: f64 = 0.0;
    for i in 0..m {
        let mu = mult[i];
        stat -= gr.jacobian.row(i).transpose() * mu;
        comp = comp.max((mu * gr.constraints[i]).abs());
    }
    for i in 0..n {
        let ml = mult[m + 2 * i];
        let mh = mult[m + 2 * i + 1];
        stat[i] -= ml - mh;
        comp = comp.max((ml * (u[i] - lo[i])).abs()).max((mh * (hi[i] - u[i])).abs());
    }
    stat.amax().max(comp)
}

fn finish(problem: &HorizonProblem, it: &Iterate, iterations: usize, options: &SolverOptions) -> HorizonSolution {
    let converged = it.kkt <= options.kkt_tol && it.violation <= options.constraint_tol;
    let ro = rollout(problem, &it.u);
    HorizonSolution {
        states: ro.states[1..].to_vec(),
        controls: unflatten(&it.u),
        objective: it.objective,
        kkt_residual: it.kkt,
        constraint_violation: it.violation,
        iterations,
        status: if converged { SolveStatus::Converged } else { SolveStatus::MaxIter },
    }
}

/// Full braking with zero steering over the horizon.
pub fn fallback(problem: &HorizonProblem, iterations: usize) -> HorizonSolution {
    let u = flatten(&[ControlInput::new(problem.control_limits.a_min, 0.0)], problem.horizon);
    let ro = rollout(problem, &u);
    let c = constraint_values(problem, &ro.states);
    HorizonSolution {
        states: ro.states[1..].to_vec(),
        controls: unflatten(&u),
        objective: objective(problem, &ro.states, &u),
        kkt_residual: f64::INFINITY,
        constraint_violation: violation(&c),
        iterations,
        status: SolveStatus::InfeasibleFallback,
    }
}

fn run_sqp(problem: &HorizonProblem, guess: &[ControlInput], options: &SolverOptions) -> (Option<Iterate>, Iterate, usize) {
    let (lo, hi) = bounds(problem);
    let mut u: Vec<f64> = flatten(guess, problem.horizon);
    for i in 0..u.len() {
        u[i] = u[i].clamp(lo[i], hi[i]);
    }
    let mut rho: f64 = 10.0;
    let mut mu_path: Vec<f64> = Vec::new();
    let mut best_feasible: Option<Iterate> = None;
    let mut least_violation: Option<Iterate> = None;
    let mut iterations = 0;

    for iter in 0..=options.max_iterations {
        iterations = iter;
        let gr = analytic_gradients(problem, &u);
        let m = gr.constraints.len();
        let viol = violation(gr.constraints.as_slice());
        if mu_path.len() != m {
            mu_path = vec![0.0; m];
        }
        let h = hessian(problem, &u, &mu_path, options.hessian_step, options.min_eigenvalue);
        let (c, b) = linearised_rows(&gr, &u, &lo, &hi, None);
        let step = qp_step(&h, &gr.gradient, &c, &b, m, options.elastic_penalty);
        let (kkt, step) = match step {
            Some(s) => (kkt_residual(&gr, &u, &lo, &hi, &s.multipliers), Some(s)),
            None => (f64::INFINITY, None),
        };

        let current = Iterate { u: u.clone(), objective: gr.objective, violation: viol, kkt };
        let converged = kkt <= options.kkt_tol && viol <= options.constraint_tol;
        let replace_least = least_violation.as_ref().is_none_or(|b| viol < b.violation);
        if viol <= options.constraint_tol {
            let better = best_feasible.as_ref().is_none_or(|b| {
                gr.objective < b.objective || (converged && gr.objective <= b.objective + 1e-9 * (1.0 + b.objective.abs()))
            });
            if better {
                best_feasible = Some(Iterate { u: u.clone(), ..current });
            }
        } else if replace_least {
            least_violation = Some(current);
        }
        if converged || iter == options.max_iterations {
            break;
        }
        let Some(step) = step else { break };

        let d = &step.x;
        let mu_max = step.multipliers.rows(0, m).amax();
        rho = rho.max(1.5 * mu_max + 1.0);
        let phi0 = gr.objective + rho * l1_violation(gr.constraints.as_slice());
        let dphi = gr.gradient.dot(d) - rho * l1_violation(gr.constraints.as_slice());
        mu_path = step.multipliers.rows(0, m).iter().copied().collect();
        if d.amax() < 1e-14 || dphi >= 0.0 {
            break;
        }

        let trial = |alpha: f64, dir: &DVector<f64>| -> Vec<f64> {
            u.iter().zip(dir.iter()).enumerate().map(|(i, (x, s))| (x + alpha * s).clamp(lo[i], hi[i])).collect()
        };

        let full = trial(1.0, d);
        let (phi_full, _, c_full) = merit(problem, &full, rho);
        let mut accepted = None;
        if phi_full <= phi0 + 1e-4 * dphi {
            accepted = Some(full);
        } else {
            // second-order correction for curved constraints
            let shift = DVector::from_vec(c_full) - &gr.jacobian * d;
            let (c2, b2) = linearised_rows(&gr, &u, &lo, &hi, Some(&shift));
            if let Some(soc) = qp_step(&h, &gr.gradient, &c2, &b2, m, options.elastic_penalty) {
                let cand = trial(1.0, &soc.x);
                if merit(problem, &cand, rho).0 <= phi0 + 1e-4 * dphi {
                    accepted = Some(cand);
                }
            }
        }
        if accepted.is_none() {
            let mut alpha = 0.5;
            let mut best = (phi0, None);
            for _ in 0..options.max_backtracks {
                let cand = trial(alpha, d);
                let phi = merit(problem, &cand, rho).0;
                if phi <= phi0 + 1e-4 * alpha * dphi {
                    best = (phi, Some(cand));
                    break;
                }
                if phi < best.0 {
                    best = (phi, Some(cand));
                }
                alpha *= 0.5;
            }
            accepted = best.1;
        }
        match accepted {
            Some(next) => u = next,
            None => break,
        }
    }

    let fallback_iterate = least_violation.unwrap_or(Iterate {
        u: u.clone(),
        objective: f64::INFINITY,
        violation: f64::INFINITY,
        kkt: f64::INFINITY,
    });
    (best_feasible, fallback_iterate, iterations)
}

/// Solve from an explicit control guess. When the guess satisfies the
/// constraints the returned objective is never worse than the guess.
pub fn solve_from(problem: &HorizonProblem, guess: &[ControlInput], options: &SolverOptions) -> HorizonSolution {
    let (feasible, least, iterations) = run_sqp(problem, guess, options);
    match feasible {
        Some(it) => finish(problem, &it, iterations, options),
        None if least.violation <= options.fallback_violation => finish(problem, &least, iterations, options),
        None => fallback(problem, iterations),
    }
}

fn quality(s: &HorizonSolution) -> (u8, f64) {
    let rank = match s.status {
        SolveStatus::Converged => 0,
        SolveStatus::MaxIter => 1,
        SolveStatus::InfeasibleFallback => 2,
    };
    (rank, s.objective)
}

/// Solve with a warm start when available; if that does not converge a
/// coasting and a braking guess are tried as well and the best result kept.
pub fn solve_with(problem: &HorizonProblem, warm: Option<&[ControlInput]>, options: &SolverOptions) -> HorizonSolution {
    let coast = vec![ControlInput::default()];
    let brake = vec![ControlInput::new(problem.control_limits.a_min, 0.0)];
    let mut seeds: Vec<&[ControlInput]> = Vec::new();
    if let Some(w) = warm {
        seeds.push(w);
    }
    seeds.push(&coast);
    seeds.push(&brake);

    let mut best: Option<HorizonSolution> = None;
    let mut total_iterations = 0;
    for seed in seeds {
        let sol = solve_from(problem, seed, options);
        total_iterations += sol.iterations;
        let better = best.as_ref().is_none_or(|b| {
            let (qa, fa) = quality(&sol);
            let (qb, fb) = quality(b);
            qa < qb || (qa == qb && fa < fb)
        });
        if better {
            best = Some(sol);
        }
        if best.as_ref().is_some_and(|b| b.status == SolveStatus::Converged) {
            break;
        }
    }
    let mut best = best.expect("at least one seed");
    best.iterations = total_iterations;
    best
}

pub fn solve(problem: &HorizonProblem, warm: Option<&HorizonSolution>) -> HorizonSolution {
    let shifted = warm.map(|w| w.shifted_controls());
    solve_with(problem, shifted.as_deref(), &SolverOptions::default())
}
