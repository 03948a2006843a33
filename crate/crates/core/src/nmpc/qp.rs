//! Dense strictly convex QP solver (Goldfarb–Idnani dual active set).
//!
//! Solves `min 0.5 x'Hx + g'x  s.t.  C x >= b` for positive definite `H`.
//! Problem sizes here are a few dozen variables, so the projected systems
//! are simply refactored at every step.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("constraints are infeasible")]
    Infeasible,
    #[error("active-set iteration limit reached")]
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint row, zero for inactive rows.
    pub multipliers: DVector<f64>,
    pub active: Vec<usize>,
}

pub fn solve_qp(h: &DMatrix<f64>, g: &DVector<f64>, c: &DMatrix<f64>, b: &DVector<f64>) -> Result<QpSolution, QpError> {
    let n = h.nrows();
    let m = c.nrows();
    let chol = Cholesky::new(h.clone()).ok_or(QpError::NotPositiveDefinite)?;
    let mut x = -chol.solve(g);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();

    let row = |i: usize| -> DVector<f64> { c.row(i).transpose() };
    let hinv_rows: Vec<DVector<f64>> = (0..m).map(|i| chol.solve(&row(i))).collect();
    let scale: Vec<f64> = (0..m).map(|i| row(i).norm().max(1.0)).collect();

    let max_iter = 10 * (n + m) + 50;
    let mut iters = 0;
    loop {
        // most violated inactive constraint
        let mut p = None;
        let mut worst = 0.0;
        for i in 0..m {
            if active.contains(&i) {
                continue;
            }
            let s = (c.row(i) * &x)[0] - b[i];
            let tol = 1e-11 * scale[i] * (1.0 + b[i].abs());
            if s < -tol && s / scale[i] < worst {
                worst = s / scale[i];
                p = Some(i);
            }
        }
        let Some(p) = p else { break };
        let mut u_p = 0.0;

        loop {
            iters += 1;
            if iters > max_iter {
                return Err(QpError::IterationLimit);
            }
            let n_p = row(p);
            let q = active.len();
            let (z, r) = if q == 0 {
                (hinv_rows[p].clone(), DVector::zeros(0))
            } else {
                // M = N' H^-1 N,  r = M^-1 N' H^-1 n_p,  z = H^-1 (n_p - N r)
                let mut mm = DMatrix::zeros(q, q);
                let mut w = DVector::zeros(q);
                for (a, &ia) in active.iter().enumerate() {
                    w[a] = (c.row(ia) * &hinv_rows[p])[0];
                    for (bb, &ib) in active.iter().enumerate() {
                        mm[(a, bb)] = (c.row(ia) * &hinv_rows[ib])[0];
                    }
                }
                let r = match Cholesky::<f64, Dyn>::new(mm.clone()) {
                    Some(f) => f.solve(&w),
                    None => mm.lu().solve(&w).ok_or(QpError::Infeasible)?,
                };
                let mut z = hinv_rows[p].clone();
                for (a, &ia) in active.iter().enumerate() {
                    z -= &hinv_rows[ia] * r[a];
                }
                (z, r)
            };

            // dual step length
            let mut t1 = f64::INFINITY;
            let mut k_drop = None;
            for j in 0..q {
                if r[j] > 1e-12 {
                    let t = u[j] / r[j];
                    if t < t1 {
                        t1 = t;
                        k_drop = Some(j);
                    }
                }
            }
            // primal step length
            let zn = z.dot(&n_p);
            let s_p = n_p.dot(&x) - b[p];
            let t2 = if zn > 1e-12 * n_p.dot(&hinv_rows[p]).max(1e-300) { -s_p / zn } else { f64::INFINITY };

            if t1.is_infinite() && t2.is_infinite() {
                return Err(QpError::Infeasible);
            }
            if t2.is_infinite() {
                for j in 0..q {
                    u[j] -= t1 * r[j];
                }
                u_p += t1;
                let k = k_drop.unwrap();
                active.remove(k);
                u.remove(k);
                continue;
            }
            let t = t1.min(t2);
            x += &z * t;
            for j in 0..q {
                u[j] -= t * r[j];
            }
            u_p += t;
            if t2 <= t1 {
                active.push(p);
                u.push(u_p);
                break;
            }
            let k = k_drop.unwrap();
            active.remove(k);
            u.remove(k);
        }
    }

    let mut multipliers = DVector::zeros(m);
    for (j, &i) in active.iter().enumerate() {
        multipliers[i] = u[j].max(0.0);
    }
    Ok(QpSolution { x, multipliers, active })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unconstrained_minimum() {
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let g = DVector::from_vec(vec![-2.0, -4.0]);
        let s = solve_qp(&h, &g, &DMatrix::zeros(0, 2), &DVector::zeros(0)).unwrap();
        assert_relative_eq!(s.x[0], 1.0);
        assert_relative_eq!(s.x[1], 1.0);
    }

    #[test]
    fn textbook_problem() {
        // min x1^2 + x2^2 - 2x1 - 5x2 style problem with three linear inequalities
        // min (x1-1)^2 + (x2-2.5)^2, s.t. x1 - 2x2 + 2 >= 0, -x1 - 2x2 + 6 >= 0, -x1 + 2x2 + 2 >= 0, x >= 0
        let h = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 2.0]);
        let g = DVector::from_vec(vec![-2.0, -5.0]);
        let c = DMatrix::from_row_slice(5, 2, &[1.0, -2.0, -1.0, -2.0, -1.0, 2.0, 1.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![-2.0, -6.0, -2.0, 0.0, 0.0]);
        let s = solve_qp(&h, &g, &c, &b).unwrap();
        assert_relative_eq!(s.x[0], 1.4, epsilon = 1e-10);
        assert_relative_eq!(s.x[1], 1.7, epsilon = 1e-10);
        assert_eq!(s.active, vec![0]);
        assert_relative_eq!(s.multipliers[0], 0.8, epsilon = 1e-10);
        let kkt = &h * &s.x + &g - c.transpose() * &s.multipliers;
        assert!(kkt.amax() < 1e-10);
    }

    #[test]
    fn detects_infeasibility() {
        let h = DMatrix::identity(1, 1);
        let g = DVector::zeros(1);
        let c = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(solve_qp(&h, &g, &c, &b), Err(QpError::Infeasible));
    }

    #[test]
    fn box_matches_clipping() {
        let h = DMatrix::identity(3, 3);
        let g = DVector::from_vec(vec![-5.0, 5.0, -0.5]);
        let mut c = DMatrix::zeros(6, 3);
        let mut b = DVector::zeros(6);
        for i in 0..3 {
            c[(2 * i, i)] = 1.0;
            b[2 * i] = -1.0;
            c[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -1.0;
        }
        let s = solve_qp(&h, &g, &c, &b).unwrap();
        assert_relative_eq!(s.x[0], 1.0);
        assert_relative_eq!(s.x[1], -1.0);
        assert_relative_eq!(s.x[2], 0.5);
    }
}
