//! Kinematic bicycle model and its Runge-Kutta stepper.
//!
//! The state is `[x, y, psi, v]` in the world frame and the control is
//! `[a, delta]`. The same stepper drives the plant, the reachable-set
//! boundaries and the NMPC prediction model, so all three agree exactly.

use std::f64::consts::PI;

use nalgebra::{Matrix4, Matrix4x2, Point2};
use serde::{Deserialize, Serialize};

/// Number of RK4 sub-steps taken inside one call to [`step`].
pub const RK4_SUBSTEPS: usize = 4;

/// Pose and speed of one vehicle in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
    pub v: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, psi: f64, v: f64) -> Self {
        Self { x, y, psi, v }
    }

    pub fn position(&self) -> Point2<f64> {
        Point2::new(self.x, self.y)
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.y, self.psi, self.v]
    }

    pub fn from_array(s: [f64; 4]) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }
}

/// Longitudinal acceleration and front steering angle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub a: f64,
    pub delta: f64,
}

impl ControlInput {
    pub fn new(a: f64, delta: f64) -> Self {
        Self { a, delta }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleGeometry {
    /// CoM to front axle (m).
    pub l_f: f64,
    /// CoM to rear axle (m).
    pub l_r: f64,
    pub length: f64,
    pub width: f64,
}

impl VehicleGeometry {
    pub fn wheelbase(&self) -> f64 {
        self.l_f + self.l_r
    }

    /// Zero-footprint geometry that keeps the axle distances usable.
    pub fn point_mass() -> Self {
        Self { length: 0.0, width: 0.0, ..Self::default() }
    }
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        Self { l_f: 1.4, l_r: 1.4, length: 4.5, width: 1.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControlLimits {
    pub a_min: f64,
    pub a_max: f64,
    pub delta_min: f64,
    pub delta_max: f64,
}

impl Default for ControlLimits {
    fn default() -> Self {
        Self { a_min: -5.0, a_max: 3.0, delta_min: -0.6, delta_max: 0.6 }
    }
}

impl ControlLimits {
    pub fn clamp(&self, u: ControlInput) -> ControlInput {
        ControlInput {
            a: u.a.clamp(self.a_min, self.a_max),
            delta: u.delta.clamp(self.delta_min, self.delta_max),
        }
    }

    pub fn contains(&self, u: ControlInput, tol: f64) -> bool {
        u.a >= self.a_min - tol
            && u.a <= self.a_max + tol
            && u.delta >= self.delta_min - tol
            && u.delta <= self.delta_max + tol
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(angle: f64) -> f64 {
    let mut a = angle.rem_euclid(2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    }
    if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Angle of the CoM velocity relative to the body axis.
pub fn slip_angle(delta: f64, geom: &VehicleGeometry) -> f64 {
    (geom.l_r * delta.tan() / geom.wheelbase()).atan()
}

/// Time derivative `(x', y', psi', v')` of the bicycle model.
pub fn derivative(state: &VehicleState, u: &ControlInput, geom: &VehicleGeometry) -> [f64; 4] {
    rates(&state.to_array(), u, geom)
}

fn rates(s: &[f64; 4], u: &ControlInput, geom: &VehicleGeometry) -> [f64; 4] {
    let beta = slip_angle(u.delta, geom);
    let v = s[3];
    [
        v * (s[2] + beta).cos(),
        v * (s[2] + beta).sin(),
        v / geom.wheelbase() * beta.cos() * u.delta.tan(),
        u.a,
    ]
}

/// Partial derivatives of [`rates`] with respect to the state and the control.
fn rate_jacobians(
    s: &[f64; 4],
    u: &ControlInput,
    geom: &VehicleGeometry,
) -> (Matrix4<f64>, Matrix4x2<f64>) {
    let lw = geom.wheelbase();
    let k = geom.l_r / lw;
    let tan_d = u.delta.tan();
    let sec2 = 1.0 + tan_d * tan_d;
    let beta = (k * tan_d).atan();
    let dbeta = k * sec2 / (1.0 + k * k * tan_d * tan_d);
    let (sin_h, cos_h) = (s[2] + beta).sin_cos();
    let v = s[3];

    let mut fx = Matrix4::zeros();
    fx[(0, 2)] = -v * sin_h;
    fx[(0, 3)] = cos_h;
    fx[(1, 2)] = v * cos_h;
    fx[(1, 3)] = sin_h;
    fx[(2, 3)] = beta.cos() * tan_d / lw;

    let mut fu = Matrix4x2::zeros();
    fu[(3, 0)] = 1.0;
    fu[(0, 1)] = -v * sin_h * dbeta;
    fu[(1, 1)] = v * cos_h * dbeta;
    fu[(2, 1)] = v / lw * (-beta.sin() * dbeta * tan_d + beta.cos() * sec2);
    (fx, fu)
}

fn axpy4(s: &[f64; 4], h: f64, k: &[f64; 4]) -> [f64; 4] {
    [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2], s[3] + h * k[3]]
}

fn rk4_substep(s: &[f64; 4], u: &ControlInput, geom: &VehicleGeometry, h: f64) -> [f64; 4] {
    let k1 = rates(s, u, geom);
    let k2 = rates(&axpy4(s, 0.5 * h, &k1), u, geom);
    let k3 = rates(&axpy4(s, 0.5 * h, &k2), u, geom);
    let k4 = rates(&axpy4(s, h, &k3), u, geom);
    std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

fn finish_step(mut s: [f64; 4]) -> ([f64; 4], bool) {
    s[2] = wrap_angle(s[2]);
    let clamped = s[3] < 0.0;
    if clamped {
        s[3] = 0.0;
    }
    (s, clamped)
}

/// Advances the state by `dt` with RK4 (fixed sub-steps), re-wrapping the
/// heading and clamping the speed at zero.
pub fn step(state: &VehicleState, u: &ControlInput, geom: &VehicleGeometry, dt: f64) -> VehicleState {
    let h = dt / RK4_SUBSTEPS as f64;
    let mut s = state.to_array();
    for _ in 0..RK4_SUBSTEPS {
        s = rk4_substep(&s, u, geom, h);
    }
    VehicleState::from_array(finish_step(s).0)
}

/// [`step`] together with its Jacobians `d next / d state` and `d next / d u`.
///
/// The heading wrap has unit derivative; a speed clamp zeroes the speed row.
pub fn step_with_jacobian(
    state: &VehicleState,
    u: &ControlInput,
    geom: &VehicleGeometry,
    dt: f64,
) -> (VehicleState, Matrix4<f64>, Matrix4x2<f64>) {
    let h = dt / RK4_SUBSTEPS as f64;
    let mut s = state.to_array();
    let mut a_tot = Matrix4::<f64>::identity();
    let mut b_tot = Matrix4x2::<f64>::zeros();
    let eye = Matrix4::<f64>::identity();

    for _ in 0..RK4_SUBSTEPS {
        let k1 = rates(&s, u, geom);
        let (f1x, f1u) = rate_jacobians(&s, u, geom);
        let s2 = axpy4(&s, 0.5 * h, &k1);
        let k2 = rates(&s2, u, geom);
        let (f2x, f2u) = rate_jacobians(&s2, u, geom);
        let s3 = axpy4(&s, 0.5 * h, &k2);
        let k3 = rates(&s3, u, geom);
        let (f3x, f3u) = rate_jacobians(&s3, u, geom);
        let s4 = axpy4(&s, h, &k3);
        let k4 = rates(&s4, u, geom);
        let (f4x, f4u) = rate_jacobians(&s4, u, geom);

        let dk1x = f1x;
        let dk1u = f1u;
        let dk2x = f2x * (eye + dk1x * (0.5 * h));
        let dk2u = f2x * dk1u * (0.5 * h) + f2u;
        let dk3x = f3x * (eye + dk2x * (0.5 * h));
        let dk3u = f3x * dk2u * (0.5 * h) + f3u;
        let dk4x = f4x * (eye + dk3x * h);
        let dk4u = f4x * dk3u * h + f4u;

        let ax = eye + (dk1x + dk2x * 2.0 + dk3x * 2.0 + dk4x) * (h / 6.0);
        let au = (dk1u + dk2u * 2.0 + dk3u * 2.0 + dk4u) * (h / 6.0);

        s = std::array::from_fn(|i| s[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
        b_tot = ax * b_tot + au;
        a_tot = ax * a_tot;
    }

    let (s, clamped) = finish_step(s);
    if clamped {
        a_tot.row_mut(3).fill(0.0);
        b_tot.row_mut(3).fill(0.0);
    }
    (VehicleState::from_array(s), a_tot, b_tot)
}
