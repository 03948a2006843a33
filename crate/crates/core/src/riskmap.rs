//! Local potential-field risk map and the safe set extracted from it.
//!
//! Each obstacle is the body rectangle extended by a triangle in front and
//! behind whose length grows with speed. Obstacles and road edges both
//! contribute a Yukawa-shaped term `A * exp(-alpha * d) / d`.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::dynamics::{VehicleGeometry, VehicleState};
use crate::geometry::{ConvexPolygon, Point};
use crate::road::RoadModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RiskParams {
    pub obstacle_gain: f64,
    pub obstacle_decay: f64,
    pub edge_gain: f64,
    pub edge_decay: f64,
    pub threshold: f64,
    pub cap: f64,
    pub epsilon: f64,
    /// Grid cell size (m).
    pub resolution: f64,
    pub sensing_radius: f64,
    pub triangle_min_length: f64,
    /// Triangle length per unit speed (s).
    pub triangle_headway: f64,
}

impl Default for RiskParams {
    fn default() -> Self {
        Self {
            obstacle_gain: 10.0,
            obstacle_decay: 0.5,
            edge_gain: 4.0,
            edge_decay: 1.0,
            threshold: 1.0,
            cap: 1e6,
            epsilon: 1e-3,
            resolution: 0.5,
            sensing_radius: 20.0,
            triangle_min_length: 2.0,
            triangle_headway: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleVehicle {
    pub id: String,
    pub state: VehicleState,
    pub geom: VehicleGeometry,
}

impl ObstacleVehicle {
    pub fn body(&self) -> ConvexPolygon {
        ConvexPolygon::rectangle(self.state.position(), self.state.psi, self.geom.length, self.geom.width)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyTriangles {
    pub front_vertex: Point,
    pub rear_vertex: Point,
    pub front_length: f64,
    pub rear_length: f64,
    /// Body rectangle plus both triangles, counter-clockwise.
    pub augmented_polygon: ConvexPolygon,
}

fn triangle_length(speed: f64, params: &RiskParams) -> f64 {
    params.triangle_min_length.max(params.triangle_headway * speed)
}

fn build_triangles(obs: &ObstacleVehicle, front_len: f64, rear_len: f64) -> SafetyTriangles {
    let (s, c) = obs.state.psi.sin_cos();
    let fwd = Vector2::new(c, s);
    let left = Vector2::new(-s, c);
    let center = obs.state.position();
    let half_l = 0.5 * obs.geom.length;
    let half_w = 0.5 * obs.geom.width;
    let front_vertex = center + fwd * (half_l + front_len);
    let rear_vertex = center - fwd * (half_l + rear_len);
    let polygon = ConvexPolygon::new(vec![
        rear_vertex,
        center - fwd * half_l - left * half_w,
        center + fwd * half_l - left * half_w,
        front_vertex,
        center + fwd * half_l + left * half_w,
        center - fwd * half_l + left * half_w,
    ]);
    SafetyTriangles {
        front_vertex,
        rear_vertex,
        front_length: front_len,
        rear_length: rear_len,
        augmented_polygon: polygon,
    }
}

/// Triangles sized by the obstacle's own speed only.
pub fn velocity_triangles(obs: &ObstacleVehicle, params: &RiskParams) -> SafetyTriangles {
    let len = triangle_length(obs.state.v, params);
    build_triangles(obs, len, len)
}

/// Rate at which the ego closes the distance to the obstacle (never negative).
pub fn closing_speed(ev: &VehicleState, obs: &VehicleState) -> f64 {
    let rel = obs.position() - ev.position();
    let dist = rel.norm();
    if dist < 1e-9 {
        return 0.0;
    }
    let v_ev = Vector2::new(ev.psi.cos(), ev.psi.sin()) * ev.v;
    let v_obs = Vector2::new(obs.psi.cos(), obs.psi.sin()) * obs.v;
    ((v_ev - v_obs).dot(&rel) / dist).max(0.0)
}

/// Triangles as used in the risk map: the rear one follows the obstacle's
/// speed, the front one the larger of that and the ego's closing speed.
pub fn velocity_triangles_relative(
    obs: &ObstacleVehicle,
    ev: &VehicleState,
    params: &RiskParams,
) -> SafetyTriangles {
    let rear = triangle_length(obs.state.v, params);
    let front = triangle_length(obs.state.v.max(closing_speed(ev, &obs.state)), params);
    build_triangles(obs, front, rear)
}

fn yukawa(gain: f64, decay: f64, d: f64, params: &RiskParams) -> f64 {
    if d <= 0.0 {
        return params.cap;
    }
    (gain * (-decay * d).exp() / d.max(params.epsilon)).min(params.cap)
}

/// Combined potential at `p`.
pub fn risk_at(p: &Point, road: &RoadModel, obstacles: &[SafetyTriangles], params: &RiskParams) -> f64 {
    let edge = match road.edge_distance(p) {
        Some(d) => yukawa(params.edge_gain, params.edge_decay, d, params),
        None => return params.cap,
    };
    let mut total = edge;
    for tri in obstacles {
        let d = tri.augmented_polygon.distance_to_point(p);
        total += yukawa(params.obstacle_gain, params.obstacle_decay, d, params);
        if total >= params.cap {
            return params.cap;
        }
    }
    total.min(params.cap)
}

/// Risk evaluator bound to one planning tick's road and obstacles.
#[derive(Debug, Clone)]
pub struct RiskField {
    pub road: RoadModel,
    pub triangles: Vec<SafetyTriangles>,
    pub params: RiskParams,
}

impl RiskField {
    pub fn new(road: &RoadModel, ev: &VehicleState, obstacles: &[ObstacleVehicle], params: &RiskParams) -> Self {
        Self {
            road: road.clone(),
            triangles: obstacles.iter().map(|o| velocity_triangles_relative(o, ev, params)).collect(),
            params: *params,
        }
    }

    pub fn risk_at(&self, p: &Point) -> f64 {
        risk_at(p, &self.road, &self.triangles, &self.params)
    }

    pub fn is_safe(&self, p: &Point) -> bool {
        self.risk_at(p) <= self.params.threshold
    }
}

/// Square raster of risk values, aligned to multiples of the resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskGrid {
    pub origin: Point,
    pub resolution: f64,
    pub radius: f64,
    pub center: Point,
    pub cols: usize,
    pub rows: usize,
    /// Row-major (`row * cols + col`), rows along +y.
    pub values: Vec<f64>,
}

impl RiskGrid {
    pub fn cell_center(&self, col: usize, row: usize) -> Point {
        Point::new(
            self.origin.x + col as f64 * self.resolution,
            self.origin.y + row as f64 * self.resolution,
        )
    }

    pub fn value(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn in_range(&self, p: &Point) -> bool {
        (p - self.center).norm() <= self.radius + 1e-9
    }

    /// `x,y,risk` lines with a header, row-major.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,risk\n");
        for row in 0..self.rows {
            for col in 0..self.cols {
                let p = self.cell_center(col, row);
                out.push_str(&format!("{},{},{}\n", p.x, p.y, self.value(col, row)));
            }
        }
        out
    }
}

/// Grid points whose risk does not exceed the threshold, in grid order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SafeSet {
    pub points: Vec<Point>,
}

impl SafeSet {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}

/// Rasterises the risk field around the ego and keeps the sub-threshold cells
/// within the sensing radius. An empty result is a valid outcome.
pub fn build_safe_set(
    ev: &VehicleState,
    road: &RoadModel,
    obstacles: &[ObstacleVehicle],
    params: &RiskParams,
) -> (RiskGrid, SafeSet) {
    let field = RiskField::new(road, ev, obstacles, params);
    build_safe_set_from_field(ev, &field)
}

pub fn build_safe_set_from_field(ev: &VehicleState, field: &RiskField) -> (RiskGrid, SafeSet) {
    let params = &field.params;
    let res = params.resolution;
    let r = params.sensing_radius;
    let col0 = ((ev.x - r) / res).floor() as i64;
    let row0 = ((ev.y - r) / res).floor() as i64;
    let col1 = ((ev.x + r) / res).ceil() as i64;
    let row1 = ((ev.y + r) / res).ceil() as i64;
    let cols = (col1 - col0 + 1) as usize;
    let rows = (row1 - row0 + 1) as usize;

    let mut grid = RiskGrid {
        origin: Point::new(col0 as f64 * res, row0 as f64 * res),
        resolution: res,
        radius: r,
        center: ev.position(),
        cols,
        rows,
        values: Vec::with_capacity(cols * rows),
    };
    let mut safe = SafeSet::default();
    for row in 0..rows {
        for col in 0..cols {
            let p = grid.cell_center(col, row);
            let u = field.risk_at(&p);
            grid.values.push(u);
            if u <= params.threshold && grid.in_range(&p) {
                safe.points.push(p);
            }
        }
    }
    (grid, safe)
}
