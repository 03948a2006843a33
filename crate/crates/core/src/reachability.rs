//! Reachable region over the planning horizon, bounded by the extreme
//! steering trajectories at the reference speed, and its intersection with
//! the safe set.

use crate::dynamics::{step, ControlInput, ControlLimits, VehicleGeometry, VehicleState};
use crate::geometry::{point_in_polygon, signed_area, Point};
use crate::riskmap::SafeSet;

/// Radius of the stand-in polygon returned for a zero reference speed.
pub const DEGENERATE_RADIUS: f64 = 1e-3;

const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ReachablePolygon {
    /// Closed boundary; the first vertex is the ego position.
    pub boundary: Vec<Point>,
    pub horizon: f64,
    /// Set when the reference speed was zero and the region collapsed to a point.
    pub degenerate: bool,
}

impl ReachablePolygon {
    pub fn contains(&self, p: &Point) -> bool {
        point_in_polygon(&self.boundary, p, BOUNDARY_TOL)
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.boundary).abs()
    }
}

fn endpoint_trail(ev: &VehicleState, v_ref: f64, delta: f64, geom: &VehicleGeometry, horizon: f64, samples: usize) -> Vec<Point> {
    let dt = horizon / samples as f64;
    let u = ControlInput::new(0.0, delta);
    let mut s = VehicleState { v: v_ref, ..*ev };
    (0..samples)
        .map(|_| {
            s = step(&s, &u, geom, dt);
            s.position()
        })
        .collect()
}

/// Fan-shaped polygon: ego position, the left (max steer) trail, an outer arc
/// of horizon endpoints sweeping through straight ahead, and the right (min
/// steer) trail back.
pub fn reachable_polygon(
    ev: &VehicleState,
    v_ref: f64,
    limits: &ControlLimits,
    geom: &VehicleGeometry,
    horizon: f64,
    samples: usize,
) -> ReachablePolygon {
    let samples = samples.max(1);
    if v_ref <= 1e-9 {
        let c = ev.position();
        let boundary = (0..8)
            .map(|k| {
                let th = k as f64 * std::f64::consts::FRAC_PI_4;
                Point::new(c.x + DEGENERATE_RADIUS * th.cos(), c.y + DEGENERATE_RADIUS * th.sin())
            })
            .collect();
        return ReachablePolygon { boundary, horizon, degenerate: true };
    }

    let left = endpoint_trail(ev, v_ref, limits.delta_max, geom, horizon, samples);
    let right = endpoint_trail(ev, v_ref, limits.delta_min, geom, horizon, samples);

    let mut boundary = Vec::with_capacity(4 * samples + 1);
    boundary.push(ev.position());
    boundary.extend(left.iter().copied());
    // Arc from max to min steering, midpoint at zero steering.
    let arc_steps = 2 * samples;
    let mid = 0.5 * (limits.delta_max + limits.delta_min);
    for j in 1..arc_steps {
        let delta = if j <= samples {
            limits.delta_max + (mid - limits.delta_max) * j as f64 / samples as f64
        } else {
            mid + (limits.delta_min - mid) * (j - samples) as f64 / samples as f64
        };
        let trail = endpoint_trail(ev, v_ref, delta, geom, horizon, samples);
        boundary.push(*trail.last().unwrap());
    }
    boundary.extend(right.iter().rev().copied());
    ReachablePolygon { boundary, horizon, degenerate: false }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SafeReachableSet {
    pub points: Vec<Point>,
}

impl SafeReachableSet {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}

/// Safe-set points inside the reachable polygon, in safe-set order.
pub fn intersect(safe: &SafeSet, reach: &ReachablePolygon) -> SafeReachableSet {
    SafeReachableSet {
        points: safe.points.iter().filter(|p| reach.contains(p)).copied().collect(),
    }
}
