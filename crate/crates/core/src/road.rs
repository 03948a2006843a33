//! Road description: a reference polyline (centre of lane 0) with lanes
//! stacked to its left.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::geometry::{cross, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadModel {
    pub lane_count: usize,
    pub lane_width: f64,
    /// Centre line of lane 0 as `[x, y]` vertices; extrapolated past both ends.
    pub centerline: Vec<[f64; 2]>,
}

/// Station along the centre line and signed lateral offset (positive left).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frenet {
    pub s: f64,
    pub d: f64,
}

impl Default for RoadModel {
    fn default() -> Self {
        Self::straight(2, 4.0)
    }
}

impl RoadModel {
    /// Straight road along +x with lane 0 centred on `y = 0`.
    pub fn straight(lane_count: usize, lane_width: f64) -> Self {
        Self { lane_count, lane_width, centerline: vec![[0.0, 0.0], [1000.0, 0.0]] }
    }

    fn vertex(&self, i: usize) -> Point {
        Point::new(self.centerline[i][0], self.centerline[i][1])
    }

    fn segments(&self) -> impl Iterator<Item = (usize, f64, Point, Vector2<f64>)> + '_ {
        let mut s0 = 0.0;
        (0..self.centerline.len().saturating_sub(1)).map(move |i| {
            let a = self.vertex(i);
            let ab = self.vertex(i + 1) - a;
            let start = s0;
            s0 += ab.norm();
            (i, start, a, ab)
        })
    }

    pub fn project(&self, p: &Point) -> Frenet {
        let last = self.centerline.len() - 2;
        let mut best = (f64::INFINITY, Frenet { s: 0.0, d: 0.0 });
        for (i, s0, a, ab) in self.segments() {
            let len = ab.norm();
            let mut t = (p - a).dot(&ab) / (len * len);
            if i > 0 {
                t = t.max(0.0);
            }
            if i < last {
                t = t.min(1.0);
            }
            let foot = a + ab * t;
            let dist = (p - foot).norm();
            if dist < best.0 {
                let d = cross(&(ab / len), &(p - a));
                best = (dist, Frenet { s: s0 + t * len, d });
            }
        }
        best.1
    }

    fn segment_at(&self, s: f64) -> (f64, Point, Vector2<f64>) {
        let mut found = None;
        for (_, s0, a, ab) in self.segments() {
            found = Some((s0, a, ab));
            if s < s0 + ab.norm() {
                break;
            }
        }
        found.expect("road centre line needs at least two vertices")
    }

    pub fn point_at(&self, s: f64, d: f64) -> Point {
        let (s0, a, ab) = self.segment_at(s);
        let dir = ab / ab.norm();
        a + dir * (s - s0) + Vector2::new(-dir.y, dir.x) * d
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let (_, _, ab) = self.segment_at(s);
        ab.y.atan2(ab.x)
    }

    pub fn lane_offset(&self, lane: usize) -> f64 {
        lane as f64 * self.lane_width
    }

    pub fn lane_center(&self, lane: usize, s: f64) -> Point {
        self.point_at(s, self.lane_offset(lane))
    }

    /// Lateral bounds `(right, left)` of a lane.
    pub fn lane_bounds(&self, lane: usize) -> (f64, f64) {
        let c = self.lane_offset(lane);
        (c - 0.5 * self.lane_width, c + 0.5 * self.lane_width)
    }

    pub fn road_bounds(&self) -> (f64, f64) {
        (-0.5 * self.lane_width, (self.lane_count as f64 - 0.5) * self.lane_width)
    }

    /// Distance to the nearest road boundary, `None` when `p` is off the road.
    pub fn edge_distance(&self, p: &Point) -> Option<f64> {
        let f = self.project(p);
        let (lo, hi) = self.road_bounds();
        if f.d < lo || f.d > hi {
            None
        } else {
            Some((f.d - lo).min(hi - f.d))
        }
    }

    /// Lane containing lateral offset `d`, if any.
    pub fn lane_of(&self, d: f64) -> Option<usize> {
        let (lo, hi) = self.road_bounds();
        if d < lo || d > hi {
            return None;
        }
        Some((((d - lo) / self.lane_width).floor() as usize).min(self.lane_count - 1))
    }
}
