//! Scripted traffic that follows lane centres with a speed profile.

use crate::dynamics::{VehicleGeometry, VehicleState};
use crate::riskmap::ObstacleVehicle;
use crate::road::RoadModel;

use super::scenario::{ActorSpec, Direction};

#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub id: String,
    pub lane: usize,
    pub direction: Direction,
    /// Current station along the road (m).
    pub s: f64,
    pub geometry: VehicleGeometry,
    profile: Vec<[f64; 2]>,
    /// Time the profile is measured from.
    t0: f64,
}

impl Actor {
    pub fn from_spec(spec: &ActorSpec) -> Self {
        Self {
            id: spec.id.clone(),
            lane: spec.lane,
            direction: spec.direction,
            s: spec.s0,
            geometry: spec.geometry,
            profile: spec.speed_profile.clone(),
            t0: 0.0,
        }
    }

    /// Constant-speed vehicle created mid-run.
    pub fn spawned(id: String, lane: usize, direction: Direction, s: f64, speed: f64, t0: f64) -> Self {
        Self { id, lane, direction, s, geometry: VehicleGeometry::default(), profile: vec![[0.0, speed]], t0 }
    }

    pub fn speed_at(&self, t: f64) -> f64 {
        let t = t - self.t0;
        let p = &self.profile;
        if t <= p[0][0] {
            return p[0][1];
        }
        for w in p.windows(2) {
            if t <= w[1][0] {
                let f = (t - w[0][0]) / (w[1][0] - w[0][0]);
                return w[0][1] + f * (w[1][1] - w[0][1]);
            }
        }
        p[p.len() - 1][1]
    }

    fn sign(&self) -> f64 {
        match self.direction {
            Direction::Forward => 1.0,
            Direction::Oncoming => -1.0,
        }
    }

    /// Moves along the lane over `[t, t + dt]` (trapezoidal in speed).
    pub fn advance(&mut self, t: f64, dt: f64) {
        let v = 0.5 * (self.speed_at(t) + self.speed_at(t + dt));
        self.s += self.sign() * v * dt;
    }

    pub fn state(&self, road: &RoadModel, t: f64) -> VehicleState {
        let p = road.lane_center(self.lane, self.s);
        let mut psi = road.heading_at(self.s);
        if self.direction == Direction::Oncoming {
            psi = crate::dynamics::wrap_angle(psi + std::f64::consts::PI);
        }
        VehicleState::new(p.x, p.y, psi, self.speed_at(t))
    }

    pub fn obstacle(&self, road: &RoadModel, t: f64) -> ObstacleVehicle {
        ObstacleVehicle { id: self.id.clone(), state: self.state(road, t), geom: self.geometry }
    }
}
