use proptest::prelude::*;

use overtake_core::behavior::{transition, EventSource, ManeuverState, Sigma, TransitionEvent};
use overtake_core::dynamics::{slip_angle, step, wrap_angle, ControlInput, ControlLimits, VehicleGeometry, VehicleState};
use overtake_core::geometry::ConvexPolygon;
use overtake_core::nmpc::ellipse_for;
use overtake_core::reachability::{intersect, reachable_polygon};
use overtake_core::riskmap::{build_safe_set, ObstacleVehicle, RiskField, RiskParams};
use overtake_core::road::RoadModel;

fn sigma() -> impl Strategy<Value = Sigma> {
    prop_oneof![Just(Sigma::S1), Just(Sigma::S2), Just(Sigma::S3), Just(Sigma::S4), Just(Sigma::S5)]
}

proptest! {
    #[test]
    fn slip_angle_is_odd(delta in -0.6f64..0.6) {
        let g = VehicleGeometry::default();
        prop_assert!((slip_angle(-delta, &g) + slip_angle(delta, &g)).abs() < 1e-15);
    }

    #[test]
    fn straight_motion_is_lateral_invariant(y in -10.0f64..10.0, shift in -5.0f64..5.0, psi in -3.0f64..3.0, v in 0.0f64..20.0, a in -5.0f64..3.0) {
        let g = VehicleGeometry::default();
        let u = ControlInput::new(a, 0.0);
        let p = step(&VehicleState::new(1.0, y, psi, v), &u, &g, 0.1);
        let q = step(&VehicleState::new(1.0, y + shift, psi, v), &u, &g, 0.1);
        prop_assert!((q.y - p.y - shift).abs() < 1e-9);
        prop_assert_eq!(p.x, q.x);
        prop_assert_eq!(p.psi, q.psi);
    }

    #[test]
    fn speed_never_negative(v in 0.0f64..2.0, a in -5.0f64..0.0, delta in -0.6f64..0.6) {
        let s = step(&VehicleState::new(0.0, 0.0, 0.0, v), &ControlInput::new(a, delta), &VehicleGeometry::default(), 0.5);
        prop_assert!(s.v >= 0.0);
    }

    #[test]
    fn wrapped_angle_in_range(x in -100.0f64..100.0) {
        let w = wrap_angle(x);
        prop_assert!(w > -std::f64::consts::PI && w <= std::f64::consts::PI);
        prop_assert!(((x - w) / std::f64::consts::TAU).fract().abs() < 1e-9 || (1.0 - ((x - w) / std::f64::consts::TAU).fract().abs()) < 1e-9);
    }

    #[test]
    fn ellipse_covers_padded_body(psi in -3.0f64..3.0, alpha in 1.2f64..1.6, sx in -1.0f64..1.0, sy in -1.0f64..1.0) {
        let ev = VehicleGeometry::default();
        let obs = ObstacleVehicle { id: "o".into(), state: VehicleState::new(3.0, -1.0, psi, 5.0), geom: ev };
        let e = ellipse_for(&obs, &ev, alpha, 4);
        let body = ConvexPolygon::rectangle(obs.state.position(), psi, obs.geom.length + ev.length, obs.geom.width + ev.width);
        // any point of the padded rectangle, corners included
        let (s, c) = psi.sin_cos();
        let (hl, hw) = (0.5 * (obs.geom.length + ev.length), 0.5 * (obs.geom.width + ev.width));
        let p = obs.state.position() + nalgebra::Vector2::new(c * sx * hl - s * sy * hw, s * sx * hl + c * sy * hw);
        prop_assert!(body.contains(&p));
        prop_assert!(e.value_at(p.x, p.y) < 0.0);
    }

    #[test]
    fn risk_is_non_negative_and_capped(x in -30.0f64..30.0, y in -10.0f64..10.0, ox in -10.0f64..10.0, ov in 0.0f64..15.0) {
        let road = RoadModel::straight(2, 4.0);
        let params = RiskParams::default();
        let ev = VehicleState::new(0.0, 0.0, 0.0, 8.0);
        let obs = ObstacleVehicle { id: "o".into(), state: VehicleState::new(ox, 0.0, 0.0, ov), geom: VehicleGeometry::default() };
        let field = RiskField::new(&road, &ev, &[obs], &params);
        let r = field.risk_at(&nalgebra::Point2::new(x, y));
        prop_assert!(r >= 0.0 && r <= params.cap);
    }

    #[test]
    fn safe_reachable_subset(y in -1.0f64..1.0, psi in -0.3f64..0.3, v in 1.0f64..15.0, ox in 5.0f64..25.0, ov in 0.0f64..10.0) {
        let road = RoadModel::straight(2, 4.0);
        let ev = VehicleState::new(0.0, y, psi, v);
        let obs = ObstacleVehicle { id: "o".into(), state: VehicleState::new(ox, 0.0, 0.0, ov), geom: VehicleGeometry::default() };
        let params = RiskParams::default();
        let (_, safe) = build_safe_set(&ev, &road, std::slice::from_ref(&obs), &params);
        let reach = reachable_polygon(&ev, v, &ControlLimits::default(), &VehicleGeometry::default(), 1.0, 10);
        let ssr = intersect(&safe, &reach);
        let field = RiskField::new(&road, &ev, &[obs], &params);
        for p in &ssr.points {
            prop_assert!(safe.points.contains(p));
            prop_assert!(reach.contains(p));
            prop_assert!(field.risk_at(p) <= params.threshold);
        }
    }

    #[test]
    fn fsm_paths_respect_the_table(events in prop::collection::vec(sigma(), 0..40)) {
        let mut state = ManeuverState::LaneKeep;
        for s in events {
            let next = transition(state, TransitionEvent { sigma: s, source: EventSource::Rule });
            match next {
                ManeuverState::Overtake if state != next => prop_assert_eq!(state, ManeuverState::Follow),
                ManeuverState::Abort if state != next => prop_assert_eq!(state, ManeuverState::Overtake),
                ManeuverState::Follow if state != next => prop_assert!(matches!(state, ManeuverState::LaneKeep | ManeuverState::Abort)),
                ManeuverState::LaneKeep if state != next => prop_assert_eq!(state, ManeuverState::Overtake),
                _ => {}
            }
            state = next;
        }
    }
}
