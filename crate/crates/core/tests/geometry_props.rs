//! Frame-transform invariants.

mod common;

use common::{pose, pose_pair};
use proptest::prelude::*;
use sightline_core::geometry::{
    discretize, perspective_shift, relative_bearing, to_local, wrap_degrees, AgentPose, Angle, Direction, Scheme, Vec2,
};

fn rigid(p: &AgentPose, rot: Angle, shift: Vec2) -> AgentPose {
    AgentPose {
        position: p.position.rotate_cw(rot) + shift,
        heading: p.heading + rot,
        fov: p.fov,
    }
}

proptest! {
    #[test]
    fn egocentric_quantities_survive_rigid_motion(
        (a, b) in pose_pair(), rot in -180.0f64..180.0, sx in -100.0f64..100.0, sy in -100.0f64..100.0,
    ) {
        let (r, s) = (Angle::from_degrees(rot), Vec2::new(sx, sy));
        let (a2, b2) = (rigid(&a, r, s), rigid(&b, r, s));
        let l1 = to_local(&a, b.position).unwrap();
        let l2 = to_local(&a2, b2.position).unwrap();
        prop_assert!(l1.distance(l2) < 1e-9);
        prop_assert!(relative_bearing(&a, b.position).unwrap().distance(relative_bearing(&a2, b2.position).unwrap()) < 1e-9);
        let th = b.heading - a.heading;
        let th2 = b2.heading - a2.heading;
        prop_assert!(perspective_shift(l1, th).distance(perspective_shift(l2, th2)) < 1e-9);
    }

    #[test]
    fn translation_alone_is_exact_for_bearings(
        (a, b) in pose_pair(), sx in -100.0f64..100.0, sy in -100.0f64..100.0,
    ) {
        let s = Vec2::new(sx, sy);
        let (a2, b2) = (rigid(&a, Angle::ZERO, s), rigid(&b, Angle::ZERO, s));
        prop_assert!(to_local(&a, b.position).unwrap().distance(to_local(&a2, b2.position).unwrap()) < 1e-9);
    }

    #[test]
    fn perspective_shift_matches_world_construction((a, b) in pose_pair()) {
        let l = to_local(&a, b.position).unwrap();
        let shifted = perspective_shift(l, b.heading - a.heading);
        let oracle = to_local(&b, a.position).unwrap();
        prop_assert!(shifted.distance(oracle) < 1e-9);
        prop_assert!(perspective_shift(shifted, a.heading - b.heading).distance(l) < 1e-9);
    }

    #[test]
    fn discretize_is_total(x in -1e4f64..1e4) {
        for scheme in [Scheme::Quadrant4, Scheme::Octant8] {
            let d = discretize(Angle::from_degrees(x), scheme);
            prop_assert_eq!(d.scheme(), scheme);
            prop_assert_eq!(scheme.labels().iter().filter(|l| **l == d).count(), 1);
            prop_assert_eq!(discretize(Angle::from_degrees(wrap_degrees(x)), scheme), d);
        }
    }

    #[test]
    fn sector_centers_discretize_to_themselves(i in 0usize..8) {
        for scheme in [Scheme::Quadrant4, Scheme::Octant8] {
            let labels = scheme.labels();
            let l: Direction = labels[i % labels.len()];
            prop_assert_eq!(discretize(l.center(), scheme), l);
        }
    }

    #[test]
    fn local_frame_puts_forward_on_y(h in -179.0f64..180.0, r in 0.1f64..50.0) {
        let a = pose(0.0, 0.0, h);
        let ahead = a.position + Vec2::from_bearing(a.heading) * r;
        let l = to_local(&a, ahead).unwrap();
        prop_assert!(l.x.abs() < 1e-9 && (l.y - r).abs() < 1e-9);
    }
}
