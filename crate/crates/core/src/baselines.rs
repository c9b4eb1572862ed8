//! Deterministic stand-ins for end-to-end predictors that skip the
//! perspective shift.
//!
//! The egocentric baseline reports where B sits in A's view as if that were
//! B's view of A, which gets left and right wrong whenever the two agents
//! face each other. The allocentric baseline measures A from B against world
//! north and ignores which way B faces.

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use crate::engine::{latest_visible, BeliefPrediction, Pathway, RuleTag};
use crate::evidence::EvidenceFrame;
use crate::geometry::{compass_bearing, discretize, Direction, Scheme};
use crate::scene::World;
use crate::seeding::{rng_for, STREAM_BASELINE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    NaiveEgocentric,
    NaiveAllocentric,
}

/// A uniformly random label, fixed by `seed`.
pub fn seeded_guess(scheme: Scheme, seed: u64) -> Direction {
    let labels = scheme.labels();
    *labels
        .choose(&mut rng_for(&[seed, STREAM_BASELINE]))
        .expect("schemes have labels")
}

/// Copies A's view of B into B's frame without flipping. With no visible
/// frame carrying a direction it guesses.
pub fn baseline_egocentric(frames: &[EvidenceFrame], query_t: f64, scheme: Scheme, seed: u64) -> BeliefPrediction {
    match latest_visible(frames, query_t).and_then(|f| f.direction.map(|d| (f, d))) {
        Some((f, d)) => BeliefPrediction {
            belief_direction: discretize(d, scheme),
            pathway: Pathway::Visual,
            confidence: f.b_orientation_confidence,
            trace: vec![RuleTag::EgocentricCopy],
        },
        None => BeliefPrediction {
            belief_direction: seeded_guess(scheme, seed),
            pathway: Pathway::Prior,
            confidence: 1.0 / scheme.labels().len() as f64,
            trace: vec![RuleTag::RandomGuess],
        },
    }
}

/// A's compass bearing from B, read as if B faced north.
pub fn baseline_allocentric(world: &World, scheme: Scheme) -> BeliefPrediction {
    let belief_direction = compass_bearing(world.b.position, world.a.position)
        .map(|b| discretize(b, scheme))
        .unwrap_or_else(|_| scheme.labels()[0]);
    BeliefPrediction {
        belief_direction,
        pathway: Pathway::Visual,
        confidence: 1.0,
        trace: vec![RuleTag::AllocentricNorth],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::{Timestamp, Visibility};
    use crate::geometry::{AgentPose, Angle, FieldOfView, Quadrant, Vec2};
    use crate::scene::gold_label;
    use serde_json::Map;

    fn world(a: (f64, f64, f64), b: (f64, f64, f64)) -> World {
        let p = |(x, y, h): (f64, f64, f64)| {
            AgentPose::new(Vec2::new(x, y), Angle::from_degrees(h), FieldOfView::default())
        };
        World {
            a: p(a),
            b: p(b),
            occluders: vec![],
        }
    }

    fn seen(direction: f64) -> EvidenceFrame {
        EvidenceFrame {
            timestamp: Timestamp::from_millis(1000),
            is_static: true,
            distance_m: Some(2.0),
            direction: Some(Angle::from_degrees(direction)),
            b_orientation: Some(Quadrant::FrontLeft),
            b_orientation_confidence: 0.9,
            visibility: Visibility::Visible,
            landmarks: None,
            b_relative_heading: None,
            description_extra: Map::new(),
            extra: Map::new(),
        }
    }

    #[test]
    fn egocentric_copies_without_flipping() {
        let p = baseline_egocentric(&[seen(30.0)], 4.0, Scheme::Quadrant4, 0);
        assert_eq!(p.belief_direction, Direction::Quadrant(Quadrant::FrontRight));
        assert_eq!(p.trace, vec![RuleTag::EgocentricCopy]);
    }

    #[test]
    fn egocentric_guess_is_seeded() {
        let a = baseline_egocentric(&[], 4.0, Scheme::Quadrant4, 1);
        let b = baseline_egocentric(&[], 4.0, Scheme::Quadrant4, 1);
        assert_eq!(a, b);
        assert_eq!(a.pathway, Pathway::Prior);
        let labels: std::collections::HashSet<_> = (0..64)
            .map(|s| baseline_egocentric(&[], 4.0, Scheme::Quadrant4, s).belief_direction)
            .collect();
        assert_eq!(labels.len(), 4);
    }

    #[test]
    fn mirrored_pair_keeps_the_error() {
        // A faces north, B ahead-right facing back toward A.
        let w = world((0.0, 0.0, 0.0), (1.0, 2.0, 230.0));
        let gold = gold_label(&w, Scheme::Quadrant4).unwrap().direction;
        let dir = crate::geometry::relative_bearing(&w.a, w.b.position).unwrap();
        let pred = baseline_egocentric(&[seen(dir.degrees())], 4.0, Scheme::Quadrant4, 0).belief_direction;
        assert_ne!(pred, gold);

        let m = world((0.0, 0.0, 0.0), (-1.0, 2.0, -230.0));
        let gold_m = gold_label(&m, Scheme::Quadrant4).unwrap().direction;
        let dir_m = crate::geometry::relative_bearing(&m.a, m.b.position).unwrap();
        let pred_m = baseline_egocentric(&[seen(dir_m.degrees())], 4.0, Scheme::Quadrant4, 0).belief_direction;
        assert_ne!(pred_m, gold_m);
        assert_eq!(pred.label().replace("right", "left"), pred_m.label());
        assert_eq!(gold.label().replace("left", "right"), gold_m.label());
    }

    #[test]
    fn allocentric_ignores_b_heading() {
        // B faces east with A due north of it.
        let w = world((0.0, 2.0, 180.0), (0.0, 0.0, 90.0));
        let gold = gold_label(&w, Scheme::Quadrant4).unwrap().direction;
        assert_ne!(baseline_allocentric(&w, Scheme::Quadrant4).belief_direction, gold);
        // B facing north: frames coincide.
        let w = world((-1.0, 2.0, 180.0), (0.0, 0.0, 0.0));
        let gold = gold_label(&w, Scheme::Quadrant4).unwrap().direction;
        assert_eq!(baseline_allocentric(&w, Scheme::Quadrant4).belief_direction, gold);
    }

    #[test]
    fn allocentric_is_not_rotation_covariant() {
        let w = world((-1.0, 2.0, 180.0), (0.0, 0.0, 0.0));
        let rot = Angle::from_degrees(90.0);
        let turned = World {
            a: AgentPose {
                position: w.a.position.rotate_cw(rot),
                heading: w.a.heading + rot,
                ..w.a
            },
            b: AgentPose {
                position: w.b.position.rotate_cw(rot),
                heading: w.b.heading + rot,
                ..w.b
            },
            occluders: vec![],
        };
        assert_eq!(
            gold_label(&w, Scheme::Quadrant4).unwrap().direction,
            gold_label(&turned, Scheme::Quadrant4).unwrap().direction
        );
        assert_ne!(
            baseline_allocentric(&w, Scheme::Quadrant4).belief_direction,
            baseline_allocentric(&turned, Scheme::Quadrant4).belief_direction
        );
    }
}
