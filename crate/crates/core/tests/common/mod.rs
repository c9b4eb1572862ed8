//! Shared builders and strategies for the property suites.
#![allow(dead_code)]

use proptest::prelude::*;
use serde_json::Map;
use sightline_core::evidence::{EgoPoseSample, EvidenceFrame, Timestamp, Visibility};
use sightline_core::geometry::{AgentPose, Angle, FieldOfView, Quadrant, Vec2};
use sightline_core::scene::{Scenario, Segment, World};

pub fn pose(x: f64, y: f64, h: f64) -> AgentPose {
    AgentPose::new(Vec2::new(x, y), Angle::from_degrees(h), FieldOfView::default())
}

pub fn world(a: AgentPose, b: AgentPose, occluders: Vec<Segment>) -> World {
    World { a, b, occluders }
}

/// A clip of `n` samples at 10 fps with the given trajectories.
pub fn scenario(a: Vec<AgentPose>, b: Vec<AgentPose>, occluders: Vec<Segment>) -> Scenario {
    assert_eq!(a.len(), b.len());
    Scenario {
        id: "prop".into(),
        seed: 1,
        duration_s: (a.len() - 1) as f64 / 10.0,
        fps: 10.0,
        trajectory_a: a,
        trajectory_b: b,
        occluders,
        sound_events: vec![],
    }
}

pub fn quadrant() -> impl Strategy<Value = Quadrant> {
    prop::sample::select(Quadrant::ALL.to_vec())
}

pub fn heading() -> impl Strategy<Value = f64> {
    -179.999f64..180.0
}

pub fn pose_strategy() -> impl Strategy<Value = AgentPose> {
    (-20.0f64..20.0, -20.0f64..20.0, heading()).prop_map(|(x, y, h)| pose(x, y, h))
}

/// Two poses at least 0.5 m apart.
pub fn pose_pair() -> impl Strategy<Value = (AgentPose, AgentPose)> {
    (pose_strategy(), pose_strategy()).prop_filter("agents too close", |(a, b)| a.position.distance(b.position) > 0.5)
}

pub fn segment() -> impl Strategy<Value = Segment> {
    (-20.0f64..20.0, -20.0f64..20.0, -20.0f64..20.0, -20.0f64..20.0)
        .prop_map(|(a, b, c, d)| Segment::new(Vec2::new(a, b), Vec2::new(c, d)))
}

pub fn visibility() -> impl Strategy<Value = Visibility> {
    prop::sample::select(vec![Visibility::Visible, Visibility::Occluded, Visibility::Uncertain])
}

/// Schema-valid frames with arbitrary field combinations.
pub fn frame_strategy() -> impl Strategy<Value = EvidenceFrame> {
    (
        0u64..8000,
        any::<bool>(),
        prop::option::of(0.1f64..30.0),
        prop::option::of(heading()),
        prop::option::of(quadrant()),
        0.0f64..=1.0,
        visibility(),
        prop::option::of(heading()),
    )
        .prop_map(|(ms, is_static, dist, dir, q, conf, vis, rel)| {
            let b_orientation = if vis == Visibility::Visible {
                Some(q.unwrap_or(Quadrant::FrontLeft))
            } else {
                q
            };
            EvidenceFrame {
                timestamp: Timestamp::from_millis(ms),
                is_static,
                distance_m: dist,
                direction: dir.map(Angle::from_degrees),
                b_orientation,
                b_orientation_confidence: conf,
                visibility: vis,
                landmarks: None,
                b_relative_heading: rel.map(Angle::from_degrees),
                description_extra: Map::new(),
                extra: Map::new(),
            }
        })
}

/// Frames sorted by time with distinct timestamps.
pub fn frames_strategy(max: usize) -> impl Strategy<Value = Vec<EvidenceFrame>> {
    prop::collection::vec(frame_strategy(), 0..max).prop_map(|mut fs| {
        fs.sort_by_key(|f| f.timestamp);
        fs.dedup_by_key(|f| f.timestamp);
        fs
    })
}

pub fn ego_strategy() -> impl Strategy<Value = Vec<EgoPoseSample>> {
    prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, heading()), 1..6).prop_map(|ps| {
        ps.into_iter()
            .enumerate()
            .map(|(i, (x, y, h))| EgoPoseSample {
                t_s: i as f64 * 2.0,
                a_world: Vec2::new(x, y),
                a_orientation_deg: Angle::from_degrees(h),
            })
            .collect()
    })
}
