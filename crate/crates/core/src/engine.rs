//! Second-order belief inference: where does B think A is?
//!
//! Each query is routed through exactly one pathway. When the latest visible
//! frame places A inside B's field of view, the visual pathway reads the
//! answer off B's head orientation (the side of B's head A sees is the side
//! A is on). Otherwise the audio pathway rebuilds B's world position from
//! binaural cues and earlier frames, compensates for A's own motion, and
//! projects A into B's inferred frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{bearing_candidates, disambiguate, distance_from_energy, AudioFeatures, BearingEstimate, HeadModel};
use crate::evidence::{EgoPoseSample, EvidenceFrame};
use crate::geometry::{
    compass_bearing, discretize, fov_mask, lerp_heading, perspective_shift, to_local, AgentPose, Angle, Direction,
    FieldOfView, Scheme, Vec2,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("insufficient evidence: {0}")]
    InsufficientEvidence(String),
    #[error("pathway not applicable: {0}")]
    PathwayInapplicable(String),
    #[error("invalid engine parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pathway {
    Visual,
    Audio,
    Persisted,
    /// No evidence consulted; used by the baselines' fallback guess.
    Prior,
}

/// Rules applied while producing a prediction, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RuleTag {
    /// Gate open: A inside B's field of view.
    InView,
    /// Gate closed.
    OutOfView,
    DirectOrientation,
    JointRecovery,
    StaticPersistence,
    SelfMotionCompensation,
    AudioMotionCoupling,
    FrontBackAmbiguity,
    /// B's heading was unknown and assumed to face A.
    HeadingFallback,
    /// A's bearing in B's frame came from distance, direction and relative
    /// heading rather than the head-quadrant label.
    ExactGeometry,
    /// Baseline: A's view of B copied unflipped.
    EgocentricCopy,
    /// Baseline: world north taken as B's forward.
    AllocentricNorth,
    RandomGuess,
}

impl RuleTag {
    pub fn is_primary(self) -> bool {
        matches!(
            self,
            RuleTag::DirectOrientation | RuleTag::JointRecovery | RuleTag::StaticPersistence
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefPrediction {
    pub belief_direction: Direction,
    pub pathway: Pathway,
    pub confidence: f64,
    pub trace: Vec<RuleTag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BeliefSource {
    Visual,
    Audio,
}

/// What A retains about B from earlier visual evidence.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldBelief {
    pub b_world_estimate: Option<Vec2>,
    pub b_heading_estimate: Option<Angle>,
    pub last_reliable_t: Option<f64>,
    /// Label of the last reliable frame, for evidence without geometry.
    pub last_direction: Option<Direction>,
    pub last_confidence: f64,
    pub source: Option<BeliefSource>,
    /// `is_static` held on every frame from the last reliable one onward.
    pub static_throughout: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// B's field of view used by the gate.
    pub fov: FieldOfView,
    pub scheme: Scheme,
    pub head: HeadModel,
    /// Persisted beliefs expire after this long without corroboration.
    pub persistence_s: f64,
    /// Confidence a persisted belief decays to at expiry.
    pub persistence_floor: f64,
    /// Audio windows older than this before the query are ignored.
    pub audio_lookback_s: f64,
    pub min_rotation_deg: f64,
    /// Audio below this confidence does not override an expired static belief.
    pub audio_confidence_threshold: f64,
    /// Window level (dBFS) of B's sound heard from 1 m.
    pub reference_db: f64,
    /// Heading estimates within this of each other count as agreeing.
    pub consensus_deg: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            fov: FieldOfView::default(),
            scheme: Scheme::Quadrant4,
            head: HeadModel::default(),
            persistence_s: 10.0,
            persistence_floor: 0.2,
            audio_lookback_s: 1.0,
            min_rotation_deg: 5.0,
            audio_confidence_threshold: 0.75,
            reference_db: -16.0,
            consensus_deg: 45.0,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let positive = [
            ("persistence_s", self.persistence_s),
            ("audio_lookback_s", self.audio_lookback_s),
            ("consensus_deg", self.consensus_deg),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EngineError::Parameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.persistence_floor) || !(0.0..=1.0).contains(&self.audio_confidence_threshold) {
            return Err(EngineError::Parameter("confidence levels must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// A's pose at `t`, interpolated from the ego history and clamped to its span.
pub fn ego_at(history: &[EgoPoseSample], t: f64) -> Option<EgoPoseSample> {
    let first = history.first()?;
    let i = history.partition_point(|s| s.t_s <= t);
    if i == 0 {
        return Some(EgoPoseSample { t_s: t, ..*first });
    }
    let p = &history[i - 1];
    let Some(q) = history.get(i) else {
        return Some(EgoPoseSample { t_s: t, ..*p });
    };
    if p.t_s == t || q.t_s <= p.t_s {
        return Some(EgoPoseSample { t_s: t, ..*p });
    }
    let frac = (t - p.t_s) / (q.t_s - p.t_s);
    Some(EgoPoseSample {
        t_s: t,
        a_world: p.a_world + (q.a_world - p.a_world) * frac,
        a_orientation_deg: lerp_heading(p.a_orientation_deg, q.a_orientation_deg, frac),
    })
}

fn ego_pose(s: &EgoPoseSample, fov: FieldOfView) -> AgentPose {
    AgentPose::new(s.a_world, s.a_orientation_deg, fov)
}

/// A's bearing in B's frame from full frame geometry, when present.
fn exact_alpha(frame: &EvidenceFrame) -> Option<Angle> {
    let (dir, dist, theta) = (frame.direction?, frame.distance_m?, frame.b_relative_heading?);
    if !(dist > 0.0) {
        return None;
    }
    Some(perspective_shift(Vec2::polar(dir, dist), theta).bearing())
}

/// A's bearing in B's frame as best the frame supports: exact geometry, or
/// the center of the observed head quadrant.
fn alpha_hat(frame: &EvidenceFrame) -> Option<(Angle, bool)> {
    let q = frame.b_orientation?;
    Some(match exact_alpha(frame) {
        Some(a) => (a, true),
        None => (q.center(), false),
    })
}

/// Whether A lies inside B's field of view according to one frame.
pub fn infer_in_view(frame: &EvidenceFrame, phi_deg: f64) -> bool {
    alpha_hat(frame).is_some_and(|(a, _)| fov_mask(a, phi_deg).unwrap_or(false))
}

/// Direct orientation: B's head quadrant facing A is the answer.
pub fn pathway_visual(frame: &EvidenceFrame, scheme: Scheme) -> Result<BeliefPrediction, EngineError> {
    if !frame.is_visible() {
        return Err(EngineError::PathwayInapplicable(format!(
            "frame at {} is not visible",
            frame.timestamp
        )));
    }
    let q = frame.b_orientation.ok_or_else(|| {
        EngineError::PathwayInapplicable(format!("frame at {} has no head orientation", frame.timestamp))
    })?;
    let mut trace = vec![RuleTag::InView, RuleTag::DirectOrientation];
    let belief_direction = match exact_alpha(frame) {
        Some(a) => {
            trace.push(RuleTag::ExactGeometry);
            discretize(a, scheme)
        }
        None => Direction::from_quadrant(q, scheme),
    };
    Ok(BeliefPrediction {
        belief_direction,
        pathway: Pathway::Visual,
        confidence: frame.b_orientation_confidence,
        trace,
    })
}

/// B's position in A's current egocentric frame. The world estimate itself
/// is left unchanged.
pub fn self_motion_compensate(belief: &WorldBelief, ego_now: &EgoPoseSample) -> Result<Vec2, EngineError> {
    let b = belief
        .b_world_estimate
        .ok_or_else(|| EngineError::InsufficientEvidence("no world estimate of B".into()))?;
    to_local(&ego_pose(ego_now, FieldOfView::default()), b)
        .map_err(|e| EngineError::InsufficientEvidence(e.to_string()))
}

fn circular_mean(angles: &[Angle]) -> Angle {
    let (s, c) = angles
        .iter()
        .fold((0.0, 0.0), |(s, c), a| (s + a.radians().sin(), c + a.radians().cos()));
    Angle::from_radians(s.atan2(c))
}

/// Heading supported by the most estimates; ties go to the latest.
fn consensus_heading(estimates: &[Angle], window_deg: f64) -> Option<Angle> {
    let support = |h: &Angle| estimates.iter().filter(|e| e.distance(*h) <= window_deg).count();
    let (best, _) = estimates.iter().enumerate().map(|(i, h)| (i, support(h))).fold(
        None,
        |acc: Option<(usize, usize)>, (i, n)| match acc {
            Some((_, m)) if m > n => acc,
            _ => Some((i, n)),
        },
    )?;
    let anchor = estimates[best];
    let members: Vec<Angle> = estimates
        .iter()
        .copied()
        .filter(|e| e.distance(anchor) <= window_deg)
        .collect();
    Some(circular_mean(&members))
}

/// Summarizes visible frames at or before `query_t` into a world belief.
///
/// B's position is the average over the trailing run of static frames (or
/// the last frame if B was moving). B's heading is the consensus of
/// per-frame estimates, each inverting the head label about A's position.
pub fn build_world_belief(
    frames: &[EvidenceFrame],
    ego: &[EgoPoseSample],
    query_t: f64,
    cfg: &EngineConfig,
) -> WorldBelief {
    let upto: Vec<&EvidenceFrame> = frames.iter().filter(|f| f.t_s() <= query_t).collect();
    let reliable: Vec<&EvidenceFrame> = upto
        .iter()
        .copied()
        .filter(|f| f.is_visible() && f.b_orientation.is_some())
        .collect();
    let Some(last) = reliable.last() else {
        return WorldBelief::default();
    };
    let last_t = last.t_s();
    let static_throughout = upto.iter().filter(|f| f.t_s() >= last_t).all(|f| f.is_static);
    let last_direction = alpha_hat(last).map(|(a, exact)| {
        if exact {
            discretize(a, cfg.scheme)
        } else {
            Direction::from_quadrant(last.b_orientation.expect("reliable frame"), cfg.scheme)
        }
    });

    // Per-frame B position and heading estimates where geometry allows.
    let located: Vec<(usize, Vec2, Option<Angle>)> = reliable
        .iter()
        .enumerate()
        .filter_map(|(i, f)| {
            let pose = ego_pose(&ego_at(ego, f.t_s())?, cfg.fov);
            let (dir, dist) = (f.direction?, f.distance_m?);
            let b = pose.position + pose.local_to_world_offset(Vec2::polar(dir, dist));
            let heading = match f.b_relative_heading {
                Some(theta) => Some(pose.heading + theta),
                None => {
                    let (alpha, _) = alpha_hat(f)?;
                    compass_bearing(b, pose.position).ok().map(|to_a| to_a - alpha)
                }
            };
            Some((i, b, heading))
        })
        .collect();

    let static_run_start =
        reliable
            .iter()
            .rposition(|f| !f.is_static)
            .map_or(0, |i| if i + 1 == reliable.len() { i } else { i + 1 });
    let run: Vec<Vec2> = located
        .iter()
        .filter(|(i, _, _)| *i >= static_run_start)
        .map(|(_, b, _)| *b)
        .collect();
    let b_world_estimate = if run.is_empty() {
        None
    } else {
        let sum = run.iter().fold(Vec2::ZERO, |acc, p| acc + *p);
        Some(sum * (1.0 / run.len() as f64))
    };
    let headings: Vec<Angle> = located.iter().filter_map(|(_, _, h)| *h).collect();

    WorldBelief {
        b_world_estimate,
        b_heading_estimate: consensus_heading(&headings, cfg.consensus_deg),
        last_reliable_t: Some(last_t),
        last_direction,
        last_confidence: last.b_orientation_confidence,
        source: Some(BeliefSource::Visual),
        static_throughout,
    }
}

struct AudioFix {
    b_world: Vec2,
    confidence: f64,
    coupled: bool,
    ambiguous: bool,
}

/// B's world position from the audio windows of the trailing lookback.
fn audio_fix(
    features: &AudioFeatures,
    ego: &[EgoPoseSample],
    belief: &WorldBelief,
    query_t: f64,
    cfg: &EngineConfig,
) -> Option<AudioFix> {
    let windows: Vec<_> = features
        .active_windows()
        .filter(|w| w.t_center_s <= query_t && w.t_center_s >= query_t - cfg.audio_lookback_s)
        .collect();
    if windows.is_empty() {
        return None;
    }
    let estimates: Vec<BearingEstimate> = windows
        .iter()
        .filter_map(|w| bearing_candidates(w, &cfg.head).ok())
        .collect();
    let headings: Vec<Angle> = windows
        .iter()
        .map(|w| ego_at(ego, w.t_center_s).map(|s| s.a_orientation_deg))
        .collect::<Option<_>>()?;
    let last_w = windows.last()?;
    let last_ego = ego_at(ego, last_w.t_center_s)?;
    let mut d = disambiguate(&estimates, &headings, cfg.min_rotation_deg).ok()?;

    // Without enough head rotation, fall back on where the earlier frames
    // put B to pick the front or back candidate.
    let prior_local = belief
        .b_world_estimate
        .and_then(|b| to_local(&ego_pose(&last_ego, cfg.fov), b).ok());
    if d.ambiguous {
        if let Some(prior) = prior_local {
            let last_est = estimates.last()?;
            d.bearing = if last_est.back().distance(prior.bearing()) < last_est.front().distance(prior.bearing()) {
                last_est.back()
            } else {
                last_est.front()
            };
            d.ambiguous = false;
        }
    }
    let range = match prior_local {
        Some(p) => p.norm(),
        None => {
            let mean_db = windows.iter().map(|w| w.energy_db).sum::<f64>() / windows.len() as f64;
            distance_from_energy(mean_db, cfg.reference_db)
        }
    };
    let world_bearing = d.bearing + last_ego.a_orientation_deg;
    let mut confidence = estimates.iter().map(|e| e.confidence).sum::<f64>() / estimates.len() as f64;
    if d.ambiguous {
        confidence = (confidence * 0.5).min(0.5);
    }
    Some(AudioFix {
        b_world: last_ego.a_world + Vec2::polar(world_bearing, range),
        confidence,
        coupled: d.coupled,
        ambiguous: d.ambiguous,
    })
}

/// A's direction in B's frame given B's world position and heading.
/// `None` heading means B is assumed to face A.
fn project(
    b_world: Vec2,
    b_heading: Option<Angle>,
    ego_now: &EgoPoseSample,
    cfg: &EngineConfig,
    trace: &mut Vec<RuleTag>,
) -> Result<Direction, EngineError> {
    let local = self_motion_compensate(
        &WorldBelief {
            b_world_estimate: Some(b_world),
            ..WorldBelief::default()
        },
        ego_now,
    )?;
    let alpha = match b_heading {
        Some(h) => perspective_shift(local, h - ego_now.a_orientation_deg).bearing(),
        None => {
            trace.push(RuleTag::HeadingFallback);
            Angle::ZERO
        }
    };
    Ok(discretize(alpha, cfg.scheme))
}

fn moved_since(ego: &[EgoPoseSample], then: f64, now: &EgoPoseSample) -> bool {
    ego_at(ego, then).is_some_and(|p| p.a_world != now.a_world || p.a_orientation_deg != now.a_orientation_deg)
}

/// Out-of-view pathway: persisted belief for a static B, otherwise audio
/// position with the last known heading.
pub fn pathway_audio(
    features: Option<&AudioFeatures>,
    ego: &[EgoPoseSample],
    belief: &WorldBelief,
    query_t: f64,
    cfg: &EngineConfig,
) -> Result<BeliefPrediction, EngineError> {
    let ego_now = ego_at(ego, query_t);
    let fix = match (features, &ego_now) {
        (Some(f), Some(_)) => audio_fix(f, ego, belief, query_t, cfg),
        _ => None,
    };
    let age = belief.last_reliable_t.map(|t| (query_t - t).max(0.0));
    let within_horizon = age.is_some_and(|a| a <= cfg.persistence_s);
    let has_belief = belief.b_world_estimate.is_some() || belief.last_direction.is_some();
    let decayed = |age: f64| {
        let frac = (age / cfg.persistence_s).min(1.0);
        belief.last_confidence + (cfg.persistence_floor - belief.last_confidence) * frac
    };

    let prefer_persisted = has_belief
        && match &fix {
            None => true,
            Some(fx) => belief.static_throughout && (within_horizon || fx.confidence < cfg.audio_confidence_threshold),
        };

    if prefer_persisted {
        let mut trace = vec![RuleTag::OutOfView, RuleTag::StaticPersistence];
        let confidence = decayed(age.unwrap_or(0.0));
        let belief_direction = match (belief.b_world_estimate, &ego_now) {
            (Some(b), Some(now)) if belief.b_heading_estimate.is_some() => {
                if belief.last_reliable_t.is_some_and(|t| moved_since(ego, t, now)) {
                    trace.push(RuleTag::SelfMotionCompensation);
                }
                project(b, belief.b_heading_estimate, now, cfg, &mut trace)?
            }
            _ => belief
                .last_direction
                .ok_or_else(|| EngineError::InsufficientEvidence("persisted belief has no label".into()))?,
        };
        return Ok(BeliefPrediction {
            belief_direction,
            pathway: Pathway::Persisted,
            confidence,
            trace,
        });
    }

    let (Some(fx), Some(now)) = (fix, ego_now) else {
        return Err(EngineError::InsufficientEvidence(
            "no usable audio window and no earlier belief about B".into(),
        ));
    };
    let mut trace = vec![
        RuleTag::OutOfView,
        RuleTag::JointRecovery,
        RuleTag::SelfMotionCompensation,
    ];
    if fx.coupled {
        trace.push(RuleTag::AudioMotionCoupling);
    }
    if fx.ambiguous {
        trace.push(RuleTag::FrontBackAmbiguity);
    }
    let belief_direction = project(fx.b_world, belief.b_heading_estimate, &now, cfg, &mut trace)?;
    let mut confidence = fx.confidence;
    if trace.contains(&RuleTag::HeadingFallback) {
        confidence *= 0.5;
    }
    Ok(BeliefPrediction {
        belief_direction,
        pathway: Pathway::Audio,
        confidence,
        trace,
    })
}

/// The latest visible frame at or before `query_t`.
pub fn latest_visible(frames: &[EvidenceFrame], query_t: f64) -> Option<&EvidenceFrame> {
    frames
        .iter()
        .filter(|f| f.t_s() <= query_t && f.is_visible())
        .max_by_key(|f| f.timestamp)
}

/// Gated inference: the visual pathway's output when the latest visible
/// frame puts A in B's view, the out-of-view pathway's output otherwise.
pub fn infer_belief(
    frames: &[EvidenceFrame],
    features: Option<&AudioFeatures>,
    ego: &[EgoPoseSample],
    query_t: f64,
    cfg: &EngineConfig,
) -> Result<BeliefPrediction, EngineError> {
    if let Some(f) = latest_visible(frames, query_t) {
        if infer_in_view(f, cfg.fov.degrees()) {
            return pathway_visual(f, cfg.scheme);
        }
    }
    let belief = build_world_belief(frames, ego, query_t, cfg);
    pathway_audio(features, ego, &belief, query_t, cfg)
}
