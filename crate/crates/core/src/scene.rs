//! Two-agent world model: trajectories, occluders, sound events, ground
//! truth, and the seeded scenario generator.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    compass_bearing, discretize, lerp_heading, relative_bearing, AgentPose, Angle, Direction, FieldOfView, Scheme, Vec2,
};
use crate::seeding::{derive_seed, rng_for, STREAM_GLIMPSE, STREAM_OPTIONS, STREAM_SCENARIO};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("could not generate a scenario for stratum {stratum} after {attempts} attempts")]
    Infeasible {
        stratum: VisibilityCondition,
        attempts: usize,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("invalid generator parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentId {
    A,
    B,
}

impl AgentId {
    pub fn other(self) -> AgentId {
        match self {
            AgentId::A => AgentId::B,
            AgentId::B => AgentId::A,
        }
    }
}

/// An opaque wall segment in world coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Vec2,
    pub end: Vec2,
}

impl Segment {
    pub fn new(start: Vec2, end: Vec2) -> Self {
        Segment { start, end }
    }

    pub fn midpoint(&self) -> Vec2 {
        (self.start + self.end) * 0.5
    }

    /// True if this segment touches the open segment `from -> to`.
    pub fn blocks(&self, from: Vec2, to: Vec2) -> bool {
        const EPS: f64 = 1e-12;
        let r = to - from;
        let s = self.end - self.start;
        let qp = self.start - from;
        let denom = r.cross(s);
        if denom.abs() < EPS {
            if qp.cross(r).abs() > EPS {
                return false;
            }
            // Collinear: blocked if the projections overlap inside (0, 1).
            let rr = r.dot(r);
            if rr == 0.0 {
                return false;
            }
            let t0 = qp.dot(r) / rr;
            let t1 = (self.end - from).dot(r) / rr;
            let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
            return lo < 1.0 && hi > 0.0;
        }
        let t = qp.cross(s) / denom;
        let u = qp.cross(r) / denom;
        t > 0.0 && t < 1.0 && (0.0..=1.0).contains(&u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Footsteps,
    Speech,
    Noise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoundEvent {
    pub start_s: f64,
    pub end_s: f64,
    pub emitter: AgentId,
    pub kind: SourceKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VisibilityCondition {
    MutuallyVisible,
    AOnlySeeB,
    BOnlySeeA,
    MutuallyInvisible,
}

impl VisibilityCondition {
    pub const ALL: [VisibilityCondition; 4] = [
        VisibilityCondition::MutuallyVisible,
        VisibilityCondition::AOnlySeeB,
        VisibilityCondition::BOnlySeeA,
        VisibilityCondition::MutuallyInvisible,
    ];

    pub fn from_sight(a_sees_b: bool, b_sees_a: bool) -> Self {
        match (a_sees_b, b_sees_a) {
            (true, true) => VisibilityCondition::MutuallyVisible,
            (true, false) => VisibilityCondition::AOnlySeeB,
            (false, true) => VisibilityCondition::BOnlySeeA,
            (false, false) => VisibilityCondition::MutuallyInvisible,
        }
    }

    pub fn a_sees_b(self) -> bool {
        matches!(
            self,
            VisibilityCondition::MutuallyVisible | VisibilityCondition::AOnlySeeB
        )
    }

    pub fn b_sees_a(self) -> bool {
        matches!(
            self,
            VisibilityCondition::MutuallyVisible | VisibilityCondition::BOnlySeeA
        )
    }

    /// The condition after exchanging the roles of A and B.
    pub fn swapped(self) -> Self {
        VisibilityCondition::from_sight(self.b_sees_a(), self.a_sees_b())
    }

    pub fn name(self) -> &'static str {
        match self {
            VisibilityCondition::MutuallyVisible => "MutuallyVisible",
            VisibilityCondition::AOnlySeeB => "AOnlySeeB",
            VisibilityCondition::BOnlySeeA => "BOnlySeeA",
            VisibilityCondition::MutuallyInvisible => "MutuallyInvisible",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            VisibilityCondition::MutuallyVisible => "mutually_visible",
            VisibilityCondition::AOnlySeeB => "a_only_see_b",
            VisibilityCondition::BOnlySeeA => "b_only_see_a",
            VisibilityCondition::MutuallyInvisible => "mutually_invisible",
        }
    }

    fn index(self) -> u64 {
        VisibilityCondition::ALL.iter().position(|c| *c == self).unwrap_or(0) as u64
    }
}

impl fmt::Display for VisibilityCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VisibilityCondition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VisibilityCondition::ALL
            .into_iter()
            .find(|c| c.name() == s || c.slug() == s)
            .ok_or_else(|| format!("unknown visibility condition `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Simple,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub direction: Direction,
    pub condition: VisibilityCondition,
    pub difficulty: Difficulty,
    /// Candidate answers offered for this item; all scheme labels when hard.
    pub options: Vec<Direction>,
}

impl GoldLabel {
    /// Drops one wrong label chosen by `rng`, turning the item into a
    /// simple (reduced option set) question.
    pub fn simplify(mut self, rng: &mut impl Rng) -> Self {
        let wrong: Vec<usize> = self
            .options
            .iter()
            .enumerate()
            .filter(|(_, d)| **d != self.direction)
            .map(|(i, _)| i)
            .collect();
        if !wrong.is_empty() {
            let drop = wrong[rng.random_range(0..wrong.len())];
            self.options.remove(drop);
        }
        self.difficulty = Difficulty::Simple;
        self
    }
}

/// Both agents' poses plus occluders at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub a: AgentPose,
    pub b: AgentPose,
    pub occluders: Vec<Segment>,
}

impl World {
    pub fn pose(&self, id: AgentId) -> &AgentPose {
        match id {
            AgentId::A => &self.a,
            AgentId::B => &self.b,
        }
    }
}

pub fn line_of_sight_blocked(from: Vec2, to: Vec2, occluders: &[Segment]) -> bool {
    occluders.iter().any(|s| s.blocks(from, to))
}

/// Whether `viewer` has `target` inside its frustum with a clear sight line.
pub fn sees(world: &World, viewer: AgentId, target: AgentId) -> bool {
    if viewer == target {
        return false;
    }
    let v = world.pose(viewer);
    let t = world.pose(target).position;
    match relative_bearing(v, t) {
        Ok(alpha) => v.fov.contains(alpha) && !line_of_sight_blocked(v.position, t, &world.occluders),
        Err(_) => false,
    }
}

pub fn visibility_condition(world: &World) -> VisibilityCondition {
    VisibilityCondition::from_sight(sees(world, AgentId::A, AgentId::B), sees(world, AgentId::B, AgentId::A))
}

/// True direction of A in B's egocentric frame, as a hard (all-option) item.
pub fn gold_label(world: &World, scheme: Scheme) -> Result<GoldLabel, SceneError> {
    let alpha = relative_bearing(&world.b, world.a.position).map_err(|e| SceneError::Invalid(e.to_string()))?;
    Ok(GoldLabel {
        direction: discretize(alpha, scheme),
        condition: visibility_condition(world),
        difficulty: Difficulty::Hard,
        options: scheme.labels(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub seed: u64,
    pub duration_s: f64,
    pub fps: f64,
    pub trajectory_a: Vec<AgentPose>,
    pub trajectory_b: Vec<AgentPose>,
    pub occluders: Vec<Segment>,
    pub sound_events: Vec<SoundEvent>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(SceneError::Invalid("duration_s must be positive".into()));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(SceneError::Invalid("fps must be positive".into()));
        }
        let n = self.sample_count();
        if self.trajectory_a.len() != n || self.trajectory_b.len() != n {
            return Err(SceneError::Invalid(format!(
                "trajectories must hold {n} samples (got {} and {})",
                self.trajectory_a.len(),
                self.trajectory_b.len()
            )));
        }
        for (i, (a, b)) in self.trajectory_a.iter().zip(&self.trajectory_b).enumerate() {
            if !a.position.is_finite() || !b.position.is_finite() {
                return Err(SceneError::Invalid(format!("non-finite position at sample {i}")));
            }
            if a.position == b.position {
                return Err(SceneError::Invalid(format!("agents coincide at sample {i}")));
            }
        }
        Ok(())
    }

    /// Samples at `k / fps` for `k = 0..=round(duration * fps)`.
    pub fn sample_count(&self) -> usize {
        (self.duration_s * self.fps).round() as usize + 1
    }

    pub fn sample_time(&self, k: usize) -> f64 {
        k as f64 / self.fps
    }

    /// Gold labels are taken at the end of the clip.
    pub fn query_time(&self) -> f64 {
        self.duration_s
    }

    fn trajectory(&self, id: AgentId) -> &[AgentPose] {
        match id {
            AgentId::A => &self.trajectory_a,
            AgentId::B => &self.trajectory_b,
        }
    }

    /// Pose at time `t`, linearly interpolated (heading along the short arc)
    /// and clamped to the trajectory's span.
    pub fn pose_at(&self, id: AgentId, t: f64) -> AgentPose {
        interpolate_pose(self.trajectory(id), self.fps, t)
    }

    pub fn world_at(&self, t: f64) -> World {
        World {
            a: self.pose_at(AgentId::A, t),
            b: self.pose_at(AgentId::B, t),
            occluders: self.occluders.clone(),
        }
    }

    /// Rigid motion of the whole scene: rotate by `rotation` (clockwise)
    /// about `pivot`, then translate.
    pub fn transformed(&self, rotation: Angle, pivot: Vec2, translation: Vec2) -> Scenario {
        let map = |p: Vec2| (p - pivot).rotate_cw(rotation) + pivot + translation;
        let map_pose = |p: &AgentPose| AgentPose {
            position: map(p.position),
            heading: p.heading + rotation,
            fov: p.fov,
        };
        Scenario {
            trajectory_a: self.trajectory_a.iter().map(map_pose).collect(),
            trajectory_b: self.trajectory_b.iter().map(map_pose).collect(),
            occluders: self
                .occluders
                .iter()
                .map(|s| Segment::new(map(s.start), map(s.end)))
                .collect(),
            ..self.clone()
        }
    }

    /// Left/right mirror image across the world y axis.
    pub fn mirrored(&self) -> Scenario {
        let map = |p: Vec2| Vec2::new(-p.x, p.y);
        let map_pose = |p: &AgentPose| AgentPose {
            position: map(p.position),
            heading: -p.heading,
            fov: p.fov,
        };
        Scenario {
            trajectory_a: self.trajectory_a.iter().map(map_pose).collect(),
            trajectory_b: self.trajectory_b.iter().map(map_pose).collect(),
            occluders: self
                .occluders
                .iter()
                .map(|s| Segment::new(map(s.start), map(s.end)))
                .collect(),
            ..self.clone()
        }
    }

    /// Exchanges the roles of the two agents.
    pub fn swapped_roles(&self) -> Scenario {
        Scenario {
            trajectory_a: self.trajectory_b.clone(),
            trajectory_b: self.trajectory_a.clone(),
            sound_events: self
                .sound_events
                .iter()
                .map(|e| SoundEvent {
                    emitter: e.emitter.other(),
                    ..*e
                })
                .collect(),
            ..self.clone()
        }
    }
}

pub(crate) fn interpolate_pose(samples: &[AgentPose], fps: f64, t: f64) -> AgentPose {
    let last = samples.len() - 1;
    let x = (t * fps).clamp(0.0, last as f64);
    let k = x.round();
    if (x - k).abs() < 1e-9 {
        return samples[k as usize];
    }
    let i = x.floor() as usize;
    let frac = x - i as f64;
    let (p, q) = (&samples[i], &samples[(i + 1).min(last)]);
    AgentPose {
        position: p.position + (q.position - p.position) * frac,
        heading: lerp_heading(p.heading, q.heading, frac),
        fov: p.fov,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledScenario {
    pub scenario: Scenario,
    pub gold: GoldLabel,
}

/// Knobs for the synthetic corpus. Every field is part of the corpus
/// config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConstraints {
    pub fov_a: FieldOfView,
    pub fov_b: FieldOfView,
    pub min_distance_m: f64,
    pub max_distance_m: f64,
    pub duration_s: f64,
    pub fps: f64,
    /// Half-width of the square B's final position is drawn from.
    pub arena_half_m: f64,
    /// Probability that A starts the clip looking at B and turns away,
    /// for strata where A cannot see B at the end.
    pub glimpse_prob: f64,
    pub b_static_prob: f64,
    pub b_move_min_m: f64,
    pub b_move_max_m: f64,
    pub a_translate_max_m: f64,
    pub a_rotation_max_deg: f64,
    pub occluders: bool,
    pub distractor_prob: f64,
    pub max_attempts: usize,
}

impl Default for GenConstraints {
    fn default() -> Self {
        GenConstraints {
            fov_a: FieldOfView::default(),
            fov_b: FieldOfView::default(),
            min_distance_m: 1.2,
            max_distance_m: 4.5,
            duration_s: 4.0,
            fps: 10.0,
            arena_half_m: 3.0,
            glimpse_prob: 0.85,
            b_static_prob: 0.6,
            b_move_min_m: 0.3,
            b_move_max_m: 1.0,
            a_translate_max_m: 0.5,
            a_rotation_max_deg: 30.0,
            occluders: true,
            distractor_prob: 0.3,
            max_attempts: 2000,
        }
    }
}

impl GenConstraints {
    pub fn validate(&self) -> Result<(), SceneError> {
        let p = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(SceneError::Parameter(msg.to_string()))
            }
        };
        p(self.min_distance_m > 0.0, "min_distance_m must be positive")?;
        p(
            self.max_distance_m >= self.min_distance_m,
            "max_distance_m < min_distance_m",
        )?;
        p(
            self.duration_s > 0.0 && self.duration_s.is_finite(),
            "duration_s must be positive",
        )?;
        p(self.fps > 0.0 && self.fps.is_finite(), "fps must be positive")?;
        p(self.arena_half_m >= 0.0, "arena_half_m must be non-negative")?;
        for (v, name) in [
            (self.glimpse_prob, "glimpse_prob"),
            (self.b_static_prob, "b_static_prob"),
            (self.distractor_prob, "distractor_prob"),
        ] {
            p((0.0..=1.0).contains(&v), &format!("{name} must lie in [0, 1]"))?;
        }
        p(
            self.b_move_max_m >= self.b_move_min_m && self.b_move_min_m >= 0.0,
            "bad B motion range",
        )?;
        p(self.a_translate_max_m >= 0.0, "a_translate_max_m must be non-negative")?;
        p(
            self.a_rotation_max_deg >= 0.0,
            "a_rotation_max_deg must be non-negative",
        )?;
        p(self.max_attempts > 0, "max_attempts must be positive")
    }
}

const ANGLE_MARGIN: f64 = 0.5;

/// Labels whose sector can hold A's bearing in B's frame for `stratum`.
fn reachable_labels(stratum: VisibilityCondition, scheme: Scheme, c: &GenConstraints) -> Vec<Direction> {
    let half_b = c.fov_b.half();
    scheme
        .labels()
        .into_iter()
        .filter(|label| {
            let hw = sector_half_width(scheme) - ANGLE_MARGIN;
            let steps = 400;
            (0..=steps).any(|i| {
                let alpha = label.center().degrees() - hw + 2.0 * hw * i as f64 / steps as f64;
                alpha_allowed(Angle::from_degrees(alpha).abs(), stratum, half_b, c.occluders).is_some()
            })
        })
        .collect()
}

fn sector_half_width(scheme: Scheme) -> f64 {
    match scheme {
        Scheme::Quadrant4 => 45.0,
        Scheme::Octant8 => 22.5,
    }
}

/// `Some(needs_occluder)` when |alpha| is admissible for the stratum.
fn alpha_allowed(abs_alpha: f64, stratum: VisibilityCondition, half_b: f64, occluders: bool) -> Option<bool> {
    if stratum.b_sees_a() {
        (abs_alpha <= half_b - ANGLE_MARGIN).then_some(false)
    } else if abs_alpha > half_b + ANGLE_MARGIN {
        Some(false)
    } else if stratum == VisibilityCondition::MutuallyInvisible && occluders {
        Some(true)
    } else {
        None
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// `glimpse` asks for A to start the clip looking at B; candidates that
/// cannot provide one are rejected rather than downgraded, so the glimpse
/// rate does not depend on the target label.
fn build_candidate(
    rng: &mut ChaCha8Rng,
    target: Direction,
    stratum: VisibilityCondition,
    glimpse: bool,
    c: &GenConstraints,
) -> Option<Scenario> {
    let half_a = c.fov_a.half();
    let half_b = c.fov_b.half();
    let hw = sector_half_width(target.scheme()) - ANGLE_MARGIN;

    let b_pos = Vec2::new(
        uniform(rng, -c.arena_half_m, c.arena_half_m),
        uniform(rng, -c.arena_half_m, c.arena_half_m),
    );
    let b_heading = Angle::from_degrees(uniform(rng, -180.0, 180.0));
    let alpha = Angle::from_degrees(target.center().degrees() + uniform(rng, -hw, hw));
    let mut occluded = alpha_allowed(alpha.abs(), stratum, half_b, c.occluders)?;
    if glimpse && occluded {
        return None;
    }

    let dist = uniform(rng, c.min_distance_m, c.max_distance_m);
    let a_pos = b_pos + Vec2::polar(b_heading + alpha, dist);

    let beta = if stratum.a_sees_b() {
        uniform(rng, -(half_a - ANGLE_MARGIN), half_a - ANGLE_MARGIN)
    } else if occluded {
        uniform(rng, -180.0, 180.0)
    } else if half_a + ANGLE_MARGIN < 180.0 {
        let mag = uniform(rng, half_a + ANGLE_MARGIN, 180.0);
        if rng.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    } else if stratum == VisibilityCondition::MutuallyInvisible && c.occluders && !glimpse {
        occluded = true;
        uniform(rng, -180.0, 180.0)
    } else {
        return None;
    };
    let a_heading = compass_bearing(a_pos, b_pos).ok()? - Angle::from_degrees(beta);

    let mut occluders = Vec::new();
    if occluded {
        let mid = (a_pos + b_pos) * 0.5;
        let across = Vec2::from_bearing(compass_bearing(a_pos, b_pos).ok()? + Angle::from_degrees(90.0));
        let len = uniform(rng, 1.0, 2.0);
        occluders.push(Segment::new(mid - across * (len / 2.0), mid + across * (len / 2.0)));
    }
    if c.occluders && rng.random_bool(c.distractor_prob) {
        let mid = (a_pos + b_pos) * 0.5;
        let off = Vec2::polar(Angle::from_degrees(uniform(rng, -180.0, 180.0)), uniform(rng, 1.5, 3.0));
        let dir = Vec2::from_bearing(Angle::from_degrees(uniform(rng, -180.0, 180.0)));
        let len = uniform(rng, 1.0, 2.0);
        let seg = Segment::new(mid + off - dir * (len / 2.0), mid + off + dir * (len / 2.0));
        if !seg.blocks(a_pos, b_pos) {
            occluders.push(seg);
        }
    }

    let n = (c.duration_s * c.fps).round() as usize;
    let b_static = rng.random_bool(c.b_static_prob);
    let b_start = if b_static {
        b_pos
    } else {
        b_pos
            - Vec2::polar(
                Angle::from_degrees(uniform(rng, -180.0, 180.0)),
                uniform(rng, c.b_move_min_m, c.b_move_max_m),
            )
    };
    let a_start = a_pos
        - Vec2::polar(
            Angle::from_degrees(uniform(rng, -180.0, 180.0)),
            uniform(rng, 0.0, c.a_translate_max_m),
        );
    let a_start_heading = if glimpse {
        let beta0 = uniform(rng, -0.8 * half_a, 0.8 * half_a);
        compass_bearing(a_start, b_start).ok()? - Angle::from_degrees(beta0)
    } else {
        a_heading + Angle::from_degrees(uniform(rng, -c.a_rotation_max_deg, c.a_rotation_max_deg))
    };

    let mut traj_a = Vec::with_capacity(n + 1);
    let mut traj_b = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let f = if n == 0 { 1.0 } else { k as f64 / n as f64 };
        traj_a.push(AgentPose::new(
            a_start + (a_pos - a_start) * f,
            lerp_heading(a_start_heading, a_heading, f),
            c.fov_a,
        ));
        traj_b.push(AgentPose::new(b_start + (b_pos - b_start) * f, b_heading, c.fov_b));
    }
    if traj_a
        .iter()
        .zip(&traj_b)
        .any(|(a, b)| a.position.distance(b.position) < 0.3)
    {
        return None;
    }
    // Pin the final samples exactly to the sampled end poses.
    traj_a[n] = AgentPose::new(a_pos, a_heading, c.fov_a);
    traj_b[n] = AgentPose::new(b_pos, b_heading, c.fov_b);

    let mut sound_events = vec![SoundEvent {
        start_s: 0.0,
        end_s: c.duration_s,
        emitter: AgentId::B,
        kind: if b_static {
            SourceKind::Speech
        } else {
            SourceKind::Footsteps
        },
    }];
    if !stratum.b_sees_a() {
        sound_events.push(SoundEvent {
            start_s: c.duration_s / 2.0,
            end_s: c.duration_s,
            emitter: AgentId::A,
            kind: SourceKind::Speech,
        });
    }

    let scenario = Scenario {
        id: String::new(),
        seed: 0,
        duration_s: c.duration_s,
        fps: c.fps,
        trajectory_a: traj_a,
        trajectory_b: traj_b,
        occluders,
        sound_events,
    };
    Some(scenario)
}

fn generate_one(
    seed: u64,
    stratum: VisibilityCondition,
    index: usize,
    target: Direction,
    scheme: Scheme,
    c: &GenConstraints,
) -> Result<LabeledScenario, SceneError> {
    let scenario_seed = derive_seed(&[seed, STREAM_SCENARIO, stratum.index(), index as u64]);
    let mut rng = rng_for(&[scenario_seed]);
    let glimpse = !stratum.a_sees_b() && rng_for(&[scenario_seed, STREAM_GLIMPSE]).random_bool(c.glimpse_prob);
    for _ in 0..c.max_attempts {
        let Some(mut scenario) = build_candidate(&mut rng, target, stratum, glimpse, c) else {
            continue;
        };
        if scenario.validate().is_err() {
            continue;
        }
        if glimpse && !sees(&scenario.world_at(0.0), AgentId::A, AgentId::B) {
            continue;
        }
        let world = scenario.world_at(scenario.query_time());
        let Ok(gold) = gold_label(&world, scheme) else {
            continue;
        };
        if gold.condition != stratum || gold.direction != target {
            continue;
        }
        scenario.id = format!("{}_{:04}", stratum.slug(), index);
        scenario.seed = scenario_seed;
        let gold = if index.is_multiple_of(2) {
            gold
        } else {
            gold.simplify(&mut rng_for(&[scenario_seed, STREAM_OPTIONS]))
        };
        return Ok(LabeledScenario { scenario, gold });
    }
    Err(SceneError::Infeasible {
        stratum,
        attempts: c.max_attempts,
    })
}

/// Generates `count_per_condition` scenarios for each visibility condition.
///
/// Output is ordered by stratum, then index, and is a pure function of the
/// arguments. Gold labels cycle through the labels reachable in each
/// stratum so they stay balanced; even indices are hard items, odd indices
/// simple ones.
pub fn generate_scenarios(
    seed: u64,
    count_per_condition: usize,
    scheme: Scheme,
    constraints: &GenConstraints,
) -> Result<Vec<LabeledScenario>, SceneError> {
    if count_per_condition == 0 {
        return Err(SceneError::Parameter("count_per_condition must be at least 1".into()));
    }
    constraints.validate()?;
    let mut jobs = Vec::with_capacity(4 * count_per_condition);
    for stratum in VisibilityCondition::ALL {
        let labels = reachable_labels(stratum, scheme, constraints);
        if labels.is_empty() {
            return Err(SceneError::Infeasible { stratum, attempts: 0 });
        }
        let offset = derive_seed(&[seed, STREAM_OPTIONS, stratum.index()]) as usize;
        for i in 0..count_per_condition {
            jobs.push((stratum, i, labels[(i + offset) % labels.len()]));
        }
    }
    jobs.into_par_iter()
        .map(|(stratum, i, target)| generate_one(seed, stratum, i, target, scheme, constraints))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Quadrant;

    fn pose(x: f64, y: f64, h: f64) -> AgentPose {
        AgentPose::new(Vec2::new(x, y), Angle::from_degrees(h), FieldOfView::default())
    }

    fn world(a: AgentPose, b: AgentPose) -> World {
        World {
            a,
            b,
            occluders: vec![],
        }
    }

    #[test]
    fn sees_examples() {
        let w = world(pose(0.0, 0.0, 0.0), pose(0.0, 3.0, 0.0));
        assert!(sees(&w, AgentId::A, AgentId::B));
        let w = world(pose(0.0, 0.0, 0.0), pose(0.0, -3.0, 0.0));
        assert!(!sees(&w, AgentId::A, AgentId::B));
        let mut w = world(pose(0.0, 0.0, 0.0), pose(0.0, 3.0, 0.0));
        w.occluders
            .push(Segment::new(Vec2::new(-1.0, 1.5), Vec2::new(1.0, 1.5)));
        assert!(!sees(&w, AgentId::A, AgentId::B));
        assert!(!sees(&w, AgentId::A, AgentId::A));
    }

    #[test]
    fn segment_touching_endpoint_does_not_block() {
        let s = Segment::new(Vec2::new(-1.0, 3.0), Vec2::new(1.0, 3.0));
        assert!(!s.blocks(Vec2::ZERO, Vec2::new(0.0, 3.0)));
        let collinear = Segment::new(Vec2::new(0.0, 1.0), Vec2::new(0.0, 2.0));
        assert!(collinear.blocks(Vec2::ZERO, Vec2::new(0.0, 3.0)));
        let parallel = Segment::new(Vec2::new(0.5, 1.0), Vec2::new(0.5, 2.0));
        assert!(!parallel.blocks(Vec2::ZERO, Vec2::new(0.0, 3.0)));
    }

    #[test]
    fn visibility_condition_examples() {
        // Face to face.
        let w = world(pose(0.0, 0.0, 0.0), pose(0.0, 3.0, 180.0));
        assert_eq!(visibility_condition(&w), VisibilityCondition::MutuallyVisible);
        // A behind B, both facing north.
        let w = world(pose(0.0, 0.0, 0.0), pose(0.0, 3.0, 0.0));
        assert_eq!(visibility_condition(&w), VisibilityCondition::AOnlySeeB);
        // Back to back.
        let w = world(pose(0.0, 0.0, 180.0), pose(0.0, 3.0, 0.0));
        assert_eq!(visibility_condition(&w), VisibilityCondition::MutuallyInvisible);
        let w = world(pose(0.0, 0.0, 180.0), pose(0.0, 3.0, 180.0));
        assert_eq!(visibility_condition(&w), VisibilityCondition::BOnlySeeA);
    }

    #[test]
    fn gold_label_examples() {
        let w = world(pose(0.0, 2.0, 180.0), pose(0.0, 0.0, 0.0));
        let g = gold_label(&w, Scheme::Quadrant4).unwrap();
        assert_eq!(g.direction, Direction::Quadrant(Quadrant::FrontRight));
        assert_eq!(g.options.len(), 4);
        // A behind B and offset 1 m to the left; both face north.
        let w = world(pose(-1.0, -2.0, 0.0), pose(0.0, 0.0, 0.0));
        let g = gold_label(&w, Scheme::Quadrant4).unwrap();
        assert_eq!(g.direction, Direction::Quadrant(Quadrant::BackLeft));
    }

    #[test]
    fn role_swap_maps_conditions() {
        for c in VisibilityCondition::ALL {
            assert_eq!(c.swapped().swapped(), c);
        }
        assert_eq!(VisibilityCondition::AOnlySeeB.swapped(), VisibilityCondition::BOnlySeeA);
        assert_eq!(
            VisibilityCondition::MutuallyInvisible.swapped(),
            VisibilityCondition::MutuallyInvisible
        );
    }

    #[test]
    fn generation_counts_and_conditions() {
        let items = generate_scenarios(7, 10, Scheme::Quadrant4, &GenConstraints::default()).unwrap();
        assert_eq!(items.len(), 40);
        for c in VisibilityCondition::ALL {
            assert_eq!(items.iter().filter(|i| i.gold.condition == c).count(), 10);
        }
        for item in &items {
            let w = item.scenario.world_at(item.scenario.query_time());
            assert_eq!(visibility_condition(&w), item.gold.condition);
            assert!(item.gold.options.contains(&item.gold.direction));
            let expect = if item.gold.difficulty == Difficulty::Hard { 4 } else { 3 };
            assert_eq!(item.gold.options.len(), expect);
        }
    }

    #[test]
    fn infeasible_stratum_is_named() {
        let c = GenConstraints {
            fov_a: FieldOfView::new(360.0).unwrap(),
            fov_b: FieldOfView::new(360.0).unwrap(),
            occluders: false,
            ..GenConstraints::default()
        };
        match generate_scenarios(1, 2, Scheme::Quadrant4, &c) {
            Err(SceneError::Infeasible { stratum, .. }) => {
                assert_eq!(stratum, VisibilityCondition::AOnlySeeB)
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn interpolation_hits_samples() {
        let items = generate_scenarios(3, 1, Scheme::Quadrant4, &GenConstraints::default()).unwrap();
        let s = &items[0].scenario;
        assert_eq!(s.pose_at(AgentId::A, s.query_time()), *s.trajectory_a.last().unwrap());
        assert_eq!(s.pose_at(AgentId::B, 0.0), s.trajectory_b[0]);
    }
}
