//! Planar coordinate conventions shared by every other module.
//!
//! World frame: `x` east, `y` north, meters. Headings use the compass
//! convention (0° = north, clockwise positive). Egocentric frames put `x`
//! to the agent's right and `y` straight ahead, so a positive bearing means
//! "to the right". Angles are stored in degrees and converted to radians
//! only inside trigonometry.

use std::fmt;
use std::ops::{Add, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate geometry: observer and target coincide at ({x}, {y})")]
    Degenerate { x: f64, y: f64 },
    #[error("field of view must lie in (0, 360] degrees, got {0}")]
    InvalidFov(f64),
    #[error("unknown direction label `{0}`")]
    UnknownLabel(String),
    #[error("unknown discretization scheme `{0}`")]
    UnknownScheme(String),
}

/// Wraps degrees into the half-open interval (-180, 180].
pub fn wrap_degrees(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// A signed angle in degrees, always wrapped to (-180, 180].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
pub struct Angle(f64);

impl Angle {
    pub const ZERO: Angle = Angle(0.0);

    pub fn from_degrees(deg: f64) -> Self {
        Angle(wrap_degrees(deg))
    }

    pub fn from_radians(rad: f64) -> Self {
        Angle::from_degrees(rad.to_degrees())
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn radians(self) -> f64 {
        self.0.to_radians()
    }

    pub fn abs(self) -> f64 {
        self.0.abs()
    }

    /// Smallest absolute difference to `other`, in [0, 180].
    pub fn distance(self, other: Angle) -> f64 {
        (self - other).abs()
    }
}

impl Add for Angle {
    type Output = Angle;
    fn add(self, rhs: Angle) -> Angle {
        Angle::from_degrees(self.0 + rhs.0)
    }
}

impl Sub for Angle {
    type Output = Angle;
    fn sub(self, rhs: Angle) -> Angle {
        Angle::from_degrees(self.0 - rhs.0)
    }
}

impl Neg for Angle {
    type Output = Angle;
    fn neg(self) -> Angle {
        Angle::from_degrees(-self.0)
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}°", self.0)
    }
}

impl Serialize for Angle {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let deg = f64::deserialize(d)?;
        if !deg.is_finite() {
            return Err(serde::de::Error::custom("angle must be finite"));
        }
        Ok(Angle::from_degrees(deg))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    /// Unit vector for a compass bearing (0° = +y, 90° = +x).
    pub fn from_bearing(bearing: Angle) -> Self {
        let r = bearing.radians();
        Vec2::new(r.sin(), r.cos())
    }

    /// Vector of length `range` along a bearing measured in the same frame.
    pub fn polar(bearing: Angle, range: f64) -> Self {
        Vec2::from_bearing(bearing) * range
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Bearing of this vector read in its own frame (0° = +y, clockwise).
    pub fn bearing(self) -> Angle {
        Angle::from_radians(self.x.atan2(self.y))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotates the vector clockwise by `angle` (compass sense).
    pub fn rotate_cw(self, angle: Angle) -> Vec2 {
        let (s, c) = angle.radians().sin_cos();
        Vec2::new(self.x * c + self.y * s, -self.x * s + self.y * c)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Validated horizontal field of view in degrees, (0, 360].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FieldOfView(f64);

impl FieldOfView {
    pub fn new(deg: f64) -> Result<Self, GeometryError> {
        if deg.is_finite() && deg > 0.0 && deg <= 360.0 {
            Ok(FieldOfView(deg))
        } else {
            Err(GeometryError::InvalidFov(deg))
        }
    }

    pub fn degrees(self) -> f64 {
        self.0
    }

    pub fn half(self) -> f64 {
        self.0 / 2.0
    }

    pub fn contains(self, alpha: Angle) -> bool {
        alpha.abs() <= self.half()
    }
}

impl Default for FieldOfView {
    fn default() -> Self {
        FieldOfView(120.0)
    }
}

impl TryFrom<f64> for FieldOfView {
    type Error = GeometryError;
    fn try_from(v: f64) -> Result<Self, Self::Error> {
        FieldOfView::new(v)
    }
}

impl From<FieldOfView> for f64 {
    fn from(f: FieldOfView) -> f64 {
        f.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub position: Vec2,
    pub heading: Angle,
    pub fov: FieldOfView,
}

impl AgentPose {
    pub fn new(position: Vec2, heading: Angle, fov: FieldOfView) -> Self {
        AgentPose { position, heading, fov }
    }

    /// Converts a vector in this agent's egocentric frame to a world offset.
    pub fn local_to_world_offset(&self, local: Vec2) -> Vec2 {
        local.rotate_cw(self.heading)
    }
}

/// Compass bearing of `to` as seen from `from` (0° = north, clockwise).
pub fn compass_bearing(from: Vec2, to: Vec2) -> Result<Angle, GeometryError> {
    let d = to - from;
    if d.x == 0.0 && d.y == 0.0 {
        return Err(GeometryError::Degenerate { x: from.x, y: from.y });
    }
    Ok(d.bearing())
}

/// Signed egocentric bearing of `target`; positive to the observer's right.
pub fn relative_bearing(observer: &AgentPose, target: Vec2) -> Result<Angle, GeometryError> {
    Ok(compass_bearing(observer.position, target)? - observer.heading)
}

/// `target` expressed in the observer's egocentric frame (x right, y forward).
pub fn to_local(observer: &AgentPose, target: Vec2) -> Result<Vec2, GeometryError> {
    let d = target - observer.position;
    if d.x == 0.0 && d.y == 0.0 {
        return Err(GeometryError::Degenerate {
            x: target.x,
            y: target.y,
        });
    }
    Ok(d.rotate_cw(-observer.heading))
}

/// Position of the observer as seen from the other agent.
///
/// `b_given_a` is the other agent's position in the observer's frame and
/// `relative_heading` is the other agent's heading minus the observer's
/// heading (clockwise positive). The result is the observer's position in
/// the other agent's egocentric frame: the negated offset rotated into that
/// agent's axes.
pub fn perspective_shift(b_given_a: Vec2, relative_heading: Angle) -> Vec2 {
    (-b_given_a).rotate_cw(-relative_heading)
}

/// Binary sensory mask: true iff `|alpha| <= phi / 2` (boundary inclusive).
pub fn fov_mask(alpha: Angle, phi_deg: f64) -> Result<bool, GeometryError> {
    Ok(FieldOfView::new(phi_deg)?.contains(alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Quadrant {
    #[serde(rename = "front-left")]
    FrontLeft,
    #[serde(rename = "front-right")]
    FrontRight,
    #[serde(rename = "back-left")]
    BackLeft,
    #[serde(rename = "back-right")]
    BackRight,
}

impl Quadrant {
    pub const ALL: [Quadrant; 4] = [
        Quadrant::FrontLeft,
        Quadrant::FrontRight,
        Quadrant::BackLeft,
        Quadrant::BackRight,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Quadrant::FrontLeft => "front-left",
            Quadrant::FrontRight => "front-right",
            Quadrant::BackLeft => "back-left",
            Quadrant::BackRight => "back-right",
        }
    }

    /// Sector-center point estimate used when only the label is known.
    pub fn center(self) -> Angle {
        Angle::from_degrees(match self {
            Quadrant::FrontLeft => -45.0,
            Quadrant::FrontRight => 45.0,
            Quadrant::BackLeft => -135.0,
            Quadrant::BackRight => 135.0,
        })
    }

    pub fn from_bearing(bearing: Angle) -> Quadrant {
        let b = bearing.degrees();
        if (0.0..90.0).contains(&b) {
            Quadrant::FrontRight
        } else if (-90.0..0.0).contains(&b) {
            Quadrant::FrontLeft
        } else if b >= 90.0 {
            Quadrant::BackRight
        } else {
            Quadrant::BackLeft
        }
    }

    /// The two quadrants sharing an edge: the left/right mirror first, then
    /// the front/back mirror.
    pub fn adjacent(self) -> [Quadrant; 2] {
        match self {
            Quadrant::FrontLeft => [Quadrant::FrontRight, Quadrant::BackLeft],
            Quadrant::FrontRight => [Quadrant::FrontLeft, Quadrant::BackRight],
            Quadrant::BackLeft => [Quadrant::BackRight, Quadrant::FrontLeft],
            Quadrant::BackRight => [Quadrant::BackLeft, Quadrant::FrontRight],
        }
    }
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Quadrant {
    type Err = GeometryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Quadrant::ALL
            .into_iter()
            .find(|q| q.label() == s)
            .ok_or_else(|| GeometryError::UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Octant {
    Front,
    FrontRight,
    Right,
    BackRight,
    Back,
    BackLeft,
    Left,
    FrontLeft,
}

impl Octant {
    /// Clockwise from straight ahead.
    pub const ALL: [Octant; 8] = [
        Octant::Front,
        Octant::FrontRight,
        Octant::Right,
        Octant::BackRight,
        Octant::Back,
        Octant::BackLeft,
        Octant::Left,
        Octant::FrontLeft,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Octant::Front => "front",
            Octant::FrontRight => "front-right",
            Octant::Right => "right",
            Octant::BackRight => "back-right",
            Octant::Back => "back",
            Octant::BackLeft => "back-left",
            Octant::Left => "left",
            Octant::FrontLeft => "front-left",
        }
    }

    pub fn center(self) -> Angle {
        let idx = Octant::ALL.iter().position(|o| *o == self).unwrap_or(0);
        Angle::from_degrees(idx as f64 * 45.0)
    }

    pub fn from_bearing(bearing: Angle) -> Octant {
        let idx = ((bearing.degrees() + 22.5) / 45.0).floor() as i64;
        Octant::ALL[idx.rem_euclid(8) as usize]
    }
}

impl fmt::Display for Octant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Scheme {
    #[default]
    #[serde(rename = "quadrant-4")]
    Quadrant4,
    #[serde(rename = "octant-8")]
    Octant8,
}

impl Scheme {
    pub fn labels(self) -> Vec<Direction> {
        match self {
            Scheme::Quadrant4 => Quadrant::ALL.into_iter().map(Direction::Quadrant).collect(),
            Scheme::Octant8 => Octant::ALL.into_iter().map(Direction::Octant).collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Quadrant4 => "quadrant-4",
            Scheme::Octant8 => "octant-8",
        }
    }

    pub fn parse_label(self, s: &str) -> Result<Direction, GeometryError> {
        self.labels()
            .into_iter()
            .find(|d| d.label() == s)
            .ok_or_else(|| GeometryError::UnknownLabel(s.to_string()))
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = GeometryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quadrant-4" => Ok(Scheme::Quadrant4),
            "octant-8" => Ok(Scheme::Octant8),
            other => Err(GeometryError::UnknownScheme(other.to_string())),
        }
    }
}

/// A discretized egocentric direction under either scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Quadrant(Quadrant),
    Octant(Octant),
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::Quadrant(q) => q.label(),
            Direction::Octant(o) => o.label(),
        }
    }

    pub fn center(self) -> Angle {
        match self {
            Direction::Quadrant(q) => q.center(),
            Direction::Octant(o) => o.center(),
        }
    }

    pub fn scheme(self) -> Scheme {
        match self {
            Direction::Quadrant(_) => Scheme::Quadrant4,
            Direction::Octant(_) => Scheme::Octant8,
        }
    }

    /// Re-expresses a four-way label in `scheme` via its sector center.
    pub fn from_quadrant(q: Quadrant, scheme: Scheme) -> Direction {
        discretize(q.center(), scheme)
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Direction {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Direction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        // Diagonal labels exist in both schemes; they resolve to quadrants.
        if let Ok(q) = s.parse::<Quadrant>() {
            return Ok(Direction::Quadrant(q));
        }
        Scheme::Octant8.parse_label(&s).map_err(serde::de::Error::custom)
    }
}

/// Maps a bearing to its sector label.
///
/// Four-way sectors: front-right `[0, 90)`, front-left `[-90, 0)`,
/// back-right `[90, 180]`, back-left `(-180, -90)`. Eight-way sectors are
/// 45° wide, half-open, centered on the compass labels.
pub fn discretize(bearing: Angle, scheme: Scheme) -> Direction {
    match scheme {
        Scheme::Quadrant4 => Direction::Quadrant(Quadrant::from_bearing(bearing)),
        Scheme::Octant8 => Direction::Octant(Octant::from_bearing(bearing)),
    }
}

/// Interpolates between two headings along the shorter arc.
pub fn lerp_heading(a: Angle, b: Angle, frac: f64) -> Angle {
    Angle::from_degrees(a.degrees() + (b - a).degrees() * frac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pose(x: f64, y: f64, h: f64) -> AgentPose {
        AgentPose::new(Vec2::new(x, y), Angle::from_degrees(h), FieldOfView::default())
    }

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_degrees(180.0), 180.0);
        assert_eq!(wrap_degrees(-180.0), 180.0);
        assert_eq!(wrap_degrees(540.0), 180.0);
        assert_eq!(wrap_degrees(-190.0), 170.0);
        assert_eq!(wrap_degrees(360.0), 0.0);
    }

    #[test]
    fn bearing_examples() {
        let o = pose(0.0, 0.0, 0.0);
        assert!(approx(
            relative_bearing(&o, Vec2::new(1.0, 1.0)).unwrap().degrees(),
            45.0,
            1e-12
        ));
        assert_eq!(relative_bearing(&o, Vec2::new(0.0, 5.0)).unwrap().degrees(), 0.0);
        assert!(matches!(
            relative_bearing(&o, Vec2::ZERO),
            Err(GeometryError::Degenerate { .. })
        ));
    }

    #[test]
    fn to_local_examples() {
        let l = to_local(&pose(0.0, 0.0, 0.0), Vec2::new(0.0, 2.0)).unwrap();
        assert!(approx(l.x, 0.0, 1e-12) && approx(l.y, 2.0, 1e-12));
        let l = to_local(&pose(0.0, 0.0, 90.0), Vec2::new(3.0, 0.0)).unwrap();
        assert!(approx(l.x, 0.0, 1e-12) && approx(l.y, 3.0, 1e-12));
    }

    #[test]
    fn perspective_shift_examples() {
        let s = perspective_shift(Vec2::new(0.0, 2.0), Angle::from_degrees(180.0));
        assert!(approx(s.x, 0.0, 1e-12) && approx(s.y, 2.0, 1e-12));
        let s = perspective_shift(Vec2::new(0.0, 2.0), Angle::ZERO);
        assert!(approx(s.x, 0.0, 1e-12) && approx(s.y, -2.0, 1e-12));
    }

    #[test]
    fn fov_mask_examples() {
        assert!(fov_mask(Angle::from_degrees(50.0), 120.0).unwrap());
        assert!(fov_mask(Angle::from_degrees(-60.0), 120.0).unwrap());
        assert!(!fov_mask(Angle::from_degrees(180.0), 120.0).unwrap());
        assert!(fov_mask(Angle::from_degrees(180.0), 360.0).unwrap());
        assert_eq!(fov_mask(Angle::ZERO, 0.0), Err(GeometryError::InvalidFov(0.0)));
        assert!(fov_mask(Angle::ZERO, 361.0).is_err());
    }

    #[test]
    fn discretize_examples() {
        let d = |b: f64, s| discretize(Angle::from_degrees(b), s).label();
        assert_eq!(d(45.0, Scheme::Quadrant4), "front-right");
        assert_eq!(d(0.0, Scheme::Quadrant4), "front-right");
        assert_eq!(d(-0.0001, Scheme::Quadrant4), "front-left");
        assert_eq!(d(90.0, Scheme::Quadrant4), "back-right");
        assert_eq!(d(-90.0, Scheme::Quadrant4), "front-left");
        assert_eq!(d(180.0, Scheme::Quadrant4), "back-right");
        assert_eq!(d(-179.9, Scheme::Quadrant4), "back-left");
        assert_eq!(d(45.0, Scheme::Octant8), "front-right");
        assert_eq!(d(0.0, Scheme::Octant8), "front");
        assert_eq!(d(22.5, Scheme::Octant8), "front-right");
        assert_eq!(d(-22.5, Scheme::Octant8), "front");
        assert_eq!(d(180.0, Scheme::Octant8), "back");
        assert_eq!(d(-157.5, Scheme::Octant8), "back-left");
        assert_eq!(d(-90.0, Scheme::Octant8), "left");
    }

    #[test]
    fn label_parsing() {
        assert_eq!("back-left".parse::<Quadrant>().unwrap(), Quadrant::BackLeft);
        assert!("left".parse::<Quadrant>().is_err());
        assert_eq!(
            Scheme::Octant8.parse_label("left").unwrap(),
            Direction::Octant(Octant::Left)
        );
        assert_eq!("octant-8".parse::<Scheme>().unwrap(), Scheme::Octant8);
    }

    #[test]
    fn quadrant_centers_round_trip() {
        for q in Quadrant::ALL {
            assert_eq!(Quadrant::from_bearing(q.center()), q);
        }
        for o in Octant::ALL {
            assert_eq!(Octant::from_bearing(o.center()), o);
        }
    }

    proptest! {
        #[test]
        fn wrap_idempotent_and_periodic(x in -1e4f64..1e4) {
            let w = wrap_degrees(x);
            prop_assert!(w > -180.0 && w <= 180.0);
            prop_assert_eq!(wrap_degrees(w), w);
            prop_assert!(approx(wrap_degrees(x + 360.0), w, 1e-9) || approx(wrap_degrees(x + 360.0).abs(), 180.0, 1e-9));
        }

        #[test]
        fn fov_mask_symmetric(a in -180.0f64..180.0, phi in 0.001f64..360.0) {
            let alpha = Angle::from_degrees(a);
            prop_assert_eq!(fov_mask(alpha, phi).unwrap(), fov_mask(-alpha, phi).unwrap());
        }

        #[test]
        fn quadrant_partition_total(a in -720.0f64..720.0) {
            let b = Angle::from_degrees(a);
            let q = Quadrant::from_bearing(b);
            let hits = Quadrant::ALL.iter().filter(|c| {
                let d = b.degrees();
                match c {
                    Quadrant::FrontRight => (0.0..90.0).contains(&d),
                    Quadrant::FrontLeft => (-90.0..0.0).contains(&d),
                    Quadrant::BackRight => (90.0..=180.0).contains(&d),
                    Quadrant::BackLeft => d > -180.0 && d < -90.0,
                }
            }).count();
            prop_assert_eq!(hits, 1);
            prop_assert_eq!(Quadrant::from_bearing(b), q);
        }

        #[test]
        fn local_norm_matches_distance(
            ox in -50.0f64..50.0, oy in -50.0f64..50.0, h in -180.0f64..180.0,
            tx in -50.0f64..50.0, ty in -50.0f64..50.0,
        ) {
            let o = pose(ox, oy, h);
            let t = Vec2::new(tx, ty);
            prop_assume!(t.distance(o.position) > 1e-6);
            let l = to_local(&o, t).unwrap();
            prop_assert!(approx(l.norm(), t.distance(o.position), 1e-9));
            let b = relative_bearing(&o, t).unwrap();
            prop_assert!(l.bearing().distance(b) < 1e-9);
        }

        #[test]
        fn perspective_shift_involution(px in -20.0f64..20.0, py in -20.0f64..20.0, th in -180.0f64..180.0) {
            let p = Vec2::new(px, py);
            let t = Angle::from_degrees(th);
            let back = perspective_shift(perspective_shift(p, t), -t);
            prop_assert!(back.distance(p) < 1e-9);
        }
    }
}
