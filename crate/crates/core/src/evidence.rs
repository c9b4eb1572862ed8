//! Structured per-frame visual evidence: the key-frame document format, its
//! strict parser and canonical emitter, and a geometric oracle that stands
//! in for a vision model with a configurable noise model.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::geometry::{relative_bearing, Angle, Quadrant, Vec2};
use crate::scene::{sees, AgentId, Scenario};
use crate::seeding::{rng_for, STREAM_ORACLE_NOISE};

/// A document that does not conform to the evidence schema. `path` is a
/// dotted location such as `key_frames.0:01.500.visibility_to_camera`.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("schema violation at {path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        SchemaError {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("invalid evidence parameter: {0}")]
    Parameter(String),
}

/// Clip time with millisecond resolution, written `m:ss.mmm`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Timestamp {
    millis: u64,
}

impl Timestamp {
    pub fn from_millis(millis: u64) -> Self {
        Timestamp { millis }
    }

    /// Nearest millisecond; negative times clamp to zero.
    pub fn from_seconds(s: f64) -> Self {
        Timestamp {
            millis: (s.max(0.0) * 1000.0).round() as u64,
        }
    }

    pub fn millis(self) -> u64 {
        self.millis
    }

    pub fn seconds(self) -> f64 {
        self.millis as f64 / 1000.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.millis / 60_000;
        let s = (self.millis / 1000) % 60;
        let ms = self.millis % 1000;
        write!(f, "{m}:{s:02}.{ms:03}")
    }
}

impl FromStr for Timestamp {
    type Err = String;

    /// Accepts exactly `m:ss.mmm`: minutes without leading zeros, two-digit
    /// seconds below 60, three-digit milliseconds.
    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("timestamp {s:?} is not m:ss.mmm");
        let (m, rest) = s.split_once(':').ok_or_else(bad)?;
        let (sec, ms) = rest.split_once('.').ok_or_else(bad)?;
        let digits = |t: &str| !t.is_empty() && t.bytes().all(|b| b.is_ascii_digit());
        if !digits(m)
            || (m.len() > 1 && m.starts_with('0'))
            || sec.len() != 2
            || !digits(sec)
            || ms.len() != 3
            || !digits(ms)
        {
            return Err(bad());
        }
        let m: u64 = m.parse().map_err(|_| bad())?;
        let sec: u64 = sec.parse().map_err(|_| bad())?;
        let ms: u64 = ms.parse().map_err(|_| bad())?;
        if sec >= 60 {
            return Err(bad());
        }
        m.checked_mul(60_000)
            .and_then(|v| v.checked_add(sec * 1000 + ms))
            .map(Timestamp::from_millis)
            .ok_or_else(bad)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Visible,
    Occluded,
    Uncertain,
}

impl Visibility {
    pub fn label(self) -> &'static str {
        match self {
            Visibility::Visible => "visible",
            Visibility::Occluded => "occluded",
            Visibility::Uncertain => "uncertain",
        }
    }
}

impl FromStr for Visibility {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "visible" => Ok(Visibility::Visible),
            "occluded" => Ok(Visibility::Occluded),
            "uncertain" => Ok(Visibility::Uncertain),
            other => Err(format!("{other:?} is not one of visible|occluded|uncertain")),
        }
    }
}

/// One key frame: what A's camera reports about B at a moment.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceFrame {
    pub timestamp: Timestamp,
    pub is_static: bool,
    pub distance_m: Option<f64>,
    /// Signed horizontal angle from A to B, right-positive.
    pub direction: Option<Angle>,
    /// Which quadrant of B's head faces A.
    pub b_orientation: Option<Quadrant>,
    pub b_orientation_confidence: f64,
    pub visibility: Visibility,
    /// `description.event_summary`: object name to direction string.
    pub landmarks: Option<BTreeMap<String, String>>,
    /// B's heading minus A's heading. Not part of the vision-model output;
    /// only the oracle can supply it.
    pub b_relative_heading: Option<Angle>,
    /// Other keys under `description`, kept for re-emission.
    pub description_extra: Map<String, Value>,
    /// Unrecognized frame keys, kept for re-emission.
    pub extra: Map<String, Value>,
}

impl EvidenceFrame {
    pub fn t_s(&self) -> f64 {
        self.timestamp.seconds()
    }

    pub fn is_visible(&self) -> bool {
        self.visibility == Visibility::Visible
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        let path = format!("key_frames.{}", self.timestamp);
        if !(0.0..=1.0).contains(&self.b_orientation_confidence) {
            return Err(SchemaError::new(
                format!("{path}.b_orientation_confidence"),
                format!("{} is outside [0, 1]", self.b_orientation_confidence),
            ));
        }
        if self.visibility == Visibility::Visible && self.b_orientation.is_none() {
            return Err(SchemaError::new(
                format!("{path}.b_orientation_to_camera"),
                "required when visibility_to_camera is visible",
            ));
        }
        if let Some(d) = self.distance_m {
            if !(d.is_finite() && d >= 0.0) {
                return Err(SchemaError::new(
                    format!("{path}.distance"),
                    format!("{d} is not a distance"),
                ));
            }
        }
        Ok(())
    }
}

/// A's pose at a moment, in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoPoseSample {
    pub t_s: f64,
    pub a_world: Vec2,
    pub a_orientation_deg: Angle,
}

/// Corruption applied by the oracle, standing in for vision-model error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Probability a head-quadrant label is replaced by an adjacent one.
    pub orientation_flip_rate: f64,
    /// Probability a visible frame is reported as `uncertain`.
    pub visibility_error_rate: f64,
    pub direction_sigma_deg: f64,
    pub distance_rel_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::noiseless()
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel {
            orientation_flip_rate: 0.0,
            visibility_error_rate: 0.0,
            direction_sigma_deg: 0.0,
            distance_rel_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn with_flip_rate(rate: f64, seed: u64) -> Self {
        NoiseModel {
            orientation_flip_rate: rate,
            seed,
            ..NoiseModel::noiseless()
        }
    }

    pub fn validate(&self) -> Result<(), EvidenceError> {
        for (name, r) in [
            ("orientation_flip_rate", self.orientation_flip_rate),
            ("visibility_error_rate", self.visibility_error_rate),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(EvidenceError::Parameter(format!("{name} must lie in [0, 1], got {r}")));
            }
        }
        for (name, s) in [
            ("direction_sigma_deg", self.direction_sigma_deg),
            ("distance_rel_sigma", self.distance_rel_sigma),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(EvidenceError::Parameter(format!(
                    "{name} must be non-negative, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// What the oracle reports beyond the head-quadrant label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleOptions {
    /// Emit `distance` and `direction`.
    pub full_context: bool,
    /// Emit the `b_relative_heading_deg` extension, enabling exact geometry
    /// downstream.
    pub relative_heading: bool,
    pub confidence: f64,
    /// B counts as static when it moved less than this over the trailing
    /// `static_window_s`.
    pub static_threshold_m: f64,
    pub static_window_s: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            full_context: true,
            relative_heading: false,
            confidence: 0.9,
            static_threshold_m: 0.1,
            static_window_s: 1.0,
        }
    }
}

/// Simulated key-frame extraction at `fps`.
///
/// Ego samples cover every frame time. A key frame is emitted only when B
/// lies inside A's field of view: `visible` with a clear sight line,
/// `occluded` (no head label) when an occluder blocks it.
pub fn extract_oracle(
    scenario: &Scenario,
    fps: f64,
    noise: &NoiseModel,
    opts: &OracleOptions,
) -> Result<(Vec<EvidenceFrame>, Vec<EgoPoseSample>), EvidenceError> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(EvidenceError::Parameter(format!("fps must be positive, got {fps}")));
    }
    noise.validate()?;
    let n = (scenario.duration_s * fps + 1e-9).floor() as usize;
    let mut frames = Vec::new();
    let mut ego = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let timestamp = Timestamp::from_seconds(k as f64 / fps);
        let t = timestamp.seconds();
        let world = scenario.world_at(t);
        ego.push(EgoPoseSample {
            t_s: t,
            a_world: world.a.position,
            a_orientation_deg: world.a.heading,
        });

        // Every draw is taken unconditionally so one frame's noise does not
        // depend on the rates.
        let mut rng = rng_for(&[noise.seed, STREAM_ORACLE_NOISE, scenario.seed, k as u64]);
        let u_vis: f64 = rng.random();
        let u_flip: f64 = rng.random();
        let flip_side: bool = rng.random();
        let z_dir: f64 = rng.sample(StandardNormal);
        let z_dist: f64 = rng.sample(StandardNormal);

        let Ok(direction) = relative_bearing(&world.a, world.b.position) else {
            continue;
        };
        if !world.a.fov.contains(direction) {
            continue;
        }
        let b_prev = scenario
            .pose_at(AgentId::B, (t - opts.static_window_s).max(0.0))
            .position;
        let is_static = world.b.position.distance(b_prev) < opts.static_threshold_m;
        let landmarks = None;

        if !sees(&world, AgentId::A, AgentId::B) {
            frames.push(EvidenceFrame {
                timestamp,
                is_static,
                distance_m: None,
                direction: None,
                b_orientation: None,
                b_orientation_confidence: 0.0,
                visibility: Visibility::Occluded,
                landmarks,
                b_relative_heading: None,
                description_extra: Map::new(),
                extra: Map::new(),
            });
            continue;
        }

        let alpha =
            relative_bearing(&world.b, world.a.position).map_err(|e| EvidenceError::Parameter(e.to_string()))?;
        let mut orientation = Quadrant::from_bearing(alpha);
        if u_flip < noise.orientation_flip_rate {
            orientation = orientation.adjacent()[usize::from(flip_side)];
        }
        let visibility = if u_vis < noise.visibility_error_rate {
            Visibility::Uncertain
        } else {
            Visibility::Visible
        };
        let (distance_m, direction) = if opts.full_context {
            let d = world.a.position.distance(world.b.position);
            (
                Some((d * (1.0 + noise.distance_rel_sigma * z_dist)).max(0.0)),
                Some(Angle::from_degrees(
                    direction.degrees() + noise.direction_sigma_deg * z_dir,
                )),
            )
        } else {
            (None, None)
        };
        frames.push(EvidenceFrame {
            timestamp,
            is_static,
            distance_m,
            direction,
            b_orientation: Some(orientation),
            b_orientation_confidence: opts.confidence,
            visibility,
            landmarks,
            b_relative_heading: opts.relative_heading.then(|| world.b.heading - world.a.heading),
            description_extra: Map::new(),
            extra: Map::new(),
        });
    }
    Ok((frames, ego))
}

/// Parses a leading signed real with an optional unit suffix drawn from
/// `units`, e.g. `"+30"`, `"-15 degrees"`, `"2.5 m"`.
fn parse_quantity(s: &str, units: &[&str]) -> Option<f64> {
    let t = s.trim();
    let end = t
        .char_indices()
        .find(|&(i, c)| !(c.is_ascii_digit() || c == '.' || ((c == '+' || c == '-') && i == 0) || c == 'e' || c == 'E'))
        .map(|(i, _)| i)
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(end);
    let unit = unit.trim();
    if !unit.is_empty() && !units.contains(&unit) {
        return None;
    }
    num.parse::<f64>().ok().filter(|v| v.is_finite())
}

const DISTANCE_UNITS: &[&str] = &["m", "meter", "meters", "metre", "metres"];
const ANGLE_UNITS: &[&str] = &["deg", "degree", "degrees", "°"];

fn quantity_field(v: &Value, units: &[&str], path: &str) -> Result<Option<f64>, SchemaError> {
    match v {
        Value::Null => Ok(None),
        Value::Number(n) => n
            .as_f64()
            .filter(|x| x.is_finite())
            .map(Some)
            .ok_or_else(|| SchemaError::new(path, "number is not finite")),
        Value::String(s) => parse_quantity(s, units).map(Some).ok_or_else(|| {
            SchemaError::new(
                path,
                format!("cannot parse {s:?}; expected a signed number with optional unit"),
            )
        }),
        other => Err(SchemaError::new(
            path,
            format!("expected string or number, got {other}"),
        )),
    }
}

fn parse_frame(ts_key: &str, v: &Value) -> Result<EvidenceFrame, SchemaError> {
    let base = format!("key_frames.{ts_key}");
    let timestamp: Timestamp = ts_key.parse().map_err(|m| SchemaError::new(&base, m))?;
    let obj = v
        .as_object()
        .ok_or_else(|| SchemaError::new(&base, "key frame must be an object"))?;
    let mut extra = obj.clone();
    let mut take = |k: &str| extra.remove(k).unwrap_or(Value::Null);
    let at = |k: &str| format!("{base}.{k}");

    let is_static = match take("is_static") {
        Value::Bool(b) => b,
        other => {
            return Err(SchemaError::new(
                at("is_static"),
                format!("expected boolean, got {other}"),
            ))
        }
    };
    let distance_m = quantity_field(&take("distance"), DISTANCE_UNITS, &at("distance"))?;
    let direction = quantity_field(&take("direction"), ANGLE_UNITS, &at("direction"))?.map(Angle::from_degrees);
    let b_orientation = match take("b_orientation_to_camera") {
        Value::Null => None,
        Value::String(s) => Some(s.parse::<Quadrant>().map_err(|_| {
            SchemaError::new(
                at("b_orientation_to_camera"),
                format!("{s:?} is not one of front-left|front-right|back-left|back-right"),
            )
        })?),
        other => {
            return Err(SchemaError::new(
                at("b_orientation_to_camera"),
                format!("expected string, got {other}"),
            ))
        }
    };
    let b_orientation_confidence = match take("b_orientation_confidence") {
        Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
        other => {
            return Err(SchemaError::new(
                at("b_orientation_confidence"),
                format!("expected number, got {other}"),
            ))
        }
    };
    let visibility = match take("visibility_to_camera") {
        Value::String(s) => s
            .parse::<Visibility>()
            .map_err(|m| SchemaError::new(at("visibility_to_camera"), m))?,
        other => {
            return Err(SchemaError::new(
                at("visibility_to_camera"),
                format!("expected string, got {other}"),
            ))
        }
    };
    let b_relative_heading = quantity_field(
        &take("b_relative_heading_deg"),
        ANGLE_UNITS,
        &at("b_relative_heading_deg"),
    )?
    .map(Angle::from_degrees);
    let (landmarks, description_extra) = match take("description") {
        Value::Null => (None, Map::new()),
        Value::Object(mut d) => {
            let lm = match d.remove("event_summary") {
                None | Some(Value::Null) => None,
                Some(Value::Object(m)) => Some(
                    m.into_iter()
                        .map(|(k, v)| match v {
                            Value::String(s) => Ok((k, s)),
                            other => Err(SchemaError::new(
                                format!("{base}.description.event_summary.{k}"),
                                format!("expected direction string, got {other}"),
                            )),
                        })
                        .collect::<Result<BTreeMap<_, _>, _>>()?,
                ),
                Some(other) => {
                    return Err(SchemaError::new(
                        format!("{base}.description.event_summary"),
                        format!("expected object, got {other}"),
                    ))
                }
            };
            (lm, d)
        }
        other => {
            return Err(SchemaError::new(
                at("description"),
                format!("expected object, got {other}"),
            ))
        }
    };
    let frame = EvidenceFrame {
        timestamp,
        is_static,
        distance_m,
        direction,
        b_orientation,
        b_orientation_confidence,
        visibility,
        landmarks,
        b_relative_heading,
        description_extra,
        extra,
    };
    frame.validate()?;
    Ok(frame)
}

/// Parses the `key_frames` object of `doc`, sorted by time.
pub fn ingest_keyframes(doc: &Value) -> Result<Vec<EvidenceFrame>, SchemaError> {
    let kf = doc
        .get("key_frames")
        .ok_or_else(|| SchemaError::new("key_frames", "missing"))?;
    ingest_keyframe_map(kf, "key_frames")
}

pub(crate) fn ingest_keyframe_map(kf: &Value, path: &str) -> Result<Vec<EvidenceFrame>, SchemaError> {
    let map = kf
        .as_object()
        .ok_or_else(|| SchemaError::new(path, "expected an object keyed by timestamp"))?;
    let mut frames = map
        .iter()
        .map(|(k, v)| {
            parse_frame(k, v).map_err(|e| SchemaError {
                path: e.path.replacen("key_frames", path, 1),
                ..e
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    frames.sort_by_key(|f| f.timestamp);
    let mut ts: Vec<_> = frames.iter().map(|f| f.timestamp).collect();
    ts.dedup();
    if ts.len() != frames.len() {
        return Err(SchemaError::new(path, "two keys name the same instant"));
    }
    Ok(frames)
}

fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

/// One frame as a JSON object. Absent values are omitted, never `null`.
pub fn emit_frame(f: &EvidenceFrame) -> Map<String, Value> {
    let mut o = f.extra.clone();
    o.insert("is_static".into(), Value::Bool(f.is_static));
    if let Some(d) = f.distance_m {
        o.insert("distance".into(), Value::String(format!("{d}")));
    }
    if let Some(a) = f.direction {
        o.insert("direction".into(), Value::String(format!("{:+}", a.degrees())));
    }
    if let Some(q) = f.b_orientation {
        o.insert("b_orientation_to_camera".into(), Value::String(q.label().into()));
    }
    o.insert("b_orientation_confidence".into(), number(f.b_orientation_confidence));
    o.insert(
        "visibility_to_camera".into(),
        Value::String(f.visibility.label().into()),
    );
    if let Some(h) = f.b_relative_heading {
        o.insert("b_relative_heading_deg".into(), number(h.degrees()));
    }
    if f.landmarks.is_some() || !f.description_extra.is_empty() {
        let mut d = f.description_extra.clone();
        if let Some(lm) = &f.landmarks {
            d.insert(
                "event_summary".into(),
                Value::Object(lm.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect()),
            );
        }
        o.insert("description".into(), Value::Object(d));
    }
    o
}

pub fn emit_keyframe_map(frames: &[EvidenceFrame]) -> Value {
    Value::Object(
        frames
            .iter()
            .map(|f| (f.timestamp.to_string(), Value::Object(emit_frame(f))))
            .collect(),
    )
}

/// `{"key_frames": {...}}`.
pub fn emit_keyframes(frames: &[EvidenceFrame]) -> Value {
    let mut o = Map::new();
    o.insert("key_frames".into(), emit_keyframe_map(frames));
    Value::Object(o)
}

/// Pretty JSON with keys in sorted order and a trailing newline.
pub fn canonical_json(v: &Value) -> String {
    // serde_json's default map is ordered, so a Value round trip sorts keys.
    let sorted: Value = serde_json::from_str(&v.to_string()).expect("re-parse of emitted json");
    let mut s = serde_json::to_string_pretty(&sorted).expect("json value serializes");
    s.push('\n');
    s
}
