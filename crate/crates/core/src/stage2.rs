//! The clip document handed to the belief engine: key frames annotated with
//! A's pose, A's pose at clip end, and optional structured audio evidence.
//!
//! Layout:
//!
//! ```text
//! {
//!   "start_time": "0:00.000",
//!   "end_time": "0:04.000",
//!   "a_world_at_clip_end": [x, y, z],
//!   "a_orientation_deg_at_clip_end": 90.0,
//!   "visual_evidence": { "key_frames": { "0:01.000": { ..., "a_world": [x, y, z], "a_orientation_deg": 0.0 } } },
//!   "audio_features": { "windows": [ { "t": 3.5, "itd_s": 0.0003, "ild_db": 4.1, "energy_db": -22.0 } ] },
//!   "audio_summary": { ... },
//!   "spatial_fps": 10,
//!   "ego_motion": [ { "t": 0.0, "a_world": [x, y, z], "a_orientation_deg": 0.0 } ]
//! }
//! ```
//!
//! World coordinates are `[x, y, z]` with y north and z up; z is carried
//! through unchanged and never used. `ego_motion` is optional and densifies
//! A's pose history between key frames. Unrecognized keys are preserved.

use serde_json::{Map, Value};

use crate::audio::{AudioFeatures, FeatureWindow};
use crate::engine::{ego_at, infer_belief, BeliefPrediction, EngineConfig, EngineError};
use crate::evidence::{emit_frame, ingest_keyframe_map, EgoPoseSample, EvidenceFrame, SchemaError, Timestamp};
use crate::geometry::{Angle, Direction, Vec2};

/// A's position and heading at a moment, in document coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseStamp {
    pub a_world: [f64; 3],
    pub a_orientation: Angle,
}

impl PoseStamp {
    pub fn from_sample(s: &EgoPoseSample) -> Self {
        PoseStamp {
            a_world: [s.a_world.x, s.a_world.y, 0.0],
            a_orientation: s.a_orientation_deg,
        }
    }

    pub fn sample(&self, t_s: f64) -> EgoPoseSample {
        EgoPoseSample {
            t_s,
            a_world: Vec2::new(self.a_world[0], self.a_world[1]),
            a_orientation_deg: self.a_orientation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipFrame {
    pub evidence: EvidenceFrame,
    pub pose: PoseStamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioEvidence {
    pub features: AudioFeatures,
    /// Free-form digest of the windows, carried verbatim.
    pub summary: Option<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipDocument {
    pub start_time: Timestamp,
    pub end_time: Timestamp,
    pub end_pose: PoseStamp,
    pub frames: Vec<ClipFrame>,
    pub audio: Option<AudioEvidence>,
    pub ego_motion: Vec<(f64, PoseStamp)>,
    /// Other keys under `visual_evidence`.
    pub visual_extra: Map<String, Value>,
    pub extra: Map<String, Value>,
}

impl ClipDocument {
    /// Builds a document from simulated evidence. `ego` becomes the
    /// `ego_motion` track only when `dense_ego` is set.
    pub fn from_evidence(
        frames: &[EvidenceFrame],
        ego: &[EgoPoseSample],
        features: Option<&AudioFeatures>,
        start_t: f64,
        query_t: f64,
        dense_ego: bool,
    ) -> Result<Self, SchemaError> {
        let pose = |t: f64| {
            ego_at(ego, t)
                .map(|s| PoseStamp::from_sample(&s))
                .ok_or_else(|| SchemaError::new("ego_motion", "A's pose history is empty"))
        };
        let frames = frames
            .iter()
            .filter(|f| f.t_s() <= query_t)
            .map(|f| {
                Ok(ClipFrame {
                    evidence: f.clone(),
                    pose: pose(f.t_s())?,
                })
            })
            .collect::<Result<Vec<_>, SchemaError>>()?;
        Ok(ClipDocument {
            start_time: Timestamp::from_seconds(start_t),
            end_time: Timestamp::from_seconds(query_t),
            end_pose: pose(query_t)?,
            frames,
            audio: features.map(|f| AudioEvidence {
                features: AudioFeatures {
                    spatial_fps: f.spatial_fps,
                    windows: f.windows.iter().filter(|w| w.t_center_s <= query_t).copied().collect(),
                },
                summary: None,
            }),
            ego_motion: if dense_ego {
                ego.iter()
                    .filter(|s| s.t_s <= query_t)
                    .map(|s| (s.t_s, PoseStamp::from_sample(s)))
                    .collect()
            } else {
                Vec::new()
            },
            visual_extra: Map::new(),
            extra: Map::new(),
        })
        .map(|mut d| {
            if let Some(a) = &mut d.audio {
                a.summary = Some(summarize(&a.features));
            }
            d
        })
    }

    pub fn query_t(&self) -> f64 {
        self.end_time.seconds()
    }

    pub fn evidence_frames(&self) -> Vec<EvidenceFrame> {
        self.frames.iter().map(|f| f.evidence.clone()).collect()
    }

    /// Every known pose of A, sorted by time. Where several sources name the
    /// same instant the dense track wins, then key frames, then clip end.
    pub fn ego_history(&self) -> Vec<EgoPoseSample> {
        let mut all: Vec<EgoPoseSample> = self
            .ego_motion
            .iter()
            .map(|(t, p)| p.sample(*t))
            .chain(self.frames.iter().map(|f| f.pose.sample(f.evidence.t_s())))
            .chain(std::iter::once(self.end_pose.sample(self.query_t())))
            .collect();
        all.sort_by(|a, b| a.t_s.total_cmp(&b.t_s));
        all.dedup_by(|later, earlier| later.t_s == earlier.t_s);
        all
    }

    pub fn features(&self) -> Option<&AudioFeatures> {
        self.audio.as_ref().map(|a| &a.features)
    }
}

/// Counts and means over the windows that carry interaural cues.
pub fn summarize(features: &AudioFeatures) -> Value {
    let active: Vec<&FeatureWindow> = features.active_windows().collect();
    let mut o = Map::new();
    o.insert("windows".into(), Value::from(features.windows.len()));
    o.insert("active_windows".into(), Value::from(active.len()));
    if !active.is_empty() {
        let n = active.len() as f64;
        let mean = |f: fn(&FeatureWindow) -> f64| active.iter().map(|w| f(w)).sum::<f64>() / n;
        o.insert("mean_itd_s".into(), number(mean(|w| w.itd_s.unwrap_or(0.0))));
        o.insert("mean_ild_db".into(), number(mean(|w| w.ild_db.unwrap_or(0.0))));
        o.insert("mean_energy_db".into(), number(mean(|w| w.energy_db)));
    }
    Value::Object(o)
}

fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x)
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

/// Integral values print without a fraction so `10` survives a round trip.
fn rate(x: f64) -> Value {
    if x.fract() == 0.0 && (0.0..1e15).contains(&x) {
        Value::from(x as u64)
    } else {
        number(x)
    }
}

fn finite(v: &Value, path: &str) -> Result<f64, SchemaError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| SchemaError::new(path, format!("expected a finite number, got {v}")))
}

fn timestamp(v: Option<&Value>, path: &str) -> Result<Timestamp, SchemaError> {
    match v {
        Some(Value::String(s)) => s.parse().map_err(|m| SchemaError::new(path, m)),
        Some(other) => Err(SchemaError::new(path, format!("expected m:ss.mmm string, got {other}"))),
        None => Err(SchemaError::new(path, "missing")),
    }
}

fn world(v: Option<Value>, path: &str) -> Result<[f64; 3], SchemaError> {
    let arr = match v {
        Some(Value::Array(a)) if a.len() == 3 => a,
        Some(other) => return Err(SchemaError::new(path, format!("expected [x, y, z], got {other}"))),
        None => return Err(SchemaError::new(path, "missing")),
    };
    let mut out = [0.0; 3];
    for (i, x) in arr.iter().enumerate() {
        out[i] = finite(x, &format!("{path}.{i}"))?;
    }
    Ok(out)
}

fn orientation(v: Option<Value>, path: &str) -> Result<Angle, SchemaError> {
    match v {
        Some(x) => finite(&x, path).map(Angle::from_degrees),
        None => Err(SchemaError::new(path, "missing")),
    }
}

fn emit_world(p: &[f64; 3]) -> Value {
    Value::Array(p.iter().map(|x| number(*x)).collect())
}

/// Parses a clip document. Key frames are returned in time order.
pub fn ingest_clip(doc: &Value) -> Result<ClipDocument, SchemaError> {
    let obj = doc
        .as_object()
        .ok_or_else(|| SchemaError::new("", "document must be an object"))?;
    let mut extra = obj.clone();
    let start_time = timestamp(extra.remove("start_time").as_ref(), "start_time")?;
    let end_time = timestamp(extra.remove("end_time").as_ref(), "end_time")?;
    if start_time > end_time {
        return Err(SchemaError::new(
            "end_time",
            format!("{end_time} precedes start_time {start_time}"),
        ));
    }
    let end_pose = PoseStamp {
        a_world: world(extra.remove("a_world_at_clip_end"), "a_world_at_clip_end")?,
        a_orientation: orientation(
            extra.remove("a_orientation_deg_at_clip_end"),
            "a_orientation_deg_at_clip_end",
        )?,
    };

    let mut visual_extra = match extra.remove("visual_evidence") {
        Some(Value::Object(m)) => m,
        Some(other) => {
            return Err(SchemaError::new(
                "visual_evidence",
                format!("expected object, got {other}"),
            ))
        }
        None => return Err(SchemaError::new("visual_evidence", "missing")),
    };
    let kf_path = "visual_evidence.key_frames";
    let mut kf = match visual_extra.remove("key_frames") {
        Some(Value::Object(m)) => m,
        Some(other) => return Err(SchemaError::new(kf_path, format!("expected object, got {other}"))),
        None => return Err(SchemaError::new(kf_path, "missing")),
    };
    let mut poses = Vec::with_capacity(kf.len());
    for (key, frame) in kf.iter_mut() {
        let path = format!("{kf_path}.{key}");
        let f = frame
            .as_object_mut()
            .ok_or_else(|| SchemaError::new(&path, "key frame must be an object"))?;
        let pose = PoseStamp {
            a_world: world(f.remove("a_world"), &format!("{path}.a_world"))?,
            a_orientation: orientation(f.remove("a_orientation_deg"), &format!("{path}.a_orientation_deg"))?,
        };
        let t: Timestamp = key.parse().map_err(|m| SchemaError::new(&path, m))?;
        poses.push((t, pose));
    }
    let evidence = ingest_keyframe_map(&Value::Object(kf), kf_path)?;
    poses.sort_by_key(|(t, _)| *t);
    let frames = evidence
        .into_iter()
        .zip(poses)
        .map(|(evidence, (_, pose))| ClipFrame { evidence, pose })
        .collect();

    let audio = match extra.remove("audio_features") {
        None | Some(Value::Null) => None,
        Some(af) => {
            let windows = af
                .get("windows")
                .ok_or_else(|| SchemaError::new("audio_features.windows", "missing"))?;
            let windows: Vec<FeatureWindow> = serde_json::from_value(windows.clone())
                .map_err(|e| SchemaError::new("audio_features.windows", e.to_string()))?;
            for (i, w) in windows.iter().enumerate() {
                let bad = !w.t_center_s.is_finite()
                    || !w.energy_db.is_finite()
                    || w.itd_s.is_some_and(|x| !x.is_finite())
                    || w.ild_db.is_some_and(|x| !x.is_finite());
                if bad {
                    return Err(SchemaError::new(
                        format!("audio_features.windows.{i}"),
                        "non-finite value",
                    ));
                }
            }
            let spatial_fps = finite(
                extra
                    .get("spatial_fps")
                    .ok_or_else(|| SchemaError::new("spatial_fps", "required with audio_features"))?,
                "spatial_fps",
            )?;
            if spatial_fps <= 0.0 {
                return Err(SchemaError::new("spatial_fps", "must be positive"));
            }
            extra.remove("spatial_fps");
            Some(AudioEvidence {
                features: AudioFeatures { spatial_fps, windows },
                summary: extra.remove("audio_summary"),
            })
        }
    };

    let ego_motion = match extra.remove("ego_motion") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(samples)) => samples
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                let path = format!("ego_motion.{i}");
                let Value::Object(mut m) = s else {
                    return Err(SchemaError::new(&path, "expected object"));
                };
                let t = finite(
                    &m.remove("t")
                        .ok_or_else(|| SchemaError::new(format!("{path}.t"), "missing"))?,
                    &format!("{path}.t"),
                )?;
                let pose = PoseStamp {
                    a_world: world(m.remove("a_world"), &format!("{path}.a_world"))?,
                    a_orientation: orientation(m.remove("a_orientation_deg"), &format!("{path}.a_orientation_deg"))?,
                };
                Ok((t, pose))
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(other) => return Err(SchemaError::new("ego_motion", format!("expected array, got {other}"))),
    };

    Ok(ClipDocument {
        start_time,
        end_time,
        end_pose,
        frames,
        audio,
        ego_motion,
        visual_extra,
        extra,
    })
}

pub fn emit_clip(doc: &ClipDocument) -> Value {
    let mut o = doc.extra.clone();
    o.insert("start_time".into(), Value::String(doc.start_time.to_string()));
    o.insert("end_time".into(), Value::String(doc.end_time.to_string()));
    o.insert("a_world_at_clip_end".into(), emit_world(&doc.end_pose.a_world));
    o.insert(
        "a_orientation_deg_at_clip_end".into(),
        number(doc.end_pose.a_orientation.degrees()),
    );
    let frames: Map<String, Value> = doc
        .frames
        .iter()
        .map(|f| {
            let mut m = emit_frame(&f.evidence);
            m.insert("a_world".into(), emit_world(&f.pose.a_world));
            m.insert("a_orientation_deg".into(), number(f.pose.a_orientation.degrees()));
            (f.evidence.timestamp.to_string(), Value::Object(m))
        })
        .collect();
    let mut visual = doc.visual_extra.clone();
    visual.insert("key_frames".into(), Value::Object(frames));
    o.insert("visual_evidence".into(), Value::Object(visual));
    if let Some(a) = &doc.audio {
        let windows = serde_json::to_value(&a.features.windows).expect("windows serialize");
        let mut af = Map::new();
        af.insert("windows".into(), windows);
        o.insert("audio_features".into(), Value::Object(af));
        o.insert("spatial_fps".into(), rate(a.features.spatial_fps));
        if let Some(s) = &a.summary {
            o.insert("audio_summary".into(), s.clone());
        }
    }
    if !doc.ego_motion.is_empty() {
        let samples = doc
            .ego_motion
            .iter()
            .map(|(t, p)| {
                let mut m = Map::new();
                m.insert("t".into(), number(*t));
                m.insert("a_world".into(), emit_world(&p.a_world));
                m.insert("a_orientation_deg".into(), number(p.a_orientation.degrees()));
                Value::Object(m)
            })
            .collect();
        o.insert("ego_motion".into(), Value::Array(samples));
    }
    Value::Object(o)
}

/// Runs the gated engine at the clip's end time. `use_audio: false` drops
/// the audio block.
pub fn infer_clip(doc: &ClipDocument, cfg: &EngineConfig, use_audio: bool) -> Result<BeliefPrediction, EngineError> {
    cfg.validate()?;
    let features = if use_audio { doc.features() } else { None };
    infer_belief(&doc.evidence_frames(), features, &doc.ego_history(), doc.query_t(), cfg)
}

/// `{"belief_direction": "<label>"}` and nothing else.
pub fn emit_answer(direction: Direction) -> Value {
    let mut o = Map::new();
    o.insert("belief_direction".into(), Value::String(direction.label().into()));
    Value::Object(o)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence::canonical_json;
    use serde_json::json;

    fn doc() -> Value {
        json!({
            "start_time": "0:00.000",
            "end_time": "0:04.000",
            "a_world_at_clip_end": [0.0, 0.0, 1.6],
            "a_orientation_deg_at_clip_end": 0.0,
            "visual_evidence": {
                "key_frames": {
                    "0:01.000": {
                        "is_static": true,
                        "distance": "2",
                        "direction": "+30",
                        "b_orientation_to_camera": "front-left",
                        "b_orientation_confidence": 0.9,
                        "visibility_to_camera": "visible",
                        "a_world": [0.0, 0.0, 1.6],
                        "a_orientation_deg": 0.0
                    }
                },
                "clip": "demo"
            },
            "audio_features": {"windows": [{"t": 3.5, "itd_s": 0.0003, "ild_db": 4.5, "energy_db": -20.0}]},
            "spatial_fps": 10,
            "note": "kept"
        })
    }

    #[test]
    fn round_trip_is_byte_stable() {
        let d = ingest_clip(&doc()).unwrap();
        assert_eq!(d.frames.len(), 1);
        assert_eq!(d.end_pose.a_world, [0.0, 0.0, 1.6]);
        let once = canonical_json(&emit_clip(&d));
        let twice = canonical_json(&emit_clip(&ingest_clip(&serde_json::from_str(&once).unwrap()).unwrap()));
        assert_eq!(once, twice);
        assert!(once.contains("\"note\": \"kept\""));
        assert!(once.contains("\"clip\": \"demo\""));
        assert!(once.contains("\"spatial_fps\": 10,"));
    }

    #[test]
    fn missing_pose_is_reported_with_path() {
        let mut v = doc();
        v["visual_evidence"]["key_frames"]["0:01.000"]
            .as_object_mut()
            .unwrap()
            .remove("a_world");
        let e = ingest_clip(&v).unwrap_err();
        assert_eq!(e.path, "visual_evidence.key_frames.0:01.000.a_world");
        let mut v = doc();
        v.as_object_mut().unwrap().remove("spatial_fps");
        assert_eq!(ingest_clip(&v).unwrap_err().path, "spatial_fps");
        let mut v = doc();
        v["end_time"] = json!("0:00.000");
        v["start_time"] = json!("0:01.000");
        assert_eq!(ingest_clip(&v).unwrap_err().path, "end_time");
    }

    #[test]
    fn answer_has_one_key() {
        let d = ingest_clip(&doc()).unwrap();
        let p = infer_clip(&d, &EngineConfig::default(), true).unwrap();
        let a = emit_answer(p.belief_direction);
        assert_eq!(a.as_object().unwrap().len(), 1);
        assert_eq!(a["belief_direction"], "front-left");
    }

    #[test]
    fn ego_history_merges_sources() {
        let mut d = ingest_clip(&doc()).unwrap();
        d.ego_motion = vec![(
            1.0,
            PoseStamp {
                a_world: [5.0, 0.0, 0.0],
                a_orientation: Angle::from_degrees(10.0),
            },
        )];
        let h = d.ego_history();
        assert_eq!(h.len(), 2);
        assert_eq!(h[0].a_world, Vec2::new(5.0, 0.0));
        assert_eq!(h[1].t_s, 4.0);
    }
}
