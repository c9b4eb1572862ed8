//! Binaural forward model and inverse localization.
//!
//! ITD follows the Woodworth spherical-head model and ILD a sinusoidal law
//! in the lateral angle. Both depend only on the lateral angle, so a
//! source at `β` and its front-back mirror `180° - β` are acoustically
//! identical; [`bearing_candidates`] surfaces both and [`disambiguate`]
//! resolves them from the listener's own head rotation.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{to_local, AgentPose, Angle, Vec2};
use crate::scene::{AgentId, Scenario, SoundEvent, SourceKind};
use crate::seeding::{rng_for, STREAM_AUDIO};

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("invalid audio parameter: {0}")]
    Parameter(String),
    #[error("insufficient audio evidence: {0}")]
    InsufficientEvidence(String),
    #[error("window at {0:.3} s carries no interaural cues")]
    NullWindow(f64),
    #[error("wav i/o: {0}")]
    Wav(#[from] hound::Error),
}

/// Spherical-head parameters. All constants are overridable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadModel {
    pub radius_m: f64,
    pub speed_of_sound_mps: f64,
    pub ild_scale_db: f64,
}

impl Default for HeadModel {
    fn default() -> Self {
        HeadModel {
            radius_m: 0.0875,
            speed_of_sound_mps: 343.0,
            ild_scale_db: 10.0,
        }
    }
}

/// Folds a bearing onto the lateral axis, [-90°, 90°]; front-back mirror
/// pairs share a lateral angle.
pub fn lateral_angle(bearing: Angle) -> f64 {
    let b = bearing.degrees();
    if b > 90.0 {
        180.0 - b
    } else if b < -90.0 {
        -180.0 - b
    } else {
        b
    }
}

impl HeadModel {
    fn woodworth(&self, lateral_rad: f64) -> f64 {
        (self.radius_m / self.speed_of_sound_mps) * (lateral_rad + lateral_rad.sin())
    }

    /// Largest ITD the model can produce, reached at ±90°.
    pub fn max_itd(&self) -> f64 {
        self.woodworth(PI / 2.0)
    }

    /// Interaural time difference in seconds; positive when the right ear
    /// hears the sound first.
    pub fn itd(&self, bearing: Angle) -> f64 {
        let lat = lateral_angle(bearing).to_radians();
        lat.signum() * self.woodworth(lat.abs())
    }

    /// Interaural level difference in dB, right-positive.
    pub fn ild(&self, bearing: Angle) -> f64 {
        self.ild_scale_db * lateral_angle(bearing).to_radians().sin()
    }

    /// Lateral angle (degrees) whose ITD matches `itd`, by bisection on the
    /// monotone map. Returns `(angle, clamped)`; values beyond the model
    /// maximum clamp to ±90°.
    pub fn invert_itd(&self, itd: f64) -> (f64, bool) {
        let target = itd.abs();
        if target == 0.0 {
            return (0.0, false);
        }
        if target >= self.max_itd() {
            return (90.0f64.copysign(itd), target > self.max_itd());
        }
        let (mut lo, mut hi) = (0.0f64, PI / 2.0);
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            if self.woodworth(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let lat = (0.5 * (lo + hi)).to_degrees();
        (if itd < 0.0 { -lat } else { lat }, false)
    }
}

pub fn itd_model(bearing: Angle) -> f64 {
    HeadModel::default().itd(bearing)
}

pub fn ild_model(bearing: Angle) -> f64 {
    HeadModel::default().ild(bearing)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoBuffer {
    pub sample_rate_hz: u32,
    /// Time of the first sample, seconds.
    pub start_s: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

impl StereoBuffer {
    pub fn new(sample_rate_hz: u32, start_s: f64, left: Vec<f64>, right: Vec<f64>) -> Result<Self, AudioError> {
        if sample_rate_hz < 8000 {
            return Err(AudioError::Parameter(format!(
                "sample rate must be at least 8000 Hz, got {sample_rate_hz}"
            )));
        }
        if left.len() != right.len() {
            return Err(AudioError::Parameter("channel lengths differ".into()));
        }
        Ok(StereoBuffer {
            sample_rate_hz,
            start_s,
            left,
            right,
        })
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    pub fn swapped(&self) -> StereoBuffer {
        StereoBuffer {
            left: self.right.clone(),
            right: self.left.clone(),
            ..self.clone()
        }
    }

    /// Writes 16-bit PCM stereo.
    pub fn write_wav(&self, path: &Path) -> Result<(), AudioError> {
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: self.sample_rate_hz,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(path, spec)?;
        let q = |v: f64| (v.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16;
        for (l, r) in self.left.iter().zip(&self.right) {
            w.write_sample(q(*l))?;
            w.write_sample(q(*r))?;
        }
        w.finalize()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sample_rate_hz: u32,
    /// Additive white noise level; `None` renders a clean signal.
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub head: HeadModel,
    /// Amplitude of a unit-RMS source heard from 1 m.
    pub source_gain: f64,
    /// Geometry is re-evaluated every `block_s` seconds.
    pub block_s: f64,
    pub band_center_hz: f64,
    pub band_q: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sample_rate_hz: 16_000,
            snr_db: None,
            seed: 0,
            head: HeadModel::default(),
            source_gain: 0.25,
            block_s: 0.01,
            band_center_hz: 1000.0,
            band_q: 0.7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), AudioError> {
        if self.sample_rate_hz < 8000 {
            return Err(AudioError::Parameter(format!(
                "sample rate must be at least 8000 Hz, got {}",
                self.sample_rate_hz
            )));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(AudioError::Parameter(format!("snr_db must be finite, got {snr}")));
            }
        }
        if !(self.block_s > 0.0) || !(self.source_gain > 0.0) {
            return Err(AudioError::Parameter("block_s and source_gain must be positive".into()));
        }
        if !(self.band_center_hz > 0.0 && self.band_center_hz < self.sample_rate_hz as f64 / 2.0) {
            return Err(AudioError::Parameter("band center must lie below Nyquist".into()));
        }
        Ok(())
    }
}

/// Amplitude envelope of a source kind at `tau` seconds after onset.
fn envelope(kind: SourceKind, tau: f64) -> f64 {
    match kind {
        SourceKind::Noise => 1.0,
        SourceKind::Speech => 0.55 + 0.45 * (2.0 * PI * 4.0 * tau).sin(),
        SourceKind::Footsteps => {
            let phase = tau.rem_euclid(0.5);
            let burst = if phase < 0.15 {
                (PI * phase / 0.15).sin().powi(2)
            } else {
                0.0
            };
            0.05 + 0.95 * burst
        }
    }
}

/// Band-limited carrier with unit RMS (RBJ band-pass over white noise).
fn carrier(len: usize, cfg: &SynthConfig, rng: &mut impl Rng) -> Vec<f64> {
    let fs = cfg.sample_rate_hz as f64;
    let w0 = 2.0 * PI * cfg.band_center_hz / fs;
    let alpha = w0.sin() / (2.0 * cfg.band_q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    let mut out = Vec::with_capacity(len);
    // Run the filter in before keeping samples so the start is settled.
    let settle = 256;
    for i in 0..len + settle {
        let x: f64 = rng.sample(StandardNormal);
        let y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
        x2 = x1;
        x1 = x;
        y2 = y1;
        y1 = y;
        if i >= settle {
            out.push(y);
        }
    }
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    out
}

/// Catmull-Rom read of `signal` at fractional index `x`; zero outside.
fn read_fractional(signal: &[f64], x: f64) -> f64 {
    let i = x.floor();
    let f = x - i;
    let i = i as isize;
    let at = |k: isize| -> f64 {
        if k < 0 || k as usize >= signal.len() {
            0.0
        } else {
            signal[k as usize]
        }
    };
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    p1 + 0.5 * f * (p2 - p0 + f * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + f * (3.0 * (p1 - p2) + p3 - p0)))
}

/// Renders one sound event as heard by a moving listener.
///
/// `source` and `listener` give world positions and poses over time; the
/// output spans `span_s` (start, end). Each channel is the source carrier
/// advanced or delayed by half the ITD, scaled by half the ILD, and
/// attenuated by `1 / max(d, 0.5 m)`. Geometry is evaluated at the center
/// of every `block_s` block.
pub fn synthesize_binaural(
    event: &SoundEvent,
    source: &dyn Fn(f64) -> Vec2,
    listener: &dyn Fn(f64) -> AgentPose,
    span_s: (f64, f64),
    cfg: &SynthConfig,
) -> Result<StereoBuffer, AudioError> {
    cfg.validate()?;
    if !(event.end_s > event.start_s) {
        return Err(AudioError::Parameter("event must have positive duration".into()));
    }
    if event.end_s <= span_s.0 || event.start_s >= span_s.1 {
        return Err(AudioError::Parameter("event does not overlap the listener span".into()));
    }
    let fs = cfg.sample_rate_hz as f64;
    let n = ((span_s.1 - span_s.0) * fs).round() as usize;
    let mut rng = rng_for(&[cfg.seed, STREAM_AUDIO, event.start_s.to_bits(), event.end_s.to_bits()]);

    // Carrier indexed from one margin before onset.
    let margin = 0.01;
    let carrier_start = event.start_s - margin;
    let carrier_len = ((event.end_s - event.start_s + 2.0 * margin) * fs).ceil() as usize + 4;
    let raw = carrier(carrier_len, cfg, &mut rng);
    let fade = 0.005;
    let src: Vec<f64> = raw
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let t = carrier_start + i as f64 / fs;
            if t < event.start_s || t > event.end_s {
                return 0.0;
            }
            let edge = ((t - event.start_s).min(event.end_s - t) / fade).min(1.0);
            let ramp = (0.5 - 0.5 * (PI * edge).cos()).max(0.0);
            v * envelope(event.kind, t - event.start_s) * ramp
        })
        .collect();

    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    let block = ((cfg.block_s * fs).round() as usize).max(1);
    let mut active_power = 0.0;
    let mut active_count = 0usize;
    for b0 in (0..n).step_by(block) {
        let b1 = (b0 + block).min(n);
        let t_mid = span_s.0 + (b0 + b1) as f64 / 2.0 / fs;
        let pose = listener(t_mid);
        let pos = source(t_mid);
        let local = to_local(&pose, pos).unwrap_or(Vec2::new(0.0, 1e-6));
        let bearing = local.bearing();
        let dist = local.norm();
        let itd = cfg.head.itd(bearing);
        let ild = cfg.head.ild(bearing);
        let g = cfg.source_gain / dist.max(0.5);
        let g_r = g * 10f64.powf(ild / 40.0);
        let g_l = g * 10f64.powf(-ild / 40.0);
        for i in b0..b1 {
            let t = span_s.0 + i as f64 / fs;
            let x = (t - carrier_start) * fs;
            let r = g_r * read_fractional(&src, x + itd / 2.0 * fs);
            let l = g_l * read_fractional(&src, x - itd / 2.0 * fs);
            right[i] = r;
            left[i] = l;
            if t >= event.start_s && t <= event.end_s {
                active_power += 0.5 * (r * r + l * l);
                active_count += 1;
            }
        }
    }

    if let Some(snr) = cfg.snr_db {
        let p = active_power / active_count.max(1) as f64;
        let sigma = (p / 10f64.powf(snr / 10.0)).sqrt();
        let mut noise_rng = rng_for(&[cfg.seed, STREAM_AUDIO, 0x4E01, event.start_s.to_bits()]);
        for v in left.iter_mut().chain(right.iter_mut()) {
            let z: f64 = noise_rng.sample(StandardNormal);
            *v += sigma * z;
        }
    }
    for v in left.iter_mut().chain(right.iter_mut()) {
        *v = v.clamp(-1.0, 1.0);
    }
    StereoBuffer::new(cfg.sample_rate_hz, span_s.0, left, right)
}

/// What A hears over a whole scenario: every event emitted by B, rendered
/// against A's trajectory and summed.
pub fn render_scenario(scenario: &Scenario, cfg: &SynthConfig) -> Result<StereoBuffer, AudioError> {
    let span = (0.0, scenario.duration_s);
    let fs = cfg.sample_rate_hz;
    let n = (scenario.duration_s * fs as f64).round() as usize;
    let mut mix = StereoBuffer::new(fs, 0.0, vec![0.0; n], vec![0.0; n])?;
    let source = |t: f64| scenario.pose_at(AgentId::B, t).position;
    let listener = |t: f64| scenario.pose_at(AgentId::A, t);
    for (k, event) in scenario
        .sound_events
        .iter()
        .enumerate()
        .filter(|(_, e)| e.emitter == AgentId::B)
    {
        let ev_cfg = SynthConfig {
            seed: crate::seeding::derive_seed(&[cfg.seed, scenario.seed, k as u64]),
            ..cfg.clone()
        };
        let part = synthesize_binaural(event, &source, &listener, span, &ev_cfg)?;
        for (m, p) in mix.left.iter_mut().zip(&part.left) {
            *m = (*m + p).clamp(-1.0, 1.0);
        }
        for (m, p) in mix.right.iter_mut().zip(&part.right) {
            *m = (*m + p).clamp(-1.0, 1.0);
        }
    }
    Ok(mix)
}

/// One analysis window. `itd_s`/`ild_db` are `None` for silent or
/// incoherent windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureWindow {
    #[serde(rename = "t")]
    pub t_center_s: f64,
    pub itd_s: Option<f64>,
    pub ild_db: Option<f64>,
    pub energy_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioFeatures {
    pub spatial_fps: f64,
    pub windows: Vec<FeatureWindow>,
}

impl AudioFeatures {
    pub fn active_windows(&self) -> impl Iterator<Item = &FeatureWindow> {
        self.windows.iter().filter(|w| w.itd_s.is_some())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Windows quieter than this (dBFS) are reported as silent.
    pub floor_db: f64,
    /// Minimum normalized cross-correlation peak for a usable ITD.
    pub min_coherence: f64,
    pub head: HeadModel,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            floor_db: -60.0,
            min_coherence: 0.3,
            head: HeadModel::default(),
        }
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Normalized cross-correlation of `right[m]` against `left[m + lag]`; a
/// positive peak lag means the left channel trails (sound from the right).
fn xcorr(left: &[f64], right: &[f64], lag: isize) -> f64 {
    let n = left.len();
    let k = lag.unsigned_abs();
    if k >= n {
        return 0.0;
    }
    let (mut acc, mut el, mut er) = (0.0, 0.0, 0.0);
    for m in 0..n - k {
        let (r, l) = if lag >= 0 {
            (right[m], left[m + k])
        } else {
            (right[m + k], left[m])
        };
        acc += r * l;
        el += l * l;
        er += r * r;
    }
    let norm = (el * er).sqrt();
    if norm > 0.0 {
        acc / norm
    } else {
        0.0
    }
}

/// Windowed interaural analysis: window length and hop are `1 / spatial_fps`.
pub fn extract_features(
    buffer: &StereoBuffer,
    spatial_fps: f64,
    cfg: &FeatureConfig,
) -> Result<AudioFeatures, AudioError> {
    if !(spatial_fps > 0.0 && spatial_fps.is_finite()) {
        return Err(AudioError::Parameter(format!(
            "spatial_fps must be positive, got {spatial_fps}"
        )));
    }
    let fs = buffer.sample_rate_hz as f64;
    let win = (fs / spatial_fps).round() as usize;
    if win < 4 || buffer.len() < win {
        return Err(AudioError::Parameter(format!(
            "buffer of {} samples is shorter than one {win}-sample window",
            buffer.len()
        )));
    }
    let max_lag = (cfg.head.max_itd() * fs).ceil() as isize + 2;
    let windows = (0..buffer.len() / win)
        .map(|w| {
            let (a, b) = (w * win, (w + 1) * win);
            let (l, r) = (&buffer.left[a..b], &buffer.right[a..b]);
            let t_center_s = buffer.start_s + (a + b) as f64 / 2.0 / fs;
            let (rl, rr) = (rms(l), rms(r));
            let mean = (rl + rr) / 2.0;
            let energy = if mean > 0.0 {
                20.0 * mean.log10()
            } else {
                f64::NEG_INFINITY
            };
            if energy < cfg.floor_db || rl == 0.0 || rr == 0.0 {
                return FeatureWindow {
                    t_center_s,
                    itd_s: None,
                    ild_db: None,
                    energy_db: cfg.floor_db,
                };
            }
            let corr: Vec<f64> = (-max_lag..=max_lag).map(|k| xcorr(l, r, k)).collect();
            let (peak, &peak_val) =
                corr.iter().enumerate().fold(
                    (0, &f64::NEG_INFINITY),
                    |best, (i, v)| if *v > *best.1 { (i, v) } else { best },
                );
            if peak_val < cfg.min_coherence {
                return FeatureWindow {
                    t_center_s,
                    itd_s: None,
                    ild_db: None,
                    energy_db: energy,
                };
            }
            let mut lag = peak as f64 - max_lag as f64;
            if peak > 0 && peak + 1 < corr.len() {
                let (ym, y0, yp) = (corr[peak - 1], corr[peak], corr[peak + 1]);
                let denom = 2.0 * ((ym + yp) - 2.0 * y0);
                if denom.abs() > 1e-15 {
                    lag += (ym - yp) / denom;
                }
            }
            FeatureWindow {
                t_center_s,
                itd_s: Some(lag / fs),
                ild_db: Some(20.0 * (rr.log10() - rl.log10())),
                energy_db: energy,
            }
        })
        .collect();
    Ok(AudioFeatures { spatial_fps, windows })
}

/// Front and (when distinct) back-mirror bearing hypotheses for a window.
#[derive(Debug, Clone, PartialEq)]
pub struct BearingEstimate {
    /// Front hypothesis first; the back mirror second when it differs.
    pub candidates: Vec<Angle>,
    pub confidence: f64,
}

impl BearingEstimate {
    pub fn front(&self) -> Angle {
        self.candidates[0]
    }

    pub fn back(&self) -> Angle {
        *self.candidates.last().unwrap_or(&self.candidates[0])
    }

    pub fn is_ambiguous(&self) -> bool {
        self.candidates.len() == 2
    }
}

/// Mirror across the interaural axis: β ↦ 180° − β.
pub fn front_back_mirror(b: Angle) -> Angle {
    Angle::from_degrees(180.0 - b.degrees())
}

/// Inverts the ITD of one window into front/back bearing candidates.
pub fn bearing_candidates(window: &FeatureWindow, head: &HeadModel) -> Result<BearingEstimate, AudioError> {
    let itd = window.itd_s.ok_or(AudioError::NullWindow(window.t_center_s))?;
    let (lat, clamped) = head.invert_itd(itd);
    let front = Angle::from_degrees(lat);
    let back = front_back_mirror(front);
    let mut candidates = vec![front];
    if back != front {
        candidates.push(back);
    }
    let confidence = if clamped {
        0.25
    } else {
        let ild = window.ild_db.unwrap_or(0.0);
        let conflict = itd * ild < 0.0 && ild.abs() > 0.5 && itd.abs() > 2e-5;
        if conflict {
            0.5
        } else {
            1.0
        }
    };
    Ok(BearingEstimate { candidates, confidence })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disambiguation {
    /// Chosen egocentric bearing at the last window.
    pub bearing: Angle,
    /// Set when the front/back choice could not be checked.
    pub ambiguous: bool,
    /// Set when head rotation decided between the candidates.
    pub coupled: bool,
}

/// 1 − mean resultant length of a set of angles.
pub fn circular_variance(angles: impl IntoIterator<Item = Angle>) -> f64 {
    let (mut s, mut c, mut n) = (0.0, 0.0, 0usize);
    for a in angles {
        s += a.radians().sin();
        c += a.radians().cos();
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    1.0 - (s * s + c * c).sqrt() / n as f64
}

/// Net span of a heading history after unwrapping, degrees.
pub fn heading_span(headings: &[Angle]) -> f64 {
    let mut acc = 0.0f64;
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for w in headings.windows(2) {
        acc += (w[1] - w[0]).degrees();
        lo = lo.min(acc);
        hi = hi.max(acc);
    }
    hi - lo
}

/// Resolves front-back confusion by audio-motion coupling.
///
/// Each candidate of the last window fixes a world bearing (candidate +
/// listener heading). For a world-stationary source the correct one is
/// matched by some candidate of every earlier window, while the mirror
/// drifts by twice the head rotation. Matching either candidate keeps the
/// test valid when the source crosses the interaural axis mid-turn. The
/// hypothesis with the smaller total mismatch wins. With one window or less than `min_rotation_deg` of net
/// rotation the front candidate is returned and flagged ambiguous.
pub fn disambiguate(
    estimates: &[BearingEstimate],
    headings: &[Angle],
    min_rotation_deg: f64,
) -> Result<Disambiguation, AudioError> {
    let last = estimates
        .last()
        .ok_or_else(|| AudioError::InsufficientEvidence("no bearing estimates".into()))?;
    if headings.len() != estimates.len() {
        return Err(AudioError::Parameter("one heading per estimate is required".into()));
    }
    if estimates.len() < 2 || heading_span(headings) < min_rotation_deg {
        return Ok(Disambiguation {
            bearing: last.front(),
            ambiguous: last.is_ambiguous(),
            coupled: false,
        });
    }
    let last_heading = headings[headings.len() - 1];
    let mismatch = |hypothesis: Angle| -> f64 {
        let world = hypothesis + last_heading;
        estimates
            .iter()
            .zip(headings)
            .map(|(e, h)| {
                e.candidates
                    .iter()
                    .map(|c| 1.0 - ((*c + *h) - world).radians().cos())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    };
    let bearing = if mismatch(last.back()) < mismatch(last.front()) {
        last.back()
    } else {
        last.front()
    };
    Ok(Disambiguation {
        bearing,
        ambiguous: false,
        coupled: true,
    })
}

/// Inverse of the `1 / d` law: range implied by a window level, given the
/// level the same source produces from 1 m.
pub fn distance_from_energy(energy_db: f64, reference_db: f64) -> f64 {
    10f64.powf((reference_db - energy_db) / 20.0).clamp(0.5, 50.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::FieldOfView;

    fn static_event(kind: SourceKind, dur: f64) -> SoundEvent {
        SoundEvent {
            start_s: 0.0,
            end_s: dur,
            emitter: AgentId::B,
            kind,
        }
    }

    fn render_static(bearing_deg: f64, dist: f64, cfg: &SynthConfig) -> StereoBuffer {
        let listener = AgentPose::new(Vec2::ZERO, Angle::ZERO, FieldOfView::default());
        let src = Vec2::polar(Angle::from_degrees(bearing_deg), dist);
        synthesize_binaural(
            &static_event(SourceKind::Noise, 1.0),
            &|_| src,
            &|_| listener,
            (0.0, 1.0),
            cfg,
        )
        .unwrap()
    }

    #[test]
    fn itd_examples() {
        assert_eq!(itd_model(Angle::ZERO), 0.0);
        let expect = 0.0875 / 343.0 * (PI / 2.0 + 1.0);
        assert!((itd_model(Angle::from_degrees(90.0)) - expect).abs() < 1e-15);
        assert!((expect - 6.56e-4).abs() < 1e-6);
        assert_eq!(
            itd_model(Angle::from_degrees(-30.0)),
            itd_model(Angle::from_degrees(-150.0))
        );
    }

    #[test]
    fn ild_examples() {
        assert_eq!(ild_model(Angle::ZERO), 0.0);
        assert!((ild_model(Angle::from_degrees(90.0)) - 10.0).abs() < 1e-12);
        assert!((ild_model(Angle::from_degrees(30.0)) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn itd_odd_monotone_bounded() {
        let h = HeadModel::default();
        let mut prev = f64::NEG_INFINITY;
        for i in -900..=900 {
            let b = Angle::from_degrees(i as f64 / 10.0);
            let v = h.itd(b);
            assert!((v + h.itd(-b)).abs() < 1e-18);
            assert!(v > prev);
            assert!(v.abs() <= h.max_itd() + 1e-18);
            prev = v;
        }
    }

    #[test]
    fn inversion_recovers_lateral() {
        let h = HeadModel::default();
        for i in -89..=89 {
            let (lat, clamped) = h.invert_itd(h.itd(Angle::from_degrees(i as f64)));
            assert!(!clamped);
            assert!((lat - i as f64).abs() < 1e-9);
        }
        let (lat, clamped) = h.invert_itd(2.0 * h.max_itd());
        assert_eq!((lat, clamped), (90.0, true));
    }

    #[test]
    fn dead_ahead_has_zero_lag() {
        let buf = render_static(0.0, 2.0, &SynthConfig::default());
        let f = extract_features(&buf, 10.0, &FeatureConfig::default()).unwrap();
        for w in f.active_windows() {
            assert!(w.itd_s.unwrap().abs() < 0.25 / 16_000.0, "{w:?}");
        }
    }

    #[test]
    fn lateral_source_lag_matches_model() {
        let buf = render_static(90.0, 2.0, &SynthConfig::default());
        let f = extract_features(&buf, 10.0, &FeatureConfig::default()).unwrap();
        let expect = itd_model(Angle::from_degrees(90.0));
        assert!(f.active_windows().count() >= 9);
        for w in f.active_windows() {
            assert!((w.itd_s.unwrap() - expect).abs() < 1.0 / 16_000.0, "{w:?}");
        }
    }

    #[test]
    fn forty_five_degrees_round_trip() {
        let buf = render_static(45.0, 2.0, &SynthConfig::default());
        let f = extract_features(&buf, 10.0, &FeatureConfig::default()).unwrap();
        let expect = itd_model(Angle::from_degrees(45.0));
        for w in f.active_windows() {
            assert!((w.itd_s.unwrap() - expect).abs() < 1.0 / 16_000.0);
            assert!(w.ild_db.unwrap() > 0.0);
        }
    }

    #[test]
    fn doubling_distance_drops_six_db() {
        let cfg = SynthConfig::default();
        let e = |d: f64| {
            let f = extract_features(&render_static(20.0, d, &cfg), 10.0, &FeatureConfig::default()).unwrap();
            f.windows[2..8].iter().map(|w| w.energy_db).sum::<f64>() / 6.0
        };
        let drop = e(1.0) - e(2.0);
        assert!((drop - 6.02).abs() < 0.3, "drop {drop}");
    }

    #[test]
    fn silence_yields_null_windows() {
        let buf = StereoBuffer::new(16_000, 0.0, vec![0.0; 16_000], vec![0.0; 16_000]).unwrap();
        let f = extract_features(&buf, 10.0, &FeatureConfig::default()).unwrap();
        assert_eq!(f.windows.len(), 10);
        for w in &f.windows {
            assert!(w.itd_s.is_none() && w.ild_db.is_none());
            assert_eq!(w.energy_db, -60.0);
        }
    }

    #[test]
    fn channel_swap_negates_cues() {
        let buf = render_static(
            -35.0,
            1.5,
            &SynthConfig {
                snr_db: Some(25.0),
                ..SynthConfig::default()
            },
        );
        let cfg = FeatureConfig::default();
        let a = extract_features(&buf, 10.0, &cfg).unwrap();
        let b = extract_features(&buf.swapped(), 10.0, &cfg).unwrap();
        for (x, y) in a.windows.iter().zip(&b.windows) {
            assert_eq!(x.itd_s.map(|v| -v), y.itd_s);
            assert_eq!(x.ild_db.map(|v| -v), y.ild_db);
            assert_eq!(x.energy_db, y.energy_db);
        }
    }

    #[test]
    fn candidates_examples() {
        let h = HeadModel::default();
        let w = FeatureWindow {
            t_center_s: 0.0,
            itd_s: Some(h.itd(Angle::from_degrees(30.0))),
            ild_db: Some(5.0),
            energy_db: -20.0,
        };
        let e = bearing_candidates(&w, &h).unwrap();
        assert!((e.candidates[0].degrees() - 30.0).abs() < 1e-9);
        assert!((e.candidates[1].degrees() - 150.0).abs() < 1e-9);
        assert_eq!(e.confidence, 1.0);

        let w0 = FeatureWindow {
            itd_s: Some(0.0),
            ild_db: Some(0.0),
            ..w
        };
        let e = bearing_candidates(&w0, &h).unwrap();
        assert_eq!(e.candidates, vec![Angle::ZERO, Angle::from_degrees(180.0)]);

        let conflict = FeatureWindow {
            ild_db: Some(-4.0),
            ..w
        };
        assert_eq!(bearing_candidates(&conflict, &h).unwrap().confidence, 0.5);

        let too_big = FeatureWindow {
            itd_s: Some(-1e-3),
            ..w
        };
        let e = bearing_candidates(&too_big, &h).unwrap();
        assert_eq!(e.candidates, vec![Angle::from_degrees(-90.0)]);
        assert_eq!(e.confidence, 0.25);

        let null = FeatureWindow { itd_s: None, ..w };
        assert!(matches!(bearing_candidates(&null, &h), Err(AudioError::NullWindow(_))));
    }

    #[test]
    fn disambiguation_fallbacks() {
        let e = BearingEstimate {
            candidates: vec![Angle::from_degrees(20.0), Angle::from_degrees(160.0)],
            confidence: 1.0,
        };
        let d = disambiguate(std::slice::from_ref(&e), &[Angle::ZERO], 5.0).unwrap();
        assert!(d.ambiguous && !d.coupled);
        assert_eq!(d.bearing, Angle::from_degrees(20.0));
        let d = disambiguate(&[e.clone(), e.clone(), e.clone()], &[Angle::ZERO; 3], 5.0).unwrap();
        assert!(d.ambiguous);
        assert!(matches!(
            disambiguate(&[], &[], 5.0),
            Err(AudioError::InsufficientEvidence(_))
        ));
    }

    #[test]
    fn rotation_rejects_the_mirror() {
        // Source at world bearing 40°, listener turns 0° -> 30° over 5 windows.
        let h = HeadModel::default();
        let headings: Vec<Angle> = (0..5).map(|i| Angle::from_degrees(7.5 * i as f64)).collect();
        let estimates: Vec<BearingEstimate> = headings
            .iter()
            .map(|hd| {
                let rel = Angle::from_degrees(40.0) - *hd;
                let w = FeatureWindow {
                    t_center_s: 0.0,
                    itd_s: Some(h.itd(rel)),
                    ild_db: Some(h.ild(rel)),
                    energy_db: -20.0,
                };
                bearing_candidates(&w, &h).unwrap()
            })
            .collect();
        let fv = circular_variance(estimates.iter().zip(&headings).map(|(e, h)| e.front() + *h));
        let bv = circular_variance(estimates.iter().zip(&headings).map(|(e, h)| e.back() + *h));
        assert!(fv < 1e-12 && bv > fv);
        let d = disambiguate(&estimates, &headings, 5.0).unwrap();
        assert!(d.coupled && !d.ambiguous);
        assert!((d.bearing.degrees() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn coupling_survives_crossing_the_interaural_axis() {
        // Source at world bearing 100°; the listener turns 0° -> 40°, so the
        // source moves from behind-right (100°) to front-right (60°).
        let h = HeadModel::default();
        let headings: Vec<Angle> = (0..9).map(|i| Angle::from_degrees(5.0 * i as f64)).collect();
        let estimates: Vec<BearingEstimate> = headings
            .iter()
            .map(|hd| {
                let rel = Angle::from_degrees(100.0) - *hd;
                let w = FeatureWindow {
                    t_center_s: 0.0,
                    itd_s: Some(h.itd(rel)),
                    ild_db: Some(h.ild(rel)),
                    energy_db: -20.0,
                };
                bearing_candidates(&w, &h).unwrap()
            })
            .collect();
        let d = disambiguate(&estimates, &headings, 5.0).unwrap();
        assert!(d.coupled);
        assert!((d.bearing.degrees() - 60.0).abs() < 1e-6, "{}", d.bearing.degrees());
    }

    #[test]
    fn rejects_bad_parameters() {
        let cfg = SynthConfig {
            sample_rate_hz: 4000,
            ..SynthConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SynthConfig {
            snr_db: Some(f64::NAN),
            ..SynthConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(StereoBuffer::new(16_000, 0.0, vec![0.0; 3], vec![0.0; 2]).is_err());
    }

    #[test]
    fn wav_export_writes_pcm() {
        let buf = render_static(10.0, 2.0, &SynthConfig::default());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.wav");
        buf.write_wav(&path).unwrap();
        let r = hound::WavReader::open(&path).unwrap();
        assert_eq!(r.spec().channels, 2);
        assert_eq!(r.len() as usize, 2 * buf.len());
    }
}
