//! Stratified evaluation: corpus files, prediction methods, accuracy
//! reports by visibility condition and difficulty, the audio ablation, and
//! report export.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::audio::{extract_features, render_scenario, AudioError, AudioFeatures, FeatureConfig, SynthConfig};
use crate::baselines::{baseline_allocentric, baseline_egocentric, seeded_guess};
use crate::engine::{infer_belief, EngineConfig};
use crate::evidence::{
    canonical_json, extract_oracle, EgoPoseSample, EvidenceError, EvidenceFrame, NoiseModel, OracleOptions,
};
use crate::geometry::{Direction, Scheme};
use crate::scene::{
    generate_scenarios, Difficulty, GenConstraints, LabeledScenario, SceneError, VisibilityCondition, World,
};
use crate::seeding::derive_seed;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("corpus integrity: {0}")]
    Integrity(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("invalid benchmark parameter: {0}")]
    Parameter(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of a value's canonical JSON.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let v = serde_json::to_value(value).expect("config serializes");
    sha256_hex(canonical_json(&v).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub seed: u64,
    pub per_condition: usize,
    pub scheme: Scheme,
    pub constraints: GenConstraints,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub items: Vec<LabeledScenario>,
}

impl Corpus {
    pub fn generate(config: CorpusConfig) -> Result<Corpus, BenchError> {
        let items = generate_scenarios(config.seed, config.per_condition, config.scheme, &config.constraints)?;
        Ok(Corpus { config, items })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config_hash: String,
    pub config: CorpusConfig,
    pub files: Vec<ManifestEntry>,
}

fn write_file(path: &Path, contents: &str) -> Result<(), BenchError> {
    fs::write(path, contents).map_err(io_err(path))
}

/// Writes `scenarios/<id>.json` per item plus `manifest.json`.
pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<Manifest, BenchError> {
    let sdir = dir.join("scenarios");
    fs::create_dir_all(&sdir).map_err(io_err(&sdir))?;
    let mut files = Vec::with_capacity(corpus.items.len());
    for item in &corpus.items {
        let text = canonical_json(&serde_json::to_value(item).expect("scenario serializes"));
        let name = format!("scenarios/{}.json", item.scenario.id);
        write_file(&dir.join(&name), &text)?;
        files.push(ManifestEntry {
            file: name,
            sha256: sha256_hex(text.as_bytes()),
        });
    }
    let manifest = Manifest {
        seed: corpus.config.seed,
        config_hash: config_hash(&corpus.config),
        config: corpus.config.clone(),
        files,
    };
    let text = canonical_json(&serde_json::to_value(&manifest).expect("manifest serializes"));
    write_file(&dir.join("manifest.json"), &text)?;
    Ok(manifest)
}

/// Loads a corpus, verifying every file against the manifest.
pub fn load_corpus(dir: &Path) -> Result<Corpus, BenchError> {
    let mpath = dir.join("manifest.json");
    let text = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| BenchError::Format {
        path: mpath.clone(),
        message: e.to_string(),
    })?;
    if config_hash(&manifest.config) != manifest.config_hash {
        return Err(BenchError::Integrity(
            "manifest config hash does not match its config".into(),
        ));
    }
    let items = manifest
        .files
        .iter()
        .map(|entry| {
            let path = dir.join(&entry.file);
            let bytes = fs::read(&path).map_err(io_err(&path))?;
            if sha256_hex(&bytes) != entry.sha256 {
                return Err(BenchError::Integrity(format!(
                    "{} does not match its manifest hash",
                    entry.file
                )));
            }
            let item: LabeledScenario = serde_json::from_slice(&bytes).map_err(|e| BenchError::Format {
                path: path.clone(),
                message: e.to_string(),
            })?;
            item.scenario.validate()?;
            Ok(item)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if items.is_empty() {
        return Err(BenchError::Integrity("corpus is empty".into()));
    }
    Ok(Corpus {
        config: manifest.config,
        items,
    })
}

/// How evidence is derived from each scenario before methods run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    pub seed: u64,
    pub noise: NoiseModel,
    pub oracle: OracleOptions,
    pub frame_fps: f64,
    /// Render and analyze B's sound for every scenario.
    pub audio: bool,
    pub synth: SynthConfig,
    pub features: FeatureConfig,
    pub spatial_fps: f64,
    pub engine: EngineConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            seed: 0,
            noise: NoiseModel::noiseless(),
            oracle: OracleOptions::default(),
            frame_fps: 10.0,
            audio: true,
            synth: SynthConfig {
                snr_db: Some(30.0),
                ..SynthConfig::default()
            },
            features: FeatureConfig::default(),
            spatial_fps: 10.0,
            engine: EngineConfig::default(),
        }
    }
}

/// A scenario with all evidence the methods may consult.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub labeled: LabeledScenario,
    pub frames: Vec<EvidenceFrame>,
    pub ego: Vec<EgoPoseSample>,
    pub features: Option<AudioFeatures>,
    pub world: World,
    pub query_t: f64,
}

impl EvalItem {
    pub fn condition(&self) -> VisibilityCondition {
        self.labeled.gold.condition
    }
}

pub fn prepare_item(labeled: &LabeledScenario, opts: &EvalOptions) -> Result<EvalItem, BenchError> {
    let s = &labeled.scenario;
    let (frames, ego) = extract_oracle(s, opts.frame_fps, &opts.noise, &opts.oracle)?;
    let features = if opts.audio {
        let synth = SynthConfig {
            seed: derive_seed(&[opts.seed, opts.synth.seed, s.seed]),
            ..opts.synth.clone()
        };
        let buffer = render_scenario(s, &synth)?;
        Some(extract_features(&buffer, opts.spatial_fps, &opts.features)?)
    } else {
        None
    };
    let query_t = s.query_time();
    Ok(EvalItem {
        labeled: labeled.clone(),
        frames,
        ego,
        features,
        world: s.world_at(query_t),
        query_t,
    })
}

pub fn prepare_items(items: &[LabeledScenario], opts: &EvalOptions) -> Result<Vec<EvalItem>, BenchError> {
    items.par_iter().map(|l| prepare_item(l, opts)).collect()
}

/// Anything that can answer the benchmark question for an item.
pub trait Method: Sync {
    fn name(&self) -> &str;
    fn predict(&self, item: &EvalItem) -> Result<Direction, String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Builtin {
    Pipeline,
    PipelineNoAudio,
    BaselineEgo,
    BaselineAllo,
    Oracle,
    Random,
}

impl Builtin {
    pub const ALL: [Builtin; 6] = [
        Builtin::Pipeline,
        Builtin::PipelineNoAudio,
        Builtin::BaselineEgo,
        Builtin::BaselineAllo,
        Builtin::Oracle,
        Builtin::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Pipeline => "pipeline",
            Builtin::PipelineNoAudio => "pipeline-no-audio",
            Builtin::BaselineEgo => "baseline-ego",
            Builtin::BaselineAllo => "baseline-allo",
            Builtin::Oracle => "oracle",
            Builtin::Random => "random",
        }
    }
}

impl std::str::FromStr for Builtin {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// The nearest offered option by sector center; ties go to the earlier
/// option.
pub fn snap_to_options(d: Direction, options: &[Direction]) -> Direction {
    if options.is_empty() || options.contains(&d) {
        return d;
    }
    let mut best = options[0];
    for o in &options[1..] {
        if o.center().distance(d.center()) < best.center().distance(d.center()) {
            best = *o;
        }
    }
    best
}

pub struct BuiltinMethod {
    pub kind: Builtin,
    pub engine: EngineConfig,
    pub seed: u64,
}

impl Method for BuiltinMethod {
    fn name(&self) -> &str {
        self.kind.name()
    }

    fn predict(&self, item: &EvalItem) -> Result<Direction, String> {
        let scheme = self.engine.scheme;
        let item_seed = derive_seed(&[self.seed, item.labeled.scenario.seed]);
        match self.kind {
            Builtin::Pipeline | Builtin::PipelineNoAudio => {
                let features = match self.kind {
                    Builtin::Pipeline => item.features.as_ref(),
                    _ => None,
                };
                let p = infer_belief(&item.frames, features, &item.ego, item.query_t, &self.engine)
                    .map_err(|e| e.to_string())?;
                Ok(snap_to_options(p.belief_direction, &item.labeled.gold.options))
            }
            Builtin::BaselineEgo => {
                Ok(baseline_egocentric(&item.frames, item.query_t, scheme, item_seed).belief_direction)
            }
            Builtin::BaselineAllo => Ok(baseline_allocentric(&item.world, scheme).belief_direction),
            Builtin::Oracle => Ok(item.labeled.gold.direction),
            Builtin::Random => Ok(seeded_guess(scheme, item_seed)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Cell {
    pub correct: usize,
    pub total: usize,
    /// `None` for an empty stratum.
    pub accuracy: Option<f64>,
}

impl Cell {
    fn from_counts(correct: usize, total: usize) -> Cell {
        Cell {
            correct,
            total,
            accuracy: (total > 0).then(|| correct as f64 / total as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub overall: Cell,
    /// Keyed by visibility condition name.
    pub conditions: BTreeMap<String, Cell>,
    /// Keyed by `simple` / `hard`.
    pub difficulty: BTreeMap<String, Cell>,
    /// Items where the method failed; scored incorrect.
    pub failures: usize,
}

impl MethodReport {
    pub fn condition(&self, c: VisibilityCondition) -> Cell {
        self.conditions.get(c.name()).copied().unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub corpus: CorpusConfig,
    pub corpus_config_hash: String,
    pub options: EvalOptions,
    /// Hash of the corpus config hash and the evaluation options together.
    pub config_hash: String,
    pub item_count: usize,
    pub methods: Vec<MethodReport>,
    /// With-audio minus without-audio pipeline accuracy per condition.
    pub audio_ablation: Option<BTreeMap<String, Option<f64>>>,
}

impl Report {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }
}

fn difficulty_key(d: Difficulty) -> &'static str {
    match d {
        Difficulty::Simple => "simple",
        Difficulty::Hard => "hard",
    }
}

/// Scores one method over all items by exact match against gold.
pub fn score(method: &dyn Method, items: &[EvalItem]) -> MethodReport {
    let outcomes: Vec<(VisibilityCondition, Difficulty, bool, bool)> = items
        .par_iter()
        .map(|item| {
            let gold = &item.labeled.gold;
            match method.predict(item) {
                Ok(d) => (gold.condition, gold.difficulty, d == gold.direction, false),
                Err(e) => {
                    log::warn!("{} failed on {}: {e}", method.name(), item.labeled.scenario.id);
                    (gold.condition, gold.difficulty, false, true)
                }
            }
        })
        .collect();
    let mut cond: BTreeMap<String, (usize, usize)> = VisibilityCondition::ALL
        .iter()
        .map(|c| (c.name().to_string(), (0, 0)))
        .collect();
    let mut diff: BTreeMap<String, (usize, usize)> =
        [("simple".to_string(), (0, 0)), ("hard".to_string(), (0, 0))].into();
    let (mut correct, mut failures) = (0, 0);
    for (c, d, ok, failed) in &outcomes {
        let e = cond.get_mut(c.name()).expect("all conditions present");
        e.0 += usize::from(*ok);
        e.1 += 1;
        let e = diff.get_mut(difficulty_key(*d)).expect("both difficulties present");
        e.0 += usize::from(*ok);
        e.1 += 1;
        correct += usize::from(*ok);
        failures += usize::from(*failed);
    }
    let cells =
        |m: BTreeMap<String, (usize, usize)>| m.into_iter().map(|(k, (c, t))| (k, Cell::from_counts(c, t))).collect();
    MethodReport {
        method: method.name().to_string(),
        overall: Cell::from_counts(correct, outcomes.len()),
        conditions: cells(cond),
        difficulty: cells(diff),
        failures,
    }
}

/// Per-condition accuracy of `with` minus `without`; `None` where either
/// stratum is empty.
pub fn ablation_deltas(with: &MethodReport, without: &MethodReport) -> BTreeMap<String, Option<f64>> {
    VisibilityCondition::ALL
        .iter()
        .map(|c| {
            let d = match (with.condition(*c).accuracy, without.condition(*c).accuracy) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            };
            (c.name().to_string(), d)
        })
        .collect()
}

/// Pipeline accuracy with audio features supplied minus withheld.
pub fn ablate_audio(items: &[EvalItem], engine: &EngineConfig, seed: u64) -> BTreeMap<String, Option<f64>> {
    let arm = |kind| BuiltinMethod {
        kind,
        engine: *engine,
        seed,
    };
    ablation_deltas(
        &score(&arm(Builtin::Pipeline), items),
        &score(&arm(Builtin::PipelineNoAudio), items),
    )
}

/// Scores every method and, when both pipeline arms are present, records the
/// audio ablation.
pub fn evaluate(
    methods: &[&dyn Method],
    items: &[EvalItem],
    corpus: &CorpusConfig,
    options: &EvalOptions,
) -> Result<Report, BenchError> {
    if items.is_empty() {
        return Err(BenchError::Parameter("corpus is empty".into()));
    }
    let reports: Vec<MethodReport> = methods.iter().map(|m| score(*m, items)).collect();
    let find = |name: &str| reports.iter().find(|r| r.method == name);
    let audio_ablation = match (find(Builtin::Pipeline.name()), find(Builtin::PipelineNoAudio.name())) {
        (Some(w), Some(wo)) => Some(ablation_deltas(w, wo)),
        _ => None,
    };
    let corpus_config_hash = config_hash(corpus);
    Ok(Report {
        corpus: corpus.clone(),
        config_hash: config_hash(&(&corpus_config_hash, options)),
        corpus_config_hash,
        options: options.clone(),
        item_count: items.len(),
        methods: reports,
        audio_ablation,
    })
}

/// Prepares evidence and evaluates the chosen built-in methods.
pub fn run_benchmark(corpus: &Corpus, methods: &[Builtin], options: &EvalOptions) -> Result<Report, BenchError> {
    let mut options = options.clone();
    options.engine.scheme = corpus.config.scheme;
    options
        .engine
        .validate()
        .map_err(|e| BenchError::Parameter(e.to_string()))?;
    let items = prepare_items(&corpus.items, &options)?;
    let built: Vec<BuiltinMethod> = methods
        .iter()
        .map(|&kind| BuiltinMethod {
            kind,
            engine: options.engine,
            seed: options.seed,
        })
        .collect();
    let dyns: Vec<&dyn Method> = built.iter().map(|m| m as &dyn Method).collect();
    evaluate(&dyns, &items, &corpus.config, &options)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExportFormat {
    Json,
    Csv,
    RadarCsv,
}

impl ExportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ExportFormat::Json => "report.json",
            ExportFormat::Csv => "report.csv",
            ExportFormat::RadarCsv => "radar.csv",
        }
    }
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            "radar-csv" => Ok(ExportFormat::RadarCsv),
            other => Err(format!(
                "unknown export format {other:?}; expected json, csv or radar-csv"
            )),
        }
    }
}

/// Radar columns: the four visibility conditions, then the two difficulties.
pub const RADAR_COLUMNS: [&str; 6] = [
    "MutuallyVisible",
    "AOnlySeeB",
    "BOnlySeeA",
    "MutuallyInvisible",
    "Simple",
    "Hard",
];

fn fmt_acc(a: Option<f64>) -> String {
    a.map(|v| format!("{v:.6}")).unwrap_or_default()
}

pub fn render_report(report: &Report, format: ExportFormat) -> String {
    match format {
        ExportFormat::Json => canonical_json(&serde_json::to_value(report).expect("report serializes")),
        ExportFormat::Csv => {
            let mut out = String::from("method,stratum,correct,total,accuracy\n");
            for m in &report.methods {
                let mut row = |name: &str, c: &Cell| {
                    out.push_str(&format!(
                        "{},{name},{},{},{}\n",
                        m.method,
                        c.correct,
                        c.total,
                        fmt_acc(c.accuracy)
                    ));
                };
                row("overall", &m.overall);
                for c in VisibilityCondition::ALL {
                    row(c.name(), &m.condition(c));
                }
                for d in ["simple", "hard"] {
                    row(d, &m.difficulty.get(d).copied().unwrap_or_default());
                }
            }
            out
        }
        ExportFormat::RadarCsv => {
            let mut out = format!("method,{}\n", RADAR_COLUMNS.join(","));
            for m in &report.methods {
                let mut cols: Vec<String> = VisibilityCondition::ALL
                    .iter()
                    .map(|c| fmt_acc(m.condition(*c).accuracy))
                    .collect();
                for d in ["simple", "hard"] {
                    cols.push(fmt_acc(m.difficulty.get(d).and_then(|c| c.accuracy)));
                }
                out.push_str(&format!("{},{}\n", m.method, cols.join(",")));
            }
            out
        }
    }
}

pub fn export_report(report: &Report, format: ExportFormat, dir: &Path) -> Result<PathBuf, BenchError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(format.file_name());
    write_file(&path, &render_report(report, format))?;
    Ok(path)
}

pub fn load_report(path: &Path) -> Result<Report, BenchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| BenchError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
