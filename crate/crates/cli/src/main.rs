//! `sightline`: generate corpora, derive evidence, run the belief engine on
//! clip documents, and evaluate methods.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::Value;

use sightline_core::audio::{render_scenario, SynthConfig};
use sightline_core::bench::{
    export_report, load_corpus, load_report, prepare_item, render_report, run_benchmark, write_corpus, BenchError,
    Builtin, Corpus, CorpusConfig, EvalOptions, ExportFormat,
};
use sightline_core::engine::{EngineConfig, EngineError};
use sightline_core::evidence::{canonical_json, emit_keyframes, EvidenceError, NoiseModel, SchemaError};
use sightline_core::geometry::Scheme;
use sightline_core::scene::{GenConstraints, LabeledScenario, SceneError};
use sightline_core::seeding::derive_seed;
use sightline_core::stage2::{emit_answer, infer_clip, ingest_clip, ClipDocument};

const EXIT_CODES: &str = "Exit codes:
  0  success
  1  invalid arguments or parameters
  2  schema or integrity violation in an input document or corpus
  3  infeasible: generation failed or the evidence supports no answer
  4  i/o error";

#[derive(Parser)]
#[command(name = "sightline", version, about = "Second-order perspective taking for two embodied agents", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    #[value(name = "quadrant-4")]
    Quadrant4,
    #[value(name = "octant-8")]
    Octant8,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Scheme {
        match s {
            SchemeArg::Quadrant4 => Scheme::Quadrant4,
            SchemeArg::Octant8 => Scheme::Octant8,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    RadarCsv,
}

impl From<FormatArg> for ExportFormat {
    fn from(f: FormatArg) -> ExportFormat {
        match f {
            FormatArg::Json => ExportFormat::Json,
            FormatArg::Csv => ExportFormat::Csv,
            FormatArg::RadarCsv => ExportFormat::RadarCsv,
        }
    }
}

/// How evidence is derived from corpus scenarios.
#[derive(clap::Args)]
struct EvidenceArgs {
    /// Seed for audio rendering and method randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Probability that a visible head label is replaced by an adjacent one.
    #[arg(long, default_value_t = 0.0)]
    flip_rate: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Signal-to-noise ratio of rendered audio in dB.
    #[arg(long, default_value_t = 30.0)]
    snr: f64,
}

impl EvidenceArgs {
    fn options(&self, audio: bool) -> EvalOptions {
        let defaults = EvalOptions::default();
        EvalOptions {
            seed: self.seed,
            noise: if self.flip_rate > 0.0 {
                NoiseModel::with_flip_rate(self.flip_rate, self.noise_seed)
            } else {
                NoiseModel::noiseless()
            },
            audio,
            synth: SynthConfig {
                snr_db: Some(self.snr),
                ..defaults.synth.clone()
            },
            ..defaults
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stratified corpus with a hashed manifest.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        per_condition: usize,
        #[arg(long, value_enum, default_value = "quadrant-4")]
        scheme: SchemeArg,
        #[arg(long, env = "SIGHTLINE_OUT_DIR", default_value = "sightline-out")]
        out: PathBuf,
    },
    /// Render what A hears of B in one scenario as a 16-bit stereo WAV.
    RenderAudio {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        id: String,
        #[command(flatten)]
        evidence: EvidenceArgs,
        #[arg(long, env = "SIGHTLINE_OUT_DIR", default_value = "sightline-out")]
        out: PathBuf,
    },
    /// Print the oracle key frames for one scenario, or with `--clip` the
    /// full clip document the engine consumes.
    Stage1 {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        id: String,
        #[command(flatten)]
        evidence: EvidenceArgs,
        #[arg(long)]
        clip: bool,
        /// Leave audio features out of the clip document.
        #[arg(long)]
        no_audio: bool,
        /// Write here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Answer where B believes A is for one clip document. Prints exactly
    /// `{"belief_direction": "<label>"}`.
    Infer {
        input: PathBuf,
        #[arg(long, value_enum, default_value = "quadrant-4")]
        scheme: SchemeArg,
        /// Ignore the document's audio features.
        #[arg(long)]
        no_audio: bool,
        /// Write pathway, confidence and rule trace to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Score methods on a corpus; writes report.json and radar.csv.
    Eval {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "pipeline,pipeline-no-audio,baseline-ego,baseline-allo"
        )]
        methods: Vec<Builtin>,
        #[command(flatten)]
        evidence: EvidenceArgs,
        /// Skip audio rendering; audio-dependent arms then see no audio.
        #[arg(long)]
        no_audio: bool,
        #[arg(long, env = "SIGHTLINE_OUT_DIR", default_value = "sightline-out")]
        out: PathBuf,
    },
    /// Re-render a saved report in another format.
    Export {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum)]
        format: FormatArg,
        #[arg(long, env = "SIGHTLINE_OUT_DIR", default_value = "sightline-out")]
        out: PathBuf,
    },
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::new(4, format!("{}: {e}", path.display()))
    }
}

impl From<SchemaError> for Failure {
    fn from(e: SchemaError) -> Self {
        Failure::new(2, e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let code = match e {
            EngineError::Parameter(_) => 1,
            _ => 3,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        let code = match &e {
            BenchError::Io { .. } => 4,
            BenchError::Format { .. } | BenchError::Integrity(_) => 2,
            BenchError::Scene(SceneError::Infeasible { .. }) => 3,
            BenchError::Scene(SceneError::Invalid(_)) => 2,
            BenchError::Evidence(EvidenceError::Schema(_)) => 2,
            _ => 1,
        };
        Failure::new(code, e.to_string())
    }
}

fn find<'a>(corpus: &'a Corpus, id: &str) -> Result<&'a LabeledScenario, Failure> {
    corpus
        .items
        .iter()
        .find(|l| l.scenario.id == id)
        .ok_or_else(|| Failure::new(1, format!("no scenario {id:?} in corpus")))
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Gen {
            seed,
            per_condition,
            scheme,
            out,
        } => {
            if per_condition == 0 {
                return Err(Failure::new(1, "--per-condition must be positive"));
            }
            let corpus = Corpus::generate(CorpusConfig {
                seed,
                per_condition,
                scheme: scheme.into(),
                constraints: GenConstraints::default(),
            })?;
            let manifest = write_corpus(&out, &corpus)?;
            println!(
                "wrote {} scenarios to {} ({})",
                manifest.files.len(),
                out.display(),
                manifest.config_hash
            );
        }
        Command::RenderAudio {
            corpus,
            id,
            evidence,
            out,
        } => {
            let corpus = load_corpus(&corpus)?;
            let item = find(&corpus, &id)?;
            let opts = evidence.options(true);
            let synth = SynthConfig {
                seed: derive_seed(&[opts.seed, opts.synth.seed, item.scenario.seed]),
                ..opts.synth
            };
            let buffer = render_scenario(&item.scenario, &synth).map_err(|e| Failure::new(1, e.to_string()))?;
            fs::create_dir_all(&out).map_err(|e| Failure::io(&out, e))?;
            let path = out.join(format!("{id}.wav"));
            buffer.write_wav(&path).map_err(|e| Failure::new(4, e.to_string()))?;
            println!("{}", path.display());
        }
        Command::Stage1 {
            corpus,
            id,
            evidence,
            clip,
            no_audio,
            output,
        } => {
            let corpus = load_corpus(&corpus)?;
            let item = find(&corpus, &id)?;
            let prepared = prepare_item(item, &evidence.options(clip && !no_audio))?;
            let doc = if clip {
                let d = ClipDocument::from_evidence(
                    &prepared.frames,
                    &prepared.ego,
                    prepared.features.as_ref(),
                    0.0,
                    prepared.query_t,
                    true,
                )?;
                sightline_core::stage2::emit_clip(&d)
            } else {
                emit_keyframes(&prepared.frames)
            };
            let text = canonical_json(&doc);
            match output {
                Some(p) => write(&p, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Infer {
            input,
            scheme,
            no_audio,
            trace,
        } => {
            let text = fs::read_to_string(&input).map_err(|e| Failure::io(&input, e))?;
            let value: Value =
                serde_json::from_str(&text).map_err(|e| Failure::new(2, format!("{}: {e}", input.display())))?;
            let doc = ingest_clip(&value)?;
            let cfg = EngineConfig {
                scheme: scheme.into(),
                ..EngineConfig::default()
            };
            let prediction = infer_clip(&doc, &cfg, !no_audio)?;
            if let Some(path) = trace {
                let v = serde_json::to_value(&prediction).expect("prediction serializes");
                write(&path, &canonical_json(&v))?;
            }
            println!("{}", emit_answer(prediction.belief_direction));
        }
        Command::Eval {
            corpus,
            methods,
            evidence,
            no_audio,
            out,
        } => {
            if methods.is_empty() {
                return Err(Failure::new(1, "--methods is empty"));
            }
            let corpus = load_corpus(&corpus)?;
            let report = run_benchmark(&corpus, &methods, &evidence.options(!no_audio))?;
            for format in [ExportFormat::Json, ExportFormat::RadarCsv] {
                export_report(&report, format, &out)?;
            }
            print!("{}", render_report(&report, ExportFormat::Csv));
        }
        Command::Export { report, format, out } => {
            let report = load_report(&report)?;
            let path = export_report(&report, format.into(), &out)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
