//! Command-line front end. Each subcommand is one inspectable stage;
//! `pipeline` chains them for every scene of a context file.

pub mod stages;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use reelwave_core::agents::{plot_to_scenes, ChatBackend, HttpBackend, MockBackend, SceneBundle, TemplateBackend};
use reelwave_core::control_signals::{extract_control_signal, PitchConfig, StftConfig};
use reelwave_core::error::ErrorClass;
use reelwave_core::media_io::{export_control_csv, read_control_signal, read_embeddings, read_wav, write_control_signal};
use reelwave_core::metrics::{
    av_align, default_hop, detect_onsets, energy_mae, onset_accuracy, onset_average_precision, OnsetSet,
    DEFAULT_AV_TOLERANCE_SEC, DEFAULT_ONSET_TOLERANCE_SEC, DEFAULT_THRESHOLD_RATIO,
};
use reelwave_core::scene_detect::{detect_scenes, SceneDetectConfig};
use reelwave_core::synthesis::GeneratorSet;
use reelwave_core::{Error, Result};
use serde::Deserialize;
use serde_json::{json, Value};

pub use stages::{ContextFile, PipelineConfig};

#[derive(Debug, Parser)]
#[command(name = "reelwave", version, about = "Plan, synthesize and mix sound for movie scenes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a frame-embedding sequence into scenes.
    Scenes {
        #[arg(long)]
        emb: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        tau: f64,
        #[arg(long, default_value_t = 8)]
        min_scene_frames: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Control-signal tools.
    Signals {
        #[command(subcommand)]
        command: SignalsCommand,
    },
    /// Run the planning agents and write one bundle per scene.
    Plan {
        /// Scene context JSON.
        #[arg(long, required_unless_present = "plot", conflicts_with = "plot")]
        context: Option<PathBuf>,
        /// Plain-text plot summary to break into scenes first.
        #[arg(long)]
        plot: Option<PathBuf>,
        /// Total duration shared by the scenes of a plot, in seconds.
        #[arg(long, requires = "plot")]
        duration: Option<f64>,
        #[command(flatten)]
        agents: AgentArgs,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Render every stem of a scene bundle.
    Synth {
        /// Scene bundle directory written by `plan`.
        #[arg(long)]
        plans: PathBuf,
        /// Control signal conditioning the on-screen track.
        #[arg(long)]
        signals: Option<PathBuf>,
        #[arg(long, default_value_t = stages::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = stages::DEFAULT_SAMPLE_RATE_HZ)]
        sample_rate: u32,
        /// Stems go to `<output>/tracks/`.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Mix the stems of a scene according to its mix plan.
    Mixdown {
        #[arg(long)]
        plans: PathBuf,
        /// Directory holding `tracks/` (the `synth` output).
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long, default_value_t = stages::DEFAULT_SAMPLE_RATE_HZ)]
        sample_rate: u32,
        /// Output WAV; a `mixdown.json` report is written next to it.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Score generated audio against a reference.
    Metrics {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long = "gen")]
        generated: PathBuf,
        /// Frame embeddings of the picture, for audio-visual alignment.
        #[arg(long)]
        emb: Option<PathBuf>,
        /// Reference onsets (JSON list of seconds) instead of detecting them.
        #[arg(long)]
        onsets: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Plan, render and mix every scene, then concatenate the mixes.
    Pipeline {
        #[arg(long)]
        context: PathBuf,
        #[command(flatten)]
        agents: AgentArgs,
        #[arg(long, default_value_t = stages::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = stages::DEFAULT_SAMPLE_RATE_HZ)]
        sample_rate: u32,
        /// Scenes processed concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum SignalsCommand {
    /// Extract loudness, pitch and centroid tracks from a WAV file.
    Extract {
        #[arg(long)]
        audio: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    /// Scripted replies, or the built-in planner when no script is given.
    Mock,
    /// OpenAI-compatible chat completions endpoint.
    Http,
}

#[derive(Debug, Clone, Args)]
pub struct AgentArgs {
    #[arg(long, value_enum, default_value_t = BackendKind::Mock)]
    pub backend: BackendKind,
    /// JSONL file of scripted replies for the mock backend.
    #[arg(long)]
    pub mock_script: Option<PathBuf>,
    #[arg(long, default_value_t = reelwave_core::agents::DEFAULT_MAX_ROUNDS)]
    pub max_rounds: usize,
}

impl AgentArgs {
    pub fn backend(&self) -> Result<Box<dyn ChatBackend>> {
        match (self.backend, &self.mock_script) {
            (BackendKind::Mock, Some(path)) => Ok(Box::new(MockBackend::load(path)?)),
            (BackendKind::Mock, None) => Ok(Box::new(TemplateBackend)),
            (BackendKind::Http, Some(_)) => Err(Error::Config("--mock-script requires --backend mock".into())),
            (BackendKind::Http, None) => Ok(Box::new(HttpBackend::from_env()?)),
        }
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err.class() {
        ErrorClass::Input => 2,
        ErrorClass::Config => 3,
        ErrorClass::Backend => 4,
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OnsetFile {
    Times(Vec<f64>),
    Set(OnsetSet),
}

fn read_onsets(path: &Path) -> Result<OnsetSet> {
    let parsed: OnsetFile = serde_json::from_str(&read_to_string(path)?)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    match parsed {
        OnsetFile::Times(t) => OnsetSet::new(t, None),
        OnsetFile::Set(s) => {
            s.validate()?;
            Ok(s)
        }
    }
}

const NEEDS_MODEL: &str = "unavailable: requires embedding model";

/// Computes the metrics report printed by `metrics`.
pub fn metrics_report(
    reference: &Path,
    generated: &Path,
    emb: Option<&Path>,
    onsets: Option<&Path>,
) -> Result<Value> {
    let r = read_wav(reference)?;
    let g = read_wav(generated)?;
    let hop = default_hop(g.sample_rate_hz());
    let pred = detect_onsets(&g, hop, DEFAULT_THRESHOLD_RATIO);
    let truth = match onsets {
        Some(p) => read_onsets(p)?,
        None => detect_onsets(&r, default_hop(r.sample_rate_hz()), DEFAULT_THRESHOLD_RATIO),
    };
    let or_note = |v: Result<f64>| match v {
        Ok(x) => json!(x),
        Err(e) => json!(format!("unavailable: {e}")),
    };
    let mae = if r.sample_rate_hz() == g.sample_rate_hz() {
        or_note(energy_mae(&r, &g, hop))
    } else {
        json!("unavailable: sample rates differ")
    };
    let align = match emb {
        Some(p) => or_note(av_align(&g, &read_embeddings(p)?, DEFAULT_AV_TOLERANCE_SEC)),
        None => json!("unavailable: no --emb given"),
    };
    Ok(json!({
        "onset_acc": onset_accuracy(&pred, &truth, DEFAULT_ONSET_TOLERANCE_SEC),
        "onset_ap": or_note(onset_average_precision(&pred, &truth, DEFAULT_ONSET_TOLERANCE_SEC)),
        "energy_mae": mae,
        "av_align": align,
        "reference_onsets": truth.len(),
        "generated_onsets": pred.len(),
        "fd": NEEDS_MODEL,
        "kl": NEEDS_MODEL,
        "clip_score": NEEDS_MODEL,
    }))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Scenes { emb, tau, min_scene_frames, output } => {
            let seq = read_embeddings(&emb)?;
            let cfg = SceneDetectConfig { tau, min_scene_frames };
            let boundary = detect_scenes(&seq, &cfg)?;
            stages::write_json(&output, &boundary.to_json(seq.frames_per_second()))
        }
        Command::Signals { command: SignalsCommand::Extract { audio, output, csv } } => {
            let buf = read_wav(&audio)?;
            let stft = StftConfig { sample_rate_hz: buf.sample_rate_hz(), ..StftConfig::default() };
            let sig = extract_control_signal(&buf, &stft, &PitchConfig::default())?;
            write_control_signal(&sig, &output)?;
            if let Some(csv) = csv {
                export_control_csv(&sig, &csv)?;
            }
            Ok(())
        }
        Command::Plan { context, plot, duration, agents, output } => {
            let backend = agents.backend()?;
            let scenes = match (context, plot) {
                (Some(path), _) => ContextFile::read(&path)?,
                (None, Some(path)) => {
                    let total = duration.ok_or_else(|| Error::Config("--plot needs --duration".into()))?;
                    let breakdown = plot_to_scenes(&read_to_string(&path)?, total, backend.as_ref(), agents.max_rounds)?;
                    fs::create_dir_all(&output).map_err(|e| Error::io(&output, e))?;
                    breakdown.transcript.write(output.join("plot_transcript.jsonl"))?;
                    let ctx = ContextFile { scenes: breakdown.scenes };
                    stages::write_json(&output.join("context.json"), &ctx)?;
                    ctx
                }
                (None, None) => unreachable!("clap requires --context or --plot"),
            };
            for (i, ctx) in scenes.scenes.iter().enumerate() {
                let id = stages::scene_id(i);
                stages::plan_scene(ctx, &id, backend.as_ref(), agents.max_rounds, &output.join(&id))?;
            }
            Ok(())
        }
        Command::Synth { plans, signals, seed, sample_rate, output } => {
            let bundle = SceneBundle::load(&plans)?;
            let signal = signals.map(read_control_signal).transpose()?;
            stages::synthesize(&bundle, signal.as_ref(), &GeneratorSet::mock(), sample_rate, seed, &output)?;
            Ok(())
        }
        Command::Mixdown { plans, tracks, sample_rate, output } => {
            let bundle = SceneBundle::load(&plans)?;
            let (audio, report) = stages::mixdown(&bundle, &tracks, sample_rate)?;
            stages::write_mixdown(&audio, &report, &output)
        }
        Command::Metrics { reference, generated, emb, onsets, output } => {
            let report = metrics_report(&reference, &generated, emb.as_deref(), onsets.as_deref())?;
            match output {
                Some(path) => stages::write_json(&path, &report),
                None => {
                    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
                    Ok(())
                }
            }
        }
        Command::Pipeline { context, agents, seed, sample_rate, jobs, output } => {
            let ctx = ContextFile::read(&context)?;
            let backend = agents.backend()?;
            let cfg = PipelineConfig {
                sample_rate_hz: sample_rate,
                stft: StftConfig { sample_rate_hz: sample_rate, ..StftConfig::default() },
                max_rounds: agents.max_rounds,
                seed,
                jobs: jobs.max(1),
                ..PipelineConfig::default()
            };
            stages::run_pipeline(&ctx, backend.as_ref(), &GeneratorSet::mock(), &cfg, &output)?;
            Ok(())
        }
    }
}
