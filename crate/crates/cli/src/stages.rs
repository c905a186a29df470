//! Pipeline stages shared by the subcommands and the end-to-end run.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use reelwave_core::agents::{
    run_scene_pipeline, ChatBackend, OnScreenSource, SceneBundle, SceneContext, DEFAULT_MAX_ROUNDS,
};
use reelwave_core::control_signals::{PitchConfig, StftConfig};
use reelwave_core::media_io::{read_wav, write_wav_with, WavEncoding};
use reelwave_core::mixer::{mix, MixReport, Timeline, TimelineTrack};
use reelwave_core::plans::{AnyPlan, PlanEntry, TrackType};
use reelwave_core::scene_detect::SceneDetectConfig;
use reelwave_core::synthesis::{entry_seed, render_on_screen, render_plan, sample_count, stem_path, write_stem, GeneratorSet};
use reelwave_core::{AudioBuffer, ControlSignal, Error, Result};
use serde::{Deserialize, Serialize};

pub const DEFAULT_SAMPLE_RATE_HZ: u32 = 16_000;
pub const DEFAULT_SEED: u64 = 42;

/// Settings for a full run. Each stage reads the parts it needs.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub sample_rate_hz: u32,
    pub stft: StftConfig,
    pub pitch: PitchConfig,
    pub scene: SceneDetectConfig,
    pub max_rounds: usize,
    pub seed: u64,
    /// Scenes rendered concurrently. Backends that depend on call order
    /// always run one scene at a time.
    pub jobs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            stft: StftConfig::default(),
            pitch: PitchConfig::default(),
            scene: SceneDetectConfig::default(),
            max_rounds: DEFAULT_MAX_ROUNDS,
            seed: DEFAULT_SEED,
            jobs: 1,
        }
    }
}

/// Scene descriptions standing in for the video-understanding model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextFile {
    pub scenes: Vec<SceneContext>,
}

impl ContextFile {
    pub fn read(path: &Path) -> Result<ContextFile> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ctx: ContextFile =
            serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        if ctx.scenes.is_empty() {
            return Err(Error::Validation(format!("{}: no scenes", path.display())));
        }
        for s in &ctx.scenes {
            s.validate()?;
        }
        Ok(ctx)
    }
}

pub fn scene_id(index: usize) -> String {
    format!("scene_{:02}", index + 1)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Plans one scene and writes its bundle. On a planning failure the
/// transcript that led to it is still written for inspection.
pub fn plan_scene(
    ctx: &SceneContext,
    id: &str,
    backend: &dyn ChatBackend,
    max_rounds: usize,
    out: &Path,
) -> Result<SceneBundle> {
    match run_scene_pipeline(ctx, id, backend, max_rounds, None) {
        Ok(bundle) => {
            bundle.write(out)?;
            Ok(bundle)
        }
        Err(Error::Planning { scene, message, transcript: Some(t) }) => {
            let path = out.join("transcripts").join(format!("{}.jsonl", t.role.id()));
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            t.write(&path)?;
            Err(Error::Planning { scene, message, transcript: Some(t) })
        }
        Err(e) => Err(e),
    }
}

fn fit_to(audio: &AudioBuffer, len: usize) -> Result<AudioBuffer> {
    let mut s = audio.samples().to_vec();
    s.resize(len, 0.0);
    AudioBuffer::new(s, audio.sample_rate_hz())
}

/// Renders every stem of a bundle under `out/tracks/`. The seed is mixed
/// with the scene id so scenes with identical plans still differ.
pub fn synthesize(
    bundle: &SceneBundle,
    signals: Option<&ControlSignal>,
    generators: &GeneratorSet,
    sample_rate_hz: u32,
    seed: u64,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let duration = bundle.context.scene_duration;
    let seed = entry_seed(seed, &bundle.scene_id);
    let mut written = Vec::new();
    let mut first_error = None;
    for plan in [
        AnyPlan::Foley(bundle.foley.clone()),
        AnyPlan::Music(bundle.music.clone()),
        AnyPlan::Voice(bundle.voice.clone()),
    ] {
        let track = match plan {
            AnyPlan::Foley(_) => TrackType::Foley,
            AnyPlan::Music(_) => TrackType::Music,
            _ => TrackType::Voice,
        };
        for (id, result) in render_plan(&plan, generators, duration, sample_rate_hz, seed)? {
            match result {
                Ok(audio) => written.push(write_stem(out, track, &id, &audio)?),
                Err(e) => {
                    warn!("{track} {id}: {e}");
                    first_error.get_or_insert(e);
                }
            }
        }
    }

    for track in &bundle.on_screen {
        let span = track.end_time.0 - track.start_time.0;
        let audio = match (track.source, &bundle.context.on_screen_voice_wav) {
            (OnScreenSource::LipSyncVoice, Some(path)) => {
                let speech = read_wav(path)?;
                if speech.sample_rate_hz() != sample_rate_hz {
                    return Err(Error::Validation(format!(
                        "{} is {} Hz, expected {sample_rate_hz} Hz",
                        path.display(),
                        speech.sample_rate_hz()
                    )));
                }
                fit_to(&speech, sample_count(span, sample_rate_hz))?
            }
            (source, _) => {
                if source == OnScreenSource::LipSyncVoice {
                    warn!("{}: no on-screen speech supplied, rendering a placeholder", bundle.scene_id);
                }
                let generator = generators.get(TrackType::OnScreen)?;
                render_on_screen(generator.as_ref(), &track.description, signals, span, sample_rate_hz, seed)?
            }
        };
        written.push(write_stem(out, TrackType::OnScreen, &track.id, &audio)?);
    }
    match first_error {
        Some(e) => Err(e),
        None => Ok(written),
    }
}

/// Loads the stems referenced by the mix plan and mixes them. Each stem is
/// trimmed or padded to its mix entry before gain staging.
pub fn mixdown(bundle: &SceneBundle, tracks_root: &Path, sample_rate_hz: u32) -> Result<(AudioBuffer, MixReport)> {
    let mut tracks = Vec::with_capacity(bundle.mix.scene.len());
    for entry in &bundle.mix.scene {
        let path = stem_path(tracks_root, entry.track_type, &entry.id);
        let audio = read_wav(&path)?;
        let span = sample_count(entry.end(), sample_rate_hz) - sample_count(entry.start(), sample_rate_hz);
        tracks.push(TimelineTrack {
            entry: entry.clone(),
            audio: fit_to(&audio, span)?,
        });
    }
    let timeline = Timeline {
        total_duration: bundle.context.scene_duration,
        tracks,
    };
    mix(&timeline, sample_rate_hz)
}

pub fn write_mixdown(audio: &AudioBuffer, report: &MixReport, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_wav_with(audio, path, WavEncoding::Float32)?;
    write_json(&path.with_file_name("mixdown.json"), report)
}

/// Plans, renders and mixes one scene inside `dir`.
fn run_one(
    ctx: &SceneContext,
    id: &str,
    backend: &dyn ChatBackend,
    generators: &GeneratorSet,
    cfg: &PipelineConfig,
    dir: &Path,
) -> Result<AudioBuffer> {
    let bundle = plan_scene(ctx, id, backend, cfg.max_rounds, dir)?;
    synthesize(&bundle, None, generators, cfg.sample_rate_hz, cfg.seed, dir)?;
    let (audio, report) = mixdown(&bundle, dir, cfg.sample_rate_hz)?;
    write_mixdown(&audio, &report, &dir.join("mix.wav"))?;
    info!("{id}: mixed {:.2} s", audio.duration_sec());
    Ok(audio)
}

/// Runs every scene and concatenates the scene mixes into `out/final.wav`.
pub fn run_pipeline(
    context: &ContextFile,
    backend: &dyn ChatBackend,
    generators: &GeneratorSet,
    cfg: &PipelineConfig,
    out: &Path,
) -> Result<AudioBuffer> {
    let scene = |i: usize| {
        let id = scene_id(i);
        run_one(&context.scenes[i], &id, backend, generators, cfg, &out.join(&id))
    };
    let mixes: Vec<AudioBuffer> = if backend.ordered() || cfg.jobs <= 1 {
        (0..context.scenes.len()).map(scene).collect::<Result<_>>()?
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.jobs)))?;
        pool.install(|| (0..context.scenes.len()).into_par_iter().map(scene).collect::<Result<_>>())?
    };
    let samples: Vec<f32> = mixes.iter().flat_map(|m| m.samples().iter().copied()).collect();
    let full = AudioBuffer::new(samples, cfg.sample_rate_hz)?;
    write_wav_with(&full, out.join("final.wav"), WavEncoding::Float32)?;
    Ok(full)
}
