//! Plan rendering through pluggable sound generators, plus a deterministic
//! synthesizer that stands in for neural text-to-audio models.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::control_signals::midi_to_hz;
use crate::error::{Error, Result};
use crate::http::{post_json, RetryPolicy};
use crate::media_io::{decode_wav, write_wav_with, AudioBuffer, ControlSignal, WavEncoding};
use crate::plans::{AnyPlan, PlanEntry, TrackType};

/// Peak level of rendered stems before gain staging.
pub const RENDER_PEAK: f32 = 0.9;

/// Allowed mismatch between requested and returned duration for external
/// generators.
pub const LENGTH_TOLERANCE_SEC: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderRequest {
    pub description: String,
    pub style: Option<String>,
    pub duration_sec: f64,
    #[serde(skip)]
    pub control: Option<ControlSignal>,
    #[serde(skip)]
    pub sample_rate_hz: u32,
    pub seed: u64,
}

impl RenderRequest {
    pub fn samples(&self) -> usize {
        sample_count(self.duration_sec, self.sample_rate_hz)
    }
}

pub fn sample_count(duration_sec: f64, sample_rate_hz: u32) -> usize {
    (duration_sec * sample_rate_hz as f64).round().max(0.0) as usize
}

/// Anything that can turn a text prompt into audio.
///
/// Implementations must return exactly `request.samples()` samples and be
/// deterministic for a fixed seed. Generators are shared across threads.
pub trait SoundGenerator: Send + Sync {
    fn name(&self) -> &str;
    fn render(&self, request: &RenderRequest) -> Result<AudioBuffer>;
}

/// Stable 64-bit digest of a sequence of strings.
fn digest(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

/// Seed for one plan entry, derived from the global seed and the entry id.
pub fn entry_seed(global: u64, id: &str) -> u64 {
    let d = digest(&[&global.to_le_bytes(), id.as_bytes()]);
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Parameters the mock synthesizer derives from the prompt.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Voicing {
    /// One-pole smoothing applied to the noise source; 0 is white.
    noise_color: f64,
    /// Share of the harmonic tone in the carrier, rest is noise.
    tone_mix: f64,
    base_midi: f64,
    tremolo_hz: f64,
    tremolo_depth: f64,
}

impl Voicing {
    fn from_prompt(description: &str, style: Option<&str>, seed: u64) -> Self {
        let d = digest(&[
            description.as_bytes(),
            style.unwrap_or("").as_bytes(),
            &seed.to_le_bytes(),
        ]);
        let unit = |i: usize| u16::from_le_bytes([d[2 * i], d[2 * i + 1]]) as f64 / u16::MAX as f64;
        Voicing {
            noise_color: 0.95 * unit(0),
            tone_mix: 0.2 + 0.6 * unit(1),
            base_midi: 45.0 + 30.0 * unit(2),
            tremolo_hz: 0.5 + 3.5 * unit(3),
            tremolo_depth: 0.6 * unit(4),
        }
    }
}

/// Linear interpolation of a control track at fractional frame `pos`.
fn interp(track: &[f32], pos: f64) -> f64 {
    let last = track.len() - 1;
    let pos = pos.clamp(0.0, last as f64);
    let lo = pos.floor() as usize;
    let (a, b) = (track[lo] as f64, track[(lo + 1).min(last)] as f64);
    a + (b - a) * (pos - lo as f64)
}

/// Pitch in Hz at `pos`, or `None` when unvoiced. Voicing follows the
/// nearest frame so that unvoiced sentinels are never blended into a pitch.
fn pitch_at(track: &[f32], pos: f64) -> Option<f64> {
    let last = (track.len() - 1) as f64;
    let pos = pos.clamp(0.0, last);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(track.len() - 1);
    let (a, b) = (track[lo] as f64, track[hi] as f64);
    let midi = if a > 0.0 && b > 0.0 {
        a + (b - a) * (pos - lo as f64)
    } else {
        track[pos.round() as usize] as f64
    };
    (midi > 0.0).then(|| midi_to_hz(midi))
}

fn harmonic(phase: f64) -> f64 {
    (1..=4).map(|k| (k as f64 * phase).sin() / k as f64).sum()
}

/// Deterministic stand-in for a text-to-audio model.
///
/// The prompt and seed pick a noise color, tone/noise balance, base pitch
/// and tremolo. With a control signal the loudness track sets the envelope,
/// the pitch track drives the oscillator (noise only when unvoiced) and the
/// centroid track sets a one-pole low-pass cutoff. Without control the
/// output peaks at [`RENDER_PEAK`]; with control the carrier is normalized
/// to that peak before the envelope is applied, so quiet control stays quiet.
pub fn mock_render(request: &RenderRequest) -> Result<AudioBuffer> {
    let sr = request.sample_rate_hz;
    if !request.duration_sec.is_finite() || request.duration_sec <= 0.0 {
        return Err(Error::Validation(format!(
            "render duration must be positive, got {}",
            request.duration_sec
        )));
    }
    if sr == 0 {
        return Err(Error::Validation("sample rate must be positive".into()));
    }
    let n = request.samples();
    let v = Voicing::from_prompt(&request.description, request.style.as_deref(), request.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
    let srf = sr as f64;
    let control = match &request.control {
        Some(c) if !c.is_empty() => {
            c.validate()?;
            Some(c)
        }
        _ => None,
    };

    let mut carrier = Vec::with_capacity(n);
    let mut envelope = Vec::with_capacity(n);
    let mut phase = 0.0f64;
    let mut colored = 0.0f64;
    let mut lowpassed = 0.0f64;
    let base_hz = midi_to_hz(v.base_midi);
    for i in 0..n {
        let white: f64 = rng.gen_range(-1.0..1.0);
        colored = v.noise_color * colored + (1.0 - v.noise_color) * white;
        let noise = colored / (1.0 - v.noise_color).sqrt().max(0.05);
        let t = i as f64 / srf;
        let sample = match control {
            Some(c) => {
                let pos = t * c.frames_per_second as f64;
                let raw = match pitch_at(&c.pitch_midi, pos) {
                    Some(f) => {
                        phase = (phase + 2.0 * PI * f / srf) % (2.0 * PI);
                        0.95 * harmonic(phase) + 0.05 * noise
                    }
                    None => noise,
                };
                let centroid = interp(&c.centroid_midi, pos);
                let cutoff = if centroid > 0.0 {
                    midi_to_hz(centroid).min(0.45 * srf)
                } else {
                    0.45 * srf
                };
                let a = 1.0 - (-2.0 * PI * cutoff / srf).exp();
                lowpassed += a * (raw - lowpassed);
                envelope.push(10f64.powf(interp(&c.loudness_db, pos) / 20.0));
                lowpassed
            }
            None => {
                phase = (phase + 2.0 * PI * base_hz / srf) % (2.0 * PI);
                envelope.push(1.0 - v.tremolo_depth * 0.5 * (1.0 - (2.0 * PI * v.tremolo_hz * t).cos()));
                v.tone_mix * harmonic(phase) + (1.0 - v.tone_mix) * noise
            }
        };
        carrier.push(sample);
    }

    let peak = carrier.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut out: Vec<f64> = if peak > 0.0 {
        carrier.iter().map(|x| x * RENDER_PEAK as f64 / peak).collect()
    } else {
        carrier
    };
    for (x, e) in out.iter_mut().zip(&envelope) {
        *x *= e;
    }
    if control.is_none() {
        let peak = out.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if peak > 0.0 {
            out.iter_mut().for_each(|x| *x *= RENDER_PEAK as f64 / peak);
        }
    }
    AudioBuffer::new(out.into_iter().map(|x| x as f32).collect(), sr)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockGenerator;

impl SoundGenerator for MockGenerator {
    fn name(&self) -> &str {
        "mock"
    }

    fn render(&self, request: &RenderRequest) -> Result<AudioBuffer> {
        mock_render(request)
    }
}

/// Generator behind an HTTP endpoint that accepts
/// `{description, style, duration_sec, seed}` and answers with WAV bytes.
#[derive(Debug, Clone)]
pub struct HttpGenerator {
    pub endpoint: String,
    pub retry: RetryPolicy,
}

impl HttpGenerator {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpGenerator {
            endpoint: endpoint.into(),
            retry: RetryPolicy::default(),
        }
    }
}

impl SoundGenerator for HttpGenerator {
    fn name(&self) -> &str {
        &self.endpoint
    }

    fn render(&self, request: &RenderRequest) -> Result<AudioBuffer> {
        external_render(&self.endpoint, request, &self.retry)
    }
}

pub fn external_render(endpoint: &str, request: &RenderRequest, retry: &RetryPolicy) -> Result<AudioBuffer> {
    let body = serde_json::to_value(request).expect("request serializes");
    let bytes = post_json(endpoint, &body, None, retry)?;
    let audio = decode_wav(&bytes).map_err(|e| Error::Contract(format!("{endpoint}: response is not WAV: {e}")))?;
    conform_length(audio, request, endpoint)
}

/// Checks a generator's output against the requested duration and trims or
/// zero-pads it to the exact sample count.
pub fn conform_length(audio: AudioBuffer, request: &RenderRequest, source: &str) -> Result<AudioBuffer> {
    if audio.sample_rate_hz() != request.sample_rate_hz {
        return Err(Error::Contract(format!(
            "{source}: returned {} Hz audio, expected {} Hz",
            audio.sample_rate_hz(),
            request.sample_rate_hz
        )));
    }
    let got = audio.duration_sec();
    if (got - request.duration_sec).abs() > LENGTH_TOLERANCE_SEC + 0.5 / request.sample_rate_hz as f64 {
        return Err(Error::Contract(format!(
            "{source}: returned {got:.3} s for a {:.3} s request",
            request.duration_sec
        )));
    }
    let want = request.samples();
    let sr = audio.sample_rate_hz();
    let mut samples = audio.into_samples();
    samples.resize(want, 0.0);
    AudioBuffer::new(samples, sr)
}

/// Generators keyed by the track type they serve.
#[derive(Clone, Default)]
pub struct GeneratorSet {
    generators: BTreeMap<TrackType, Arc<dyn SoundGenerator>>,
}

impl GeneratorSet {
    /// Every track type served by the mock synthesizer.
    pub fn mock() -> Self {
        let mock: Arc<dyn SoundGenerator> = Arc::new(MockGenerator);
        let mut set = GeneratorSet::default();
        for t in [TrackType::OnScreen, TrackType::Foley, TrackType::Voice, TrackType::Music] {
            set.insert(t, mock.clone());
        }
        set
    }

    pub fn insert(&mut self, track: TrackType, generator: Arc<dyn SoundGenerator>) {
        self.generators.insert(track, generator);
    }

    pub fn get(&self, track: TrackType) -> Result<&Arc<dyn SoundGenerator>> {
        self.generators
            .get(&track)
            .ok_or_else(|| Error::Config(format!("no generator configured for {track} tracks")))
    }
}

impl std::fmt::Debug for GeneratorSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_map()
            .entries(self.generators.iter().map(|(k, v)| (k, v.name())))
            .finish()
    }
}

/// One renderable entry pulled out of a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderJob {
    pub track: TrackType,
    pub id: String,
    pub request: RenderRequest,
}

impl RenderJob {
    /// Stem path `tracks/<type>_<id>.wav` relative to an output root.
    pub fn stem_path(&self, root: &Path) -> PathBuf {
        stem_path(root, self.track, &self.id)
    }
}

pub fn stem_path(root: &Path, track: TrackType, id: &str) -> PathBuf {
    root.join("tracks").join(format!("{}_{}.wav", track.file_stem(), id))
}

fn request(description: &str, style: Option<&str>, start: f64, end: f64, sr: u32, seed: u64, id: &str) -> RenderRequest {
    RenderRequest {
        description: description.to_string(),
        style: style.map(String::from),
        duration_sec: end - start,
        control: None,
        sample_rate_hz: sr,
        seed: entry_seed(seed, id),
    }
}

/// Turns a Foley, music or voice plan into render jobs. Fails on duplicate
/// ids, on entries outside the scene, and on mix plans.
pub fn plan_jobs(plan: &AnyPlan, scene_duration: f64, sample_rate_hz: u32, seed: u64) -> Result<Vec<RenderJob>> {
    let (track, entries): (TrackType, Vec<(&dyn PlanEntry, String, Option<String>)>) = match plan {
        AnyPlan::Foley(p) => (
            TrackType::Foley,
            p.scene.iter().map(|e| (e as &dyn PlanEntry, e.description.clone(), None)).collect(),
        ),
        AnyPlan::Music(p) => (
            TrackType::Music,
            p.scene
                .iter()
                .map(|e| (e as &dyn PlanEntry, e.description.clone(), Some(e.style.clone())))
                .collect(),
        ),
        AnyPlan::Voice(p) => (
            TrackType::Voice,
            p.scene
                .iter()
                .map(|e| {
                    let sex = serde_json::to_value(e.sex).ok().and_then(|v| v.as_str().map(String::from));
                    (e as &dyn PlanEntry, e.dialogue.clone(), sex)
                })
                .collect(),
        ),
        AnyPlan::Mix(_) => return Err(Error::Config("a mix plan has nothing to render".into())),
    };
    let mut seen = HashSet::new();
    for (e, _, _) in &entries {
        if !seen.insert(e.id()) {
            return Err(Error::Validation(format!("duplicate {track} entry id {:?}", e.id())));
        }
        if !(e.start() >= 0.0 && e.start() < e.end() && e.end() <= scene_duration + 1e-9) {
            return Err(Error::Validation(format!(
                "{track} entry {:?} spans {}..{} outside the {scene_duration} s scene",
                e.id(),
                e.start(),
                e.end()
            )));
        }
    }
    Ok(entries
        .into_iter()
        .map(|(e, text, style)| RenderJob {
            track,
            id: e.id().to_string(),
            request: request(&text, style.as_deref(), e.start(), e.end(), sample_rate_hz, seed, e.id()),
        })
        .collect())
}

/// Renders jobs concurrently. Each job gets its own result, so one failing
/// entry does not affect the rest.
pub fn render_jobs(jobs: &[RenderJob], generators: &GeneratorSet) -> BTreeMap<String, Result<AudioBuffer>> {
    jobs.par_iter()
        .map(|job| {
            let out = generators.get(job.track).and_then(|g| {
                let audio = g.render(&job.request)?;
                conform_exact(audio, &job.request, g.name())
            });
            (job.id.clone(), out)
        })
        .collect()
}

fn conform_exact(audio: AudioBuffer, request: &RenderRequest, name: &str) -> Result<AudioBuffer> {
    if audio.len() != request.samples() {
        return Err(Error::Contract(format!(
            "{name} returned {} samples, expected {}",
            audio.len(),
            request.samples()
        )));
    }
    if audio.samples().iter().any(|x| !x.is_finite()) {
        return Err(Error::Contract(format!("{name} returned non-finite samples")));
    }
    Ok(audio)
}

/// Renders every entry of a Foley, music or voice plan.
pub fn render_plan(
    plan: &AnyPlan,
    generators: &GeneratorSet,
    scene_duration: f64,
    sample_rate_hz: u32,
    seed: u64,
) -> Result<BTreeMap<String, Result<AudioBuffer>>> {
    let jobs = plan_jobs(plan, scene_duration, sample_rate_hz, seed)?;
    Ok(render_jobs(&jobs, generators))
}

/// Renders the on-screen track of a scene, conditioned on a control signal
/// extracted from (or predicted for) the picture.
pub fn render_on_screen(
    generator: &dyn SoundGenerator,
    description: &str,
    control: Option<&ControlSignal>,
    duration_sec: f64,
    sample_rate_hz: u32,
    seed: u64,
) -> Result<AudioBuffer> {
    let req = RenderRequest {
        description: description.to_string(),
        style: None,
        duration_sec,
        control: control.cloned(),
        sample_rate_hz,
        seed: entry_seed(seed, "on-screen"),
    };
    let audio = generator.render(&req)?;
    conform_exact(audio, &req, generator.name())
}

/// Writes a stem as 32-bit float WAV under `root/tracks/`.
pub fn write_stem(root: &Path, track: TrackType, id: &str, audio: &AudioBuffer) -> Result<PathBuf> {
    let path = stem_path(root, track, id);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_wav_with(audio, &path, WavEncoding::Float32)?;
    Ok(path)
}
