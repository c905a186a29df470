//! Integrated loudness (K-weighted, gated), gain staging and timeline mixing.

use std::f64::consts::PI;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::media_io::AudioBuffer;
use crate::plans::{MixPlanEntry, PlanEntry, TrackType};
use crate::synthesis::sample_count;

const BLOCK_SEC: f64 = 0.4;
const BLOCK_OVERLAP: f64 = 0.75;
const ABSOLUTE_GATE: f64 = -70.0;
const RELATIVE_GATE: f64 = -10.0;
/// Tolerance for [`gain_to_target`], in LU.
pub const GAIN_TOLERANCE_LU: f64 = 0.5;
/// Peak ceiling of the final mix.
pub const MIX_PEAK_CEILING: f32 = 0.99;
pub const FADE_SEC: f64 = 0.005;

/// Result of a loudness measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Loudness {
    Lufs(f64),
    /// Every block fell below the absolute gate.
    Silent,
}

impl Loudness {
    pub fn lufs(self) -> Option<f64> {
        match self {
            Loudness::Lufs(v) => Some(v),
            Loudness::Silent => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    fn run(&self, x: &[f64]) -> Vec<f64> {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        x.iter()
            .map(|&x0| {
                let y0 = self.b[0] * x0 + self.b[1] * x1 + self.b[2] * x2 - self.a[0] * y1 - self.a[1] * y2;
                (x2, x1, y2, y1) = (x1, x0, y1, y0);
                y0
            })
            .collect()
    }
}

/// K-weighting stage 1: high shelf around 1.68 kHz, +4 dB.
fn shelf(sr: f64) -> Biquad {
    let g = 3.999_843_853_973_347;
    let q = 0.707_175_236_955_419_3;
    let fc = 1_681.974_450_955_531_9;
    let k = (PI * fc / sr).tan();
    let vh = 10f64.powf(g / 20.0);
    let vb = vh.powf(0.499_666_774_154_541_6);
    let a0 = 1.0 + k / q + k * k;
    Biquad {
        b: [(vh + vb * k / q + k * k) / a0, 2.0 * (k * k - vh) / a0, (vh - vb * k / q + k * k) / a0],
        a: [2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0],
    }
}

/// K-weighting stage 2: high pass around 38 Hz.
fn high_pass(sr: f64) -> Biquad {
    let q = 0.500_327_037_323_877_3;
    let fc = 38.135_470_876_139_82;
    let k = (PI * fc / sr).tan();
    let a0 = 1.0 + k / q + k * k;
    Biquad {
        b: [1.0, -2.0, 1.0],
        a: [2.0 * (k * k - 1.0) / a0, (1.0 - k / q + k * k) / a0],
    }
}

fn block_loudness(mean_square: f64) -> f64 {
    -0.691 + 10.0 * mean_square.log10()
}

/// Integrated loudness of a mono buffer.
///
/// Buffers shorter than one 400 ms block are measured over their full
/// length without gating.
pub fn measure_loudness_lufs(buffer: &AudioBuffer) -> Result<Loudness> {
    if buffer.is_empty() {
        return Err(Error::Validation("cannot measure loudness of an empty buffer".into()));
    }
    let sr = buffer.sample_rate_hz() as f64;
    let x: Vec<f64> = buffer.samples().iter().map(|&v| v as f64).collect();
    let y = high_pass(sr).run(&shelf(sr).run(&x));

    let block = (BLOCK_SEC * sr).round() as usize;
    if y.len() < block {
        let ms = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        return Ok(if ms > 0.0 {
            Loudness::Lufs(block_loudness(ms))
        } else {
            Loudness::Silent
        });
    }
    let step = ((1.0 - BLOCK_OVERLAP) * block as f64).round() as usize;
    let blocks: Vec<f64> = (0..=(y.len() - block) / step)
        .map(|j| y[j * step..j * step + block].iter().map(|v| v * v).sum::<f64>() / block as f64)
        .collect();

    let gated = |threshold: f64| -> Vec<f64> {
        blocks
            .iter()
            .copied()
            .filter(|&ms| ms > 0.0 && block_loudness(ms) > threshold)
            .collect()
    };
    let above_abs = gated(ABSOLUTE_GATE);
    if above_abs.is_empty() {
        return Ok(Loudness::Silent);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let relative = block_loudness(mean(&above_abs)) + RELATIVE_GATE;
    let kept = gated(ABSOLUTE_GATE.max(relative));
    Ok(Loudness::Lufs(block_loudness(mean(&kept))))
}

/// A buffer after gain staging.
#[derive(Debug, Clone, PartialEq)]
pub struct Staged {
    pub audio: AudioBuffer,
    pub gain_db: f64,
    pub measured: Loudness,
}

/// Scales `buffer` so its integrated loudness lands within
/// [`GAIN_TOLERANCE_LU`] of `target_lufs`. Silent input is returned as is.
pub fn gain_to_target(buffer: &AudioBuffer, target_lufs: f64) -> Result<Staged> {
    if target_lufs.is_nan() || target_lufs > 0.0 {
        return Err(Error::Config(format!("target loudness must be <= 0 LUFS, got {target_lufs}")));
    }
    let Loudness::Lufs(mut current) = measure_loudness_lufs(buffer)? else {
        warn!("silent track left unchanged (target {target_lufs} LUFS)");
        return Ok(Staged {
            audio: buffer.clone(),
            gain_db: 0.0,
            measured: Loudness::Silent,
        });
    };
    let mut gain_db = 0.0;
    let mut audio = buffer.clone();
    for _ in 0..3 {
        if (current - target_lufs).abs() <= GAIN_TOLERANCE_LU / 10.0 {
            break;
        }
        gain_db += target_lufs - current;
        audio = buffer.scaled(10f64.powf(gain_db / 20.0) as f32);
        match measure_loudness_lufs(&audio)? {
            Loudness::Lufs(v) => current = v,
            Loudness::Silent => break,
        }
    }
    let measured = measure_loudness_lufs(&audio)?;
    if let Loudness::Lufs(v) = measured {
        if (v - target_lufs).abs() > GAIN_TOLERANCE_LU {
            warn!("gain staging missed target: {v:.2} LUFS vs {target_lufs} LUFS");
        }
    }
    Ok(Staged { audio, gain_db, measured })
}

/// One track on the mix timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineTrack {
    pub entry: MixPlanEntry,
    pub audio: AudioBuffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub total_duration: f64,
    pub tracks: Vec<TimelineTrack>,
}

/// Per-track record written next to the final mix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackReport {
    #[serde(rename = "type")]
    pub track_type: TrackType,
    pub id: String,
    pub start_sec: f64,
    pub end_sec: f64,
    pub target_lufs: f64,
    pub applied_gain_db: f64,
    pub measured_lufs: Loudness,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixReport {
    pub sample_rate_hz: u32,
    pub total_duration_sec: f64,
    pub tracks: Vec<TrackReport>,
    /// Global gain applied to keep the mix peak at the ceiling, if any.
    pub peak_normalization_db: Option<f64>,
}

fn raised_cosine_fades(samples: &mut [f32], fade: usize) {
    let fade = fade.min(samples.len() / 2);
    for i in 0..fade {
        let g = (0.5 - 0.5 * (PI * (i as f64 + 0.5) / fade as f64).cos()) as f32;
        samples[i] *= g;
        let j = samples.len() - 1 - i;
        samples[j] *= g;
    }
}

/// Gain-stages each track to its planned volume (read as target LUFS),
/// places it at `round(start * sr)` with short fades and sums everything.
/// If the sum peaks above [`MIX_PEAK_CEILING`] one global gain brings it
/// back down.
pub fn mix(timeline: &Timeline, sample_rate_hz: u32) -> Result<(AudioBuffer, MixReport)> {
    let total = sample_count(timeline.total_duration, sample_rate_hz);
    for t in &timeline.tracks {
        let e = &t.entry;
        if t.audio.sample_rate_hz() != sample_rate_hz {
            return Err(Error::Validation(format!(
                "{} track {:?} is {} Hz, mix is {} Hz",
                e.track_type,
                e.id,
                t.audio.sample_rate_hz(),
                sample_rate_hz
            )));
        }
        if e.start() < 0.0 || e.end() > timeline.total_duration + 1e-9 || e.start() >= e.end() {
            return Err(Error::Validation(format!(
                "{} track {:?} spans {}..{} outside the {} s timeline",
                e.track_type,
                e.id,
                e.start(),
                e.end(),
                timeline.total_duration
            )));
        }
    }

    let staged: Vec<Staged> = timeline
        .tracks
        .par_iter()
        .map(|t| gain_to_target(&t.audio, t.entry.volume_db as f64))
        .collect::<Result<_>>()?;

    let fade = (FADE_SEC * sample_rate_hz as f64).round() as usize;
    let mut out = vec![0.0f32; total];
    // Float addition is not associative; summing in a fixed order keeps the
    // mix independent of the order tracks were listed in.
    let mut order: Vec<usize> = (0..staged.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&timeline.tracks[a].entry, &timeline.tracks[b].entry);
        (ea.track_type, &ea.id, ea.start().to_bits()).cmp(&(eb.track_type, &eb.id, eb.start().to_bits()))
    });
    for (t, s) in order.iter().map(|&i| (&timeline.tracks[i], &staged[i])) {
        let start = sample_count(t.entry.start(), sample_rate_hz);
        let span = sample_count(t.entry.end(), sample_rate_hz).min(total).saturating_sub(start);
        let mut stem: Vec<f32> = s.audio.samples().iter().take(span).copied().collect();
        raised_cosine_fades(&mut stem, fade);
        for (o, v) in out[start..start + stem.len()].iter_mut().zip(&stem) {
            *o += v;
        }
    }

    let reports = timeline
        .tracks
        .iter()
        .zip(&staged)
        .map(|(t, s)| TrackReport {
            track_type: t.entry.track_type,
            id: t.entry.id.clone(),
            start_sec: t.entry.start(),
            end_sec: t.entry.end(),
            target_lufs: t.entry.volume_db as f64,
            applied_gain_db: s.gain_db,
            measured_lufs: s.measured,
        })
        .collect();

    let peak = out.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    let mut normalization = None;
    if peak > MIX_PEAK_CEILING {
        let g = MIX_PEAK_CEILING / peak;
        out.iter_mut().for_each(|v| *v *= g);
        let db = 20.0 * (g as f64).log10();
        info!("mix peaked at {peak:.3}; applied {db:.2} dB global gain");
        normalization = Some(db);
    }
    assert!(out.iter().all(|v| v.is_finite()), "mix produced non-finite samples");
    let report = MixReport {
        sample_rate_hz,
        total_duration_sec: timeline.total_duration,
        tracks: reports,
        peak_normalization_db: normalization,
    };
    Ok((AudioBuffer::new(out, sample_rate_hz)?, report))
}
