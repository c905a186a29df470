//! Loudness, pitch and timbre (spectral centroid) tracks extracted from audio,
//! and the filtering/resampling used to turn them into training targets.

mod pitch;
mod stft;
mod target;

pub use pitch::{hz_to_midi, midi_to_hz, PitchConfig, PitchEstimator, PitchFrame, Yin};
pub use stft::{frame_count, stft_magnitude, Spectrogram, StftConfig, Window};
pub use target::{median_filter, mse, prepare_target, resize_linear};

use crate::error::{Error, Result};
use crate::media_io::{AudioBuffer, ControlSignal, LOUDNESS_FLOOR_DB};

const LOG_EPSILON: f64 = 1e-10;
const SILENT_MAGNITUDE: f64 = 1e-8;
const CENTROID_FLOOR_HZ: f64 = 8.18;

/// Frequency weighting applied to bin magnitudes before the RMS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoudnessWeighting {
    #[default]
    A,
    Flat,
}

/// IEC 61672 A-weighting as a linear amplitude gain (1.0 at 1 kHz).
pub fn a_weighting_gain(f: f64) -> f64 {
    if f <= 0.0 {
        return 0.0;
    }
    let f2 = f * f;
    let c1 = 20.598_997f64.powi(2);
    let c2 = 107.652_65f64.powi(2);
    let c3 = 737.862_23f64.powi(2);
    let c4 = 12_194.217f64.powi(2);
    let ra = c4 * f2 * f2 / ((f2 + c1) * ((f2 + c2) * (f2 + c3)).sqrt() * (f2 + c4));
    ra * 10f64.powf(2.0 / 20.0)
}

fn weights(spec: &Spectrogram, weighting: LoudnessWeighting) -> Vec<f64> {
    spec.bin_hz
        .iter()
        .map(|&f| match weighting {
            LoudnessWeighting::A => a_weighting_gain(f),
            LoudnessWeighting::Flat => 1.0,
        })
        .collect()
}

/// Bin-RMS of a full-scale sine under this analysis; maps such a sine to 0 dB.
fn full_scale_reference(spec: &Spectrogram) -> f64 {
    (spec.n_fft as f64 * spec.window_power / (4.0 * spec.num_bins() as f64)).sqrt()
}

/// Per-frame loudness in dB before clamping to [-80, 0].
pub fn loudness_db_unclamped(audio: &AudioBuffer, cfg: &StftConfig, weighting: LoudnessWeighting) -> Result<Vec<f64>> {
    let spec = stft_magnitude(audio, cfg)?;
    let w = weights(&spec, weighting);
    let reference = full_scale_reference(&spec);
    let bins = spec.num_bins() as f64;
    Ok(spec
        .frames
        .iter()
        .map(|frame| {
            let power: f64 = frame.iter().zip(&w).map(|(m, g)| (m * g).powi(2)).sum();
            let rms = (power / bins).sqrt() / reference;
            20.0 * (rms + LOG_EPSILON).log10()
        })
        .collect())
}

/// A-weighted RMS loudness per frame, clamped to [-80, 0] dB.
pub fn extract_loudness(audio: &AudioBuffer, cfg: &StftConfig) -> Result<Vec<f64>> {
    Ok(loudness_db_unclamped(audio, cfg, LoudnessWeighting::A)?
        .into_iter()
        .map(|db| db.clamp(LOUDNESS_FLOOR_DB as f64, 0.0))
        .collect())
}

pub fn extract_pitch(audio: &AudioBuffer, cfg: &PitchConfig) -> Result<Vec<f64>> {
    Yin::new(*cfg).estimate(audio)
}

/// Per-frame spectral centroid in Hz, `None` for silent frames.
pub fn centroid_hz(audio: &AudioBuffer, cfg: &StftConfig) -> Result<Vec<Option<f64>>> {
    let spec = stft_magnitude(audio, cfg)?;
    Ok(spec
        .frames
        .iter()
        .map(|frame| {
            let total: f64 = frame.iter().sum();
            if total < SILENT_MAGNITUDE {
                return None;
            }
            let weighted: f64 = frame.iter().zip(&spec.bin_hz).map(|(m, f)| m * f).sum();
            Some(weighted / total)
        })
        .collect())
}

pub fn centroid_to_midi(hz: f64) -> f64 {
    hz_to_midi(hz.max(CENTROID_FLOOR_HZ)).clamp(12.0, 135.0)
}

pub fn extract_centroid(audio: &AudioBuffer, cfg: &StftConfig) -> Result<Vec<f64>> {
    Ok(centroid_hz(audio, cfg)?
        .into_iter()
        .map(|c| c.map_or(0.0, centroid_to_midi))
        .collect())
}

/// Runs all three extractors on a shared hop and stacks them.
pub fn extract_control_signal(
    audio: &AudioBuffer,
    stft_cfg: &StftConfig,
    pitch_cfg: &PitchConfig,
) -> Result<ControlSignal> {
    if pitch_cfg.frame_hop != stft_cfg.hop {
        return Err(Error::Config(format!(
            "pitch hop {} must equal stft hop {}",
            pitch_cfg.frame_hop, stft_cfg.hop
        )));
    }
    if audio.sample_rate_hz() != stft_cfg.sample_rate_hz {
        return Err(Error::Config(format!(
            "audio is {} Hz but analysis is configured for {} Hz",
            audio.sample_rate_hz(),
            stft_cfg.sample_rate_hz
        )));
    }
    let loudness = extract_loudness(audio, stft_cfg)?;
    let pitch = extract_pitch(audio, pitch_cfg)?;
    let centroid = extract_centroid(audio, stft_cfg)?;
    debug_assert_eq!(loudness.len(), pitch.len());
    let to_f32 = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect();
    ControlSignal::new(
        to_f32(loudness),
        to_f32(pitch),
        to_f32(centroid),
        stft_cfg.frames_per_second() as f32,
    )
}
