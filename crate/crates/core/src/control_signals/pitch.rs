//! YIN fundamental-frequency estimation.
//!
//! The per-frame confidence is `1 - min(CMNDF)` over the admissible lag range;
//! frames whose confidence falls below the configured threshold are reported
//! as unvoiced (MIDI 0).

use serde::{Deserialize, Serialize};

use super::stft::{centered_frame, frame_count};
use crate::error::{Error, Result};
use crate::media_io::AudioBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchConfig {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub confidence_threshold: f64,
    pub frame_hop: usize,
    /// Samples summed by the difference function at each lag.
    pub integration_window: usize,
    /// CMNDF level below which the first dip is taken as the period.
    pub yin_threshold: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        PitchConfig {
            f_min_hz: 50.0,
            f_max_hz: 2000.0,
            confidence_threshold: 0.1,
            frame_hop: 256,
            integration_window: 2048,
            yin_threshold: 0.1,
        }
    }
}

impl PitchConfig {
    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        if !(self.f_min_hz > 0.0 && self.f_min_hz < self.f_max_hz && self.f_max_hz < nyquist) {
            return Err(Error::Config(format!(
                "pitch range must satisfy 0 < f_min ({}) < f_max ({}) < nyquist ({nyquist})",
                self.f_min_hz, self.f_max_hz
            )));
        }
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::Config("confidence_threshold must be in [0, 1]".into()));
        }
        if self.frame_hop == 0 || self.integration_window == 0 {
            return Err(Error::Config("frame_hop and integration_window must be positive".into()));
        }
        Ok(())
    }
}

/// Anything that turns audio into a per-frame MIDI pitch track with 0 for
/// unvoiced frames.
pub trait PitchEstimator {
    fn estimate(&self, audio: &AudioBuffer) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Default)]
pub struct Yin {
    pub config: PitchConfig,
}

/// One frame's estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchFrame {
    pub frequency_hz: Option<f64>,
    pub confidence: f64,
}

pub fn hz_to_midi(f: f64) -> f64 {
    69.0 + 12.0 * (f / 440.0).log2()
}

pub fn midi_to_hz(m: f64) -> f64 {
    440.0 * 2f64.powf((m - 69.0) / 12.0)
}

impl Yin {
    pub fn new(config: PitchConfig) -> Self {
        Yin { config }
    }

    fn lag_range(&self, sr: f64) -> (usize, usize) {
        let tau_min = ((sr / self.config.f_max_hz).floor() as usize).max(2);
        let tau_max = (sr / self.config.f_min_hz).ceil() as usize;
        (tau_min, tau_max)
    }

    /// Estimate for every frame, keeping the confidence.
    pub fn analyze(&self, audio: &AudioBuffer) -> Result<Vec<PitchFrame>> {
        let sr = audio.sample_rate_hz();
        self.config.validate(sr)?;
        let (tau_min, tau_max) = self.lag_range(sr as f64);
        let w = self.config.integration_window;
        let size = w + tau_max + 1;
        let mut frame = vec![0.0; size];
        let mut diff = vec![0.0; tau_max + 1];
        let mut cmndf = vec![1.0; tau_max + 1];

        let frames = frame_count(audio.len(), self.config.frame_hop);
        let mut out = Vec::with_capacity(frames);
        for l in 0..frames {
            centered_frame(audio.samples(), l * self.config.frame_hop, size, &mut frame);
            let energy: f64 = frame[..w].iter().map(|x| x * x).sum::<f64>() / w as f64;
            if energy < 1e-12 {
                out.push(PitchFrame {
                    frequency_hz: None,
                    confidence: 0.0,
                });
                continue;
            }
            for (tau, d) in diff.iter_mut().enumerate().skip(1) {
                *d = frame[..w]
                    .iter()
                    .zip(&frame[tau..tau + w])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
            }
            let mut running = 0.0;
            for tau in 1..=tau_max {
                running += diff[tau];
                cmndf[tau] = if running > 0.0 {
                    diff[tau] * tau as f64 / running
                } else {
                    1.0
                };
            }
            out.push(self.pick(&cmndf, tau_min, tau_max, sr as f64));
        }
        Ok(out)
    }

    fn pick(&self, cmndf: &[f64], tau_min: usize, tau_max: usize, sr: f64) -> PitchFrame {
        let (global_tau, global_min) = (tau_min..=tau_max)
            .map(|t| (t, cmndf[t]))
            .fold((tau_min, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        let confidence = (1.0 - global_min).clamp(0.0, 1.0);
        if confidence < self.config.confidence_threshold {
            return PitchFrame {
                frequency_hz: None,
                confidence,
            };
        }

        let mut tau = (tau_min..=tau_max)
            .find(|&t| cmndf[t] < self.config.yin_threshold)
            .unwrap_or(global_tau);
        while tau < tau_max && cmndf[tau + 1] < cmndf[tau] {
            tau += 1;
        }

        let refined = if tau > tau_min && tau < tau_max {
            let (a, b, c) = (cmndf[tau - 1], cmndf[tau], cmndf[tau + 1]);
            let denom = a - 2.0 * b + c;
            if denom.abs() > f64::EPSILON {
                tau as f64 + 0.5 * (a - c) / denom
            } else {
                tau as f64
            }
        } else {
            tau as f64
        };
        PitchFrame {
            frequency_hz: Some(sr / refined),
            confidence,
        }
    }
}

impl PitchEstimator for Yin {
    fn estimate(&self, audio: &AudioBuffer) -> Result<Vec<f64>> {
        Ok(self
            .analyze(audio)?
            .into_iter()
            .map(|f| match f.frequency_hz {
                Some(hz) => hz_to_midi(hz).clamp(12.0, 132.0),
                None => 0.0,
            })
            .collect())
    }
}
