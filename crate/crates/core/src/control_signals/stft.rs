use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media_io::AudioBuffer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Hamming,
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let phase = 2.0 * PI * i as f64 / n as f64;
                match self {
                    Window::Hann => 0.5 - 0.5 * phase.cos(),
                    Window::Hamming => 0.54 - 0.46 * phase.cos(),
                    Window::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StftConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub window: Window,
    pub sample_rate_hz: u32,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            n_fft: 1024,
            hop: 256,
            window: Window::Hann,
            sample_rate_hz: 16_000,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.n_fft.is_power_of_two() {
            return Err(Error::Config(format!("n_fft {} is not a power of two", self.n_fft)));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(Error::Config(format!(
                "hop {} must be in 1..={}",
                self.hop, self.n_fft
            )));
        }
        if self.sample_rate_hz == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn frames_per_second(&self) -> f64 {
        self.sample_rate_hz as f64 / self.hop as f64
    }
}

/// Number of analysis frames for a signal of `len` samples.
pub fn frame_count(len: usize, hop: usize) -> usize {
    len.max(1).div_ceil(hop)
}

/// Mirror index into `[0, len)` without repeating the edge sample.
pub(crate) fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Frame of `size` samples centered on `center`, reflect-padded at the edges.
pub(crate) fn centered_frame(samples: &[f32], center: usize, size: usize, out: &mut [f64]) {
    let start = center as isize - (size / 2) as isize;
    let len = samples.len();
    for (k, slot) in out.iter_mut().enumerate().take(size) {
        let idx = start + k as isize;
        *slot = if len == 0 {
            0.0
        } else if idx >= 0 && (idx as usize) < len {
            samples[idx as usize] as f64
        } else {
            samples[reflect_index(idx, len)] as f64
        };
    }
}

/// Magnitude spectrogram, stored frame-major: `frames[l][k]` is bin `k` of
/// frame `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: Vec<Vec<f64>>,
    pub bin_hz: Vec<f64>,
    pub window_power: f64,
    pub n_fft: usize,
}

impl Spectrogram {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_bins(&self) -> usize {
        self.bin_hz.len()
    }
}

pub fn stft_magnitude(audio: &AudioBuffer, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    let n = cfg.n_fft;
    let window = cfg.window.coefficients(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let frames_n = frame_count(audio.len(), cfg.hop);
    let sr = audio.sample_rate_hz() as f64;

    let mut raw = vec![0.0; n];
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut frames = Vec::with_capacity(frames_n);
    for l in 0..frames_n {
        centered_frame(audio.samples(), l * cfg.hop, n, &mut raw);
        for ((b, &x), &w) in buf.iter_mut().zip(&raw).zip(&window) {
            *b = Complex::new(x * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        frames.push(buf[..cfg.bins()].iter().map(|c| c.norm()).collect());
    }
    Ok(Spectrogram {
        frames,
        bin_hz: (0..cfg.bins()).map(|k| k as f64 * sr / n as f64).collect(),
        window_power: window.iter().map(|w| w * w).sum(),
        n_fft: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, secs: f64, amp: f64) -> AudioBuffer {
        let n = (secs * 16000.0) as usize;
        let s = (0..n)
            .map(|i| (amp * (2.0 * PI * freq * i as f64 / 16000.0).sin()) as f32)
            .collect();
        AudioBuffer::new(s, 16000).unwrap()
    }

    #[test]
    fn frame_count_is_ceil() {
        assert_eq!(frame_count(80000, 256), 313);
        assert_eq!(frame_count(512, 256), 2);
        assert_eq!(frame_count(0, 256), 1);
    }

    #[test]
    fn reflect_padding() {
        let idx: Vec<usize> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
    }

    #[test]
    fn dc_concentrates_in_bin_zero() {
        let audio = AudioBuffer::new(vec![1.0; 4096], 16000).unwrap();
        let spec = stft_magnitude(&audio, &StftConfig::default()).unwrap();
        for frame in &spec.frames {
            // The periodic Hann window puts half of bin 0 into bin 1; the
            // rest of the spectrum is empty.
            for &m in &frame[2..] {
                assert!(m < 0.01 * frame[0]);
            }
            assert!((frame[1] / frame[0] - 0.5).abs() < 1e-9);
        }
    }

    #[test]
    fn silence_is_zero() {
        let spec = stft_magnitude(&AudioBuffer::silence(3000, 16000), &StftConfig::default()).unwrap();
        assert!(spec.frames.iter().flatten().all(|&m| m == 0.0));
    }

    #[test]
    fn kilohertz_sine_peaks_at_bin_64() {
        let spec = stft_magnitude(&sine(1000.0, 1.0, 0.5), &StftConfig::default()).unwrap();
        assert_eq!(spec.num_bins(), 513);
        assert_eq!(spec.bin_hz[64], 1000.0);
        // Edge frames mix in the mirrored signal, which flips the sine's
        // phase inside the window and splits the peak.
        for frame in &spec.frames[2..spec.frames.len() - 2] {
            let argmax = frame
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(argmax, 64);
        }
    }

    #[test]
    fn invalid_config() {
        let bad = StftConfig {
            n_fft: 1000,
            ..StftConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = StftConfig {
            hop: 2048,
            ..StftConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
