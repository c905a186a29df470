//! Synchronization metrics computable without learned embedders: onset
//! accuracy and average precision, energy-envelope MAE and an audio-visual
//! peak agreement score.

use serde::{Deserialize, Serialize};

use crate::control_signals::resize_linear;
use crate::error::{Error, Result};
use crate::media_io::{AudioBuffer, FrameEmbeddingSequence};

pub const DEFAULT_THRESHOLD_RATIO: f64 = 0.3;
pub const DEFAULT_ONSET_TOLERANCE_SEC: f64 = 0.05;
pub const DEFAULT_AV_TOLERANCE_SEC: f64 = 0.1;
/// Envelope hop used when callers do not pick one: 10 ms.
pub const DEFAULT_HOP_SEC: f64 = 0.01;
pub const MIN_ONSET_SEPARATION_SEC: f64 = 0.05;
const SILENT_PEAK: f64 = 1e-8;

pub fn default_hop(sample_rate_hz: u32) -> usize {
    ((sample_rate_hz as f64 * DEFAULT_HOP_SEC).round() as usize).max(1)
}

/// Onset times in seconds, strictly increasing, with optional confidences.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OnsetSet {
    pub times: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

impl OnsetSet {
    pub fn new(times: Vec<f64>, scores: Option<Vec<f64>>) -> Result<Self> {
        let set = OnsetSet { times, scores };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Validation("onset times must be finite".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("onset times must be strictly increasing".into()));
        }
        if let Some(s) = &self.scores {
            if s.len() != self.times.len() {
                return Err(Error::Validation(format!(
                    "{} scores for {} onsets",
                    s.len(),
                    self.times.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn shifted(&self, dt: f64) -> OnsetSet {
        OnsetSet {
            times: self.times.iter().map(|t| t + dt).collect(),
            scores: self.scores.clone(),
        }
    }
}

/// RMS of consecutive non-overlapping `hop`-sample frames; the last frame
/// may be shorter.
pub fn rms_envelope(audio: &AudioBuffer, hop: usize) -> Vec<f64> {
    audio
        .samples()
        .chunks(hop.max(1))
        .map(|c| (c.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / c.len() as f64).sqrt())
        .collect()
}

/// Local maxima of `x` above `ratio * max(x)`. Out-of-range neighbours count
/// as zero; plateaus report their first index.
fn peaks_above(x: &[f64], ratio: f64) -> Vec<usize> {
    let max = x.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    let at = |i: isize| if i < 0 || i as usize >= x.len() { 0.0 } else { x[i as usize] };
    (0..x.len())
        .filter(|&i| {
            let v = x[i];
            let i = i as isize;
            v > ratio * max && v > at(i - 1) && v >= at(i + 1) && {
                // For a plateau, require that it eventually descends.
                let mut j = i + 1;
                while (j as usize) < x.len() && at(j) == v {
                    j += 1;
                }
                at(j) < v
            }
        })
        .collect()
}

/// Onsets from the positive slope of the RMS envelope.
///
/// Candidates are local maxima of the gradient above `threshold_ratio`
/// times its maximum. Candidates closer than 50 ms to a stronger one are
/// dropped. Each onset's time is the start of its envelope frame.
pub fn detect_onsets(audio: &AudioBuffer, hop: usize, threshold_ratio: f64) -> OnsetSet {
    let env = rms_envelope(audio, hop);
    if env.is_empty() {
        return OnsetSet::default();
    }
    let grad: Vec<f64> = std::iter::once(env[0])
        .chain(env.windows(2).map(|w| (w[1] - w[0]).max(0.0)))
        .collect();
    let frame_sec = hop as f64 / audio.sample_rate_hz() as f64;
    let mut candidates = peaks_above(&grad, threshold_ratio);
    candidates.sort_by(|&a, &b| grad[b].total_cmp(&grad[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for c in candidates {
        let t = c as f64 * frame_sec;
        if kept
            .iter()
            .all(|&k| (k as f64 * frame_sec - t).abs() >= MIN_ONSET_SEPARATION_SEC - 1e-12)
        {
            kept.push(c);
        }
    }
    kept.sort_unstable();
    OnsetSet {
        times: kept.iter().map(|&k| k as f64 * frame_sec).collect(),
        scores: Some(kept.iter().map(|&k| grad[k]).collect()),
    }
}

/// Greedy one-to-one matching in time order: each predicted time takes the
/// earliest unmatched reference within `tol`.
fn match_count(pred: &[f64], reference: &[f64], tol: f64) -> usize {
    let mut sorted = pred.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut used = vec![false; reference.len()];
    let mut matches = 0;
    for p in sorted {
        if let Some(j) = (0..reference.len()).find(|&j| !used[j] && (reference[j] - p).abs() <= tol + 1e-12) {
            used[j] = true;
            matches += 1;
        }
    }
    matches
}

pub fn onset_accuracy(pred: &OnsetSet, reference: &OnsetSet, tol: f64) -> f64 {
    let denom = pred.len().max(reference.len());
    if denom == 0 {
        return 1.0;
    }
    match_count(&pred.times, &reference.times, tol) as f64 / denom as f64
}

/// Step-interpolated area under the precision/recall curve obtained by
/// sweeping the score threshold over every distinct score.
pub fn onset_average_precision(pred: &OnsetSet, reference: &OnsetSet, tol: f64) -> Result<f64> {
    let scores = pred
        .scores
        .as_ref()
        .ok_or_else(|| Error::Validation("average precision needs onset scores".into()))?;
    if reference.is_empty() {
        return Ok(0.0);
    }
    let mut thresholds = scores.clone();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for th in thresholds {
        let kept: Vec<f64> = pred
            .times
            .iter()
            .zip(scores)
            .filter(|(_, &s)| s >= th)
            .map(|(&t, _)| t)
            .collect();
        let m = match_count(&kept, &reference.times, tol) as f64;
        let precision = m / kept.len() as f64;
        let recall = m / reference.len() as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Mean absolute difference of peak-normalized RMS envelopes, after
/// resampling the longer envelope to the shorter one's length.
pub fn energy_mae(a: &AudioBuffer, b: &AudioBuffer, hop: usize) -> Result<f64> {
    let normalized = |x: &AudioBuffer, name: &str| -> Result<Vec<f64>> {
        if x.is_empty() {
            return Err(Error::Validation(format!("{name} audio is empty")));
        }
        let env = rms_envelope(x, hop);
        let peak = env.iter().copied().fold(0.0, f64::max);
        if peak < SILENT_PEAK {
            return Err(Error::Silent(format!("{name} audio has no energy")));
        }
        Ok(env.into_iter().map(|v| v / peak).collect())
    };
    let ea = normalized(a, "first")?;
    let eb = normalized(b, "second")?;
    let n = ea.len().min(eb.len());
    let ea = resize_linear(&ea, n)?;
    let eb = resize_linear(&eb, n)?;
    Ok(ea.iter().zip(&eb).map(|(x, y)| (x - y).abs()).sum::<f64>() / n as f64)
}

/// Times (seconds) of large frame-to-frame changes in an embedding
/// sequence. The change between frames `i` and `i + 1` is stamped at frame
/// `i + 1`.
pub fn visual_peaks(emb: &FrameEmbeddingSequence, threshold_ratio: f64) -> Vec<f64> {
    let motion: Vec<f64> = (0..emb.frames().saturating_sub(1))
        .map(|i| {
            emb.row(i + 1)
                .iter()
                .zip(emb.row(i))
                .map(|(a, b)| ((a - b) as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let fps = emb.frames_per_second() as f64;
    peaks_above(&motion, threshold_ratio)
        .into_iter()
        .map(|i| (i + 1) as f64 / fps)
        .collect()
}

/// Intersection over union of audio onsets and visual change peaks under
/// greedy matching within `tol`. Two empty peak sets score 1.
pub fn av_align(audio: &AudioBuffer, emb: &FrameEmbeddingSequence, tol: f64) -> Result<f64> {
    if emb.frames() == 0 {
        return Err(Error::Validation("embedding sequence has no frames".into()));
    }
    if audio.is_empty() {
        return Err(Error::Validation("audio is empty".into()));
    }
    let audio_peaks = detect_onsets(audio, default_hop(audio.sample_rate_hz()), DEFAULT_THRESHOLD_RATIO).times;
    let video_peaks = visual_peaks(emb, DEFAULT_THRESHOLD_RATIO);
    let union = audio_peaks.len() + video_peaks.len();
    if union == 0 {
        return Ok(1.0);
    }
    let m = match_count(&audio_peaks, &video_peaks, tol);
    Ok(m as f64 / (union - m) as f64)
}
