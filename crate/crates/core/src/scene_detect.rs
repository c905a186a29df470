//! Scene boundary detection on frame embeddings.
//!
//! The self-similarity matrix of the embeddings is centered, consecutive rows
//! are compared with an L1 distance, and frames where that distance exceeds a
//! multiple of its standard deviation start a new scene.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media_io::FrameEmbeddingSequence;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneDetectConfig {
    /// Threshold multiplier applied to the standard deviation of the row deltas.
    pub tau: f64,
    /// Minimum distance in frames between two accepted boundaries.
    pub min_scene_frames: usize,
}

impl Default for SceneDetectConfig {
    fn default() -> Self {
        SceneDetectConfig {
            tau: 3.0,
            min_scene_frames: 8,
        }
    }
}

impl SceneDetectConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.min_scene_frames == 0 {
            return Err(Error::Config("min_scene_frames must be at least 1".into()));
        }
        Ok(())
    }
}

/// Inclusive `(start_frame, end_frame)` pairs tiling `[0, T-1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneBoundary {
    pub segments: Vec<(usize, usize)>,
}

impl SceneBoundary {
    /// Builds segments from sorted peak frames: `(0, p1-1), (p1, p2-1), ..., (pn, T-1)`.
    pub fn from_peaks(peaks: &[usize], frames: usize) -> SceneBoundary {
        let mut segments = Vec::with_capacity(peaks.len() + 1);
        let mut start = 0;
        for &p in peaks {
            segments.push((start, p - 1));
            start = p;
        }
        segments.push((start, frames - 1));
        SceneBoundary { segments }
    }

    /// Start frames of every scene after the first.
    pub fn peaks(&self) -> Vec<usize> {
        self.segments.iter().skip(1).map(|s| s.0).collect()
    }

    pub fn to_json(&self, frames_per_second: f32) -> SceneReport {
        let fps = frames_per_second as f64;
        SceneReport {
            segments: self
                .segments
                .iter()
                .map(|&(s, e)| SceneSegment {
                    start_frame: s,
                    end_frame: e,
                    start_sec: s as f64 / fps,
                    end_sec: e as f64 / fps,
                })
                .collect(),
        }
    }
}

/// Serialized form of a [`SceneBoundary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub segments: Vec<SceneSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSegment {
    pub start_frame: usize,
    pub end_frame: usize,
    pub start_sec: f64,
    pub end_sec: f64,
}

pub fn self_similarity(seq: &FrameEmbeddingSequence) -> DMatrix<f64> {
    let x = DMatrix::from_row_iterator(
        seq.frames(),
        seq.dim(),
        seq.data().iter().map(|&v| v as f64),
    );
    let xt = x.transpose();
    &x * &xt
}

/// Subtracts the column means and the row means from every entry.
pub fn center_similarity(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !s.is_square() {
        return Err(Error::Shape(format!(
            "similarity matrix must be square, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let n = s.nrows();
    let col_means = s.row_mean();
    let row_means = s.column_mean();
    Ok(DMatrix::from_fn(n, n, |i, j| s[(i, j)] - col_means[j] - row_means[i]))
}

pub fn row_delta(centered: &DMatrix<f64>) -> Vec<f64> {
    let n = centered.nrows();
    (0..n.saturating_sub(1))
        .map(|i| {
            (0..centered.ncols())
                .map(|j| (centered[(i, j)] - centered[(i + 1, j)]).abs())
                .sum()
        })
        .collect()
}

fn population_std(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Picks scene-start frames from the row-delta sequence.
pub fn peaks_from_delta(delta: &[f64], cfg: &SceneDetectConfig) -> Vec<usize> {
    let threshold = cfg.tau * population_std(delta);
    let mut run_maxima = Vec::new();
    let mut current: Option<usize> = None;
    for (i, &d) in delta.iter().enumerate() {
        if d > threshold {
            current = Some(match current {
                Some(best) if delta[best] >= d => best,
                _ => i,
            });
        } else if let Some(best) = current.take() {
            run_maxima.push(best);
        }
    }
    run_maxima.extend(current);

    let mut peaks: Vec<usize> = Vec::new();
    let mut previous = 0;
    for i in run_maxima {
        let p = i + 1;
        if p - previous >= cfg.min_scene_frames {
            peaks.push(p);
            previous = p;
        }
    }
    peaks
}

pub fn detect_scenes(seq: &FrameEmbeddingSequence, cfg: &SceneDetectConfig) -> Result<SceneBoundary> {
    cfg.validate()?;
    let frames = seq.frames();
    if frames == 1 {
        return Ok(SceneBoundary {
            segments: vec![(0, 0)],
        });
    }
    let centered = center_similarity(&self_similarity(seq))?;
    let delta = row_delta(&centered);
    Ok(SceneBoundary::from_peaks(&peaks_from_delta(&delta, cfg), frames))
}
