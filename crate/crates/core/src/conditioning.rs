//! Reference implementation of decoupled text/control cross-attention.
//!
//! A single query projection of the latent `Z` attends separately over text
//! features and control-signal features; the two results are summed with the
//! control branch scaled by `lambda`:
//!
//! ```text
//! Q = Z Wq,  K_t = c_txt Wk_t,  V_t = c_txt Wv_t,  K_c = c_ctrl Wk_c,  V_c = c_ctrl Wv_c
//! Z' = softmax(Q K_tᵀ / √d) V_t + λ · softmax(Q K_cᵀ / √d) V_c
//! ```
//!
//! With `lambda = 1` this is the plain sum used during training; inference
//! defaults to `lambda = 0.5`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

pub const DEFAULT_INFERENCE_LAMBDA: f64 = 0.5;
pub const CONDITION_DROPOUT_PROBABILITY: f64 = 0.05;

/// Projection matrices for both attention branches.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionProjections {
    pub w_q_txt: DMatrix<f64>,
    pub w_k_txt: DMatrix<f64>,
    pub w_v_txt: DMatrix<f64>,
    pub w_k_ctrl: DMatrix<f64>,
    pub w_v_ctrl: DMatrix<f64>,
}

impl AttentionProjections {
    pub fn new(
        w_q_txt: DMatrix<f64>,
        w_k_txt: DMatrix<f64>,
        w_v_txt: DMatrix<f64>,
        w_k_ctrl: DMatrix<f64>,
        w_v_ctrl: DMatrix<f64>,
    ) -> Result<Self> {
        let p = AttentionProjections {
            w_q_txt,
            w_k_txt,
            w_v_txt,
            w_k_ctrl,
            w_v_ctrl,
        };
        p.validate()?;
        Ok(p)
    }

    /// Head dimension `d`.
    pub fn head_dim(&self) -> usize {
        self.w_q_txt.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.head_dim();
        if d == 0 {
            return Err(Error::Shape("head dimension must be positive".into()));
        }
        let all = [
            ("W_q_txt", &self.w_q_txt),
            ("W_k_txt", &self.w_k_txt),
            ("W_v_txt", &self.w_v_txt),
            ("W_k_ctrl", &self.w_k_ctrl),
            ("W_v_ctrl", &self.w_v_ctrl),
        ];
        for (name, m) in all {
            if m.ncols() != d {
                return Err(Error::Shape(format!("{name} has {} columns, expected {d}", m.ncols())));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Shape(format!("{name} contains non-finite values")));
            }
        }
        if self.w_k_txt.nrows() != self.w_v_txt.nrows() {
            return Err(Error::Shape("text key/value projections disagree on input width".into()));
        }
        if self.w_k_ctrl.nrows() != self.w_v_ctrl.nrows() {
            return Err(Error::Shape("control key/value projections disagree on input width".into()));
        }
        Ok(())
    }
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = logits.clone();
    for mut row in out.row_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|v| *v = (*v - max).exp());
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
    }
    out
}

/// Attention weights `softmax(Q Kᵀ / √d)`.
pub fn attention_weights(q: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if q.ncols() != k.ncols() {
        return Err(Error::Shape(format!(
            "query width {} vs key width {}",
            q.ncols(),
            k.ncols()
        )));
    }
    if k.nrows() == 0 {
        return Err(Error::Shape("attention over zero keys".into()));
    }
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    Ok(softmax_rows(&((q * k.transpose()) * scale)))
}

pub fn attention(q: &DMatrix<f64>, k: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if k.nrows() != v.nrows() {
        return Err(Error::Shape(format!("{} keys but {} values", k.nrows(), v.nrows())));
    }
    if [q, k, v].iter().any(|m| m.iter().any(|x| !x.is_finite())) {
        return Err(Error::Shape("attention inputs must be finite".into()));
    }
    Ok(attention_weights(q, k)? * v)
}

fn project(x: &DMatrix<f64>, w: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if x.ncols() != w.nrows() {
        return Err(Error::Shape(format!(
            "{what}: input width {} does not match projection rows {}",
            x.ncols(),
            w.nrows()
        )));
    }
    Ok(x * w)
}

/// The two branch outputs before they are combined.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchOutputs {
    pub text: DMatrix<f64>,
    pub control: DMatrix<f64>,
}

impl BranchOutputs {
    pub fn combine(&self, lambda: f64) -> DMatrix<f64> {
        &self.text + &self.control * lambda
    }
}

pub fn branch_outputs(
    z: &DMatrix<f64>,
    c_txt: &DMatrix<f64>,
    c_ctrl: &DMatrix<f64>,
    proj: &AttentionProjections,
) -> Result<BranchOutputs> {
    proj.validate()?;
    let q = project(z, &proj.w_q_txt, "query")?;
    let text = attention(
        &q,
        &project(c_txt, &proj.w_k_txt, "text keys")?,
        &project(c_txt, &proj.w_v_txt, "text values")?,
    )?;
    let control = attention(
        &q,
        &project(c_ctrl, &proj.w_k_ctrl, "control keys")?,
        &project(c_ctrl, &proj.w_v_ctrl, "control values")?,
    )?;
    Ok(BranchOutputs { text, control })
}

pub fn decoupled_attention(
    z: &DMatrix<f64>,
    c_txt: &DMatrix<f64>,
    c_ctrl: &DMatrix<f64>,
    proj: &AttentionProjections,
    lambda: f64,
) -> Result<DMatrix<f64>> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be a nonnegative number, got {lambda}")));
    }
    Ok(branch_outputs(z, c_txt, c_ctrl, proj)?.combine(lambda))
}

/// Training-time condition dropout. Off unless `enabled` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionDropout {
    pub enabled: bool,
    pub probability: f64,
}

impl Default for ConditionDropout {
    fn default() -> Self {
        ConditionDropout {
            enabled: false,
            probability: CONDITION_DROPOUT_PROBABILITY,
        }
    }
}

/// One item of a batch: latent queries plus both conditions.
#[derive(Debug, Clone)]
pub struct ConditioningInput {
    pub z: DMatrix<f64>,
    pub c_txt: DMatrix<f64>,
    pub c_ctrl: DMatrix<f64>,
}

/// Applies [`decoupled_attention`] to every item. When dropout is enabled the
/// text and control features are independently zeroed with the configured
/// probability.
pub fn batch_decoupled_attention<R: Rng>(
    batch: &[ConditioningInput],
    proj: &AttentionProjections,
    lambda: f64,
    dropout: ConditionDropout,
    rng: &mut R,
) -> Result<Vec<DMatrix<f64>>> {
    batch
        .iter()
        .map(|item| {
            if !dropout.enabled {
                return decoupled_attention(&item.z, &item.c_txt, &item.c_ctrl, proj, lambda);
            }
            let mut c_txt = item.c_txt.clone();
            let mut c_ctrl = item.c_ctrl.clone();
            if rng.gen_bool(dropout.probability) {
                c_txt.fill(0.0);
            }
            if rng.gen_bool(dropout.probability) {
                c_ctrl.fill(0.0);
            }
            decoupled_attention(&item.z, &c_txt, &c_ctrl, proj, lambda)
        })
        .collect()
}
