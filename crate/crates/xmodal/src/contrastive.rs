//! Stage-1 pre-training objective: cross-modal similarity matrix, label
//! masks, and a symmetrized masked supervised-contrastive loss with its
//! analytic gradient.
//!
//! The loss over a batch of N paired samples with unit-row embedding
//! matrices Êa, Êt and S = Êa·Êtᵀ is
//!
//! ```text
//! L = ½(L_row + L_col)
//! L_row = −(1/N) Σ_i (1/|P(i)|) Σ_{p∈P(i)} log( exp(S_ip/τ) / Σ_j exp(S_ij/τ) )
//! ```
//!
//! where P(i) = { j : y_i = y_j } (the cross-modal diagonal is always a
//! positive: paired audio/text share a label by construction) and L_col runs
//! the same sum over columns, i.e. the text→audio direction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Matrix, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContrastiveConfig {
    pub temperature: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        ContrastiveConfig { temperature: 0.1 }
    }
}

#[derive(Debug, Error)]
pub enum ContrastiveError {
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("labels must be binary (0 or 1), found {value} at index {index}")]
    NonBinaryLabel { index: usize, value: u8 },
    #[error("labels length {labels} does not match batch size {batch}")]
    LabelCount { labels: usize, batch: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// N×N positive/negative indicator matrices over a batch. With binary labels
/// the two masks partition all pairs: m_pos + m_neg = ones.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMasks {
    pub m_pos: Matrix,
    pub m_neg: Matrix,
}

/// S_ij = êa_i · êt_j over all cross-modal pairs of a batch.
pub fn similarity_matrix(ea_hat: &Matrix, et_hat: &Matrix) -> Result<Matrix, ContrastiveError> {
    if ea_hat.rows() != et_hat.rows() || ea_hat.cols() != et_hat.cols() {
        return Err(TensorError::DimMismatch {
            op: "similarity_matrix",
            left_rows: ea_hat.rows(),
            left_cols: ea_hat.cols(),
            right_rows: et_hat.rows(),
            right_cols: et_hat.cols(),
        }
        .into());
    }
    Ok(ea_hat.matmul(&et_hat.transpose())?)
}

/// m_pos_ij = 1 iff y_i = y_j; m_neg is the complement.
pub fn build_masks(labels: &[u8]) -> Result<PairMasks, ContrastiveError> {
    for (index, &value) in labels.iter().enumerate() {
        if value > 1 {
            return Err(ContrastiveError::NonBinaryLabel { index, value });
        }
    }
    let n = labels.len();
    let mut m_pos = Matrix::zeros(n, n);
    let mut m_neg = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if labels[i] == labels[j] {
                m_pos.set(i, j, 1.0);
            } else {
                m_neg.set(i, j, 1.0);
            }
        }
    }
    Ok(PairMasks { m_pos, m_neg })
}

fn log_softmax_rows(s: &Matrix, tau: f64) -> Matrix {
    let mut out = Matrix::zeros(s.rows(), s.cols());
    for r in 0..s.rows() {
        let row = s.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / tau;
        let lse = row.iter().map(|&v| (v / tau - max).exp()).sum::<f64>().ln() + max;
        for (o, &v) in out.row_mut(r).iter_mut().zip(row) {
            *o = v / tau - lse;
        }
    }
    out
}

/// Masked supervised-contrastive loss and its exact gradient d_s = ∂L/∂S.
///
/// The gradient of the row direction is (1/(Nτ))·(softmax_row(S/τ) − M_pos/|P(i)|)
/// and the column direction mirrors it over Sᵀ; d_s averages the two.
pub fn supcon_loss(
    s: &Matrix,
    masks: &PairMasks,
    cfg: &ContrastiveConfig,
) -> Result<(f64, Matrix), ContrastiveError> {
    if cfg.temperature <= 0.0 {
        return Err(ContrastiveError::BadTemperature(cfg.temperature));
    }
    if s.shape() != masks.m_pos.shape() {
        return Err(TensorError::DimMismatch {
            op: "supcon_loss",
            left_rows: s.rows(),
            left_cols: s.cols(),
            right_rows: masks.m_pos.rows(),
            right_cols: masks.m_pos.cols(),
        }
        .into());
    }
    let n = s.rows();
    let tau = cfg.temperature;
    let nf = n as f64;

    let mut loss = 0.0;
    let mut d_s = Matrix::zeros(n, n);

    // row direction (audio anchors over text candidates)
    let log_p = log_softmax_rows(s, tau);
    for i in 0..n {
        let pos_count: f64 = (0..n).map(|j| masks.m_pos.get(i, j)).sum();
        let mut row_loss = 0.0;
        for j in 0..n {
            if masks.m_pos.get(i, j) == 1.0 {
                row_loss -= log_p.get(i, j);
            }
        }
        loss += 0.5 * row_loss / (pos_count * nf);
        for j in 0..n {
            let softmax = log_p.get(i, j).exp();
            let g = (softmax - masks.m_pos.get(i, j) / pos_count) / (nf * tau);
            d_s.set(i, j, d_s.get(i, j) + 0.5 * g);
        }
    }

    // column direction (text anchors over audio candidates)
    let st = s.transpose();
    let log_p_t = log_softmax_rows(&st, tau);
    for j in 0..n {
        let pos_count: f64 = (0..n).map(|i| masks.m_pos.get(i, j)).sum();
        let mut col_loss = 0.0;
        for i in 0..n {
            if masks.m_pos.get(i, j) == 1.0 {
                col_loss -= log_p_t.get(j, i);
            }
        }
        loss += 0.5 * col_loss / (pos_count * nf);
        for i in 0..n {
            let softmax = log_p_t.get(j, i).exp();
            let g = (softmax - masks.m_pos.get(i, j) / pos_count) / (nf * tau);
            d_s.set(i, j, d_s.get(i, j) + 0.5 * g);
        }
    }

    Ok((loss, d_s))
}

/// Composes [`similarity_matrix`], [`build_masks`], and [`supcon_loss`] and
/// pushes d_s back into both embedding matrices: d_êa = d_s·Êt, d_êt = d_sᵀ·Êa.
pub fn pretrain_step_loss(
    ea_hat: &Matrix,
    et_hat: &Matrix,
    labels: &[u8],
    cfg: &ContrastiveConfig,
) -> Result<(f64, Matrix, Matrix), ContrastiveError> {
    if labels.len() != ea_hat.rows() {
        return Err(ContrastiveError::LabelCount {
            labels: labels.len(),
            batch: ea_hat.rows(),
        });
    }
    let s = similarity_matrix(ea_hat, et_hat)?;
    let masks = build_masks(labels)?;
    let (loss, d_s) = supcon_loss(&s, &masks, cfg)?;
    let d_ea = d_s.matmul(et_hat)?;
    let d_et = d_s.transpose().matmul(ea_hat)?;
    Ok((loss, d_ea, d_et))
}
