//! Stage-2 objective: fusion of the two modality embeddings, the sigmoid
//! classifier head, cross-language triplet construction, the hinge triplet
//! loss, binary cross-entropy, and their weighted combination
//! L_total = α·L_triplet + (1−α)·L_BCE.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{self, EncoderError, MlpConfig, MlpGrads, MlpParams, NORM_EPS};
use crate::tensor::{row_l2_normalize, row_l2_normalize_backward, RowNormCache, SeededRng};
use crate::{Matrix, TensorError};

const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletMode {
    /// Hate anchors/positives in one language, non-hate negative from another.
    PaperFaithful,
    /// Additionally mirrors the construction with non-hate anchors.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DownstreamConfig {
    pub alpha: f64,
    pub margin: f64,
    pub triplet_mode: TripletMode,
    pub renormalize_fused: bool,
}

impl Default for DownstreamConfig {
    fn default() -> Self {
        DownstreamConfig {
            alpha: 0.5,
            margin: 0.5,
            triplet_mode: TripletMode::PaperFaithful,
            renormalize_fused: true,
        }
    }
}

impl DownstreamConfig {
    pub fn validate(&self) -> Result<(), DownstreamError> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(DownstreamError::BadAlpha(self.alpha));
        }
        if !self.margin.is_finite() || self.margin <= 0.0 {
            return Err(DownstreamError::BadMargin(self.margin));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DownstreamError {
    #[error("alpha must lie in [0,1], got {0}")]
    BadAlpha(f64),
    #[error("margin must be positive, got {0}")]
    BadMargin(f64),
    #[error("labels must be binary (0 or 1), found {value} at index {index}")]
    NonBinaryLabel { index: usize, value: u8 },
    #[error("triplet index {index} out of range for batch of {batch}")]
    TripletIndex { index: usize, batch: usize },
    #[error("labels ({labels}) and languages ({languages}) differ in length")]
    LengthMismatch { labels: usize, languages: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Batch index triple. Anchor and positive share a language and class; the
/// negative comes from the opposite class in a different language.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

/// Cache from [`fuse_batch`] needed to split gradients back per modality.
#[derive(Debug, Clone)]
pub struct FuseCache {
    pub embed_dim: usize,
    pub norm: Option<RowNormCache<f64>>,
}

/// Concatenates per-modality embedding batches row-wise into (N, 2m); when
/// `renormalize` is set the fused rows are L2-normalized (all-zero rows pass
/// through).
pub fn fuse_batch(
    e_a: &Matrix,
    e_t: &Matrix,
    renormalize: bool,
) -> Result<(Matrix, FuseCache), DownstreamError> {
    if e_a.rows() != e_t.rows() || e_a.cols() != e_t.cols() {
        return Err(TensorError::DimMismatch {
            op: "fuse",
            left_rows: e_a.rows(),
            left_cols: e_a.cols(),
            right_rows: e_t.rows(),
            right_cols: e_t.cols(),
        }
        .into());
    }
    let m = e_a.cols();
    let mut fused = Matrix::zeros(e_a.rows(), 2 * m);
    for r in 0..e_a.rows() {
        fused.row_mut(r)[..m].copy_from_slice(e_a.row(r));
        fused.row_mut(r)[m..].copy_from_slice(e_t.row(r));
    }
    if renormalize {
        let (out, cache) = row_l2_normalize(&fused, NORM_EPS);
        Ok((
            out,
            FuseCache {
                embed_dim: m,
                norm: Some(cache),
            },
        ))
    } else {
        Ok((
            fused,
            FuseCache {
                embed_dim: m,
                norm: None,
            },
        ))
    }
}

/// Splits a fused-embedding gradient back into per-modality gradients,
/// undoing the renormalization when one was applied.
pub fn fuse_backward(cache: &FuseCache, d_fused: &Matrix) -> (Matrix, Matrix) {
    let d_concat = match &cache.norm {
        Some(norm) => row_l2_normalize_backward(norm, d_fused),
        None => d_fused.clone(),
    };
    let m = cache.embed_dim;
    let mut d_a = Matrix::zeros(d_concat.rows(), m);
    let mut d_t = Matrix::zeros(d_concat.rows(), m);
    for r in 0..d_concat.rows() {
        d_a.row_mut(r).copy_from_slice(&d_concat.row(r)[..m]);
        d_t.row_mut(r).copy_from_slice(&d_concat.row(r)[m..]);
    }
    (d_a, d_t)
}

/// Cache from [`classify`].
#[derive(Debug, Clone)]
pub struct ClassifyCache {
    mlp: encoder::ForwardCache,
    probs: Vec<f64>,
}

/// Sigmoid classifier head over fused embeddings: ŷ = σ(mlp(e)).
pub fn classify(
    params: &MlpParams,
    config: &MlpConfig,
    fused: &Matrix,
) -> Result<(Vec<f64>, ClassifyCache), DownstreamError> {
    let mut eval_rng = SeededRng::new(0); // eval mode, never consumed
    let (logits, mlp_cache) = encoder::forward(params, config, fused, false, &mut eval_rng)?;
    let probs: Vec<f64> = logits.data().iter().map(|&z| sigmoid(z)).collect();
    Ok((
        probs.clone(),
        ClassifyCache {
            mlp: mlp_cache,
            probs,
        },
    ))
}

/// Backward of [`classify`], taking d_probs (∂L/∂ŷ) and returning parameter
/// gradients plus the gradient w.r.t. the fused input batch.
pub fn classify_backward(
    params: &MlpParams,
    config: &MlpConfig,
    cache: &ClassifyCache,
    d_probs: &[f64],
) -> Result<(MlpGrads, Matrix), DownstreamError> {
    let n = cache.probs.len();
    let d_logits: Vec<f64> = (0..n)
        .map(|i| {
            let p = cache.probs[i];
            d_probs[i] * p * (1.0 - p)
        })
        .collect();
    let d_out = Matrix::from_vec(n, 1, d_logits)?;
    Ok(encoder::backward(params, config, &cache.mlp, &d_out)?)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy with probabilities clamped to
/// [1e-12, 1−1e-12]; gradient is (ŷ−y)/(ŷ(1−ŷ))/N per sample.
pub fn bce_loss(y_hat: &[f64], y: &[u8]) -> Result<(f64, Vec<f64>), DownstreamError> {
    for (index, &value) in y.iter().enumerate() {
        if value > 1 {
            return Err(DownstreamError::NonBinaryLabel { index, value });
        }
    }
    if y_hat.len() != y.len() {
        return Err(DownstreamError::LengthMismatch {
            labels: y.len(),
            languages: y_hat.len(),
        });
    }
    let n = y.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(y.len());
    for (&p_raw, &label) in y_hat.iter().zip(y) {
        let p = p_raw.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        let yf = label as f64;
        loss -= (yf * p.ln() + (1.0 - yf) * (1.0 - p).ln()) / n;
        grad.push((p - yf) / (p * (1.0 - p)) / n);
    }
    Ok((loss, grad))
}

/// Draws triplets from a batch under the cross-language constraint:
/// anchor/positive are hate samples sharing a language, the negative is a
/// non-hate sample from a different language. Emits up to one triplet per
/// eligible anchor; `Symmetric` mode additionally mirrors the construction
/// with the classes swapped. Returns an empty list when the batch cannot
/// satisfy the constraints.
pub fn sample_triplets(
    labels: &[u8],
    languages: &[String],
    rng: &mut SeededRng,
    cfg: &DownstreamConfig,
) -> Result<Vec<Triplet>, DownstreamError> {
    if labels.len() != languages.len() {
        return Err(DownstreamError::LengthMismatch {
            labels: labels.len(),
            languages: languages.len(),
        });
    }
    for (index, &value) in labels.iter().enumerate() {
        if value > 1 {
            return Err(DownstreamError::NonBinaryLabel { index, value });
        }
    }
    let mut triplets = emit_triplets(labels, languages, 1, rng);
    if cfg.triplet_mode == TripletMode::Symmetric {
        triplets.extend(emit_triplets(labels, languages, 0, rng));
    }
    Ok(triplets)
}

fn emit_triplets(
    labels: &[u8],
    languages: &[String],
    anchor_class: u8,
    rng: &mut SeededRng,
) -> Vec<Triplet> {
    let n = labels.len();
    let mut out = Vec::new();
    let mut langs: Vec<&String> = languages.iter().collect();
    langs.sort();
    langs.dedup();
    for lang in langs {
        let same_lang_anchor: Vec<usize> = (0..n)
            .filter(|&i| labels[i] == anchor_class && &languages[i] == lang)
            .collect();
        if same_lang_anchor.len() < 2 {
            continue;
        }
        let negatives: Vec<usize> = (0..n)
            .filter(|&i| labels[i] != anchor_class && &languages[i] != lang)
            .collect();
        if negatives.is_empty() {
            continue;
        }
        for &anchor in &same_lang_anchor {
            let peers: Vec<usize> = same_lang_anchor
                .iter()
                .copied()
                .filter(|&p| p != anchor)
                .collect();
            let positive = peers[rng.gen_index(peers.len())];
            let negative = negatives[rng.gen_index(negatives.len())];
            out.push(Triplet {
                anchor,
                positive,
                negative,
            });
        }
    }
    out
}

/// Hinge triplet loss over embedding rows:
/// mean over triplets of max(0, ‖e_a−e_p‖² − ‖e_a−e_n‖² + margin), with the
/// exact subgradient (zero for inactive triplets). An empty triplet list
/// yields loss 0 and a zero gradient.
pub fn triplet_loss(
    embeddings: &Matrix,
    triplets: &[Triplet],
    margin: f64,
) -> Result<(f64, Matrix), DownstreamError> {
    let n = embeddings.rows();
    let mut d = Matrix::zeros(n, embeddings.cols());
    if triplets.is_empty() {
        return Ok((0.0, d));
    }
    for t in triplets {
        for &index in &[t.anchor, t.positive, t.negative] {
            if index >= n {
                return Err(DownstreamError::TripletIndex { index, batch: n });
            }
        }
    }
    let count = triplets.len() as f64;
    let mut loss = 0.0;
    for t in triplets {
        let a = embeddings.row(t.anchor);
        let p = embeddings.row(t.positive);
        let ng = embeddings.row(t.negative);
        let d_ap: f64 = a.iter().zip(p).map(|(&x, &y)| (x - y) * (x - y)).sum();
        let d_an: f64 = a.iter().zip(ng).map(|(&x, &y)| (x - y) * (x - y)).sum();
        let hinge = d_ap - d_an + margin;
        if hinge <= 0.0 {
            continue;
        }
        loss += hinge / count;
        // ∂/∂a = 2(n−p), ∂/∂p = −2(a−p), ∂/∂n = 2(a−n), each /count
        for j in 0..embeddings.cols() {
            let ga = 2.0 * (ng[j] - p[j]) / count;
            let gp = -2.0 * (a[j] - p[j]) / count;
            let gn = 2.0 * (a[j] - ng[j]) / count;
            d.set(t.anchor, j, d.get(t.anchor, j) + ga);
            d.set(t.positive, j, d.get(t.positive, j) + gp);
            d.set(t.negative, j, d.get(t.negative, j) + gn);
        }
    }
    Ok((loss, d))
}

/// L_total = α·L_triplet + (1−α)·L_BCE.
pub fn total_loss(l_triplet: f64, l_bce: f64, alpha: f64) -> Result<f64, DownstreamError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(DownstreamError::BadAlpha(alpha));
    }
    Ok(alpha * l_triplet + (1.0 - alpha) * l_bce)
}
