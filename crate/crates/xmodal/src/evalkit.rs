//! Metrics (accuracy, F1, AUC-ROC, EER), scoring with modality ablations,
//! and the cross-lingual protocol runner.
//!
//! `roc_auc` is the Mann-Whitney pair-counting form (ties at ½);
//! [`oracles::roc_auc_trapezoid`] integrates the ROC curve independently and
//! the two must agree to 1e-12. `eer` sweeps the sorted unique scores and
//! interpolates the FAR/FRR crossing; [`oracles::eer_dense_sweep`] checks it
//! on a dense threshold grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contrastive::ContrastiveConfig;
use crate::data::{
    select_language_set, LanguageSets, SampleRecord, SetChoice, Split,
};
use crate::downstream::{classify, fuse_batch, DownstreamConfig};
use crate::encoder;
use crate::tensor::{mix_seed, SeededRng};
use crate::trainer::{finetune, pretrain, ModelBundle, TrainConfig, TrainError};
use crate::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSample {
    pub score: f64,
    pub label: u8,
    pub language: String,
}

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metric undefined on an empty sample set")]
    Empty,
    #[error("metric undefined: eval set contains only class {0}")]
    SingleClass(u8),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Data(#[from] crate::data::DataError),
    #[error("protocol cell '{cell}' selected an empty {what} set")]
    EmptyCell { cell: String, what: &'static str },
}

/// Fraction of samples where (score ≥ threshold) agrees with the label.
pub fn accuracy(samples: &[ScoredSample], threshold: f64) -> Result<f64, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::Empty);
    }
    let correct = samples
        .iter()
        .filter(|s| (s.score >= threshold) == (s.label == 1))
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

/// F1 = 2PR/(P+R) at the given threshold; degenerate cases return 0.
pub fn f1(samples: &[ScoredSample], threshold: f64) -> Result<f64, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::Empty);
    }
    let (mut tp, mut fp, mut fnn) = (0.0, 0.0, 0.0);
    for s in samples {
        let predicted = s.score >= threshold;
        match (predicted, s.label == 1) {
            (true, true) => tp += 1.0,
            (true, false) => fp += 1.0,
            (false, true) => fnn += 1.0,
            (false, false) => {}
        }
    }
    let denom = 2.0 * tp + fp + fnn;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp / denom)
}

fn split_classes(samples: &[ScoredSample]) -> Result<(Vec<f64>, Vec<f64>), MetricError> {
    if samples.is_empty() {
        return Err(MetricError::Empty);
    }
    let pos: Vec<f64> = samples.iter().filter(|s| s.label == 1).map(|s| s.score).collect();
    let neg: Vec<f64> = samples.iter().filter(|s| s.label == 0).map(|s| s.score).collect();
    if pos.is_empty() {
        return Err(MetricError::SingleClass(0));
    }
    if neg.is_empty() {
        return Err(MetricError::SingleClass(1));
    }
    Ok((pos, neg))
}

/// Probability a random positive outscores a random negative, ties counted ½.
pub fn roc_auc(samples: &[ScoredSample]) -> Result<f64, MetricError> {
    let (pos, neg) = split_classes(samples)?;
    let mut wins = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Ok(wins / (pos.len() as f64 * neg.len() as f64))
}

fn far_frr(pos: &[f64], neg: &[f64], threshold: f64) -> (f64, f64) {
    let far = neg.iter().filter(|&&s| s >= threshold).count() as f64 / neg.len() as f64;
    let frr = pos.iter().filter(|&&s| s < threshold).count() as f64 / pos.len() as f64;
    (far, frr)
}

/// Equal error rate: the FAR/FRR crossing over score thresholds, linearly
/// interpolated between the two adjacent thresholds bracketing FAR = FRR.
pub fn eer(samples: &[ScoredSample]) -> Result<f64, MetricError> {
    let (pos, neg) = split_classes(samples)?;
    let mut thresholds: Vec<f64> = pos.iter().chain(&neg).copied().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    // one threshold above every score so FRR reaches 1 and FAR reaches 0
    thresholds.push(thresholds.last().unwrap() + 1.0);

    // FAR decreases and FRR increases as the threshold rises; walk to the
    // sign change of (FAR − FRR)
    let mut prev = far_frr(&pos, &neg, thresholds[0]);
    if prev.0 - prev.1 <= 0.0 {
        return Ok((prev.0 + prev.1) / 2.0);
    }
    for &t in &thresholds[1..] {
        let cur = far_frr(&pos, &neg, t);
        let diff = cur.0 - cur.1;
        if diff <= 0.0 {
            let prev_diff = prev.0 - prev.1;
            let denom = prev_diff - diff;
            let lambda = if denom == 0.0 { 0.5 } else { prev_diff / denom };
            let far = prev.0 + lambda * (cur.0 - prev.0);
            let frr = prev.1 + lambda * (cur.1 - prev.1);
            return Ok((far + frr) / 2.0);
        }
        prev = cur;
    }
    // FAR stayed above FRR throughout; report the final operating point
    Ok((prev.0 + prev.1) / 2.0)
}

/// Independent brute-force counterparts used to cross-check the metric
/// implementations.
pub mod oracles {
    use super::{MetricError, ScoredSample};

    /// AUC via explicit trapezoidal integration of the ROC curve.
    pub fn roc_auc_trapezoid(samples: &[ScoredSample]) -> Result<f64, MetricError> {
        let (pos, neg) = super::split_classes(samples)?;
        let mut all: Vec<(f64, bool)> = pos
            .iter()
            .map(|&s| (s, true))
            .chain(neg.iter().map(|&s| (s, false)))
            .collect();
        all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let np = pos.len() as f64;
        let nn = neg.len() as f64;
        let mut curve = vec![(0.0, 0.0)];
        let (mut tp, mut fp) = (0.0, 0.0);
        let mut i = 0;
        while i < all.len() {
            let score = all[i].0;
            while i < all.len() && all[i].0 == score {
                if all[i].1 {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
                i += 1;
            }
            curve.push((fp / nn, tp / np));
        }
        let mut auc = 0.0;
        for w in curve.windows(2) {
            auc += (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0;
        }
        Ok(auc)
    }

    /// EER via a dense sweep of roughly `grid` points along the piecewise
    /// linear (FAR, FRR) polyline spanned by the sorted unique thresholds,
    /// reporting (FAR+FRR)/2 at the point of smallest |FAR − FRR|. FAR and
    /// FRR are step functions of the threshold alone, so matching an
    /// interpolated crossing requires sweeping along the polyline segments
    /// rather than along raw threshold values.
    pub fn eer_dense_sweep(samples: &[ScoredSample], grid: usize) -> Result<f64, MetricError> {
        let (pos, neg) = super::split_classes(samples)?;
        let mut thresholds: Vec<f64> = pos.iter().chain(&neg).copied().collect();
        thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
        thresholds.dedup();
        thresholds.push(thresholds.last().unwrap() + 1.0);
        let points: Vec<(f64, f64)> = thresholds
            .iter()
            .map(|&t| super::far_frr(&pos, &neg, t))
            .collect();
        let per_segment = (grid / points.len().max(1)).max(2);
        let mut best = (f64::INFINITY, 0.0);
        for w in points.windows(2) {
            for g in 0..=per_segment {
                let lambda = g as f64 / per_segment as f64;
                let far = w[0].0 + lambda * (w[1].0 - w[0].0);
                let frr = w[0].1 + lambda * (w[1].1 - w[0].1);
                let gap = (far - frr).abs();
                if gap < best.0 {
                    best = (gap, (far + frr) / 2.0);
                }
            }
        }
        Ok(best.1)
    }
}

/// ACC/EER/F1/AUC for one evaluation cell, with a per-language breakdown.
/// Languages whose slice contains a single class are omitted from the
/// breakdown (EER/AUC are undefined there).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc: f64,
    pub eer: f64,
    pub f1: f64,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub per_language: BTreeMap<String, LanguageMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageMetrics {
    pub acc: f64,
    pub eer: f64,
    pub f1: f64,
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

pub fn metrics_report(samples: &[ScoredSample]) -> Result<MetricsReport, MetricError> {
    let acc = accuracy(samples, 0.5)?;
    let f1_score = f1(samples, 0.5)?;
    let auc = roc_auc(samples)?;
    let eer_value = eer(samples)?;
    let n_pos = samples.iter().filter(|s| s.label == 1).count();
    let n_neg = samples.len() - n_pos;
    let mut per_language = BTreeMap::new();
    let mut languages: Vec<&String> = samples.iter().map(|s| &s.language).collect();
    languages.sort();
    languages.dedup();
    for lang in languages {
        let slice: Vec<ScoredSample> = samples
            .iter()
            .filter(|s| &s.language == lang)
            .cloned()
            .collect();
        let lp = slice.iter().filter(|s| s.label == 1).count();
        let ln = slice.len() - lp;
        if lp == 0 || ln == 0 {
            continue;
        }
        per_language.insert(
            lang.clone(),
            LanguageMetrics {
                acc: accuracy(&slice, 0.5)?,
                eer: eer(&slice)?,
                f1: f1(&slice, 0.5)?,
                auc: roc_auc(&slice)?,
                n_pos: lp,
                n_neg: ln,
            },
        );
    }
    Ok(MetricsReport {
        acc,
        eer: eer_value,
        f1: f1_score,
        auc,
        n_pos,
        n_neg,
        per_language,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Multimodal,
    TextOnly,
    AudioOnly,
}

impl Ablation {
    /// Label used in the report's Input column.
    pub fn input_label(self) -> &'static str {
        match self {
            Ablation::Multimodal => "Text + Audio",
            Ablation::TextOnly => "Text",
            Ablation::AudioOnly => "Audio",
        }
    }
}

/// Scores records through the fuse+classify path in eval mode. Ablations
/// zero one modality's embedding before fusion.
pub fn score_dataset(
    bundle: &ModelBundle,
    records: &[SampleRecord],
    ablation: Ablation,
) -> Result<Vec<ScoredSample>, TrainError> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let audio_rows: Vec<Vec<f64>> = records.iter().map(|r| r.audio_features.clone()).collect();
    let text_rows: Vec<Vec<f64>> = records.iter().map(|r| r.text_features.clone()).collect();
    let audio_x = Matrix::from_rows(&audio_rows)?;
    let text_x = Matrix::from_rows(&text_rows)?;
    let mut eval_rng = SeededRng::new(0);
    let (mut e_a, _) = encoder::forward(
        &bundle.audio,
        &bundle.audio_cfg,
        &audio_x,
        false,
        &mut eval_rng,
    )?;
    let (mut e_t, _) = encoder::forward(
        &bundle.text,
        &bundle.text_cfg,
        &text_x,
        false,
        &mut eval_rng,
    )?;
    match ablation {
        Ablation::TextOnly => e_a = Matrix::zeros(e_a.rows(), e_a.cols()),
        Ablation::AudioOnly => e_t = Matrix::zeros(e_t.rows(), e_t.cols()),
        Ablation::Multimodal => {}
    }
    let (fused, _) = fuse_batch(&e_a, &e_t, true)?;
    let (probs, _) = classify(&bundle.classifier, &bundle.classifier_cfg, &fused)?;
    Ok(records
        .iter()
        .zip(probs)
        .map(|(r, score)| ScoredSample {
            score,
            label: r.label,
            language: r.language.clone(),
        })
        .collect())
}

/// The four experiment cells of the cross-lingual protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolMode {
    InSetA,
    InSetB,
    CrossAToB,
    CrossBToA,
}

impl ProtocolMode {
    pub const ALL: [ProtocolMode; 4] = [
        ProtocolMode::InSetA,
        ProtocolMode::InSetB,
        ProtocolMode::CrossAToB,
        ProtocolMode::CrossBToA,
    ];

    pub fn train_set(self) -> SetChoice {
        match self {
            ProtocolMode::InSetA | ProtocolMode::CrossAToB => SetChoice::A,
            ProtocolMode::InSetB | ProtocolMode::CrossBToA => SetChoice::B,
        }
    }

    pub fn eval_set(self) -> SetChoice {
        match self {
            ProtocolMode::InSetA | ProtocolMode::CrossBToA => SetChoice::A,
            ProtocolMode::InSetB | ProtocolMode::CrossAToB => SetChoice::B,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProtocolMode::InSetA => "in_set_A",
            ProtocolMode::InSetB => "in_set_B",
            ProtocolMode::CrossAToB => "cross_A_to_B",
            ProtocolMode::CrossBToA => "cross_B_to_A",
        }
    }

    pub fn set_label(choice: SetChoice) -> &'static str {
        match choice {
            SetChoice::A => "Set-A",
            SetChoice::B => "Set-B",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSpec {
    pub mode: ProtocolMode,
    pub ablation: Ablation,
    pub sets: LanguageSets,
    /// Evaluate cross-set cells on the target set's full data instead of its
    /// test split only.
    pub eval_full_target: bool,
}

impl Default for ProtocolSpec {
    fn default() -> Self {
        ProtocolSpec {
            mode: ProtocolMode::InSetA,
            ablation: Ablation::Multimodal,
            sets: LanguageSets::default(),
            eval_full_target: false,
        }
    }
}

/// Trains one protocol cell (pretrain then finetune on the source set's train
/// split) and returns the trained bundle plus the records it is evaluated on.
/// The cell seed derives from the train seed and the mode name.
pub fn train_cell(
    corpus: &[SampleRecord],
    mode: ProtocolMode,
    sets: &LanguageSets,
    eval_full_target: bool,
    train_cfg: &TrainConfig,
    contrastive_cfg: &ContrastiveConfig,
    downstream_cfg: &DownstreamConfig,
) -> Result<(ModelBundle, Vec<SampleRecord>), MetricError> {
    let train_records = select_language_set(corpus, sets, mode.train_set(), Split::Train)?;
    if train_records.is_empty() {
        return Err(MetricError::EmptyCell {
            cell: mode.name().to_string(),
            what: "train",
        });
    }
    let mut eval_records = select_language_set(corpus, sets, mode.eval_set(), Split::Test)?;
    let is_cross = mode.train_set() != mode.eval_set();
    if is_cross && eval_full_target {
        eval_records.extend(select_language_set(corpus, sets, mode.eval_set(), Split::Train)?);
    }
    if eval_records.is_empty() {
        return Err(MetricError::EmptyCell {
            cell: mode.name().to_string(),
            what: "eval",
        });
    }
    let d_a = train_records[0].audio_features.len();
    let d_t = train_records[0].text_features.len();
    let cell_cfg = TrainConfig {
        seed: mix_seed(train_cfg.seed, mode.name()),
        ..train_cfg.clone()
    };
    let mut bundle = ModelBundle::init(d_a, d_t, cell_cfg.seed)?;
    pretrain(&mut bundle, &train_records, &cell_cfg, contrastive_cfg)?;
    finetune(&mut bundle, &train_records, &cell_cfg, downstream_cfg)?;
    Ok((bundle, eval_records))
}

/// Runs one full protocol cell end to end and reports its metrics.
pub fn run_protocol(
    corpus: &[SampleRecord],
    spec: &ProtocolSpec,
    train_cfg: &TrainConfig,
    contrastive_cfg: &ContrastiveConfig,
    downstream_cfg: &DownstreamConfig,
) -> Result<MetricsReport, MetricError> {
    let (bundle, eval_records) = train_cell(
        corpus,
        spec.mode,
        &spec.sets,
        spec.eval_full_target,
        train_cfg,
        contrastive_cfg,
        downstream_cfg,
    )?;
    let scored = score_dataset(&bundle, &eval_records, spec.ablation)?;
    metrics_report(&scored)
}
