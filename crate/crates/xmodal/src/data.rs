//! Manifest-based corpus I/O, the synthetic multilingual paired-feature
//! generator, and the split/grouping protocol.
//!
//! The generator draws a shared latent per paired sample, z = y·δ·u + ε with
//! ε ~ N(0, I_k), and maps it into each modality through per-language mixing
//! matrices A_ℓ = A + σ_lang·E_ℓ and T_ℓ = T + σ_lang·F_ℓ. The paired audio
//! and text features of one record come from the same z, plus independent
//! observation noise σ_obs·ν. With σ_lang = 0 the process is
//! language-invariant: the latent stream depends only on (class, index), not
//! on the language tag.

use std::collections::BTreeMap;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{mix_seed, SeededRng};
use crate::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One paired sample of the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub id: String,
    pub language: String,
    pub label: u8,
    pub split: Split,
    pub audio_features: Vec<f64>,
    pub text_features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<BTreeMap<String, serde_json::Value>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassCounts {
    pub hate: usize,
    pub nonhate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub latent_dim: usize,
    pub d_a: usize,
    pub d_t: usize,
    pub languages: Vec<String>,
    /// language → per-class record counts; languages absent from the map get
    /// `default_counts`.
    pub per_language_counts: BTreeMap<String, ClassCounts>,
    pub default_counts: ClassCounts,
    pub class_separation: f64,
    pub language_perturbation: f64,
    pub observation_noise: f64,
    /// Fraction routed to the train split per (language, label) cell.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            latent_dim: 8,
            d_a: 24,
            d_t: 20,
            languages: ["en", "hi", "te", "mr", "ta", "bn"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            per_language_counts: BTreeMap::new(),
            default_counts: ClassCounts {
                hate: 400,
                nonhate: 400,
            },
            class_separation: 3.0,
            language_perturbation: 0.15,
            observation_noise: 0.3,
            train_fraction: 0.5,
            seed: 42,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.latent_dim == 0 || self.d_a == 0 || self.d_t == 0 {
            return Err(DataError::BadConfig("latent_dim, d_a, d_t must be >= 1".into()));
        }
        if self.languages.is_empty() {
            return Err(DataError::BadConfig("languages must be nonempty".into()));
        }
        if self.class_separation <= 0.0 || !self.class_separation.is_finite() {
            return Err(DataError::BadConfig(format!(
                "class_separation must be positive, got {}",
                self.class_separation
            )));
        }
        if self.language_perturbation < 0.0 || self.observation_noise < 0.0 {
            return Err(DataError::BadConfig(
                "language_perturbation and observation_noise must be >= 0".into(),
            ));
        }
        if !(0.0 < self.train_fraction && self.train_fraction < 1.0) {
            return Err(DataError::BadConfig(format!(
                "train_fraction must lie in (0,1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }

    fn counts_for(&self, language: &str) -> ClassCounts {
        self.per_language_counts
            .get(language)
            .copied()
            .unwrap_or(self.default_counts)
    }
}

/// The two disjoint language groups of the cross-lingual protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanguageSets {
    pub set_a: Vec<String>,
    pub set_b: Vec<String>,
}

impl Default for LanguageSets {
    fn default() -> Self {
        LanguageSets {
            set_a: vec!["mr".into(), "bn".into(), "ta".into()],
            set_b: vec!["en".into(), "hi".into(), "te".into()],
        }
    }
}

impl LanguageSets {
    pub fn validate(&self) -> Result<(), DataError> {
        for tag in &self.set_a {
            if self.set_b.contains(tag) {
                return Err(DataError::BadConfig(format!(
                    "language sets must be disjoint, '{tag}' appears in both"
                )));
            }
        }
        if self.set_a.is_empty() || self.set_b.is_empty() {
            return Err(DataError::BadConfig("both language sets must be nonempty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetChoice {
    A,
    B,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid data config: {0}")]
    BadConfig(String),
    #[error("manifest line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("record '{id}': label must be 0 or 1, got {label}")]
    BadLabel { id: String, label: u8 },
    #[error("record '{id}': {modality} feature length {got} does not match corpus dimension {expected}")]
    InconsistentDims {
        id: String,
        modality: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("record '{id}': language tag is empty")]
    EmptyLanguage { id: String },
    #[error("unknown language tag '{tag}' in language sets (not present in corpus)")]
    UnknownLanguage { tag: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn normal_vec(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.standard_normal()).collect()
}

fn mixing_matrix(rng: &mut SeededRng, rows: usize, k: usize) -> Matrix {
    let scale = (1.0 / k as f64).sqrt();
    let data: Vec<f64> = (0..rows * k).map(|_| rng.standard_normal() * scale).collect();
    Matrix::from_vec(rows, k, data).expect("shape fixed by construction")
}

fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..m.rows())
        .map(|r| m.row(r).iter().zip(v).map(|(&a, &b)| a * b).sum())
        .collect()
}

/// Draws a full synthetic corpus. Deterministic per seed; the latent stream
/// for record index r of class y is shared across languages so that
/// σ_lang = σ_obs = 0 yields identical features under every tag.
pub fn generate_corpus(cfg: &GeneratorConfig) -> Result<Vec<SampleRecord>, DataError> {
    cfg.validate()?;
    let k = cfg.latent_dim;
    let mut shared_rng = SeededRng::new(mix_seed(cfg.seed, "generator-shared"));
    let u_raw = normal_vec(&mut shared_rng, k);
    let u_norm = u_raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: Vec<f64> = u_raw.iter().map(|v| v / u_norm).collect();
    let base_audio = mixing_matrix(&mut shared_rng, cfg.d_a, k);
    let base_text = mixing_matrix(&mut shared_rng, cfg.d_t, k);

    let mut records = Vec::new();
    for language in &cfg.languages {
        let mut lang_rng = SeededRng::new(mix_seed(cfg.seed, &format!("lang-{language}")));
        let audio_pert = mixing_matrix(&mut lang_rng, cfg.d_a, k);
        let text_pert = mixing_matrix(&mut lang_rng, cfg.d_t, k);
        let a_l = base_audio
            .add(&audio_pert.scale(cfg.language_perturbation))
            .expect("shapes match");
        let t_l = base_text
            .add(&text_pert.scale(cfg.language_perturbation))
            .expect("shapes match");
        let counts = cfg.counts_for(language);
        for (label, count, tag) in [(1u8, counts.hate, 'h'), (0u8, counts.nonhate, 'n')] {
            for r in 0..count {
                // latent depends on (class, index) only, never the language
                let mut z_rng = SeededRng::new(mix_seed(cfg.seed, &format!("z-{label}-{r}")));
                let mut z = normal_vec(&mut z_rng, k);
                if label == 1 {
                    for (zi, ui) in z.iter_mut().zip(&u) {
                        *zi += cfg.class_separation * ui;
                    }
                }
                let mut noise_rng = SeededRng::new(mix_seed(
                    cfg.seed,
                    &format!("noise-{language}-{label}-{r}"),
                ));
                let mut audio = mat_vec(&a_l, &z);
                for v in &mut audio {
                    *v += cfg.observation_noise * noise_rng.standard_normal();
                }
                let mut text = mat_vec(&t_l, &z);
                for v in &mut text {
                    *v += cfg.observation_noise * noise_rng.standard_normal();
                }
                let mut meta = BTreeMap::new();
                meta.insert("sample_rate_hz".to_string(), serde_json::json!(16000));
                records.push(SampleRecord {
                    id: format!("{language}-{tag}-{r:04}"),
                    language: language.clone(),
                    label,
                    split: Split::Train,
                    audio_features: audio,
                    text_features: text,
                    meta: Some(meta),
                });
            }
        }
    }
    let fraction = cfg.train_fraction;
    let records = split_by_ratio(records, fraction, mix_seed(cfg.seed, "split"));
    Ok(records)
}

fn validate_records(records: &[SampleRecord]) -> Result<(), DataError> {
    let mut dims: Option<(usize, usize)> = None;
    for rec in records {
        if rec.label > 1 {
            return Err(DataError::BadLabel {
                id: rec.id.clone(),
                label: rec.label,
            });
        }
        if rec.language.is_empty() {
            return Err(DataError::EmptyLanguage { id: rec.id.clone() });
        }
        match dims {
            None => dims = Some((rec.audio_features.len(), rec.text_features.len())),
            Some((d_a, d_t)) => {
                if rec.audio_features.len() != d_a {
                    return Err(DataError::InconsistentDims {
                        id: rec.id.clone(),
                        modality: "audio",
                        got: rec.audio_features.len(),
                        expected: d_a,
                    });
                }
                if rec.text_features.len() != d_t {
                    return Err(DataError::InconsistentDims {
                        id: rec.id.clone(),
                        modality: "text",
                        got: rec.text_features.len(),
                        expected: d_t,
                    });
                }
            }
        }
    }
    Ok(())
}

/// Writes records as JSON-lines (one record per line, UTF-8). Floats use
/// serde_json's shortest round-trip encoding, so write→load is lossless.
pub fn write_manifest(records: &[SampleRecord], path: &Path) -> Result<(), DataError> {
    validate_records(records)?;
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for rec in records {
        let line = serde_json::to_string(rec).expect("record serialization cannot fail");
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Loads a JSON-lines manifest, validating labels, language tags, and
/// corpus-wide feature dimensions. An empty file yields an empty corpus.
pub fn load_manifest(path: &Path) -> Result<Vec<SampleRecord>, DataError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SampleRecord =
            serde_json::from_str(&line).map_err(|source| DataError::Parse {
                line: idx + 1,
                source,
            })?;
        records.push(rec);
    }
    validate_records(&records)?;
    Ok(records)
}

/// Assigns splits within each (language, label) cell: a seeded shuffle sends
/// ⌊fraction·n⌉ records (round half up) to train and the rest to test.
pub fn split_by_ratio(
    mut records: Vec<SampleRecord>,
    train_fraction: f64,
    seed: u64,
) -> Vec<SampleRecord> {
    let mut cells: BTreeMap<(String, u8), Vec<usize>> = BTreeMap::new();
    for (i, rec) in records.iter().enumerate() {
        cells
            .entry((rec.language.clone(), rec.label))
            .or_default()
            .push(i);
    }
    for ((language, label), mut indices) in cells {
        let mut rng = SeededRng::new(mix_seed(seed, &format!("split-{language}-{label}")));
        rng.shuffle(&mut indices);
        let n_train = (train_fraction * indices.len() as f64 + 0.5).floor() as usize;
        for (pos, &i) in indices.iter().enumerate() {
            records[i].split = if pos < n_train { Split::Train } else { Split::Test };
        }
    }
    records
}

/// Filters records by language-set membership and split tag. Every tag named
/// in the sets must occur somewhere in the corpus.
pub fn select_language_set(
    records: &[SampleRecord],
    sets: &LanguageSets,
    which: SetChoice,
    split: Split,
) -> Result<Vec<SampleRecord>, DataError> {
    sets.validate()?;
    if !records.is_empty() {
        for tag in sets.set_a.iter().chain(&sets.set_b) {
            if !records.iter().any(|r| &r.language == tag) {
                return Err(DataError::UnknownLanguage { tag: tag.clone() });
            }
        }
    }
    let members = match which {
        SetChoice::A => &sets.set_a,
        SetChoice::B => &sets.set_b,
    };
    Ok(records
        .iter()
        .filter(|r| members.contains(&r.language) && r.split == split)
        .cloned()
        .collect())
}

/// Per-language hate/non-hate/total counts, for the generation summary table.
pub fn language_counts(records: &[SampleRecord]) -> BTreeMap<String, (usize, usize)> {
    let mut out: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for rec in records {
        let entry = out.entry(rec.language.clone()).or_insert((0, 0));
        if rec.label == 1 {
            entry.0 += 1;
        } else {
            entry.1 += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> GeneratorConfig {
        GeneratorConfig {
            languages: vec!["hi".into(), "ta".into()],
            default_counts: ClassCounts { hate: 6, nonhate: 4 },
            ..GeneratorConfig::default()
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = small_config();
        let a = generate_corpus(&cfg).unwrap();
        let b = generate_corpus(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn per_language_counts_respected() {
        let mut cfg = small_config();
        cfg.per_language_counts
            .insert("hi".into(), ClassCounts { hate: 3, nonhate: 2 });
        let recs = generate_corpus(&cfg).unwrap();
        let hi: Vec<_> = recs.iter().filter(|r| r.language == "hi").collect();
        assert_eq!(hi.len(), 5);
        assert_eq!(hi.iter().filter(|r| r.label == 1).count(), 3);
    }

    #[test]
    fn noiseless_high_separation_is_linearly_separable() {
        // project audio features onto A·u by brute-force threshold search on a
        // single generated feature dimension combination: with σ = 0 and a
        // large δ a one-dimensional threshold separates the classes.
        let cfg = GeneratorConfig {
            languages: vec!["hi".into()],
            default_counts: ClassCounts {
                hate: 40,
                nonhate: 40,
            },
            class_separation: 5.0,
            language_perturbation: 0.0,
            observation_noise: 0.0,
            ..GeneratorConfig::default()
        };
        let recs = generate_corpus(&cfg).unwrap();
        // brute-force: find the best threshold over the best single projection
        // direction estimated as difference of class means
        let d = recs[0].audio_features.len();
        let mut mean_pos = vec![0.0; d];
        let mut mean_neg = vec![0.0; d];
        let (mut n_pos, mut n_neg) = (0.0, 0.0);
        for r in &recs {
            let (m, n) = if r.label == 1 {
                (&mut mean_pos, &mut n_pos)
            } else {
                (&mut mean_neg, &mut n_neg)
            };
            *n += 1.0;
            for (mi, &f) in m.iter_mut().zip(&r.audio_features) {
                *mi += f;
            }
        }
        for v in &mut mean_pos {
            *v /= n_pos;
        }
        for v in &mut mean_neg {
            *v /= n_neg;
        }
        let dir: Vec<f64> = mean_pos.iter().zip(&mean_neg).map(|(a, b)| a - b).collect();
        let mut scored: Vec<(f64, u8)> = recs
            .iter()
            .map(|r| {
                let s: f64 = r.audio_features.iter().zip(&dir).map(|(a, b)| a * b).sum();
                (s, r.label)
            })
            .collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let best = scored
            .iter()
            .map(|&(t, _)| {
                scored
                    .iter()
                    .filter(|&&(s, y)| (s >= t) == (y == 1))
                    .count()
            })
            .max()
            .unwrap();
        assert_eq!(best, recs.len(), "expected perfect separation");
    }

    #[test]
    fn language_invariance_without_perturbation_or_noise() {
        let cfg = GeneratorConfig {
            languages: vec!["hi".into(), "ta".into()],
            default_counts: ClassCounts { hate: 5, nonhate: 5 },
            language_perturbation: 0.0,
            observation_noise: 0.0,
            ..GeneratorConfig::default()
        };
        let recs = generate_corpus(&cfg).unwrap();
        let hi: Vec<_> = recs.iter().filter(|r| r.language == "hi").collect();
        let ta: Vec<_> = recs.iter().filter(|r| r.language == "ta").collect();
        for (a, b) in hi.iter().zip(&ta) {
            assert_eq!(a.audio_features, b.audio_features);
            assert_eq!(a.text_features, b.text_features);
        }
    }

    #[test]
    fn manifest_round_trip_is_identity() {
        let cfg = small_config();
        let recs = generate_corpus(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        write_manifest(&recs, &path).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(recs, loaded);
    }

    #[test]
    fn manifest_rejects_bad_label_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            r#"{"id":"x","language":"hi","label":2,"split":"train","audio_features":[0.1],"text_features":[0.2]}"#,
        )
        .unwrap();
        match load_manifest(&path).unwrap_err() {
            DataError::BadLabel { id, label } => {
                assert_eq!(id, "x");
                assert_eq!(label, 2);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn manifest_rejects_unknown_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            r#"{"id":"x","language":"hi","label":1,"split":"train","audio_features":[0.1],"text_features":[0.2],"extra":1}"#,
        )
        .unwrap();
        assert!(matches!(
            load_manifest(&path).unwrap_err(),
            DataError::Parse { line: 1, .. }
        ));
    }

    #[test]
    fn manifest_rejects_inconsistent_dims_naming_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"id":"a","language":"hi","label":1,"split":"train","audio_features":[0.1,0.2],"text_features":[0.2]}"#,
                "\n",
                r#"{"id":"b","language":"hi","label":0,"split":"test","audio_features":[0.1],"text_features":[0.2]}"#,
            ),
        )
        .unwrap();
        match load_manifest(&path).unwrap_err() {
            DataError::InconsistentDims { id, .. } => assert_eq!(id, "b"),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn empty_manifest_is_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_manifest(&path).unwrap().is_empty());
    }

    #[test]
    fn split_counts_follow_round_half_up() {
        // exhaustive over cell sizes 1..50 at fraction 0.7
        for n in 1..=50usize {
            let records: Vec<SampleRecord> = (0..n)
                .map(|i| SampleRecord {
                    id: format!("r{i}"),
                    language: "hi".into(),
                    label: 1,
                    split: Split::Train,
                    audio_features: vec![0.0],
                    text_features: vec![0.0],
                    meta: None,
                })
                .collect();
            let split = split_by_ratio(records, 0.7, 9);
            let train = split.iter().filter(|r| r.split == Split::Train).count();
            let expected = (0.7 * n as f64 + 0.5).floor() as usize;
            assert_eq!(train, expected, "cell size {n}");
            assert_eq!(split.len(), n);
        }
    }

    #[test]
    fn split_is_deterministic_and_stratified() {
        let cfg = GeneratorConfig {
            languages: vec!["hi".into(), "ta".into()],
            default_counts: ClassCounts {
                hate: 10,
                nonhate: 10,
            },
            ..GeneratorConfig::default()
        };
        let recs = generate_corpus(&cfg).unwrap();
        let a = split_by_ratio(recs.clone(), 0.7, 5);
        let b = split_by_ratio(recs, 0.7, 5);
        assert_eq!(a, b);
        for lang in ["hi", "ta"] {
            for label in [0u8, 1] {
                let train = a
                    .iter()
                    .filter(|r| r.language == lang && r.label == label && r.split == Split::Train)
                    .count();
                assert_eq!(train, 7);
            }
        }
    }

    #[test]
    fn select_language_sets_follow_membership() {
        let cfg = GeneratorConfig {
            default_counts: ClassCounts { hate: 2, nonhate: 2 },
            ..GeneratorConfig::default()
        };
        let recs = generate_corpus(&cfg).unwrap();
        let sets = LanguageSets::default();
        let a = select_language_set(&recs, &sets, SetChoice::A, Split::Train).unwrap();
        assert!(a.iter().all(|r| ["mr", "bn", "ta"].contains(&r.language.as_str())));
        let b = select_language_set(&recs, &sets, SetChoice::B, Split::Train).unwrap();
        assert!(b.iter().all(|r| ["en", "hi", "te"].contains(&r.language.as_str())));
        // empty corpus → empty selection
        let empty = select_language_set(&[], &sets, SetChoice::A, Split::Test).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn select_rejects_unknown_language_tag() {
        let cfg = small_config(); // only hi and ta
        let recs = generate_corpus(&cfg).unwrap();
        let sets = LanguageSets {
            set_a: vec!["hi".into()],
            set_b: vec!["xx".into()],
        };
        assert!(matches!(
            select_language_set(&recs, &sets, SetChoice::A, Split::Train),
            Err(DataError::UnknownLanguage { tag }) if tag == "xx"
        ));
    }
}
