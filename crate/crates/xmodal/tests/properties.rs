//! Randomized invariants over the numeric kernels and metrics.

use proptest::prelude::*;

use xmodal::contrastive::build_masks;
use xmodal::evalkit::{accuracy, eer, f1, roc_auc, ScoredSample};
use xmodal::tensor::row_l2_normalize;
use xmodal::Matrix;

fn scored(scores: &[f64], labels: &[bool]) -> Vec<ScoredSample> {
    scores
        .iter()
        .zip(labels)
        .map(|(&score, &label)| ScoredSample {
            score,
            label: label as u8,
            language: "xx".to_string(),
        })
        .collect()
}

proptest! {
    #[test]
    fn normalized_rows_have_unit_norm(
        rows in 1usize..6,
        cols in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut rng = xmodal::SeededRng::new(seed);
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-10.0, 10.0)).collect();
        let x = Matrix::from_vec(rows, cols, data).unwrap();
        let (y, _) = row_l2_normalize(&x, 1e-12);
        for r in 0..rows {
            let norm: f64 = y.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            // rows drawn from uniform(-10, 10) are never degenerate at 1e-12
            prop_assert!((norm - 1.0).abs() < 1e-9, "row {r} norm {norm}");
        }
    }

    #[test]
    fn mask_partition_holds_for_any_labels(labels in prop::collection::vec(0u8..2, 1..12)) {
        let masks = build_masks(&labels).unwrap();
        let n = labels.len();
        for i in 0..n {
            for j in 0..n {
                prop_assert_eq!(masks.m_pos.get(i, j) + masks.m_neg.get(i, j), 1.0);
                prop_assert_eq!(masks.m_pos.get(i, j), masks.m_pos.get(j, i));
            }
        }
    }

    #[test]
    fn metrics_stay_in_unit_interval_and_auc_is_rank_invariant(
        scores in prop::collection::vec(0.0f64..1.0, 2..40),
        flips in prop::collection::vec(any::<bool>(), 2..40),
    ) {
        let n = scores.len().min(flips.len());
        let mut labels = flips[..n].to_vec();
        // force both classes
        labels[0] = true;
        labels[n - 1] = false;
        let samples = scored(&scores[..n], &labels);

        for value in [
            accuracy(&samples, 0.5).unwrap(),
            f1(&samples, 0.5).unwrap(),
            roc_auc(&samples).unwrap(),
            eer(&samples).unwrap(),
        ] {
            prop_assert!((0.0..=1.0).contains(&value), "metric {value} out of range");
        }

        // strictly increasing transform of the scores preserves ranking
        let warped: Vec<f64> = scores[..n].iter().map(|s| (3.0 * s + 1.0).exp()).collect();
        let warped_samples = scored(&warped, &labels);
        let auc = roc_auc(&samples).unwrap();
        let auc_warped = roc_auc(&warped_samples).unwrap();
        prop_assert!((auc - auc_warped).abs() < 1e-12);
    }
}
