//! Analytic-vs-finite-difference verification harness covering every
//! differentiable component: MLPs at 1–3 layers under both activations, row
//! normalization, the contrastive loss, the triplet loss, BCE, the sigmoid
//! classifier, and the end-to-end encoder path.

use crate::contrastive::{pretrain_step_loss, supcon_loss, build_masks, ContrastiveConfig};
use crate::downstream::{bce_loss, classify, classify_backward, triplet_loss, Triplet};
use crate::encoder::{
    encode_normalized, encode_normalized_backward, forward, backward, init_mlp, Activation,
    MlpConfig, MlpParams,
};
use crate::tensor::{finite_diff_grad, grad_rel_err, row_l2_normalize, row_l2_normalize_backward,
    SeededRng,
};
use crate::Matrix;

pub const GRADCHECK_TOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckOutcome {
    pub component: String,
    pub max_rel_err: f64,
}

impl GradCheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_rel_err < GRADCHECK_TOL
    }
}

fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape fixed")
}

fn mlp_component(seed: u64, n_seeds: usize, hidden: &[usize], act: Activation) -> f64 {
    let cfg = MlpConfig {
        input_dim: 4,
        hidden_dims: hidden.to_vec(),
        output_dim: 3,
        activation: act,
        dropout_rate: 0.0,
        init_scale: 1.0,
    };
    let mut worst: f64 = 0.0;
    for s in 0..n_seeds as u64 {
        let mut rng = SeededRng::new(seed ^ (s.wrapping_mul(0x9e37)));
        let params = init_mlp(&cfg, &mut rng).expect("valid config");
        let x = random_matrix(&mut rng, 3, 4);
        let flat = params.flatten();
        let numeric = finite_diff_grad(
            |v| {
                let mut q = params.clone();
                q.unflatten_into(v);
                let (y, _) = forward(&q, &cfg, &x, false, &mut SeededRng::new(0)).unwrap();
                y.data().iter().map(|u| u.sin()).sum::<f64>()
            },
            &flat,
            FD_STEP,
        )
        .expect("finite objective");
        let (y, cache) = forward(&params, &cfg, &x, false, &mut SeededRng::new(0)).unwrap();
        let d_out = y.map(f64::cos);
        let (grads, _) = backward(&params, &cfg, &cache, &d_out).unwrap();
        let analytic = MlpParams {
            weights: grads.d_weights,
            biases: grads.d_biases,
        }
        .flatten();
        worst = worst.max(grad_rel_err(&analytic, &numeric));
    }
    worst
}

fn normalization_component(seed: u64, n_seeds: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..n_seeds as u64 {
        let mut rng = SeededRng::new(seed ^ (0xbeef + s));
        let data: Vec<f64> = (0..20).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let x = Matrix::from_vec(4, 5, data.clone()).unwrap();
        let numeric = finite_diff_grad(
            |v| {
                let m = Matrix::from_vec(4, 5, v.to_vec()).unwrap();
                let (y, _) = row_l2_normalize(&m, 1e-12);
                y.data().iter().map(|u| u.sin()).sum::<f64>()
            },
            &data,
            FD_STEP,
        )
        .unwrap();
        let (y, cache) = row_l2_normalize(&x, 1e-12);
        let d_out = y.map(f64::cos);
        let analytic = row_l2_normalize_backward(&cache, &d_out);
        worst = worst.max(grad_rel_err(analytic.data(), &numeric));
    }
    worst
}

fn supcon_component(seed: u64, n_seeds: usize, corrupt: bool) -> f64 {
    let cfg = ContrastiveConfig { temperature: 0.3 };
    let mut worst: f64 = 0.0;
    for s in 0..n_seeds as u64 {
        let mut rng = SeededRng::new(seed ^ (0xc0de + s));
        let n = 5;
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_index(2) as u8).collect();
        let masks = build_masks(&labels).unwrap();
        let data: Vec<f64> = (0..n * n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let sm = Matrix::from_vec(n, n, data.clone()).unwrap();
        let numeric = finite_diff_grad(
            |v| {
                let m = Matrix::from_vec(n, n, v.to_vec()).unwrap();
                supcon_loss(&m, &masks, &cfg).unwrap().0
            },
            &data,
            FD_STEP,
        )
        .unwrap();
        let (_, mut d_s) = supcon_loss(&sm, &masks, &cfg).unwrap();
        if corrupt {
            let v = d_s.get(0, 0);
            d_s.set(0, 0, v + 1e-2);
        }
        worst = worst.max(grad_rel_err(d_s.data(), &numeric));
    }
    worst
}

fn triplet_component(seed: u64, n_seeds: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..n_seeds as u64 {
        let mut rng = SeededRng::new(seed ^ (0x7a1 + s));
        let e_data: Vec<f64> = (0..24).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let e = Matrix::from_vec(8, 3, e_data.clone()).unwrap();
        let trips = [
            Triplet { anchor: 0, positive: 1, negative: 2 },
            Triplet { anchor: 3, positive: 4, negative: 5 },
            Triplet { anchor: 6, positive: 7, negative: 0 },
        ];
        let margin = 0.4;
        let numeric = finite_diff_grad(
            |v| {
                let m = Matrix::from_vec(8, 3, v.to_vec()).unwrap();
                triplet_loss(&m, &trips, margin).unwrap().0
            },
            &e_data,
            FD_STEP,
        )
        .unwrap();
        let (_, analytic) = triplet_loss(&e, &trips, margin).unwrap();
        worst = worst.max(grad_rel_err(analytic.data(), &numeric));
    }
    worst
}

fn bce_component(seed: u64, n_seeds: usize) -> f64 {
    let mut worst: f64 = 0.0;
    for s in 0..n_seeds as u64 {
        let mut rng = SeededRng::new(seed ^ (0xb0e + s));
        let n = 6;
        let y: Vec<u8> = (0..n).map(|_| rng.gen_index(2) as u8).collect();
        let p: Vec<f64> = (0..n).map(|_| rng.uniform(0.05, 0.95)).collect();
        let numeric = finite_diff_grad(|v| bce_loss(v, &y).unwrap().0, &p, 1e-7).unwrap();
        let (_, analytic) = bce_loss(&p, &y).unwrap();
        worst = worst.max(grad_rel_err(&analytic, &numeric));
    }
    worst
}

fn classifier_component(seed: u64, n_seeds: usize) -> f64 {
    let cfg = MlpConfig {
        input_dim: 6,
        hidden_dims: vec![4],
        output_dim: 1,
        activation: Activation::Tanh,
        dropout_rate: 0.0,
        init_scale: 1.0,
    };
    let mut worst: f64 = 0.0;
    for s in 0..n_seeds as u64 {
        let mut rng = SeededRng::new(seed ^ (0xc1a5 + s));
        let params = init_mlp(&cfg, &mut rng).unwrap();
        let x = random_matrix(&mut rng, 4, 6);
        let y: Vec<u8> = (0..4).map(|_| rng.gen_index(2) as u8).collect();
        let flat = params.flatten();
        let numeric = finite_diff_grad(
            |v| {
                let mut q = params.clone();
                q.unflatten_into(v);
                let (probs, _) = classify(&q, &cfg, &x).unwrap();
                bce_loss(&probs, &y).unwrap().0
            },
            &flat,
            FD_STEP,
        )
        .unwrap();
        let (probs, cache) = classify(&params, &cfg, &x).unwrap();
        let (_, d_probs) = bce_loss(&probs, &y).unwrap();
        let (grads, _) = classify_backward(&params, &cfg, &cache, &d_probs).unwrap();
        let analytic = MlpParams {
            weights: grads.d_weights,
            biases: grads.d_biases,
        }
        .flatten();
        worst = worst.max(grad_rel_err(&analytic, &numeric));
    }
    worst
}

/// Gradient of the full stage-1 path (encoder → normalization → contrastive
/// loss) with respect to one encoder's parameters.
fn end_to_end_component(seed: u64, n_seeds: usize) -> f64 {
    let cfg = MlpConfig {
        input_dim: 5,
        hidden_dims: vec![6],
        output_dim: 4,
        activation: Activation::Tanh,
        dropout_rate: 0.0,
        init_scale: 1.0,
    };
    let ccfg = ContrastiveConfig { temperature: 0.2 };
    let mut worst: f64 = 0.0;
    for s in 0..n_seeds as u64 {
        let mut rng = SeededRng::new(seed ^ (0xe2e + s));
        let audio_params = init_mlp(&cfg, &mut rng).unwrap();
        let text_params = init_mlp(&cfg, &mut rng).unwrap();
        let audio_x = random_matrix(&mut rng, 4, 5);
        let text_x = random_matrix(&mut rng, 4, 5);
        let labels: Vec<u8> = (0..4).map(|_| rng.gen_index(2) as u8).collect();
        let (et_hat, _) =
            encode_normalized(&text_params, &cfg, &text_x, false, &mut SeededRng::new(0)).unwrap();
        let flat = audio_params.flatten();
        let numeric = finite_diff_grad(
            |v| {
                let mut q = audio_params.clone();
                q.unflatten_into(v);
                let (ea_hat, _) =
                    encode_normalized(&q, &cfg, &audio_x, false, &mut SeededRng::new(0)).unwrap();
                pretrain_step_loss(&ea_hat, &et_hat, &labels, &ccfg).unwrap().0
            },
            &flat,
            FD_STEP,
        )
        .unwrap();
        let (ea_hat, cache) =
            encode_normalized(&audio_params, &cfg, &audio_x, false, &mut SeededRng::new(0)).unwrap();
        let (_, d_ea, _) = pretrain_step_loss(&ea_hat, &et_hat, &labels, &ccfg).unwrap();
        let (grads, _) = encode_normalized_backward(&audio_params, &cfg, &cache, &d_ea).unwrap();
        let analytic = MlpParams {
            weights: grads.d_weights,
            biases: grads.d_biases,
        }
        .flatten();
        worst = worst.max(grad_rel_err(&analytic, &numeric));
    }
    worst
}

/// Runs the full check table. `corrupt` deliberately perturbs the contrastive
/// gradient; it exists as a negative control for the CLI exit path.
pub fn run_gradcheck(seed: u64, n_seeds: usize, corrupt: bool) -> Vec<GradCheckOutcome> {
    let mut out = Vec::new();
    for (name, hidden) in [
        ("mlp_1_layer", vec![]),
        ("mlp_2_layer", vec![6]),
        ("mlp_3_layer", vec![6, 5]),
    ] {
        for act in [Activation::Tanh, Activation::Relu] {
            let suffix = match act {
                Activation::Tanh => "tanh",
                Activation::Relu => "relu",
            };
            out.push(GradCheckOutcome {
                component: format!("{name}_{suffix}"),
                max_rel_err: mlp_component(seed, n_seeds, &hidden, act),
            });
        }
    }
    out.push(GradCheckOutcome {
        component: "row_normalization".into(),
        max_rel_err: normalization_component(seed, n_seeds),
    });
    out.push(GradCheckOutcome {
        component: "supcon_loss".into(),
        max_rel_err: supcon_component(seed, n_seeds, corrupt),
    });
    out.push(GradCheckOutcome {
        component: "triplet_loss".into(),
        max_rel_err: triplet_component(seed, n_seeds),
    });
    out.push(GradCheckOutcome {
        component: "bce_loss".into(),
        max_rel_err: bce_component(seed, n_seeds),
    });
    out.push(GradCheckOutcome {
        component: "classifier".into(),
        max_rel_err: classifier_component(seed, n_seeds),
    });
    out.push(GradCheckOutcome {
        component: "encoder_contrastive_end_to_end".into(),
        max_rel_err: end_to_end_component(seed, n_seeds),
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_table_passes() {
        let outcomes = run_gradcheck(1234, 3, false);
        assert!(outcomes.len() >= 6);
        for o in &outcomes {
            assert!(o.passed(), "{} rel err {}", o.component, o.max_rel_err);
        }
    }

    #[test]
    fn corruption_is_detected() {
        let outcomes = run_gradcheck(1234, 2, true);
        let supcon = outcomes.iter().find(|o| o.component == "supcon_loss").unwrap();
        assert!(!supcon.passed());
    }
}
