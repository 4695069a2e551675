//! Group-relative policy optimization at desk scale: the advantage, clipped
//! surrogate, and KL math, plus a tabular softmax policy and a synthetic
//! environment that close the loop through the extraction reward.

mod env;
mod policy;
mod train;

pub use env::{PromptSpec, Template, ToyEnvironment};
pub use policy::{SampledSequence, ToyPolicy};
pub use train::{
    objective_for_policy, objective_gradient, sample_group, train, GroupSamples, PolicyGradient,
    TrajectoryPoint,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub beta: f64,
    pub epsilon: f64,
    pub epsilon_high: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        // lr is scaled up for the tabular policy; the rest follow the
        // reference RL hyperparameters.
        GrpoConfig {
            group_size: 8,
            beta: 0.5,
            epsilon: 0.2,
            epsilon_high: 0.28,
            learning_rate: 0.1,
            steps: 1000,
            seed: 0,
        }
    }
}

/// Normalizes rewards within a group: A_i = (R_i - mean) / pop_std.
/// Degenerate groups (pop std < 1e-8) yield all-zero advantages.
pub fn group_advantages(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-8 {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// The k3 KL estimator r - log r - 1 with r = pi_ref / pi_new, evaluated in
/// log space: exp_m1(d) - d with d = logp_ref - logp_new.
pub fn kl_k3(logp_new: f64, logp_ref: f64) -> f64 {
    let d = logp_ref - logp_new;
    d.exp_m1() - d
}

/// The clipped surrogate objective (to maximize):
/// (1/G) sum_i [ min(rho_i A_i, clip(rho_i, 1-eps, 1+eps_high) A_i)
///              - beta * k3(logp_new_i, logp_ref_i) ].
pub fn grpo_objective(
    logp_new: &[f64],
    logp_old: &[f64],
    logp_ref: &[f64],
    advantages: &[f64],
    config: &GrpoConfig,
) -> Result<f64> {
    let g = logp_new.len();
    for other in [logp_old.len(), logp_ref.len(), advantages.len()] {
        if other != g {
            return Err(Error::LengthMismatch {
                expected: g,
                got: other,
            });
        }
    }
    let mut total = 0.0;
    for i in 0..g {
        let rho = (logp_new[i] - logp_old[i]).exp();
        let clipped = rho.clamp(1.0 - config.epsilon, 1.0 + config.epsilon_high);
        let surrogate = (rho * advantages[i]).min(clipped * advantages[i]);
        total += surrogate - config.beta * kl_k3(logp_new[i], logp_ref[i]);
    }
    Ok(total / g as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn advantages_degenerate_group() {
        let a = group_advantages(&[1.0; 8]).unwrap();
        assert_eq!(a, vec![0.0; 8]);
    }

    #[test]
    fn advantages_hand_values() {
        let a = group_advantages(&[0.0, 1.0]).unwrap();
        assert_eq!(a, vec![-1.0, 1.0]);

        let a = group_advantages(&[0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let sqrt7 = 7.0f64.sqrt();
        assert!((a[0] + sqrt7).abs() < 1e-9);
        for v in &a[1..] {
            assert!((v - 1.0 / sqrt7).abs() < 1e-9);
        }
    }

    #[test]
    fn advantages_too_small() {
        assert!(matches!(group_advantages(&[1.0]), Err(Error::GroupTooSmall(1))));
    }

    #[test]
    fn kl_spot_values() {
        assert_eq!(kl_k3(-1.0, -1.0), 0.0);
        // r = 2
        let v = kl_k3(-1.0, -1.0 + 2.0f64.ln());
        assert!((v - (1.0 - 2.0f64.ln())).abs() < 1e-12);
        // r = 0.5
        let v = kl_k3(-1.0, -1.0 + 0.5f64.ln());
        assert!((v - (2.0f64.ln() - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn objective_hand_values() {
        let cfg = GrpoConfig {
            beta: 0.0,
            ..GrpoConfig::default()
        };
        // rho = 1, A = 1
        let v = grpo_objective(&[-1.0], &[-1.0], &[-1.0], &[1.0], &cfg).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        // rho = 1.5 clipped to 1.28
        let v = grpo_objective(&[1.5f64.ln()], &[0.0], &[0.0], &[1.0], &cfg).unwrap();
        assert!((v - 1.28).abs() < 1e-12);
        // rho = 0.5, A = -1: min(-0.5, -0.8) = -0.8
        let v = grpo_objective(&[0.5f64.ln()], &[0.0], &[0.0], &[-1.0], &cfg).unwrap();
        assert!((v + 0.8).abs() < 1e-12);
    }

    #[test]
    fn objective_length_mismatch() {
        let cfg = GrpoConfig::default();
        assert!(matches!(
            grpo_objective(&[0.0, 0.0], &[0.0], &[0.0, 0.0], &[1.0, 1.0], &cfg),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn kl_nonnegative_random() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let logp_new = rng.gen_range(-10.0..0.0);
            let logp_ref = rng.gen_range(-10.0..0.0);
            let v = kl_k3(logp_new, logp_ref);
            assert!(v >= 0.0);
            if (logp_new - logp_ref).abs() > 1e-6 {
                assert!(v > 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn advantages_normalized(rewards in prop::collection::vec(0.0f64..2.0, 2..16)) {
            let a = group_advantages(&rewards).unwrap();
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            let var = a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let input_mean = rewards.iter().sum::<f64>() / n;
            let input_std =
                (rewards.iter().map(|x| (x - input_mean).powi(2)).sum::<f64>() / n).sqrt();
            if input_std >= 1e-8 {
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((var.sqrt() - 1.0).abs() < 1e-6);
            } else {
                prop_assert!(a.iter().all(|&x| x == 0.0));
            }
        }

        #[test]
        fn objective_unclipped_near_one(
            deltas in prop::collection::vec(-0.1f64..0.1, 4),
            advantages in prop::collection::vec(-2.0f64..2.0, 4),
        ) {
            let cfg = GrpoConfig { beta: 0.0, ..GrpoConfig::default() };
            let logp_old = vec![-1.0; 4];
            // |rho - 1| stays under min(eps, eps_high) = 0.2 for |d| < 0.1
            let logp_new: Vec<f64> = deltas.iter().map(|d| -1.0 + d).collect();
            let logp_ref = logp_old.clone();
            let v = grpo_objective(&logp_new, &logp_old, &logp_ref, &advantages, &cfg).unwrap();
            let unclipped: f64 = logp_new
                .iter()
                .zip(&logp_old)
                .zip(&advantages)
                .map(|((n, o), a)| (n - o).exp() * a)
                .sum::<f64>()
                / 4.0;
            prop_assert!((v - unclipped).abs() < 1e-9);
        }
    }
}
