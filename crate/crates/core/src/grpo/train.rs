//! Training loop: sample a group per step, score through the extraction
//! reward, and ascend the clipped surrogate with analytic softmax gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::reward::{MatchMetric, RewardWeights};

use super::env::ToyEnvironment;
use super::policy::{softmax, SampledSequence, ToyPolicy};
use super::{grpo_objective, group_advantages, kl_k3, GrpoConfig};

/// Frozen per-step sampling context: sequences with their behavior and
/// reference log-probs and group advantages.
#[derive(Debug, Clone)]
pub struct GroupSamples {
    pub prompt: usize,
    pub sequences: Vec<SampledSequence>,
    pub logp_old: Vec<f64>,
    pub logp_ref: Vec<f64>,
    pub advantages: Vec<f64>,
}

/// Gradient of the objective w.r.t. one prompt's parameters.
#[derive(Debug, Clone)]
pub struct PolicyGradient {
    /// [slot][template]
    pub slot: Vec<Vec<f64>>,
    /// [answer token]
    pub answer: Vec<f64>,
}

/// Evaluates the clipped surrogate objective for an arbitrary policy against
/// frozen samples.
pub fn objective_for_policy(
    policy: &ToyPolicy,
    samples: &GroupSamples,
    config: &GrpoConfig,
) -> Result<f64> {
    let logp_new: Vec<f64> = samples
        .sequences
        .iter()
        .map(|seq| policy.sequence_logprob(samples.prompt, seq))
        .collect::<Result<_>>()?;
    grpo_objective(
        &logp_new,
        &samples.logp_old,
        &samples.logp_ref,
        &samples.advantages,
        config,
    )
}

/// Analytic gradient of `objective_for_policy` w.r.t. the sampled prompt's
/// slot and answer logits.
pub fn objective_gradient(
    policy: &ToyPolicy,
    samples: &GroupSamples,
    config: &GrpoConfig,
) -> Result<PolicyGradient> {
    let prompt = samples.prompt;
    let slots = &policy.slot_logits[prompt];
    let answers = &policy.answer_logits[prompt];
    let g = samples.sequences.len() as f64;

    let slot_probs: Vec<Vec<f64>> = slots.iter().map(|l| softmax(l)).collect();
    let answer_probs = softmax(answers);

    let mut grad = PolicyGradient {
        slot: slots.iter().map(|l| vec![0.0; l.len()]).collect(),
        answer: vec![0.0; answers.len()],
    };

    for (i, seq) in samples.sequences.iter().enumerate() {
        let logp_new = policy.sequence_logprob(prompt, seq)?;
        let rho = (logp_new - samples.logp_old[i]).exp();
        let a = samples.advantages[i];
        let clipped = rho.clamp(1.0 - config.epsilon, 1.0 + config.epsilon_high);
        // d/dL of min(rho*A, clip(rho)*A): zero when the clipped branch is
        // active and saturated, rho*A otherwise.
        let min_branch = rho * a <= clipped * a;
        let in_region = (1.0 - config.epsilon..=1.0 + config.epsilon_high).contains(&rho);
        let pg_coef = if min_branch || in_region { rho * a } else { 0.0 };
        // d/dL of -beta * k3 = -beta * (1 - exp(logp_ref - logp_new))
        let r = (samples.logp_ref[i] - logp_new).exp();
        let coef = (pg_coef - config.beta * (1.0 - r)) / g;

        for (slot_idx, &template) in seq.templates.iter().enumerate() {
            for (v, p) in slot_probs[slot_idx].iter().enumerate() {
                let indicator = if v == template { 1.0 } else { 0.0 };
                grad.slot[slot_idx][v] += coef * (indicator - p);
            }
        }
        for (v, p) in answer_probs.iter().enumerate() {
            let indicator = if v == seq.answer { 1.0 } else { 0.0 };
            grad.answer[v] += coef * (indicator - p);
        }
    }
    Ok(grad)
}

/// Draws the G-sample group for one step from the old-policy snapshot, with
/// one RNG stream per (seed, step, sample).
#[allow(clippy::too_many_arguments)]
pub fn sample_group(
    env: &ToyEnvironment,
    policy_old: &ToyPolicy,
    policy_ref: &ToyPolicy,
    prompt: usize,
    step: usize,
    config: &GrpoConfig,
    weights: RewardWeights,
    metric: MatchMetric,
) -> Result<(GroupSamples, Vec<crate::reward::RewardBreakdown>)> {
    let mut sequences = Vec::with_capacity(config.group_size);
    let mut rewards = Vec::with_capacity(config.group_size);
    let mut breakdowns = Vec::with_capacity(config.group_size);
    for i in 0..config.group_size {
        let stream = config
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add((step as u64).wrapping_mul(0x2545_F491_4F6C_DD1D))
            .wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        let seq = policy_old.sample(prompt, &mut rng);
        let breakdown = env.score(prompt, &seq, weights, metric);
        rewards.push(breakdown.total);
        breakdowns.push(breakdown);
        sequences.push(seq);
    }
    let advantages = group_advantages(&rewards)?;
    let logp_old: Vec<f64> = sequences
        .iter()
        .map(|s| policy_old.sequence_logprob(prompt, s))
        .collect::<Result<_>>()?;
    let logp_ref: Vec<f64> = sequences
        .iter()
        .map(|s| policy_ref.sequence_logprob(prompt, s))
        .collect::<Result<_>>()?;
    Ok((
        GroupSamples {
            prompt,
            sequences,
            logp_old,
            logp_ref,
            advantages,
        },
        breakdowns,
    ))
}

/// One row of the training trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub reward_mean: f64,
    pub r_ans: f64,
    pub r_ent: f64,
    pub r_rel: f64,
    pub kl_mean: f64,
}

/// Runs GRPO over the toy environment: round-robin prompts, one gradient
/// ascent step per group. The reference policy is the initial policy.
pub fn train(
    env: &ToyEnvironment,
    policy: &mut ToyPolicy,
    weights: RewardWeights,
    metric: MatchMetric,
    config: &GrpoConfig,
) -> Result<Vec<TrajectoryPoint>> {
    let policy_ref = policy.clone();
    let mut trajectory = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let prompt = step % env.prompts.len();
        let policy_old = policy.clone();
        let (samples, breakdowns) = sample_group(
            env, &policy_old, &policy_ref, prompt, step, config, weights, metric,
        )?;
        let grad = objective_gradient(policy, &samples, config)?;

        let g = config.group_size as f64;
        let kl_mean = samples
            .sequences
            .iter()
            .zip(&samples.logp_ref)
            .map(|(seq, &lref)| {
                kl_k3(policy.sequence_logprob(prompt, seq).unwrap_or(f64::NAN), lref)
            })
            .sum::<f64>()
            / g;

        for (slot, gslot) in policy.slot_logits[prompt].iter_mut().zip(&grad.slot) {
            for (w, dw) in slot.iter_mut().zip(gslot) {
                *w += config.learning_rate * dw;
            }
        }
        for (w, dw) in policy.answer_logits[prompt].iter_mut().zip(&grad.answer) {
            *w += config.learning_rate * dw;
        }
        if !policy.is_finite() {
            return Err(Error::NonFiniteGradient {
                step,
                detail: "policy parameters became non-finite after update".to_string(),
            });
        }

        trajectory.push(TrajectoryPoint {
            step,
            reward_mean: breakdowns.iter().map(|b| b.total).sum::<f64>() / g,
            r_ans: breakdowns.iter().map(|b| b.r_ans).sum::<f64>() / g,
            r_ent: breakdowns.iter().map(|b| b.r_ent).sum::<f64>() / g,
            r_rel: breakdowns.iter().map(|b| b.r_rel).sum::<f64>() / g,
            kl_mean,
        });
    }
    Ok(trajectory)
}
