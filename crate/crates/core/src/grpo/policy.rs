//! Tabular categorical sequence policy over a fixed template vocabulary.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sampled output: a template index per statement slot plus one answer
/// token index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampledSequence {
    pub templates: Vec<usize>,
    pub answer: usize,
}

/// Per-prompt logits over templates (one row per statement slot) and over
/// answer tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    /// [prompt][slot][template]
    pub slot_logits: Vec<Vec<Vec<f64>>>,
    /// [prompt][answer token]
    pub answer_logits: Vec<Vec<f64>>,
}

pub(crate) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|l| l - log_sum).collect()
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).iter().map(|l| l.exp()).collect()
}

fn sample_categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

impl ToyPolicy {
    /// Uniform policy: all logits zero.
    pub fn uniform(prompts: usize, slots: usize, templates: usize, answers: usize) -> Self {
        ToyPolicy {
            slot_logits: vec![vec![vec![0.0; templates]; slots]; prompts],
            answer_logits: vec![vec![0.0; answers]; prompts],
        }
    }

    pub fn num_prompts(&self) -> usize {
        self.slot_logits.len()
    }

    pub fn num_slots(&self) -> usize {
        self.slot_logits.first().map_or(0, |s| s.len())
    }

    pub fn num_templates(&self) -> usize {
        self.slot_logits
            .first()
            .and_then(|s| s.first())
            .map_or(0, |t| t.len())
    }

    pub fn num_answers(&self) -> usize {
        self.answer_logits.first().map_or(0, |a| a.len())
    }

    /// Total log-probability of a sequence: sum of per-slot log-softmax terms
    /// plus the answer term.
    pub fn sequence_logprob(&self, prompt: usize, sequence: &SampledSequence) -> Result<f64> {
        let slots = self
            .slot_logits
            .get(prompt)
            .ok_or_else(|| Error::UnknownToken(format!("prompt {prompt}")))?;
        if sequence.templates.len() != slots.len() {
            return Err(Error::LengthMismatch {
                expected: slots.len(),
                got: sequence.templates.len(),
            });
        }
        let mut total = 0.0;
        for (slot, &template) in slots.iter().zip(&sequence.templates) {
            if template >= slot.len() {
                return Err(Error::UnknownToken(format!("template {template}")));
            }
            total += log_softmax(slot)[template];
        }
        let answers = &self.answer_logits[prompt];
        if sequence.answer >= answers.len() {
            return Err(Error::UnknownToken(format!("answer {}", sequence.answer)));
        }
        total += log_softmax(answers)[sequence.answer];
        Ok(total)
    }

    pub fn sample<R: Rng>(&self, prompt: usize, rng: &mut R) -> SampledSequence {
        let templates = self.slot_logits[prompt]
            .iter()
            .map(|slot| sample_categorical(rng, &softmax(slot)))
            .collect();
        let answer = sample_categorical(rng, &softmax(&self.answer_logits[prompt]));
        SampledSequence { templates, answer }
    }

    pub fn is_finite(&self) -> bool {
        self.slot_logits
            .iter()
            .flatten()
            .flatten()
            .chain(self.answer_logits.iter().flatten())
            .all(|v| v.is_finite())
    }
}
