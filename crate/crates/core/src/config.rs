//! Flat run configuration: one key-value file, command-line overrides, and
//! a single seed that propagates to every stochastic component.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grpo::GrpoConfig;
use crate::kgraph::DEFAULT_ALIGN_THRESHOLD;
use crate::mining::MiningConfig;
use crate::reward::{MatchMetric, RewardWeights};

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub patterns: Option<PathBuf>,
    pub sidecar: Option<PathBuf>,
    pub out: Option<PathBuf>,

    pub w_ans: Option<f64>,
    pub w_ent: Option<f64>,
    pub w_rel: Option<f64>,
    pub metric: Option<String>,

    pub gamma: Option<f64>,
    pub sigma: Option<f64>,
    pub top_k: Option<usize>,

    pub steps: Option<usize>,
    pub group_size: Option<usize>,
    pub beta: Option<f64>,
    pub eps: Option<f64>,
    pub eps_high: Option<f64>,
    pub lr: Option<f64>,

    pub align_threshold: Option<f64>,
    pub scs_k: Option<usize>,
    pub min_frequency: Option<usize>,

    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&content).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Overlays `other` on top of self: any value set in `other` wins.
    pub fn merged_with(mut self, other: RunConfig) -> RunConfig {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if other.$field.is_some() { self.$field = other.$field; })*
            };
        }
        take!(
            corpus, candidates, embeddings, lexicon, patterns, sidecar, out, w_ans, w_ent,
            w_rel, metric, gamma, sigma, top_k, steps, group_size, beta, eps, eps_high, lr,
            align_threshold, scs_k, min_frequency, seed
        );
        self
    }

    pub fn weights(&self) -> RewardWeights {
        let default = RewardWeights::default();
        RewardWeights {
            w_ans: self.w_ans.unwrap_or(default.w_ans),
            w_ent: self.w_ent.unwrap_or(default.w_ent),
            w_rel: self.w_rel.unwrap_or(default.w_rel),
        }
    }

    pub fn match_metric(&self) -> Result<MatchMetric> {
        match &self.metric {
            None => Ok(MatchMetric::Jaccard),
            Some(s) => MatchMetric::parse(s)
                .ok_or_else(|| Error::Config(format!("unknown match metric {s:?}"))),
        }
    }

    pub fn grpo_config(&self) -> GrpoConfig {
        let default = GrpoConfig::default();
        GrpoConfig {
            group_size: self.group_size.unwrap_or(default.group_size),
            beta: self.beta.unwrap_or(default.beta),
            epsilon: self.eps.unwrap_or(default.epsilon),
            epsilon_high: self.eps_high.unwrap_or(default.epsilon_high),
            learning_rate: self.lr.unwrap_or(default.learning_rate),
            steps: self.steps.unwrap_or(default.steps),
            seed: self.seed.unwrap_or(default.seed),
        }
    }

    pub fn mining_config(&self) -> MiningConfig {
        let default = MiningConfig::default();
        MiningConfig {
            gamma: self.gamma.unwrap_or(default.gamma),
            sigma: self.sigma.unwrap_or(default.sigma),
            top_k: self.top_k.unwrap_or(default.top_k),
            seed: self.seed.unwrap_or(default.seed),
        }
    }

    pub fn align_threshold(&self) -> f64 {
        self.align_threshold.unwrap_or(DEFAULT_ALIGN_THRESHOLD)
    }

    pub fn require(&self, field: &str) -> Result<&Path> {
        let value = match field {
            "corpus" => &self.corpus,
            "candidates" => &self.candidates,
            "out" => &self.out,
            other => return Err(Error::Config(format!("unknown required field {other:?}"))),
        };
        let path = value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("missing required setting `{field}`")))?;
        Ok(path)
    }

    /// Checks that every referenced input path exists before any output is
    /// written.
    pub fn validate_inputs(&self) -> Result<()> {
        for (name, path) in [
            ("corpus", &self.corpus),
            ("candidates", &self.candidates),
            ("embeddings", &self.embeddings),
            ("lexicon", &self.lexicon),
            ("patterns", &self.patterns),
            ("sidecar", &self.sidecar),
        ] {
            if let Some(p) = path {
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "{name} path {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }
}
