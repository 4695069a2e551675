use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use kgrl::{cli, RunConfig};

#[derive(Parser)]
#[command(name = "kgrl", version, about = "Knowledge-graph reward engine, hard-example miner, and toy GRPO trainer")]
struct Cli {
    /// Optional TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every stochastic component.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct InputArgs {
    /// Corpus JSONL path.
    #[arg(long)]
    corpus: Option<PathBuf>,

    /// Candidate responses JSONL path.
    #[arg(long)]
    candidates: Option<PathBuf>,

    /// Entity lexicon JSONL (defaults to the bundled lexicon).
    #[arg(long)]
    lexicon: Option<PathBuf>,

    /// Relation pattern JSONL (defaults to the bundled patterns).
    #[arg(long)]
    patterns: Option<PathBuf>,

    /// Pre-extracted triplet sidecar JSONL; overrides pattern extraction
    /// for the generated side.
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Args, Default)]
struct RewardArgs {
    /// Answer / entity / relation weights, e.g. `1.0,0.5,0.5`.
    #[arg(long, value_parser = parse_weights)]
    weights: Option<(f64, f64, f64)>,

    /// Set-match metric: jaccard | f1 | precision | recall.
    #[arg(long)]
    metric: Option<String>,
}

fn parse_weights(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated weights, got {s:?}"));
    }
    let mut w = [0.0f64; 3];
    for (slot, part) in w.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|e| format!("bad weight {part:?}: {e}"))?;
    }
    Ok((w[0], w[1], w[2]))
}

#[derive(Subcommand)]
enum Command {
    /// Extract knowledge graphs from reference (and candidate) reasoning.
    Extract {
        #[command(flatten)]
        inputs: InputArgs,
    },
    /// Score candidate responses with the composite reward.
    Score {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        reward: RewardArgs,
    },
    /// Mine hard examples and retrieve similar records.
    Mine {
        #[command(flatten)]
        inputs: InputArgs,
        /// Embedding sidecar JSONL keyed by record id.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Stratified sampling fraction.
        #[arg(long)]
        gamma: Option<f64>,
        /// Normalized log-probability threshold for low confidence.
        #[arg(long)]
        sigma: Option<f64>,
        /// Retrieval depth per hard example (0 disables retrieval).
        #[arg(long)]
        topk: Option<usize>,
    },
    /// Train the toy policy with GRPO on the bundled environment.
    Train {
        #[command(flatten)]
        reward: RewardArgs,
        /// Number of optimization steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Rollouts per group.
        #[arg(long)]
        group_size: Option<usize>,
        /// KL penalty coefficient.
        #[arg(long)]
        beta: Option<f64>,
        /// Lower clip range.
        #[arg(long)]
        eps: Option<f64>,
        /// Upper clip range.
        #[arg(long)]
        eps_high: Option<f64>,
        /// Learning rate.
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Produce a corpus-level evaluation report.
    Eval {
        #[command(flatten)]
        inputs: InputArgs,
        /// Node-alignment similarity threshold.
        #[arg(long)]
        align_threshold: Option<f64>,
        /// Number of top subgraphs for structural coverage.
        #[arg(long)]
        scs_k: Option<usize>,
        /// Minimum triplet frequency for the miss-rate table.
        #[arg(long)]
        min_frequency: Option<usize>,
    },
}

impl InputArgs {
    fn apply(self, config: &mut RunConfig) {
        let InputArgs {
            corpus,
            candidates,
            lexicon,
            patterns,
            sidecar,
        } = self;
        config.corpus = corpus.or(config.corpus.take());
        config.candidates = candidates.or(config.candidates.take());
        config.lexicon = lexicon.or(config.lexicon.take());
        config.patterns = patterns.or(config.patterns.take());
        config.sidecar = sidecar.or(config.sidecar.take());
    }
}

impl RewardArgs {
    fn apply(self, config: &mut RunConfig) {
        if let Some((w_ans, w_ent, w_rel)) = self.weights {
            config.w_ans = Some(w_ans);
            config.w_ent = Some(w_ent);
            config.w_rel = Some(w_rel);
        }
        config.metric = self.metric.or(config.metric.take());
    }
}

fn run(cli: Cli) -> kgrl::Result<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    if cli.out.is_some() {
        config.out = cli.out;
    }

    match cli.command {
        Command::Extract { inputs } => {
            inputs.apply(&mut config);
            cli::cmd_extract(&config)
        }
        Command::Score { inputs, reward } => {
            inputs.apply(&mut config);
            reward.apply(&mut config);
            cli::cmd_score(&config)
        }
        Command::Mine {
            inputs,
            embeddings,
            gamma,
            sigma,
            topk,
        } => {
            inputs.apply(&mut config);
            config.embeddings = embeddings.or(config.embeddings.take());
            config.gamma = gamma.or(config.gamma);
            config.sigma = sigma.or(config.sigma);
            config.top_k = topk.or(config.top_k);
            cli::cmd_mine(&config)
        }
        Command::Train {
            reward,
            steps,
            group_size,
            beta,
            eps,
            eps_high,
            lr,
        } => {
            reward.apply(&mut config);
            config.steps = steps.or(config.steps);
            config.group_size = group_size.or(config.group_size);
            config.beta = beta.or(config.beta);
            config.eps = eps.or(config.eps);
            config.eps_high = eps_high.or(config.eps_high);
            config.lr = lr.or(config.lr);
            cli::cmd_train(&config)
        }
        Command::Eval {
            inputs,
            align_threshold,
            scs_k,
            min_frequency,
        } => {
            inputs.apply(&mut config);
            config.align_threshold = align_threshold.or(config.align_threshold);
            config.scs_k = scs_k.or(config.scs_k);
            config.min_frequency = min_frequency.or(config.min_frequency);
            cli::cmd_eval(&config)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Machine-readable error on stderr so callers can branch on `kind`.
            let payload = serde_json::json!({
                "error": err.kind(),
                "message": err.to_string(),
            });
            eprintln!("{payload}");
            ExitCode::FAILURE
        }
    }
}
