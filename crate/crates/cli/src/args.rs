use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "mia-harness",
    version,
    about = "Membership-inference evaluation pipeline for language models"
)]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate member and nonmember Q&A pools from a template grammar.
    Gen(GenArgs),
    /// Draw a class-balanced benchmark from member and nonmember pools.
    Balance(BalanceArgs),
    /// Train the n-gram target model.
    Train(TrainArgs),
    /// Score Q&A pairs into per-token log-probabilities with step moments.
    Logprobs(LogprobsArgs),
    /// Produce rule-based paraphrases.
    Paraphrase(ParaphraseArgs),
    /// Run one attack over scored examples.
    Attack(AttackArgs),
    /// Turn score files into AUC / TPR@FPR reports and ROC points.
    Evaluate(EvaluateArgs),
    /// Cosine similarity between originals and their paraphrases.
    Similarity(SimilarityArgs),
    /// Run the whole pipeline from one config file.
    E2e(E2eArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    /// Grammar TOML file, or `builtin:clinical`.
    #[arg(long)]
    pub grammar: String,
    /// Examples per class.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub members_out: PathBuf,
    #[arg(long)]
    pub nonmembers_out: PathBuf,
    /// Draw members and nonmembers from complementary filler halves.
    #[arg(long)]
    pub disjoint: bool,
    /// Size of an extra background corpus for training.
    #[arg(long, default_value_t = 0)]
    pub background: usize,
    #[arg(long)]
    pub background_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BalanceArgs {
    #[arg(long)]
    pub members: PathBuf,
    #[arg(long)]
    pub nonmembers: PathBuf,
    /// Examples drawn per class.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub members: PathBuf,
    #[arg(long)]
    pub background: Option<PathBuf>,
    #[arg(long, default_value_t = mia_core::ngram::DEFAULT_ORDER)]
    pub order: usize,
    #[arg(long, default_value_t = mia_core::ngram::DEFAULT_LAMBDA, allow_negative_numbers = true)]
    pub lambda: f64,
    /// Count multiplier for member documents.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub boost: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct LogprobsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ParaphraseArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Lexicon file (`surface<TAB>sub1|sub2`); the built-in clinical
    /// lexicon when omitted.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = mia_core::paraphrase::DEFAULT_MAX_SUBSTITUTIONS_FRACTION)]
    pub max_fraction: f64,
    #[arg(long, default_value_t = mia_core::paraphrase::DEFAULT_FIDELITY_FLOOR)]
    pub fidelity_floor: f64,
    /// Paraphrase records (one line per original).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every variant as a Q&A record, ready for `logprobs`.
    #[arg(long)]
    pub variants_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AttackArgs {
    /// loss, para_loss, mink or minkpp.
    #[arg(long)]
    pub method: String,
    /// Tokenized examples to score.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Tokenized paraphrase variants (required for para_loss).
    #[arg(long)]
    pub paraphrase_logprobs: Option<PathBuf>,
    /// Paraphrase records, used to know how many variants each example has.
    #[arg(long)]
    pub paraphrases: Option<PathBuf>,
    /// Fraction of tokens kept by mink and minkpp.
    #[arg(long)]
    pub k: Option<f64>,
    /// Token span for mink and minkpp: answer or full.
    #[arg(long, default_value = "answer")]
    pub span: String,
    /// require_all or use_available.
    #[arg(long, default_value = "use_available")]
    pub policy: String,
    #[arg(long, default_value_t = mia_core::attacks::DEFAULT_SIGMA_FLOOR)]
    pub sigma_floor: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub scores: Vec<PathBuf>,
    /// Comma-separated FPR targets; empty for an AUC-only table.
    #[arg(long, default_value = "0.01,0.1")]
    pub fprs: String,
    /// Tokenized examples, for per-class mean NLL in the JSON report.
    #[arg(long)]
    pub logprobs: Option<PathBuf>,
    /// Output stem; writes STEM.md, STEM.csv and STEM.json.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory for one ROC point CSV per score file.
    #[arg(long)]
    pub roc_dir: Option<PathBuf>,
    /// linear or loglog.
    #[arg(long, default_value = "loglog")]
    pub roc_scale: String,
}

#[derive(Debug, Clone, Args)]
pub struct SimilarityArgs {
    #[arg(long)]
    pub paraphrases: PathBuf,
    /// Q&A file holding the originals and their labels.
    #[arg(long)]
    pub labels: PathBuf,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Markdown table path.
    #[arg(long)]
    pub markdown: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct E2eArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `out_dir` from the config.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `target.boost` from the config.
    #[arg(long)]
    pub boost: Option<f64>,
}
