//! Command-line surface.

use std::path::PathBuf;

use blanc_core::model::{ContextReduction, EncoderConfig, SoftmaxDomain, TrainConfig};
use blanc_core::metrics::OccurrenceRule;
use blanc_core::numerics::Stencil;
use blanc_core::SoftLabelConfig;
use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "blanc", version, about = "Context-aware answer span extraction: data, training and evaluation")]
pub struct Cli {
    /// Print only a JSON summary on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Base directory for relative input paths.
    #[arg(long, global = true, env = "BLANC_DATA_DIR", value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// More logging on stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic multi-mention dataset as JSONL.
    GenSynth(GenSynthArgs),
    /// Write soft context labels for every example.
    Label(LabelArgs),
    /// Train a model; writes a checkpoint and a per-epoch loss log.
    Train(TrainArgs),
    /// Score a checkpoint or a predictions file against a test set.
    Eval(EvalArgs),
    /// Split HotpotQA records into passages holding one supporting fact each.
    CurateHotpot(CurateArgs),
    /// Zero-shot supporting-fact accuracy on curated passages.
    SfEval(SfEvalArgs),
    /// Train and evaluate one model per (lambda, seed) cell.
    SweepLambda(SweepArgs),
    /// Compare analytic gradients with finite differences on a toy model.
    Gradcheck(GradcheckArgs),
    /// Re-run a recorded command and verify its outputs byte for byte.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReductionArg {
    Sum,
    Mean,
}

impl From<ReductionArg> for ContextReduction {
    fn from(r: ReductionArg) -> Self {
        match r {
            ReductionArg::Sum => ContextReduction::Sum,
            ReductionArg::Mean => ContextReduction::Mean,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OccurrenceRuleArg {
    /// Normalized token sequences.
    Tokens,
    /// Case-folded substrings of the raw text.
    Raw,
}

impl From<OccurrenceRuleArg> for OccurrenceRule {
    fn from(r: OccurrenceRuleArg) -> Self {
        match r {
            OccurrenceRuleArg::Tokens => OccurrenceRule::Tokens,
            OccurrenceRuleArg::Raw => OccurrenceRule::Raw,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SoftmaxDomainArg {
    Passage,
    All,
}

impl From<SoftmaxDomainArg> for SoftmaxDomain {
    fn from(d: SoftmaxDomainArg) -> Self {
        match d {
            SoftmaxDomainArg::Passage => SoftmaxDomain::Passage,
            SoftmaxDomainArg::All => SoftmaxDomain::All,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StencilArg {
    Central2,
    Central4,
}

impl From<StencilArg> for Stencil {
    fn from(s: StencilArg) -> Self {
        match s {
            StencilArg::Central2 => Stencil::Central2,
            StencilArg::Central4 => Stencil::Central4,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    /// Number of examples.
    #[arg(long)]
    pub n: Option<usize>,
    /// Probabilities of 1, 2, ... mentions (at most 6 values; missing ones are 0).
    #[arg(long, value_delimiter = ',')]
    pub mention_dist: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Shortest passage, in tokens.
    #[arg(long)]
    pub min_len: Option<usize>,
    /// Longest passage, in tokens.
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub min_answer_len: Option<usize>,
    #[arg(long)]
    pub max_answer_len: Option<usize>,
    /// Filler vocabulary size.
    #[arg(long)]
    pub filler_vocab: Option<usize>,
    #[arg(long)]
    pub keyword_vocab: Option<usize>,
    #[arg(long)]
    pub entity_vocab: Option<usize>,
    /// Keywords on each side of every mention.
    #[arg(long)]
    pub context_words: Option<usize>,
    /// Chance that a distractor frame borrows one question keyword.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Decay ratio per token of distance from the answer.
    #[arg(long)]
    pub q: Option<f64>,
    /// Labeled tokens on each side of the answer.
    #[arg(long)]
    pub window: Option<usize>,
}

/// Transformer shape; unset values fall back to the library defaults.
#[derive(Clone, Debug, Args)]
pub struct EncoderArgs {
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    /// Feed-forward inner width.
    #[arg(long)]
    pub ffn: Option<usize>,
    /// Longest input: question, separator and passage.
    #[arg(long = "max-seq-len")]
    pub max_seq_len: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Positions the context-boundary softmax ranges over.
    #[arg(long = "softmax-domain", value_enum)]
    pub softmax_domain: Option<SoftmaxDomainArg>,
}

impl EncoderArgs {
    pub fn resolve(&self, seed: u64) -> EncoderConfig {
        let d = EncoderConfig::default();
        EncoderConfig {
            vocab_size: d.vocab_size,
            hidden: self.hidden.unwrap_or(d.hidden),
            layers: self.layers.unwrap_or(d.layers),
            heads: self.heads.unwrap_or(d.heads),
            ffn: self.ffn.unwrap_or(d.ffn),
            max_len: self.max_seq_len.unwrap_or(d.max_len),
            dropout: self.dropout.unwrap_or(d.dropout),
            context_softmax: self.softmax_domain.map_or(d.context_softmax, Into::into),
            seed,
        }
    }
}

/// Optimization and labeling flags shared by `train` and `sweep-lambda`.
#[derive(Clone, Debug, Args)]
pub struct TrainingArgs {
    /// Soft-label decay ratio.
    #[arg(long)]
    pub q: Option<f64>,
    /// Soft-label window in tokens per side.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Longest span considered when decoding.
    #[arg(long)]
    pub max_answer_len: Option<usize>,
    /// How per-token context losses combine within an example.
    #[arg(long, value_enum)]
    pub context_reduction: Option<ReductionArg>,
}

impl TrainingArgs {
    pub fn resolve(&self, lambda: Option<f64>, seed: u64) -> CliResult<TrainConfig> {
        let d = TrainConfig::default();
        let soft_label = SoftLabelConfig::new(self.q.unwrap_or(d.soft_label.q), self.window.unwrap_or(d.soft_label.window))?;
        let mut optimizer = d.optimizer;
        if let Some(lr) = self.lr {
            optimizer.learning_rate = lr;
        }
        let cfg = TrainConfig {
            lambda: lambda.unwrap_or(d.lambda),
            soft_label,
            optimizer,
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            epochs: self.epochs.unwrap_or(d.epochs),
            seed,
            max_answer_len: self.max_answer_len.unwrap_or(d.max_answer_len),
            context_reduction: self.context_reduction.map(Into::into).unwrap_or(d.context_reduction),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    /// Held-out set scored after every epoch.
    #[arg(long, conflicts_with = "dev_split")]
    pub dev: Option<PathBuf>,
    /// Carve a dev set of this fraction out of the training file instead.
    #[arg(long)]
    pub dev_split: Option<f64>,
    /// Receives `model.ckpt`, `epochs.jsonl` and `manifest.json`.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Weight of the context loss.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, required_unless_present = "predictions", conflicts_with = "predictions")]
    pub ckpt: Option<PathBuf>,
    /// Prediction JSONL to score instead of running a model.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub test: PathBuf,
    /// Add per-bucket rows for answer occurrence counts 1, 2, 3, 4 and 5+.
    #[arg(long)]
    pub bucket_by_occurrence: bool,
    /// How answer occurrences are counted for the buckets.
    #[arg(long, value_enum, default_value_t = OccurrenceRuleArg::Tokens)]
    pub occurrence_rule: OccurrenceRuleArg,
    /// Report JSON path.
    #[arg(long)]
    pub report: PathBuf,
    /// Metrics CSV path (defaults to the report path with a `.csv` extension).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Also write the model's predictions as JSONL.
    #[arg(long, requires = "ckpt")]
    pub predictions_out: Option<PathBuf>,
    #[arg(long)]
    pub max_answer_len: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct CurateArgs {
    /// HotpotQA JSON (distractor setting).
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SfEvalArgs {
    /// Curated JSONL from `curate-hotpot`.
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    #[arg(long, required_unless_present = "predictions", conflicts_with = "predictions")]
    pub ckpt: Option<PathBuf>,
    /// Prediction JSONL with character spans.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub max_answer_len: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Context-loss weights to try.
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Seeds to try for every weight.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Cells trained concurrently.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Result CSV path.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub training: TrainingArgs,
    #[command(flatten)]
    pub encoder: EncoderArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 8)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 16)]
    pub ffn: usize,
    /// Sequence length of each random example.
    #[arg(long, default_value_t = 12)]
    pub tokens: usize,
    #[arg(long, default_value_t = 4)]
    pub question_len: usize,
    #[arg(long, default_value_t = 20)]
    pub vocab_size: usize,
    /// Random examples averaged into the loss.
    #[arg(long, default_value_t = 1)]
    pub examples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,0.8,1")]
    pub lambdas: Vec<f64>,
    #[arg(long, default_value_t = 3e-3)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    #[arg(long, value_enum, default_value_t = StencilArg::Central4)]
    pub stencil: StencilArg,
    #[arg(long, value_enum, default_value_t = ReductionArg::Sum)]
    pub context_reduction: ReductionArg,
    #[arg(long = "softmax-domain", value_enum, default_value_t = SoftmaxDomainArg::Passage)]
    pub softmax_domain: SoftmaxDomainArg,
    /// Only check these parameters (exact names, or prefixes ending in `.`).
    #[arg(long, value_delimiter = ',')]
    pub params: Vec<String>,
    #[arg(long)]
    pub report: PathBuf,
    /// Adds this offset to every analytic gradient (negative control).
    #[arg(long, hide = true)]
    pub corrupt_grad: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}
