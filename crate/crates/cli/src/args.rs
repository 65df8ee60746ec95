use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "drskit",
    version,
    about = "Parse, check, score and analyse clause-format DRSs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: Global,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Output format
    #[arg(long, global = true, value_enum, default_value_t = Format::Text, env = "DRSKIT_FORMAT")]
    pub format: Format,
    /// Worker threads for document-level work; 1 keeps runs reproducible
    #[arg(long, global = true, default_value_t = 1, env = "DRSKIT_JOBS")]
    pub jobs: usize,
    /// Seed for every random choice (matching restarts, training, sampling)
    #[arg(long, global = true, env = "DRSKIT_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Tsv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a clause file and print it in normalized form
    Parse(ParseArgs),
    /// Check well-formedness; exits 1 when any document is ill-formed
    Validate(ValidateArgs),
    /// Score predictions against gold
    Score(ScoreArgs),
    /// Train a parser and write a checkpoint
    Train(TrainArgs),
    /// Parse sentences with a trained checkpoint
    Predict(PredictArgs),
    /// Compare systems over several runs
    Jury(JuryArgs),
    /// Build the target vocabulary of a corpus
    Vocab(VocabArgs),
}

#[derive(Debug, Args)]
pub struct ParseArgs {
    /// Clause file ("-" for stdin)
    #[arg(env = "DRSKIT_INPUT")]
    pub input: PathBuf,
    /// Replace unparsable documents by flagged placeholders instead of stopping
    #[arg(long, env = "DRSKIT_KEEP_GOING")]
    pub keep_going: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Clause file ("-" for stdin)
    #[arg(env = "DRSKIT_INPUT")]
    pub input: PathBuf,
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Hill-climbing restarts per document
    #[arg(long, default_value_t = 100, env = "DRSKIT_RESTARTS")]
    pub restarts: usize,
    /// Let any word sense match any other
    #[arg(long, env = "DRSKIT_DEFAULT_SENSE")]
    pub default_sense: bool,
    /// Score ill-formed predictions like any other instead of giving them zero
    #[arg(long, env = "DRSKIT_NO_VALIDATE")]
    pub no_validate: bool,
    /// Majority senses as `lemma<TAB>sense` lines, for the infrequent-sense score
    #[arg(long, env = "DRSKIT_SENSES", conflicts_with = "train_corpus")]
    pub senses: Option<PathBuf>,
    /// Training corpus to read majority senses from
    #[arg(long = "train-corpus", env = "DRSKIT_TRAIN_CORPUS")]
    pub train_corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, env = "DRSKIT_PRED")]
    pub pred: PathBuf,
    #[arg(long, env = "DRSKIT_GOLD")]
    pub gold: PathBuf,
    #[command(flatten)]
    pub matching: MatchArgs,
    /// Add per-category scores
    #[arg(long, env = "DRSKIT_DETAILED")]
    pub detailed: bool,
    /// Add one line per document
    #[arg(long, env = "DRSKIT_PER_DOC")]
    pub per_doc: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleKind {
    /// Gold and silver, then gold
    Standard,
    /// Silver and bronze, then silver
    NoGold,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Model configuration (`key = value` lines)
    #[arg(long, env = "DRSKIT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Configuration overrides, applied after the file
    #[arg(long = "set", value_name = "KEY=VALUE", env = "DRSKIT_SET", value_delimiter = ';')]
    pub overrides: Vec<String>,
    #[arg(long, env = "DRSKIT_GOLD")]
    pub gold: Option<PathBuf>,
    #[arg(long, env = "DRSKIT_SILVER")]
    pub silver: Option<PathBuf>,
    #[arg(long, env = "DRSKIT_BRONZE")]
    pub bronze: Option<PathBuf>,
    /// Held-out documents scored after every epoch
    #[arg(long, env = "DRSKIT_DEV")]
    pub dev: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScheduleKind::Standard, env = "DRSKIT_SCHEDULE")]
    pub schedule: ScheduleKind,
    /// Tag files attached to every corpus by document id
    #[arg(long = "tags", env = "DRSKIT_TAGS", value_delimiter = ',')]
    pub tags: Vec<PathBuf>,
    /// Pretrained embeddings for the file channel
    #[arg(long, env = "DRSKIT_EMBEDDINGS")]
    pub embeddings: Option<PathBuf>,
    /// Checkpoint to write
    #[arg(long, short, env = "DRSKIT_OUTPUT")]
    pub output: PathBuf,
    /// Training log (defaults to stdout)
    #[arg(long, env = "DRSKIT_LOG")]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputKind {
    /// One whitespace-tokenized sentence per line
    Sentences,
    /// Clause file; the `% sentence` comment of each document is parsed
    Drs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, env = "DRSKIT_MODEL")]
    pub model: PathBuf,
    #[arg(long, env = "DRSKIT_INPUT")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = InputKind::Sentences, env = "DRSKIT_INPUT_KIND")]
    pub input_kind: InputKind,
    /// Tag files for the model's tag channels
    #[arg(long = "tags", env = "DRSKIT_TAGS", value_delimiter = ',')]
    pub tags: Vec<PathBuf>,
    /// Beam width (defaults to the model configuration)
    #[arg(long, env = "DRSKIT_BEAM")]
    pub beam: Option<usize>,
    #[arg(long, env = "DRSKIT_MAX_STEPS")]
    pub max_steps: Option<usize>,
    #[arg(long, short, env = "DRSKIT_OUTPUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct JuryArgs {
    #[arg(long, env = "DRSKIT_GOLD")]
    pub gold: PathBuf,
    /// `NAME=RUN1,RUN2,...`; repeat for every system
    #[arg(long = "system", required = true, env = "DRSKIT_SYSTEM", value_delimiter = ';')]
    pub systems: Vec<String>,
    /// System the others are compared with (defaults to the first)
    #[arg(long, env = "DRSKIT_BASELINE")]
    pub baseline: Option<String>,
    #[command(flatten)]
    pub matching: MatchArgs,
    /// Tag file with a `sem` channel for the phenomenon subsets
    #[arg(long, env = "DRSKIT_SEMTAGS")]
    pub semtags: Option<PathBuf>,
    /// Phenomenon catalog (`name<TAB>TAG TAG ...`); defaults to the built-in one
    #[arg(long, env = "DRSKIT_CATALOG")]
    pub catalog: Option<PathBuf>,
    /// Lower edges of the length bins, in tokens
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 10, 15, 20, 30], env = "DRSKIT_BINS")]
    pub bins: Vec<usize>,
    /// Write the length table as CSV
    #[arg(long, env = "DRSKIT_LENGTH_CSV")]
    pub length_csv: Option<PathBuf>,
    /// Documents listed in each ranking
    #[arg(long, default_value_t = 10, env = "DRSKIT_RANK")]
    pub rank: usize,
    /// Randomization samples when there are too many documents to enumerate
    #[arg(long, default_value_t = 1000, env = "DRSKIT_SAMPLES")]
    pub samples: usize,
    #[arg(long, default_value_t = 0.05, env = "DRSKIT_ALPHA")]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct VocabArgs {
    /// Clause file ("-" for stdin)
    #[arg(env = "DRSKIT_INPUT")]
    pub input: PathBuf,
    /// Symbols seen fewer times map to the unknown symbol
    #[arg(long, default_value_t = 3, env = "DRSKIT_MIN_OCC")]
    pub min_occ: usize,
    #[arg(long, short, env = "DRSKIT_OUTPUT")]
    pub output: Option<PathBuf>,
}
