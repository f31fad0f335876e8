use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sktkit::backend::{BackendError, BackendKind};

mod cmd;
mod config;
mod io;

/// Bad invocation: missing inputs, conflicting flags, unreadable config.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "sktkit", version, about = "Sanskrit corpus processing, multitask sample generation and evaluation")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random choice (overrides config and SKTKIT_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CorpusArgs {
    /// CoNLL-U files or directories; `-` reads stdin.
    #[arg(short = 'c', long = "corpus", value_name = "PATH")]
    pub corpus: Vec<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct OutputArgs {
    /// Output file; stdout if omitted or `-`.
    #[arg(short, long, value_name = "FILE")]
    pub output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate CoNLL-U input, merge it into one corpus and report statistics.
    Ingest {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        out: OutputArgs,
        /// Where to write the per-category statistics (default stderr).
        #[arg(long, value_name = "FILE")]
        stats: Option<PathBuf>,
        /// Keep multiword-token and empty-node lines.
        #[arg(long)]
        preserve_special: bool,
    },
    /// Transliterate between IAST, SLP1 and Devanagari.
    Translit {
        #[arg(long, default_value = "iast")]
        from: String,
        #[arg(long)]
        to: String,
        /// Text to convert; lines from stdin if absent.
        text: Vec<String>,
    },
    /// Build a tag codebook from corpus frequencies.
    BuildCodebook {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        out: OutputArgs,
        #[arg(long, default_value = sktkit::tagcodec::DEFAULT_ALPHABET)]
        alphabet: String,
    },
    /// Replace tags (one or more per line) with their codes.
    EncodeTags {
        #[arg(long, value_name = "FILE")]
        codebook: Option<PathBuf>,
        input: Option<PathBuf>,
    },
    /// Replace codes (one or more per line) with their tags.
    DecodeTags {
        #[arg(long, value_name = "FILE")]
        codebook: Option<PathBuf>,
        input: Option<PathBuf>,
    },
    /// Sandhi synthesis and analysis.
    Sandhi {
        /// Rule table (default: built-in).
        #[arg(long, value_name = "FILE", global = true)]
        rules: Option<PathBuf>,
        #[command(subcommand)]
        op: SandhiOp,
    },
    /// Generate task samples (source<TAB>target).
    MakeSamples(MakeSamples),
    /// Pack sentences into pseudo-paragraphs.
    MakeParagraphs {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        out: OutputArgs,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Split a corpus into train, dev and test.
    MakeSplits(MakeSplits),
    /// Dependency trees as samples and back.
    Dep {
        #[command(subcommand)]
        op: DepOp,
    },
    /// Run sample sources through a model backend.
    Predict(Predict),
    /// Score predictions against gold samples.
    Evaluate(Evaluate),
    /// Write a synthetic corpus in CoNLL-U.
    GenCorpus {
        #[command(flatten)]
        out: OutputArgs,
        #[arg(long, default_value_t = 40)]
        texts: usize,
        #[arg(long, default_value_t = 50)]
        min_sentences: usize,
        #[arg(long, default_value_t = 400)]
        max_sentences: usize,
    },
}

#[derive(Subcommand, Debug)]
enum SandhiOp {
    /// Join words with sandhi.
    Synth { words: Vec<String> },
    /// List word pairs that produce the text at a junction.
    Analyze {
        text: String,
        /// Character offset of the junction; all offsets if absent.
        #[arg(long)]
        position: Option<usize>,
    },
    /// Check that words re-synthesize to the text.
    Validate {
        #[arg(long)]
        text: String,
        words: Vec<String>,
    },
}

#[derive(Args, Debug)]
pub struct MakeSamples {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[command(flatten)]
    pub out: OutputArgs,
    /// Task combinations such as S, LM, SLM (repeatable or comma separated).
    #[arg(long, value_delimiter = ',')]
    pub tasks: Vec<String>,
    /// Pseudo-paragraph units instead of sentences.
    #[arg(long)]
    pub paragraphs: bool,
    /// Leave out units that contain reconstructed forms.
    #[arg(long)]
    pub no_reconstructed: bool,
    #[arg(long, value_name = "FILE")]
    pub codebook: Option<PathBuf>,
    #[arg(long)]
    pub joiner: Option<char>,
    #[arg(long)]
    pub budget: Option<usize>,
    /// Noisy<TAB>clean pairs for OCR correction samples.
    #[arg(long, value_name = "FILE")]
    pub ocr_pairs: Option<PathBuf>,
    /// Rule table for the segmentation consistency check.
    #[arg(long, value_name = "FILE")]
    pub rules: Option<PathBuf>,
    /// Omit the `#` header line.
    #[arg(long)]
    pub no_header: bool,
}

#[derive(Args, Debug)]
pub struct MakeSplits {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub dev: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
    /// Keep texts whose text_id starts with this out of dev/test (repeatable).
    #[arg(long, value_name = "PREFIX")]
    pub exclude_text: Vec<String>,
    /// Directory for train/dev/test.conllu and manifest.tsv.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
    /// Manifest output when no directory is given (default stdout).
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
    /// Rebuild the splits recorded in a manifest.
    #[arg(long, value_name = "FILE")]
    pub replay: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FeatureArg {
    None,
    All,
}

#[derive(Subcommand, Debug)]
enum DepOp {
    /// Trees to dep-v1 samples.
    Linearize {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        out: OutputArgs,
        #[arg(long, value_enum, default_value_t = FeatureArg::None)]
        features: FeatureArg,
        /// Tag codebook (needed with --features all).
        #[arg(long, value_name = "FILE")]
        codebook: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        label_codebook: Option<PathBuf>,
        /// Add concatenations of up to K sentences (training data only).
        #[arg(long, value_name = "K", default_value_t = 0)]
        augment: usize,
        /// Replace POS and features of mantra sentences.
        #[arg(long)]
        mask_mantras: bool,
    },
    /// Predictions (source<TAB>target) back to CoNLL-U trees.
    Delinearize {
        input: Option<PathBuf>,
        #[command(flatten)]
        out: OutputArgs,
        #[arg(long, value_enum, default_value_t = FeatureArg::None)]
        features: FeatureArg,
        #[arg(long, value_name = "FILE")]
        label_codebook: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct Predict {
    /// Sample file; only the source column is used.
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutputArgs,
    #[arg(long)]
    pub backend: Option<BackendKind>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub oracle_table: Option<PathBuf>,
    #[arg(long)]
    pub max_in_flight: Option<usize>,
    #[arg(long)]
    pub timeout_ms: Option<u64>,
}

#[derive(Args, Debug)]
pub struct Evaluate {
    /// Gold samples (source<TAB>target).
    #[arg(long, value_name = "FILE")]
    pub gold: PathBuf,
    /// Predictions (source<TAB>prediction), line-aligned with the gold file.
    #[arg(long, value_name = "FILE")]
    pub pred: PathBuf,
    /// Write the categorized difference listing here (`-` for stdout).
    #[arg(long, value_name = "FILE")]
    pub diff_report: Option<PathBuf>,
    /// Emit JSON instead of text.
    #[arg(long)]
    pub json: bool,
    /// Compare strings exactly for perfect match.
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long)]
    pub joiner: Option<char>,
    #[command(flatten)]
    pub out: OutputArgs,
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if cause.is::<BackendError>() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cmd::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
