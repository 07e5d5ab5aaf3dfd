use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use kgmasd::datafactory::Theme;
use kgmasd::CONFIG_SCHEMA_VERSION;
use tracing_subscriber::EnvFilter;

mod commands;
mod theory;

/// Knowledge-graph multi-agent distillation: pipeline and theory lab.
#[derive(Debug, Parser)]
#[command(name = "kgmasd")]
struct Cli {
    /// JSON pipeline config; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for every random choice a subcommand makes.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split documents into topic segments.
    Segment(SegmentArgs),
    /// Run the agent loop over segments and collect verified triples.
    Extract(ExtractArgs),
    /// Turn verified triples into RTE and KGC samples.
    Distill(DistillArgs),
    /// Theme-stratified train/test/val split.
    Split(SplitArgs),
    /// Theme histogram of a sample file.
    Stats(StatsArgs),
    /// BLEU-4 and ROUGE of predictions against references.
    Eval(EvalArgs),
    /// CSV export for human review.
    Audit(AuditArgs),
    /// Numerical checks of the supporting theory.
    #[command(subcommand)]
    Theory(TheoryCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmbedKind {
    Offline,
    Http,
}

#[derive(Debug, Args)]
struct EmbedFlags {
    /// Embedding provider.
    #[arg(long, value_enum)]
    embed: Option<EmbedKind>,
    /// Base URL of the embedding service.
    #[arg(long, value_name = "URL")]
    embed_url: Option<String>,
}

#[derive(Debug, Args)]
struct BackendFlags {
    /// `http` or `scripted:<path>`.
    #[arg(long, value_name = "SPEC")]
    backend: Option<String>,
    /// Base URL of the chat service.
    #[arg(long, value_name = "URL")]
    llm_url: Option<String>,
    /// Directory of `<role>.txt` prompt templates.
    #[arg(long, value_name = "DIR")]
    prompts_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    /// Documents as JSONL `{"id", "text"}` or `{"id", "sentences"}`.
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    #[command(flatten)]
    embed: EmbedFlags,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    min_sentences: Option<usize>,
    #[arg(long)]
    max_tokens: Option<usize>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Segments JSONL from `segment`.
    #[arg(long = "segments", alias = "in", value_name = "PATH")]
    segments: PathBuf,
    #[arg(long, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Global graph JSONL used to prime path retrieval.
    #[arg(long, value_name = "PATH")]
    gkg: Option<PathBuf>,
    /// One session over all segments with this query instead of one per document.
    #[arg(long)]
    query: Option<String>,
    #[arg(long)]
    max_iterations: Option<u32>,
    #[arg(long)]
    hop_limit: Option<usize>,
    #[command(flatten)]
    backend: BackendFlags,
}

#[derive(Debug, Args)]
struct DistillArgs {
    /// Verified triples JSONL from `extract`.
    #[arg(long, value_name = "PATH")]
    triples: PathBuf,
    #[arg(long, value_name = "PATH")]
    segments: PathBuf,
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Theme stamped on every generated sample.
    #[arg(long, default_value = "Unlabeled")]
    theme: Theme,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// train,test,val
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.6015, 0.1972, 0.2013])]
    ratios: Vec<f64>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    /// Also write the report here.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    pred: PathBuf,
    #[arg(long = "ref", value_name = "PATH")]
    reference: PathBuf,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum TheoryCommand {
    /// Prior-quality index of a joint table, optionally after garbling.
    Gamma(GammaArgs),
    /// SGD on a strongly convex quadratic against the error-floor bound.
    Sgd(SgdArgs),
    /// Controllability and closed-loop simulation of an agent topology.
    Control(ControlArgs),
}

#[derive(Debug, Args)]
struct GammaArgs {
    /// `{"p": [[...]]}` or a bare matrix, rows indexed by label.
    #[arg(long, value_name = "PATH")]
    joint: PathBuf,
    /// `{"k": [[...]]}` or a bare row-stochastic matrix.
    #[arg(long, value_name = "PATH")]
    kernel: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SgdArgs {
    #[arg(long)]
    gamma: f64,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 1000)]
    seeds: usize,
    #[arg(long, default_value_t = 5)]
    dim: usize,
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    #[arg(long = "l-smooth", default_value_t = 2.0)]
    l_smooth: f64,
    /// Step size; defaults to 1/L.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    sigma0_sq: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ControlArgs {
    /// workflow, star, path, complete, or a JSON file.
    #[arg(long, default_value = "workflow")]
    topology: String,
    #[arg(long, default_value_t = 0.01)]
    dt: f64,
    #[arg(long, default_value_t = 4000)]
    steps: usize,
    /// Initial state; defaults to all ones.
    #[arg(long, value_delimiter = ',')]
    x0: Option<Vec<f64>>,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

fn version() -> &'static str {
    let v = format!("{} (config schema {CONFIG_SCHEMA_VERSION})", env!("CARGO_PKG_VERSION"));
    Box::leak(v.into_boxed_str())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let global = commands::Global {
        config: cli.config,
        seed: cli.seed,
    };
    match cli.command {
        Command::Segment(a) => commands::segment(&global, a),
        Command::Extract(a) => commands::extract(&global, a),
        Command::Distill(a) => commands::distill(a),
        Command::Split(a) => commands::split(&global, a),
        Command::Stats(a) => commands::stats(a),
        Command::Eval(a) => commands::eval(a),
        Command::Audit(a) => commands::audit(a),
        Command::Theory(TheoryCommand::Gamma(a)) => theory::gamma(a),
        Command::Theory(TheoryCommand::Sgd(a)) => theory::sgd(&global, a),
        Command::Theory(TheoryCommand::Control(a)) => theory::control(a),
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();

    let parsed = Cli::command()
        .version(version())
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
