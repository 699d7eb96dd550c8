//! `coldstart`: command-line driver for cold-start and active-learning
//! selection over a dataset directory.

mod commands;
mod dataset;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "coldstart",
    version,
    about = "Annotation-budget-aware sample selection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Project embeddings to 2D with t-SNE and write coords.bin.
    Project(ProjectArgs),
    /// Select the cold-start batch.
    Coldstart(ColdstartArgs),
    /// Extend a manifest with an entropy/diversity acquisition round.
    Select(SelectArgs),
    /// Baseline selection policies.
    Baseline(BaselineArgs),
    /// Dice and HD95 of predicted masks against reference masks.
    Metrics(MetricsArgs),
    /// Export a scatter CSV of the projection with selection roles.
    Scatter(ScatterArgs),
    /// Run a policy over several seeds and summarise its coverage radius.
    Runs(RunsArgs),
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset directory holding items.json and embeddings.bin.
    #[arg(long, default_value = ".")]
    data: PathBuf,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct TsneArgs {
    #[arg(long)]
    perplexity: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, value_enum, default_value_t = Init::Pca)]
    init: Init,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Init {
    Pca,
    Random,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    /// Dataset directory; coords.bin is written here unless --out is given.
    #[arg(long, default_value = ".")]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tsne: TsneArgs,
    #[arg(long, default_value_t = 43)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ColdstartArgs {
    #[command(flatten)]
    io: DataArgs,
    #[arg(long)]
    budget: usize,
    #[arg(long)]
    k_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[command(flatten)]
    tsne: TsneArgs,
    #[arg(long, default_value_t = 43)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    io: DataArgs,
    /// Number of items to acquire in this round.
    #[arg(long)]
    budget: usize,
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    /// Prior manifest to extend.
    #[arg(long)]
    manifest: PathBuf,
    /// Directory of <id>.prb files; defaults to <data>/probs.
    #[arg(long)]
    probs: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum BaselinePolicy {
    Random,
    KmeansToBudget,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[command(flatten)]
    io: DataArgs,
    #[arg(long, value_enum)]
    policy: BaselinePolicy,
    #[arg(long)]
    budget: usize,
    #[command(flatten)]
    tsne: TsneArgs,
    #[arg(long, default_value_t = 43)]
    seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    PerClass,
    Image,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// Directory of predicted <id>.msk files.
    #[arg(long)]
    pred: PathBuf,
    /// Directory of reference <id>.msk files.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::PerClass)]
    mode: Mode,
    /// Pixel spacing as "row,col".
    #[arg(long, default_value = "1,1", value_parser = parse_spacing)]
    spacing: (f64, f64),
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScatterArgs {
    #[command(flatten)]
    io: DataArgs,
    #[arg(long)]
    manifest: PathBuf,
    /// Text file with one held-out test id per line.
    #[arg(long)]
    test_ids: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum RunsPolicy {
    Coldstart,
    Random,
    KmeansToBudget,
}

#[derive(Args, Debug)]
struct RunsArgs {
    #[command(flatten)]
    io: DataArgs,
    #[arg(long, value_enum)]
    policy: RunsPolicy,
    #[arg(long)]
    budget: usize,
    /// Comma-separated seeds; 43..=53 when omitted.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[command(flatten)]
    tsne: TsneArgs,
}

fn parse_spacing(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected row,col")?;
    let parse = |v: &str| -> Result<f64, String> {
        let x: f64 = v.trim().parse().map_err(|e| format!("{v}: {e}"))?;
        if x > 0.0 && x.is_finite() {
            Ok(x)
        } else {
            Err(format!("spacing {x} must be positive"))
        }
    };
    Ok((parse(a)?, parse(b)?))
}

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("COLDSTART_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("COLDSTART_THREADS={raw} is not a thread count"))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            match err.downcast_ref::<coldstart_core::Error>() {
                Some(e) => eprintln!("error: {}: {e}", e.name()),
                None => eprintln!("error: {err:#}"),
            }
            ExitCode::from(1)
        }
    }
}
