use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dbreg::io::{self, InputKind, MethodChoice, OutputFormat, PValueRoute, RunConfig};
use dbreg::{Error, Kernel, Result};

#[derive(Parser)]
#[command(name = "dbreg", version, about = "Distance-based regression association tests")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "DBREG_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test association between an outcome matrix and predictors.
    Test(TestArgs),
    /// Run a size/power simulation grid from a TOML scenario file.
    Simulate(SimulateArgs),
    /// Time the parametric bootstrap against the permutation test.
    Bench(BenchArgs),
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("outcome").required(true).args(["y", "similarity", "distance"]))]
struct TestArgs {
    /// Response table, subjects by responses.
    #[arg(long)]
    y: Option<PathBuf>,
    /// Precomputed n×n similarity matrix.
    #[arg(long)]
    similarity: Option<PathBuf>,
    /// Precomputed n×n distance matrix.
    #[arg(long)]
    distance: Option<PathBuf>,
    /// Predictor table, subjects by predictors.
    #[arg(long)]
    x: PathBuf,
    /// `linear` or `gaussian:<bandwidth>`.
    #[arg(long, default_value = "linear")]
    kernel: Kernel,
    #[arg(long, default_value = "both")]
    method: MethodChoice,
    /// Comma-separated subset of bootstrap,gamma,box,permutation.
    #[arg(long, default_value = "bootstrap", value_delimiter = ',')]
    pvalue: Vec<PValueRoute>,
    #[arg(long = "B", default_value_t = 2000)]
    b: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Drawn from system entropy when omitted.
    #[arg(long)]
    seed: Option<u64>,
    /// Prepend a column of ones to the predictors.
    #[arg(long)]
    add_intercept: bool,
    /// Override the noncentrality factor of the null law.
    #[arg(long)]
    factor: Option<f64>,
    /// Include wall-clock timings in the document.
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: OutputFormat,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "tsv")]
    format: OutputFormat,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long = "B", default_value_t = 1000)]
    b: usize,
    #[arg(long, default_value = "linear")]
    kernel: Kernel,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "tsv")]
    format: OutputFormat,
}

fn test(args: TestArgs, threads: Option<usize>) -> Result<()> {
    let (input_kind, outcome) = match (args.y, args.similarity, args.distance) {
        (Some(p), None, None) => (InputKind::Responses, p),
        (None, Some(p), None) => (InputKind::Similarity, p),
        (None, None, Some(p)) => (InputKind::Distance, p),
        _ => return Err(Error::InvalidInput("exactly one of --y, --similarity, --distance".into())),
    };
    let config = RunConfig {
        outcome,
        design: args.x,
        input_kind,
        kernel: args.kernel,
        method: args.method,
        routes: io::dedup_routes(args.pvalue),
        b: args.b,
        seed: args.seed.unwrap_or_else(dbreg::rng::entropy_seed),
        alpha: args.alpha,
        add_intercept: args.add_intercept,
        factor: args.factor,
        threads,
        timings: args.timings,
    };
    let doc = io::cmd_test(&config)?;
    for w in &doc.warnings {
        eprintln!("warning [{}]: {}", w.kind, w.message);
    }
    let text = match args.format {
        OutputFormat::Json => doc.to_json(),
        OutputFormat::Tsv => doc.to_tsv(),
    };
    io::emit(&text, args.out.as_deref())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let doc = io::cmd_simulate_file(&args.scenario, args.seed)?;
    let text = match args.format {
        OutputFormat::Json => serde_json::to_string_pretty(&doc).expect("serializable") + "\n",
        OutputFormat::Tsv => {
            eprintln!("seed: {}", doc.seed);
            doc.report.to_tsv()
        }
    };
    io::emit(&text, args.out.as_deref())
}

fn bench(args: BenchArgs) -> Result<()> {
    let report = io::cmd_bench(args.n, args.b, args.kernel, args.seed)?;
    let text = match args.format {
        OutputFormat::Json => serde_json::to_string_pretty(&report).expect("serializable") + "\n",
        OutputFormat::Tsv => report.to_tsv(),
    };
    io::emit(&text, args.out.as_deref())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Test(args) => test(args, cli.threads),
        Command::Simulate(args) => simulate(args),
        Command::Bench(args) => bench(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let obj = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{obj}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
