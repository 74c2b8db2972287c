use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use shiftscope::bench::Suite;
use shiftscope::cli::{cmd_bench, cmd_estimate, cmd_simulate, BaseSource, MethodChoice, RunConfig, SimulateConfig};
use shiftscope::pipeline::EstimateConfig;

/// Estimate a classifier's accuracy change under sparse joint shift.
#[derive(Debug, Parser)]
#[command(name = "shiftscope", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the accuracy change from a labeled source to an unlabeled target.
    Estimate(EstimateArgs),
    /// Draw a source/target pair with a known shift.
    Simulate(SimulateArgs),
    /// Run a simulation suite and write metrics as CSV.
    Bench(BenchArgs),
}

#[derive(Debug, clap::Args)]
struct EstimateArgs {
    #[arg(long)]
    source_path: PathBuf,
    #[arg(long)]
    target_path: PathBuf,
    #[arg(long)]
    schema_path: PathBuf,
    /// sees-c, sees-d, bbse, kliep, dlu or all
    #[arg(long, default_value = "sees-d")]
    method: MethodChoice,
    #[arg(long, default_value_t = EstimateConfig::default().sparsity)]
    sparsity: usize,
    #[arg(long, default_value_t = EstimateConfig::default().eta)]
    eta: f64,
    #[arg(long, default_value_t = EstimateConfig::default().bins)]
    bins: usize,
    #[arg(long, default_value_t = EstimateConfig::default().weight_bound)]
    weight_bound: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Source predictions as `pred,p_1,...,p_L`; needs --target-predictions-path
    #[arg(long)]
    predictions_path: Option<PathBuf>,
    #[arg(long)]
    target_predictions_path: Option<PathBuf>,
    /// Truth file written by `simulate`
    #[arg(long)]
    truth_path: Option<PathBuf>,
    /// `-` for stdout
    #[arg(long, default_value = "-")]
    output_path: PathBuf,
}

#[derive(Debug, clap::Args)]
struct SimulateArgs {
    /// JSON shift specification
    #[arg(long)]
    spec_path: PathBuf,
    /// covid-analog, binary:<d>, or a labeled CSV (with --schema-path)
    #[arg(long, default_value = "covid-analog")]
    base_path: String,
    #[arg(long)]
    schema_path: Option<PathBuf>,
    /// Rows in each of source and target
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "")]
    out_prefix: String,
}

#[derive(Debug, clap::Args)]
struct BenchArgs {
    /// tradeoff, sparsity, robustness or sensitivity
    #[arg(long)]
    suite: Suite,
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    /// `-` for stdout
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Estimate(a) => {
            let cfg = RunConfig {
                source_path: a.source_path,
                target_path: a.target_path,
                schema_path: a.schema_path,
                method: a.method,
                sparsity: a.sparsity,
                eta: a.eta,
                bins: a.bins,
                weight_bound: a.weight_bound,
                seed: a.seed,
                predictions_path: a.predictions_path,
                target_predictions_path: a.target_predictions_path,
                truth_path: a.truth_path,
                output_path: a.output_path,
            };
            cmd_estimate(&cfg)?;
        }
        Command::Simulate(a) => {
            let cfg = SimulateConfig {
                spec_path: a.spec_path,
                base: BaseSource::parse(&a.base_path, a.schema_path.as_deref())?,
                n: a.n,
                seed: a.seed,
                out_prefix: a.out_prefix,
            };
            let files = cmd_simulate(&cfg)?;
            log::info!("wrote {} and {}", files.source.display(), files.target.display());
        }
        Command::Bench(a) => {
            cmd_bench(a.suite, a.seeds, &a.out)?;
        }
    }
    Ok(())
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(raw) = std::env::var("SHIFTSCOPE_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| shiftscope::Error::InvalidConfig(format!("SHIFTSCOPE_THREADS={raw:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("thread pool")?;
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error: INVALID_ARGUMENTS: {}", one_line(first));
            return ExitCode::from(2);
        }
    };
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => match e.downcast_ref::<shiftscope::Error>() {
            Some(err) => {
                eprintln!("error: {}: {}", err.category(), one_line(&err.to_string()));
                ExitCode::from(if err.is_input_error() { 2 } else { 1 })
            }
            None => {
                eprintln!("error: INTERNAL: {}", one_line(&format!("{e:#}")));
                ExitCode::from(1)
            }
        },
    }
}
