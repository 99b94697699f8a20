use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use marketverse::agents::{AgentCheckpoint, AgentError};
use marketverse::data::{align_and_clean, load_csv, CleaningConfig, CsvSchema, DataError, MarketPanel, TimeRange};
use marketverse::env::{EnvKind, EnvSpec};
use marketverse::features::{add_indicators, add_turbulence, IndicatorSpec, TurbulenceConfig};
use marketverse::parallel::{throughput_benchmark, write_benchmark_csv};
use marketverse::pipeline::{
    self, build_panel, load_bars, paper_trade_checkpoint, write_phase, PipelineConfig, PipelineError,
    PipelineResult, RunMode, RunSummary,
};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown subcommand or bad flags)
  3  config error (invalid config file, overlapping windows, bad parameters)
  4  data error (malformed CSV rows, missing symbols, changed data files)
  5  runtime error (training divergence, rollout failure)
  6  i/o error (unreadable or unwritable paths, locked output directory)

Errors are printed to stderr as one JSON object. Set MARKETVERSE_LOG
(error, warn, info, debug, trace) to control log verbosity.";

#[derive(Parser)]
#[command(name = "marketverse", version, about = "Market environments and backtesting for trading agents")]
#[command(after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load OHLCV CSV files and write an aligned, cleaned panel directory.
    Ingest(IngestArgs),
    /// Append indicator and turbulence columns to a panel directory.
    Features(FeaturesArgs),
    /// Train, select and backtest (no paper trading).
    Backtest(RunArgs),
    /// Full train / validate / test / paper-trade pipeline.
    Pipeline(RunArgs),
    /// Replay a saved agent over a held-out window.
    Papertrade(PaperArgs),
    /// Measure rollout throughput per worker count.
    Bench(BenchArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// CSV files with one bar per row.
    #[arg(long = "csv", required = true, num_args = 1..)]
    csv: Vec<PathBuf>,
    /// Comma-separated symbols to keep, in panel order.
    #[arg(long, value_delimiter = ',', required = true)]
    symbols: Vec<String>,
    /// Bar interval in seconds.
    #[arg(long)]
    interval: i64,
    /// JSON file mapping fields to CSV column names.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// JSON file with cleaning settings.
    #[arg(long)]
    cleaning: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long)]
    panel: PathBuf,
    /// JSON list of indicator specs; the default set is used when omitted.
    #[arg(long)]
    indicators: Option<PathBuf>,
    #[arg(long, default_value_t = 252)]
    turbulence_lookback: usize,
    #[arg(long)]
    no_turbulence: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config (JSON).
    #[arg(long, required_unless_present = "manifest", conflicts_with = "manifest")]
    config: Option<PathBuf>,
    /// Re-run from a manifest written by an earlier run.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PaperArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Pipeline config supplying data, features, environment and baseline.
    #[arg(long)]
    config: PathBuf,
    /// First day of the window (YYYY-MM-DD).
    #[arg(long, requires = "last")]
    first: Option<String>,
    /// Last day of the window, inclusive.
    #[arg(long, requires = "first")]
    last: Option<String>,
    /// Window start in epoch seconds (alternative to --first/--last).
    #[arg(long, requires = "end", conflicts_with = "first")]
    start: Option<i64>,
    /// Window end in epoch seconds, exclusive.
    #[arg(long, requires = "start")]
    end: Option<i64>,
    /// Directory for report.json and cumret.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Pipeline config whose data and environment are benchmarked.
    #[arg(long, required_unless_present = "panel")]
    config: Option<PathBuf>,
    /// Panel directory, benchmarked with the default stock environment.
    #[arg(long, conflicts_with = "config")]
    panel: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    envs: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    workers: Vec<usize>,
    /// Steps per environment.
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}

fn ingest(args: IngestArgs) -> Result<Value, PipelineError> {
    let schema: CsvSchema = args.schema.as_deref().map(read_json).transpose()?.unwrap_or_default();
    let cleaning: CleaningConfig = args.cleaning.as_deref().map(read_json).transpose()?.unwrap_or_default();
    let mut bars = Vec::new();
    for path in &args.csv {
        bars.extend(load_csv(path, &schema)?);
    }
    let cleaned = align_and_clean(&bars, &args.symbols, args.interval, &cleaning)?;
    cleaned.panel.save(&args.out)?;
    Ok(json!({
        "panel": args.out,
        "rows": cleaned.panel.n_times(),
        "symbols": cleaned.panel.symbols(),
        "checksum": cleaned.panel.checksum(),
        "cleaning": cleaned.report,
    }))
}

fn features(args: FeaturesArgs) -> Result<Value, PipelineError> {
    let panel = MarketPanel::load(&args.panel)?;
    let specs: Vec<IndicatorSpec> = match &args.indicators {
        Some(path) => read_json(path)?,
        None => IndicatorSpec::default_set(),
    };
    let mut out = add_indicators(&panel, &specs)?;
    if !args.no_turbulence {
        let cfg = TurbulenceConfig { lookback: args.turbulence_lookback, ..TurbulenceConfig::default() };
        out = add_turbulence(&out, &cfg)?;
    }
    out.save(&args.out)?;
    Ok(json!({
        "panel": args.out,
        "features": out.feature_names(),
        "checksum": out.checksum(),
    }))
}

fn summarize(result: &PipelineResult) -> Value {
    json!({
        "selected": {"index": result.selected_index, "name": result.selected_name},
        "validation": result.validation.strategy,
        "test": {"strategy": result.test.strategy, "baseline": result.test.baseline},
        "paper_trade": result.paper_trade.as_ref().map(|p| json!({"strategy": p.strategy, "baseline": p.baseline})),
    })
}

fn run_pipeline(args: RunArgs, mode: RunMode) -> Result<Value, PipelineError> {
    let summary = match (&args.config, &args.manifest) {
        (_, Some(manifest)) => {
            if args.seed.is_some() {
                return Err(PipelineError::Config("--seed cannot change a manifest re-run".into()));
            }
            pipeline::rerun_manifest(manifest, args.out.clone())?
        }
        (Some(path), None) => {
            let mut cfg = PipelineConfig::load(path)?;
            if let Some(seed) = args.seed {
                cfg.seed = seed;
            }
            if let Some(out) = &args.out {
                cfg.output_dir = out.clone();
            }
            pipeline::run(&cfg, mode)?
        }
        (None, None) => return Err(PipelineError::Config("either --config or --manifest is required".into())),
    };
    Ok(match &summary {
        RunSummary::Single(r) => summarize(r),
        RunSummary::Rolling(r) => json!({
            "windows": r.windows.iter().map(summarize).collect::<Vec<_>>(),
            "stitched": {"strategy": r.stitched.strategy, "baseline": r.stitched.baseline},
        }),
    })
}

fn papertrade(args: PaperArgs) -> Result<Value, PipelineError> {
    let cfg = PipelineConfig::load(&args.config)?;
    let checkpoint = AgentCheckpoint::load(&args.checkpoint)?;
    let range = match (args.first, args.last, args.start, args.end) {
        (Some(first), Some(last), None, None) => TimeRange::from_dates(&first, &last)
            .map_err(|e| PipelineError::Config(e.to_string()))?,
        (None, None, Some(start), Some(end)) if start < end => TimeRange::new(start, end),
        _ => {
            return Err(PipelineError::Config(
                "give the window as --first/--last dates or as --start < --end".into(),
            ))
        }
    };
    let report = paper_trade_checkpoint(&cfg, &checkpoint, range)?;
    if let Some(out) = &args.out {
        write_phase(out, "paper_trade", &report)?;
    }
    Ok(json!({"window": range.to_string(), "strategy": report.strategy, "baseline": report.baseline}))
}

fn bench(args: BenchArgs) -> Result<Value, PipelineError> {
    let spec = match (&args.config, &args.panel) {
        (Some(path), _) => {
            let cfg = PipelineConfig::load(path)?;
            cfg.validate()?;
            let panel = build_panel(&cfg, &load_bars(&cfg)?, i64::MAX)?;
            EnvSpec::new(cfg.env_kind, Arc::new(panel), cfg.env.clone())
        }
        (None, Some(dir)) => EnvSpec::new(EnvKind::Stock, Arc::new(MarketPanel::load(dir)?), Default::default()),
        (None, None) => return Err(PipelineError::Config("either --config or --panel is required".into())),
    };
    if args.envs == 0 || args.workers.contains(&0) {
        return Err(PipelineError::Config("--envs and every --workers entry must be >= 1".into()));
    }
    let rows = throughput_benchmark(&spec, args.envs, &args.workers, args.steps, args.seed)
        .map_err(|e| PipelineError::Agent(AgentError::Sim(e)))?;
    let mut csv = Vec::new();
    write_benchmark_csv(&rows, &mut csv).map_err(|e| PipelineError::Agent(AgentError::Sim(e)))?;
    match &args.out {
        Some(path) => fs::write(path, &csv).map_err(|e| PipelineError::io(path, e))?,
        None => {
            let _ = std::io::stdout().write_all(&csv);
        }
    }
    Ok(json!({"rows": rows.len(), "out": args.out}))
}

fn error_json(err: &PipelineError) -> Value {
    let category = err.category();
    let mut body = json!({
        "category": category,
        "code": category.exit_code(),
        "message": err.to_string(),
    });
    if let PipelineError::Data(DataError::InvalidRows(rows)) = err {
        body["rows"] = rows.iter().map(|r| json!({"row": r.row, "message": r.message})).collect();
    }
    json!({ "error": body })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("MARKETVERSE_LOG", "warn")).init();
    let cli = Cli::parse();
    let (result, quiet) = match cli.command {
        Command::Ingest(a) => (ingest(a), false),
        Command::Features(a) => (features(a), false),
        Command::Backtest(a) => (run_pipeline(a, RunMode::BacktestOnly), false),
        Command::Pipeline(a) => (run_pipeline(a, RunMode::Full), false),
        Command::Papertrade(a) => (papertrade(a), false),
        Command::Bench(a) => {
            let to_stdout = a.out.is_none();
            (bench(a), to_stdout)
        }
    };
    match result {
        Ok(summary) => {
            if !quiet {
                let text = serde_json::to_string_pretty(&summary).expect("json");
                // a closed pipe (e.g. `| head`) is not a failure
                let _ = writeln!(std::io::stdout(), "{text}");
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", error_json(&err));
            ExitCode::from(err.category().exit_code() as u8)
        }
    }
}
