//! Training, validation, testing and paper trading over time windows.
//!
//! Phases 1 to 5 (panel, training, selection, retraining and backtest) only
//! ever see bars that end before the test window closes; paper trading then
//! replays its own window bar by bar with the frozen agent. Every random
//! stream is seeded from `derive_path(seed, [window, phase, candidate])`.

mod config;
mod manifest;
mod paper;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    evaluate_policy, train_reinforce, AgentCheckpoint, AgentError, AgentState, LinearPolicy, CHECKPOINT_VERSION,
};
use crate::data::{align_and_clean, load_csv, Bar, DataError, MarketPanel, TimeRange};
use crate::env::{EnvSpec, Trajectory};
use crate::evaluation::{build_report, write_cumret_csv, EvalError, Metrics, PerformanceReport, Sharpe, ValueSeries};
use crate::features::{add_indicators, add_turbulence, FeatureError};
use crate::seed;

pub use config::{AgentSpec, DataSource, PipelineConfig, RangeSpec, WindowSpec, Windows};
pub use manifest::{DataDigest, Manifest, OutputLock, MANIFEST_VERSION};
pub use paper::{replay, LiveSession};

/// Seed tags for the pipeline phases.
pub mod phase {
    pub const TRAIN: u64 = 1;
    pub const VALIDATE: u64 = 2;
    pub const RETRAIN: u64 = 3;
    pub const TEST: u64 = 4;
    pub const PAPER_TRADE: u64 = 5;
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("output directory is locked by another run ({0} exists)")]
    Locked(PathBuf),
    #[error("manifest: {0}")]
    Manifest(String),
}

/// Coarse error classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    Config,
    Data,
    Runtime,
    Io,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Config => 3,
            ErrorCategory::Data => 4,
            ErrorCategory::Runtime => 5,
            ErrorCategory::Io => 6,
        }
    }
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.to_path_buf(), source }
    }

    pub fn category(&self) -> ErrorCategory {
        match self {
            PipelineError::Config(_) => ErrorCategory::Config,
            PipelineError::Data(DataError::InvalidConfig(_) | DataError::OverlappingRanges { .. }) => {
                ErrorCategory::Config
            }
            PipelineError::Data(_) | PipelineError::Manifest(_) => ErrorCategory::Data,
            PipelineError::Feature(
                FeatureError::InvalidSpec(..) | FeatureError::DuplicateFeature(_) | FeatureError::LookbackTooShort { .. },
            ) => ErrorCategory::Config,
            PipelineError::Feature(_) => ErrorCategory::Data,
            PipelineError::Agent(AgentError::InvalidConfig(_) | AgentError::DimensionMismatch { .. }) => {
                ErrorCategory::Config
            }
            PipelineError::Agent(AgentError::Checkpoint(_)) => ErrorCategory::Io,
            PipelineError::Agent(_) | PipelineError::Eval(_) => ErrorCategory::Runtime,
            PipelineError::Io { .. } | PipelineError::Locked(_) => ErrorCategory::Io,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub index: usize,
    pub name: String,
    pub validation: Metrics,
    /// Mean training-episode return per update (trained agents only).
    pub learning_curve: Option<Vec<f64>>,
}

/// Outcome of one window. Contains no wall-clock data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub windows: Windows,
    pub window_index: u64,
    /// Checksum of the feature panel used by phases 1 to 5.
    pub panel_checksum: String,
    pub candidates: Vec<CandidateResult>,
    pub selected_index: usize,
    pub selected_name: String,
    pub retrain_learning_curve: Option<Vec<f64>>,
    pub validation: PerformanceReport,
    pub test: PerformanceReport,
    pub paper_trade: Option<PerformanceReport>,
    /// Checkpoint files relative to the window's output directory.
    pub checkpoints: Vec<String>,
}

/// Phases 1 to 5 with the agents they produced.
#[derive(Debug, Clone)]
pub struct BacktestOutcome {
    pub result: PipelineResult,
    pub candidate_states: Vec<AgentState>,
    pub selected_state: AgentState,
}

/// Reads and concatenates every configured CSV file.
pub fn load_bars(cfg: &PipelineConfig) -> Result<Vec<Bar>> {
    let mut bars = Vec::new();
    for path in &cfg.data.paths {
        bars.extend(load_csv(path, &cfg.data.schema)?);
    }
    Ok(bars)
}

/// Cleaned feature panel from the bars strictly before `before`.
pub fn build_panel(cfg: &PipelineConfig, bars: &[Bar], before: i64) -> Result<MarketPanel> {
    let kept: Vec<Bar> = bars.iter().filter(|b| b.timestamp < before).cloned().collect();
    let cleaned = align_and_clean(&kept, &cfg.symbols, cfg.interval_seconds, &cfg.cleaning)?;
    let mut panel = add_indicators(&cleaned.panel, &cfg.indicators)?;
    if let Some(t) = &cfg.turbulence {
        panel = add_turbulence(&panel, t)?;
    }
    Ok(panel)
}

fn window_env(cfg: &PipelineConfig, panel: &MarketPanel, range: TimeRange) -> Result<EnvSpec> {
    let rows = panel.rows_in(range.start, range.end);
    if rows.len() < 2 {
        return Err(DataError::EmptySlice(format!("{range} holds {} bar(s); need at least 2", rows.len())).into());
    }
    Ok(EnvSpec::new(cfg.env_kind, Arc::new(panel.slice_rows(rows)?), cfg.env.clone()))
}

fn train_agent(
    spec: &AgentSpec,
    env: &EnvSpec,
    seed: u64,
    workers: usize,
) -> Result<(AgentState, Option<Vec<f64>>)> {
    Ok(match spec {
        AgentSpec::Reinforce { training } => {
            let cfg = crate::agents::ReinforceConfig { seed, workers, ..training.clone() };
            let policy = LinearPolicy::new(env.observation_dim(), env.n_assets(), cfg.noise.initial);
            let out = train_reinforce(env, policy, &cfg)?;
            (AgentState::Linear { policy: out.policy, training: Some(cfg) }, Some(out.learning_curve))
        }
        AgentSpec::Zero => (AgentState::Zero, None),
        AgentSpec::Random => (AgentState::Random, None),
        other => (
            AgentState::Baseline { spec: other.baseline_spec().expect("non-trainable agent") },
            None,
        ),
    })
}

fn evaluate(state: &AgentState, env: &EnvSpec, seed: u64) -> Result<Trajectory> {
    Ok(evaluate_policy(state.to_policy().as_ref(), env, seed)?)
}

/// `true` when `a` ranks strictly above `b`: higher Sharpe (a defined ratio
/// beats an undefined one), then the shallower drawdown.
fn ranks_above(a: &Metrics, b: &Metrics) -> bool {
    let by_sharpe = match (a.sharpe_ratio, b.sharpe_ratio) {
        (Sharpe::Defined(x), Sharpe::Defined(y)) => x.partial_cmp(&y),
        (Sharpe::Defined(_), Sharpe::Undefined) => Some(std::cmp::Ordering::Greater),
        (Sharpe::Undefined, Sharpe::Defined(_)) => Some(std::cmp::Ordering::Less),
        (Sharpe::Undefined, Sharpe::Undefined) => Some(std::cmp::Ordering::Equal),
    };
    match by_sharpe {
        Some(std::cmp::Ordering::Greater) => true,
        Some(std::cmp::Ordering::Equal) => a.max_drawdown > b.max_drawdown,
        _ => false,
    }
}

/// Index of the best validation result; ties go to the lower index.
pub fn select_candidate(validation: &[Metrics]) -> usize {
    (1..validation.len()).fold(0, |best, i| if ranks_above(&validation[i], &validation[best]) { i } else { best })
}

fn report(
    name: &str,
    strategy: &Trajectory,
    baseline_name: &str,
    baseline: &Trajectory,
    periods_per_year: f64,
) -> Result<PerformanceReport> {
    Ok(build_report(
        name,
        &ValueSeries::from(strategy),
        baseline_name,
        &ValueSeries::from(baseline),
        periods_per_year,
    )?)
}

fn baseline_state(cfg: &PipelineConfig) -> AgentState {
    match cfg.baseline_spec() {
        AgentSpec::Zero => AgentState::Zero,
        AgentSpec::Random => AgentState::Random,
        spec => AgentState::Baseline { spec: spec.baseline_spec().expect("validated baseline") },
    }
}

/// Phases 1 to 5 for one window. Pure: reads nothing but its arguments.
pub fn backtest(cfg: &PipelineConfig, bars: &[Bar], windows: &Windows, window_index: u64) -> Result<BacktestOutcome> {
    windows.check()?;
    let seeds = |phase: u64, candidate: u64| seed::derive_path(cfg.seed, &[window_index, phase, candidate]);
    let panel = build_panel(cfg, bars, windows.test.end)?;
    let periods = panel.periods_per_year();
    let train_env = window_env(cfg, &panel, windows.train)?;
    let valid_env = window_env(cfg, &panel, windows.validation)?;
    let retrain_env = window_env(cfg, &panel, windows.train_and_validation())?;
    let test_env = window_env(cfg, &panel, windows.test)?;
    let baseline = baseline_state(cfg);
    let baseline_name = cfg.baseline_spec().name();

    let mut states = Vec::with_capacity(cfg.agents.len());
    let mut candidates = Vec::with_capacity(cfg.agents.len());
    let mut validation_reports = Vec::with_capacity(cfg.agents.len());
    let baseline_valid = evaluate(&baseline, &valid_env, seeds(phase::VALIDATE, u64::MAX))?;
    for (i, spec) in cfg.agents.iter().enumerate() {
        log::info!("window {window_index}: training candidate {i} ({})", spec.name());
        let (state, curve) = train_agent(spec, &train_env, seeds(phase::TRAIN, i as u64), cfg.workers)?;
        let traj = evaluate(&state, &valid_env, seeds(phase::VALIDATE, i as u64))?;
        let rep = report(spec.name(), &traj, baseline_name, &baseline_valid, periods)?;
        candidates.push(CandidateResult {
            index: i,
            name: spec.name().to_string(),
            validation: rep.strategy.clone(),
            learning_curve: curve,
        });
        validation_reports.push(rep);
        states.push(state);
    }
    let metrics: Vec<Metrics> = candidates.iter().map(|c| c.validation.clone()).collect();
    let selected = select_candidate(&metrics);
    let selected_spec = &cfg.agents[selected];
    log::info!("window {window_index}: selected candidate {selected} ({})", selected_spec.name());

    let (selected_state, retrain_curve) =
        train_agent(selected_spec, &retrain_env, seeds(phase::RETRAIN, selected as u64), cfg.workers)?;
    let test_traj = evaluate(&selected_state, &test_env, seeds(phase::TEST, 0))?;
    let baseline_test = evaluate(&baseline, &test_env, seeds(phase::TEST, u64::MAX))?;
    let test = report(selected_spec.name(), &test_traj, baseline_name, &baseline_test, periods)?;

    Ok(BacktestOutcome {
        result: PipelineResult {
            windows: *windows,
            window_index,
            panel_checksum: panel.checksum(),
            candidates,
            selected_index: selected,
            selected_name: selected_spec.name().to_string(),
            retrain_learning_curve: retrain_curve,
            validation: validation_reports.swap_remove(selected),
            test,
            paper_trade: None,
            checkpoints: Vec::new(),
        },
        candidate_states: states,
        selected_state,
    })
}

/// Replays `range` bar by bar through `state`, next to the configured baseline.
///
/// The panel is rebuilt from bars before `range.end`, so indicator and
/// turbulence history leading into the window is available.
pub fn paper_trade(
    cfg: &PipelineConfig,
    bars: &[Bar],
    range: TimeRange,
    name: &str,
    state: &AgentState,
    seed: u64,
) -> Result<PerformanceReport> {
    let panel = build_panel(cfg, bars, range.end)?;
    if panel.symbols() != cfg.symbols.as_slice() {
        return Err(PipelineError::Data(DataError::InvalidPanel(format!(
            "paper-trade panel kept symbols {:?}, expected {:?}",
            panel.symbols(),
            cfg.symbols
        ))));
    }
    let env = window_env(cfg, &panel, range)?;
    let strategy = replay(&env, state.to_policy().as_ref(), seed)?;
    let baseline = replay(&env, baseline_state(cfg).to_policy().as_ref(), seed)?;
    report(name, &strategy, cfg.baseline_spec().name(), &baseline, panel.periods_per_year())
}

/// Paper-trades a saved checkpoint over `range` using the data and settings in `cfg`.
pub fn paper_trade_checkpoint(
    cfg: &PipelineConfig,
    checkpoint: &AgentCheckpoint,
    range: TimeRange,
) -> Result<PerformanceReport> {
    if checkpoint.symbols != cfg.symbols {
        return Err(PipelineError::Config(format!(
            "checkpoint trades {:?} but config lists {:?}",
            checkpoint.symbols, cfg.symbols
        )));
    }
    if checkpoint.env_kind != cfg.env_kind {
        return Err(PipelineError::Config("checkpoint and config use different environment kinds".into()));
    }
    let bars = load_bars(cfg)?;
    let seed = seed::derive_path(cfg.seed, &[0, phase::PAPER_TRADE]);
    paper_trade(cfg, &bars, range, &checkpoint.name, &checkpoint.agent, seed)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| PipelineError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_vec_pretty(value).expect("serializable output");
    text.push(b'\n');
    write_bytes(path, &text)
}

/// Writes `<dir>/<phase>/report.json` and `cumret.csv`; returns the relative paths.
pub fn write_phase(dir: &Path, phase: &str, report: &PerformanceReport) -> Result<Vec<String>> {
    write_json(&dir.join(phase).join("report.json"), report)?;
    let mut csv = Vec::new();
    write_cumret_csv(report, &mut csv)?;
    write_bytes(&dir.join(phase).join("cumret.csv"), &csv)?;
    Ok(vec![format!("{phase}/report.json"), format!("{phase}/cumret.csv")])
}

fn checkpoint(cfg: &PipelineConfig, name: &str, state: &AgentState, feature_names: &[String]) -> AgentCheckpoint {
    AgentCheckpoint {
        version: CHECKPOINT_VERSION,
        name: name.to_string(),
        agent: state.clone(),
        env_kind: cfg.env_kind,
        env_config: cfg.env.clone(),
        symbols: cfg.symbols.clone(),
        feature_names: feature_names.to_vec(),
    }
}

/// Runs one window end to end and writes its outputs under `dir`.
fn execute_window(
    cfg: &PipelineConfig,
    bars: &[Bar],
    windows: &Windows,
    window_index: u64,
    with_paper_trade: bool,
    dir: &Path,
) -> Result<(PipelineResult, Vec<String>)> {
    let outcome = backtest(cfg, bars, windows, window_index)?;
    let mut result = outcome.result;
    let mut outputs = Vec::new();

    if let (true, Some(range)) = (with_paper_trade, windows.paper_trade) {
        log::info!("window {window_index}: paper trading {range}");
        let seed = seed::derive_path(cfg.seed, &[window_index, phase::PAPER_TRADE]);
        result.paper_trade = Some(paper_trade(cfg, bars, range, &result.selected_name, &outcome.selected_state, seed)?);
    }

    let feature_names = build_feature_names(cfg);
    for (i, state) in outcome.candidate_states.iter().enumerate() {
        let rel = format!("checkpoints/candidate_{i}.json");
        checkpoint(cfg, cfg.agents[i].name(), state, &feature_names)
            .save(&ensure_parent(&dir.join(&rel))?)?;
        result.checkpoints.push(rel);
    }
    let rel = "checkpoints/selected.json".to_string();
    checkpoint(cfg, &result.selected_name, &outcome.selected_state, &feature_names)
        .save(&ensure_parent(&dir.join(&rel))?)?;
    result.checkpoints.push(rel);
    outputs.extend(result.checkpoints.iter().cloned());

    outputs.extend(write_phase(dir, "validation", &result.validation)?);
    outputs.extend(write_phase(dir, "test", &result.test)?);
    if let Some(p) = &result.paper_trade {
        outputs.extend(write_phase(dir, "paper_trade", p)?);
    }
    write_json(&dir.join("result.json"), &result)?;
    outputs.push("result.json".into());
    Ok((result, outputs))
}

fn ensure_parent(path: &Path) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
    }
    Ok(path.to_path_buf())
}

/// Feature columns the panel will carry, in order.
fn build_feature_names(cfg: &PipelineConfig) -> Vec<String> {
    let mut names: Vec<String> = crate::data::panel::BASE_FEATURES.iter().map(|s| s.to_string()).collect();
    names.extend(cfg.indicators.iter().map(|s| s.feature_name()));
    if cfg.turbulence.is_some() {
        names.push(crate::features::TURBULENCE_FEATURE.to_string());
    }
    names
}

/// Glues test-window series end to end, rescaling each so that it starts
/// where the previous one finished.
pub fn stitch_series(parts: &[ValueSeries]) -> ValueSeries {
    let mut out = ValueSeries { timestamps: Vec::new(), values: Vec::new() };
    for part in parts {
        let scale = match (out.values.last(), part.values.first()) {
            (Some(prev), Some(first)) => prev / first,
            _ => 1.0,
        };
        out.timestamps.extend_from_slice(&part.timestamps);
        out.values.extend(part.values.iter().map(|v| v * scale));
    }
    out
}

/// Window layouts for a rolling spec over the given grid timestamps.
pub fn rolling_windows(timestamps: &[i64], spec: &WindowSpec) -> Result<Vec<Windows>> {
    let WindowSpec::Rolling { train_bars, validation_bars, test_bars, paper_trade_bars, stride_bars } = *spec else {
        return Err(PipelineError::Config("rolling_windows needs a rolling window spec".into()));
    };
    if stride_bars == 0 {
        return Err(PipelineError::Config("stride_bars must be > 0".into()));
    }
    let total = train_bars + validation_bars + test_bars + paper_trade_bars;
    if total > timestamps.len() {
        return Err(PipelineError::Data(DataError::EmptySlice(format!(
            "rolling windows need {total} bars, data has {}",
            timestamps.len()
        ))));
    }
    let range = |a: usize, b: usize| TimeRange::new(timestamps[a], timestamps[b - 1] + 1);
    let count = (timestamps.len() - total) / stride_bars + 1;
    Ok((0..count)
        .map(|k| {
            let s = k * stride_bars;
            let v = s + train_bars;
            let t = v + validation_bars;
            let p = t + test_bars;
            Windows {
                train: range(s, v),
                validation: range(v, t),
                test: range(t, p),
                paper_trade: (paper_trade_bars > 0).then(|| range(p, p + paper_trade_bars)),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingResult {
    pub windows: Vec<PipelineResult>,
    /// Out-of-sample test series stitched across windows.
    pub stitched: PerformanceReport,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunSummary {
    Single(PipelineResult),
    Rolling(RollingResult),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// All phases including paper trading.
    Full,
    /// Phases 1 to 5 only.
    BacktestOnly,
}

/// Validates `cfg`, then runs it and writes every output plus `manifest.json`.
pub fn run(cfg: &PipelineConfig, mode: RunMode) -> Result<RunSummary> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    let _lock = OutputLock::acquire(&out)?;
    let digests = cfg.data.paths.iter().map(|p| DataDigest::of(p)).collect::<Result<Vec<_>>>()?;
    let bars = load_bars(cfg)?;
    let paper = mode == RunMode::Full;

    let (summary, mut outputs) = match cfg.windows.resolve_fixed()? {
        Some(windows) => {
            let (result, outputs) = execute_window(cfg, &bars, &windows, 0, paper, &out)?;
            (RunSummary::Single(result), outputs)
        }
        None => {
            let grid = build_panel(cfg, &bars, i64::MAX)?;
            let layouts = rolling_windows(grid.timestamps(), &cfg.windows)?;
            let mut results = Vec::with_capacity(layouts.len());
            let mut outputs = Vec::new();
            for (k, windows) in layouts.iter().enumerate() {
                let sub = format!("window_{k:03}");
                let (result, files) = execute_window(cfg, &bars, windows, k as u64, paper, &out.join(&sub))?;
                outputs.extend(files.into_iter().map(|f| format!("{sub}/{f}")));
                results.push(result);
            }
            let strategy: Vec<ValueSeries> = results
                .iter()
                .map(|r| ValueSeries { timestamps: r.test.timestamps.clone(), values: r.test.strategy_values.clone() })
                .collect();
            let baseline: Vec<ValueSeries> = results
                .iter()
                .map(|r| ValueSeries { timestamps: r.test.timestamps.clone(), values: r.test.baseline_values.clone() })
                .collect();
            let stitched = build_report(
                "stitched",
                &stitch_series(&strategy),
                cfg.baseline_spec().name(),
                &stitch_series(&baseline),
                grid.periods_per_year(),
            )?;
            outputs.extend(write_phase(&out, "stitched", &stitched)?);
            let rolling = RollingResult { windows: results, stitched };
            write_json(&out.join("rolling.json"), &rolling)?;
            outputs.push("rolling.json".into());
            (RunSummary::Rolling(rolling), outputs)
        }
    };
    outputs.push("manifest.json".into());
    write_json(&out.join("manifest.json"), &Manifest::new(cfg, digests, outputs))?;
    Ok(summary)
}

/// Fixed-window pipeline run (all six phases).
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineResult> {
    match run(cfg, RunMode::Full)? {
        RunSummary::Single(r) => Ok(r),
        RunSummary::Rolling(_) => unreachable!("fixed windows yield a single result"),
    }
}

/// Rolling-window pipeline run.
pub fn run_rolling(cfg: &PipelineConfig) -> Result<RollingResult> {
    if !matches!(cfg.windows, WindowSpec::Rolling { .. }) {
        return Err(PipelineError::Config("run_rolling needs a rolling window spec".into()));
    }
    match run(cfg, RunMode::Full)? {
        RunSummary::Rolling(r) => Ok(r),
        RunSummary::Single(_) => unreachable!("rolling windows yield a rolling result"),
    }
}

/// Re-runs a manifest after checking that its data files are unchanged.
pub fn rerun_manifest(path: &Path, output_dir: Option<PathBuf>) -> Result<RunSummary> {
    let manifest = Manifest::load(path)?;
    manifest.verify_data()?;
    let mut cfg = manifest.config;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    run(&cfg, RunMode::Full)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::ReinforceConfig;
    use crate::data::CleaningConfig;
    use crate::env::{CostModel, EnvConfig, EnvKind};
    use crate::features::{IndicatorKind, IndicatorSpec};

    fn metrics(sharpe: Sharpe, dd: f64) -> Metrics {
        Metrics {
            cumulative_return: 0.0,
            annual_return: 0.0,
            annual_volatility: 0.0,
            sharpe_ratio: sharpe,
            max_drawdown: dd,
        }
    }

    #[test]
    fn selection_rules() {
        let d = Sharpe::Defined;
        assert_eq!(select_candidate(&[metrics(d(1.0), -0.1)]), 0);
        assert_eq!(select_candidate(&[metrics(d(1.0), -0.1), metrics(d(2.0), -0.5)]), 1);
        assert_eq!(select_candidate(&[metrics(d(1.0), -0.3), metrics(d(1.0), -0.1)]), 1);
        assert_eq!(select_candidate(&[metrics(d(1.0), -0.1), metrics(d(1.0), -0.1)]), 0);
        assert_eq!(select_candidate(&[metrics(Sharpe::Undefined, 0.0), metrics(d(-3.0), -0.5)]), 1);
    }

    #[test]
    fn stitching_rebases_constant_return_windows() {
        // window 1 grows 1% per bar, window 2 shrinks 2% per bar
        let w1 = ValueSeries { timestamps: vec![0, 1, 2], values: vec![100.0, 101.0, 102.01] };
        let w2 = ValueSeries { timestamps: vec![3, 4, 5], values: vec![100.0, 98.0, 96.04] };
        let s = stitch_series(&[w1, w2]);
        assert_eq!(s.timestamps, vec![0, 1, 2, 3, 4, 5]);
        let want = [100.0, 101.0, 102.01, 102.01, 102.01 * 0.98, 102.01 * 0.98 * 0.98];
        for (a, b) in s.values.iter().zip(want) {
            assert!((a - b).abs() < 1e-9, "{:?}", s.values);
        }
    }

    #[test]
    fn rolling_layout_counts() {
        let ts: Vec<i64> = (0..100).map(|t| t * 60).collect();
        let spec = |stride| WindowSpec::Rolling {
            train_bars: 40, validation_bars: 10, test_bars: 10, paper_trade_bars: 0, stride_bars: stride,
        };
        let one = rolling_windows(&ts[..60], &spec(10)).unwrap();
        assert_eq!(one.len(), 1);
        let three = rolling_windows(&ts[..80], &spec(10)).unwrap();
        assert_eq!(three.len(), 3);
        for w in three.windows(2) {
            assert_eq!(w[0].test.end - 1 + 60, w[1].test.start);
        }
        assert!(rolling_windows(&ts[..50], &spec(10)).is_err());
    }

    fn synthetic_csv(dir: &Path, bars: usize) -> PathBuf {
        let mut text = String::from("timestamp,symbol,open,high,low,close,volume\n");
        for t in 0..bars {
            for (n, sym) in ["AAA", "BBB"].iter().enumerate() {
                let c = 100.0 + 10.0 * ((t as f64) * (0.05 + 0.02 * n as f64)).sin() + 0.01 * t as f64;
                text.push_str(&format!("{},{sym},{c},{},{},{c},1000\n", 1_600_000_000 + 3600 * t as i64, c + 0.5, c - 0.5));
            }
        }
        let path = dir.join("bars.csv");
        fs::write(&path, text).unwrap();
        path
    }

    fn config(dir: &Path, windows: WindowSpec) -> PipelineConfig {
        PipelineConfig {
            data: DataSource { paths: vec![synthetic_csv(dir, 400)], schema: Default::default() },
            symbols: vec!["AAA".into(), "BBB".into()],
            interval_seconds: 3600,
            cleaning: CleaningConfig::default(),
            indicators: vec![IndicatorSpec::new(IndicatorKind::Sma, 5)],
            turbulence: Some(crate::features::TurbulenceConfig { lookback: 20, ridge_epsilon: 1e-8 }),
            env_kind: EnvKind::Stock,
            env: EnvConfig {
                initial_cash: 100_000.0,
                hmax: 50,
                cost_model: CostModel::percentage(0.001),
                reward_scaling: 1e-3,
                ..EnvConfig::default()
            },
            agents: vec![
                AgentSpec::Reinforce {
                    training: ReinforceConfig { total_updates: 3, episodes_per_update: 2, ..ReinforceConfig::default() },
                },
                AgentSpec::Momentum { lookback: 5, top_k: 1 },
            ],
            baseline: None,
            windows,
            output_dir: dir.join("out"),
            seed: 11,
            workers: 2,
        }
    }

    fn epoch_windows(bounds: [usize; 5]) -> WindowSpec {
        let ts = |i: usize| 1_600_000_000 + 3600 * i as i64;
        let r = |a: usize, b: usize| RangeSpec::Epoch { start: ts(a), end: ts(b) };
        WindowSpec::Fixed {
            train: r(bounds[0], bounds[1]),
            validation: r(bounds[1], bounds[2]),
            test: r(bounds[2], bounds[3]),
            paper_trade: Some(r(bounds[3], bounds[4])),
        }
    }

    #[test]
    fn fixed_run_writes_outputs_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), epoch_windows([0, 200, 260, 320, 400]));
        let first = run_pipeline(&cfg).unwrap();
        assert_eq!(first.candidates.len(), 2);
        assert!(first.paper_trade.is_some());
        for f in ["manifest.json", "result.json", "test/report.json", "paper_trade/cumret.csv", "checkpoints/selected.json"] {
            assert!(cfg.output_dir.join(f).exists(), "{f}");
        }
        assert!(!cfg.output_dir.join(".marketverse.lock").exists());

        let again = rerun_manifest(&cfg.output_dir.join("manifest.json"), Some(dir.path().join("again"))).unwrap();
        assert_eq!(again, RunSummary::Single(first));
        assert_eq!(
            fs::read(cfg.output_dir.join("result.json")).unwrap(),
            fs::read(dir.path().join("again/result.json")).unwrap()
        );
    }

    #[test]
    fn single_rolling_window_equals_fixed_run() {
        let dir = tempfile::tempdir().unwrap();
        let rolling = WindowSpec::Rolling {
            train_bars: 200, validation_bars: 60, test_bars: 60, paper_trade_bars: 80, stride_bars: 60,
        };
        let cfg = config(dir.path(), rolling);
        let r = run_rolling(&cfg).unwrap();
        assert_eq!(r.windows.len(), 1);

        let mut fixed = config(dir.path(), epoch_windows([0, 200, 260, 320, 400]));
        fixed.output_dir = dir.path().join("fixed");
        // rolling ranges end one second after the last bar; the rows are the same
        let w = r.windows[0].windows;
        fixed.windows = WindowSpec::Fixed {
            train: w.train.into(),
            validation: w.validation.into(),
            test: w.test.into(),
            paper_trade: w.paper_trade.map(Into::into),
        };
        let single = run_pipeline(&fixed).unwrap();
        assert_eq!(single, r.windows[0]);
    }

    #[test]
    fn overlapping_windows_fail_before_reading_data() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path(), epoch_windows([0, 200, 260, 320, 400]));
        cfg.windows = epoch_windows([0, 200, 180, 320, 400]);
        cfg.data.paths = vec![dir.path().join("missing.csv")];
        let err = run_pipeline(&cfg).unwrap_err();
        assert_eq!(err.category(), ErrorCategory::Config);
        assert!(!cfg.output_dir.exists());
    }
}
