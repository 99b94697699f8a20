//! Performance metrics for portfolio-value series.
//!
//! Returns are simple period returns, volatility uses the sample standard
//! deviation, the Sharpe ratio assumes a zero risk-free rate, and all
//! percentages are stored as fractions.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::env::Trajectory;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("value series needs at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("value {value} at index {index} is not a positive finite number")]
    NonPositiveValue { index: usize, value: f64 },
    #[error("strategy and baseline series differ: {0}")]
    TimestampMismatch(String),
    #[error("periods_per_year {0} must be positive")]
    InvalidPeriods(f64),
    #[error("writing output: {0}")]
    Output(String),
}

/// Sharpe ratio, or an explicit marker when the return std is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sharpe {
    Defined(f64),
    Undefined,
}

impl Sharpe {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Sharpe::Defined(v) => Some(v),
            Sharpe::Undefined => None,
        }
    }
}

impl fmt::Display for Sharpe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sharpe::Defined(v) => write!(f, "{v:.3}"),
            Sharpe::Undefined => f.write_str("undefined"),
        }
    }
}

impl Serialize for Sharpe {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            Sharpe::Defined(v) => s.serialize_f64(v),
            Sharpe::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Sharpe {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Marker(String),
        }
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(Sharpe::Defined(v)),
            Repr::Marker(m) if m == "undefined" => Ok(Sharpe::Undefined),
            Repr::Marker(m) => Err(serde::de::Error::custom(format!("unexpected sharpe marker {m:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub cumulative_return: f64,
    pub annual_return: f64,
    pub annual_volatility: f64,
    pub sharpe_ratio: Sharpe,
    pub max_drawdown: f64,
}

fn check_values(values: &[f64], needed: usize) -> Result<(), EvalError> {
    if values.len() < needed {
        return Err(EvalError::TooShort { needed, got: values.len() });
    }
    match values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        Some(index) => Err(EvalError::NonPositiveValue { index, value: values[index] }),
        None => Ok(()),
    }
}

/// `r_t = V_t / V_{t-1} - 1`.
pub fn period_returns(values: &[f64]) -> Result<Vec<f64>, EvalError> {
    check_values(values, 2)?;
    Ok(values.windows(2).map(|w| w[1] / w[0] - 1.0).collect())
}

/// `min_t (V_t / max_{s<=t} V_s - 1)`; zero for a non-decreasing series.
pub fn max_drawdown(values: &[f64]) -> f64 {
    let mut peak = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    for &v in values {
        peak = peak.max(v);
        worst = worst.min(v / peak - 1.0);
    }
    worst
}

/// `V_t / V_0 - 1` for every point.
pub fn cumulative_return_series(values: &[f64]) -> Vec<f64> {
    match values.first() {
        Some(&v0) => values.iter().map(|v| v / v0 - 1.0).collect(),
        None => Vec::new(),
    }
}

fn mean_and_sample_std(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// All five metrics for a value series sampled `periods_per_year` times a year.
///
/// With a single period the return std is undefined: volatility is then
/// reported as 0 and the Sharpe ratio as undefined.
pub fn compute_metrics(values: &[f64], periods_per_year: f64) -> Result<Metrics, EvalError> {
    if !(periods_per_year.is_finite() && periods_per_year > 0.0) {
        return Err(EvalError::InvalidPeriods(periods_per_year));
    }
    let returns = period_returns(values)?;
    let growth = values[values.len() - 1] / values[0];
    let (mean, std) = mean_and_sample_std(&returns);
    let std = std.unwrap_or(0.0);
    let sharpe_ratio = if std > 0.0 {
        Sharpe::Defined(mean / std * periods_per_year.sqrt())
    } else {
        Sharpe::Undefined
    };
    Ok(Metrics {
        cumulative_return: growth - 1.0,
        annual_return: growth.powf(periods_per_year / returns.len() as f64) - 1.0,
        annual_volatility: std * periods_per_year.sqrt(),
        sharpe_ratio,
        max_drawdown: max_drawdown(values),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSeries {
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
}

impl From<&Trajectory> for ValueSeries {
    fn from(t: &Trajectory) -> Self {
        ValueSeries {
            timestamps: t.timestamps.clone(),
            values: t.values.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub strategy_name: String,
    pub baseline_name: String,
    pub periods_per_year: f64,
    pub strategy: Metrics,
    pub baseline: Metrics,
    pub timestamps: Vec<i64>,
    pub strategy_values: Vec<f64>,
    pub baseline_values: Vec<f64>,
}

/// Strategy and baseline metrics side by side over identical timestamps.
pub fn build_report(
    strategy_name: &str,
    strategy: &ValueSeries,
    baseline_name: &str,
    baseline: &ValueSeries,
    periods_per_year: f64,
) -> Result<PerformanceReport, EvalError> {
    if strategy.values.len() != strategy.timestamps.len() || baseline.values.len() != baseline.timestamps.len() {
        return Err(EvalError::TimestampMismatch("values and timestamps differ in length".into()));
    }
    if strategy.timestamps.len() != baseline.timestamps.len() {
        return Err(EvalError::TimestampMismatch(format!(
            "{} strategy points vs {} baseline points",
            strategy.timestamps.len(),
            baseline.timestamps.len()
        )));
    }
    if let Some(i) = (0..strategy.timestamps.len()).find(|&i| strategy.timestamps[i] != baseline.timestamps[i]) {
        return Err(EvalError::TimestampMismatch(format!(
            "index {i}: {} vs {}",
            strategy.timestamps[i], baseline.timestamps[i]
        )));
    }
    Ok(PerformanceReport {
        strategy_name: strategy_name.to_string(),
        baseline_name: baseline_name.to_string(),
        periods_per_year,
        strategy: compute_metrics(&strategy.values, periods_per_year)?,
        baseline: compute_metrics(&baseline.values, periods_per_year)?,
        timestamps: strategy.timestamps.clone(),
        strategy_values: strategy.values.clone(),
        baseline_values: baseline.values.clone(),
    })
}

/// Plot data with header `timestamp,strategy_cumret,baseline_cumret`.
pub fn write_cumret_csv<W: Write>(report: &PerformanceReport, out: W) -> Result<(), EvalError> {
    let err = |e: csv::Error| EvalError::Output(e.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "strategy_cumret", "baseline_cumret"]).map_err(err)?;
    let s = cumulative_return_series(&report.strategy_values);
    let b = cumulative_return_series(&report.baseline_values);
    for ((t, s), b) in report.timestamps.iter().zip(&s).zip(&b) {
        w.write_record([t.to_string(), s.to_string(), b.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| EvalError::Output(e.to_string()))
}

fn percent(x: f64) -> String {
    format!("{:.3}%", x * 100.0)
}

/// Text table with one row per metric and one column per header. A column
/// holding several blocks (say backtest and paper trade) shows them as `a / b`.
pub fn render_table(headers: &[&str], columns: &[Vec<&Metrics>]) -> String {
    type Cell = fn(&Metrics) -> String;
    let rows: [(&str, Cell); 5] = [
        ("Cumul. return", |m| percent(m.cumulative_return)),
        ("Annual return", |m| percent(m.annual_return)),
        ("Annual volatility", |m| percent(m.annual_volatility)),
        ("Sharpe ratio", |m| m.sharpe_ratio.to_string()),
        ("Max drawdown", |m| percent(m.max_drawdown)),
    ];
    let mut grid: Vec<Vec<String>> = vec![std::iter::once(String::new())
        .chain(headers.iter().map(|h| h.to_string()))
        .collect()];
    for (label, cell) in rows {
        let mut line = vec![label.to_string()];
        line.extend(
            columns
                .iter()
                .map(|blocks| blocks.iter().map(|m| cell(m)).collect::<Vec<_>>().join(" / ")),
        );
        grid.push(line);
    }
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    grid.iter()
        .map(|r| {
            let cells: Vec<String> = r.iter().zip(&widths).map(|(s, w)| format!("{s:<w$}")).collect();
            format!("| {} |", cells.join(" | "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}
