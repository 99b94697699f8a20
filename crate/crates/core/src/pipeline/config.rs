use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::agents::{BaselineSpec, ReinforceConfig};
use crate::data::{check_ranges, CleaningConfig, CsvSchema, TimeRange};
use crate::env::{EnvConfig, EnvKind};
use crate::features::{IndicatorSpec, TurbulenceConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub paths: Vec<PathBuf>,
    #[serde(default)]
    pub schema: CsvSchema,
}

/// One candidate (or baseline) agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgentSpec {
    /// Linear Gaussian policy trained with REINFORCE from zero parameters.
    Reinforce {
        #[serde(default)]
        training: ReinforceConfig,
    },
    BuyAndHold,
    EqualWeight,
    Momentum { lookback: usize, top_k: usize },
    MinVariance { lookback: usize },
    MeanVariance { lookback: usize, risk_aversion: f64 },
    Zero,
    Random,
}

impl AgentSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AgentSpec::Reinforce { .. } => "reinforce",
            AgentSpec::BuyAndHold => "buy_and_hold",
            AgentSpec::EqualWeight => "equal_weight",
            AgentSpec::Momentum { .. } => "momentum",
            AgentSpec::MinVariance { .. } => "min_variance",
            AgentSpec::MeanVariance { .. } => "mean_variance",
            AgentSpec::Zero => "zero",
            AgentSpec::Random => "random",
        }
    }

    pub fn baseline_spec(&self) -> Option<BaselineSpec> {
        Some(match *self {
            AgentSpec::BuyAndHold => BaselineSpec::BuyAndHold,
            AgentSpec::EqualWeight => BaselineSpec::EqualWeight,
            AgentSpec::Momentum { lookback, top_k } => BaselineSpec::Momentum { lookback, top_k },
            AgentSpec::MinVariance { lookback } => BaselineSpec::MinVariance { lookback },
            AgentSpec::MeanVariance { lookback, risk_aversion } => {
                BaselineSpec::MeanVariance { lookback, risk_aversion }
            }
            _ => return None,
        })
    }

    fn validate(&self, n_symbols: usize) -> Result<(), String> {
        match *self {
            AgentSpec::Reinforce { ref training } => training.validate().map_err(|e| e.to_string()),
            AgentSpec::Momentum { lookback, top_k } if lookback == 0 || top_k == 0 || top_k > n_symbols => Err(
                format!("momentum needs lookback >= 1 and 1 <= top_k <= {n_symbols}"),
            ),
            AgentSpec::MinVariance { lookback } | AgentSpec::MeanVariance { lookback, .. } if lookback < n_symbols + 2 => {
                Err(format!("lookback {lookback} must be at least symbols + 2 = {}", n_symbols + 2))
            }
            AgentSpec::MeanVariance { risk_aversion, .. } if !(risk_aversion > 0.0) => {
                Err(format!("risk_aversion {risk_aversion} must be > 0"))
            }
            _ => Ok(()),
        }
    }
}

/// A window given either as whole UTC days or as epoch seconds `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RangeSpec {
    Dates { first: String, last: String },
    Epoch { start: i64, end: i64 },
}

impl RangeSpec {
    pub fn resolve(&self) -> Result<TimeRange, PipelineError> {
        match self {
            RangeSpec::Dates { first, last } => {
                TimeRange::from_dates(first, last).map_err(|e| PipelineError::Config(e.to_string()))
            }
            RangeSpec::Epoch { start, end } => Ok(TimeRange::new(*start, *end)),
        }
    }
}

impl From<TimeRange> for RangeSpec {
    fn from(r: TimeRange) -> Self {
        RangeSpec::Epoch { start: r.start, end: r.end }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum WindowSpec {
    Fixed {
        train: RangeSpec,
        validation: RangeSpec,
        test: RangeSpec,
        #[serde(default)]
        paper_trade: Option<RangeSpec>,
    },
    /// Bar counts on the cleaned grid, advanced by `stride_bars` per window.
    Rolling {
        train_bars: usize,
        validation_bars: usize,
        test_bars: usize,
        #[serde(default)]
        paper_trade_bars: usize,
        stride_bars: usize,
    },
}

/// Resolved phase windows, in time order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Windows {
    pub train: TimeRange,
    pub validation: TimeRange,
    pub test: TimeRange,
    pub paper_trade: Option<TimeRange>,
}

impl Windows {
    pub fn check(&self) -> Result<(), PipelineError> {
        let mut ranges = vec![self.train, self.validation, self.test];
        ranges.extend(self.paper_trade);
        check_ranges(&ranges).map_err(|e| PipelineError::Config(format!("window layout: {e}")))
    }

    /// Training plus validation, used for the retrain phase.
    pub fn train_and_validation(&self) -> TimeRange {
        TimeRange::new(self.train.start, self.validation.end)
    }
}

impl WindowSpec {
    pub fn resolve_fixed(&self) -> Result<Option<Windows>, PipelineError> {
        match self {
            WindowSpec::Fixed { train, validation, test, paper_trade } => {
                let w = Windows {
                    train: train.resolve()?,
                    validation: validation.resolve()?,
                    test: test.resolve()?,
                    paper_trade: paper_trade.as_ref().map(RangeSpec::resolve).transpose()?,
                };
                w.check()?;
                Ok(Some(w))
            }
            WindowSpec::Rolling { .. } => Ok(None),
        }
    }
}

fn default_workers() -> usize {
    1
}

fn default_indicators() -> Vec<IndicatorSpec> {
    IndicatorSpec::default_set()
}

/// Everything a pipeline run needs; serialized verbatim into the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data: DataSource,
    pub symbols: Vec<String>,
    pub interval_seconds: i64,
    #[serde(default)]
    pub cleaning: CleaningConfig,
    #[serde(default = "default_indicators")]
    pub indicators: Vec<IndicatorSpec>,
    /// `None` leaves turbulence out of the panel and the observation.
    #[serde(default)]
    pub turbulence: Option<TurbulenceConfig>,
    #[serde(default)]
    pub env_kind: EnvKind,
    #[serde(default)]
    pub env: EnvConfig,
    pub agents: Vec<AgentSpec>,
    /// Reference strategy for every report. Defaults to buy-and-hold for the
    /// stock env and equal weights for the allocation env.
    #[serde(default)]
    pub baseline: Option<AgentSpec>,
    pub windows: WindowSpec,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

impl PipelineConfig {
    /// Parses a config file; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.rebase_paths(base);
        Ok(cfg)
    }

    pub fn rebase_paths(&mut self, base: &Path) {
        for p in &mut self.data.paths {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
    }

    pub fn baseline_spec(&self) -> AgentSpec {
        self.baseline.clone().unwrap_or(match self.env_kind {
            EnvKind::Stock => AgentSpec::BuyAndHold,
            EnvKind::Allocation => AgentSpec::EqualWeight,
        })
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.data.paths.is_empty() {
            return bad("data.paths is empty".into());
        }
        if self.symbols.is_empty() {
            return bad("symbols is empty".into());
        }
        let unique: BTreeSet<&String> = self.symbols.iter().collect();
        if unique.len() != self.symbols.len() {
            return bad("symbols contain duplicates".into());
        }
        if self.interval_seconds <= 0 {
            return bad(format!("interval_seconds {} must be > 0", self.interval_seconds));
        }
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        self.cleaning.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.env.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let n = self.symbols.len();
        match &self.turbulence {
            Some(t) => t.validate(n).map_err(|e| PipelineError::Config(e.to_string()))?,
            None if self.env.turbulence_threshold.is_some() => {
                return bad("env.turbulence_threshold is set but turbulence is disabled".into());
            }
            None => {}
        }
        if self.agents.is_empty() {
            return bad("agents is empty".into());
        }
        for (i, a) in self.agents.iter().enumerate() {
            a.validate(n).map_err(|m| PipelineError::Config(format!("agents[{i}] ({}): {m}", a.name())))?;
        }
        let baseline = self.baseline_spec();
        if matches!(baseline, AgentSpec::Reinforce { .. }) {
            return bad("baseline must not require training".into());
        }
        baseline
            .validate(n)
            .map_err(|m| PipelineError::Config(format!("baseline: {m}")))?;
        match self.windows {
            WindowSpec::Fixed { .. } => {
                self.windows.resolve_fixed()?;
            }
            WindowSpec::Rolling { train_bars, validation_bars, test_bars, stride_bars, .. } => {
                if train_bars < 2 || validation_bars < 2 || test_bars < 2 {
                    return bad("rolling train/validation/test windows need at least 2 bars each".into());
                }
                if stride_bars < test_bars {
                    return bad(format!(
                        "stride_bars {stride_bars} must be >= test_bars {test_bars} so test windows do not overlap"
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(train: (&str, &str), valid: (&str, &str), test: (&str, &str), paper: Option<(&str, &str)>) -> WindowSpec {
        let r = |(a, b): (&str, &str)| RangeSpec::Dates { first: a.into(), last: b.into() };
        WindowSpec::Fixed {
            train: r(train),
            validation: r(valid),
            test: r(test),
            paper_trade: paper.map(r),
        }
    }

    #[test]
    fn published_window_layout_is_accepted() {
        let w = fixed(
            ("2021-06-01", "2021-08-14"),
            ("2021-08-15", "2021-08-31"),
            ("2021-09-01", "2021-09-02"),
            Some(("2021-09-03", "2021-09-16")),
        );
        let resolved = w.resolve_fixed().unwrap().unwrap();
        assert_eq!(resolved.train_and_validation().end, resolved.validation.end);
    }

    #[test]
    fn overlapping_windows_name_the_ranges() {
        let w = fixed(
            ("2021-06-01", "2021-08-14"),
            ("2021-08-15", "2021-08-31"),
            ("2021-08-30", "2021-09-02"),
            None,
        );
        let err = w.resolve_fixed().unwrap_err().to_string();
        assert!(err.contains("2021-08-15") && err.contains("2021-08-30"), "{err}");
    }

    #[test]
    fn parses_minimal_json() {
        let cfg: PipelineConfig = serde_json::from_str(
            r#"{
                "data": {"paths": ["bars.csv"]},
                "symbols": ["A", "B"],
                "interval_seconds": 3600,
                "agents": [{"kind": "reinforce", "training": {"learning_rate": 0.05}}, {"kind": "zero"}],
                "windows": {"mode": "rolling", "train_bars": 100, "validation_bars": 20,
                            "test_bars": 20, "stride_bars": 20},
                "output_dir": "out"
            }"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.indicators.len(), 7);
        assert_eq!(cfg.baseline_spec(), AgentSpec::BuyAndHold);
        match &cfg.agents[0] {
            AgentSpec::Reinforce { training } => {
                assert_eq!(training.learning_rate, 0.05);
                assert_eq!(training.gamma, ReinforceConfig::default().gamma);
            }
            other => panic!("{other:?}"),
        }
        let bad = PipelineConfig { windows: WindowSpec::Rolling {
            train_bars: 100, validation_bars: 20, test_bars: 20, paper_trade_bars: 0, stride_bars: 10,
        }, ..cfg.clone() };
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn rejects_bad_agents() {
        let base: PipelineConfig = serde_json::from_str(
            r#"{"data": {"paths": ["x"]}, "symbols": ["A", "B"], "interval_seconds": 60,
                "agents": [{"kind": "zero"}], "output_dir": "o",
                "windows": {"mode": "fixed", "train": {"start": 0, "end": 10},
                            "validation": {"start": 10, "end": 20}, "test": {"start": 20, "end": 30}}}"#,
        )
        .unwrap();
        base.validate().unwrap();
        for agent in [
            AgentSpec::Momentum { lookback: 3, top_k: 5 },
            AgentSpec::MinVariance { lookback: 3 },
            AgentSpec::MeanVariance { lookback: 10, risk_aversion: 0.0 },
        ] {
            let cfg = PipelineConfig { agents: vec![agent], ..base.clone() };
            assert!(matches!(cfg.validate(), Err(PipelineError::Config(_))));
        }
        let cfg = PipelineConfig {
            baseline: Some(AgentSpec::Reinforce { training: ReinforceConfig::default() }),
            ..base.clone()
        };
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig {
            env: EnvConfig { turbulence_threshold: Some(1.0), ..EnvConfig::default() },
            ..base
        };
        assert!(cfg.validate().is_err());
    }
}
