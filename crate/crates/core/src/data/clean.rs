use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::panel::BASE_FEATURES;
use super::{Bar, DataError, MarketPanel};

const SECONDS_PER_DAY: i64 = 86_400;
const SECONDS_PER_YEAR: f64 = 365.0 * 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    /// Prices carry the last observed close; volume is zero.
    ForwardFill,
    /// Grid rows where any kept symbol lacks a bar are removed.
    DropRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SessionCalendar {
    /// Round-the-clock markets (crypto).
    Continuous,
    /// Daily sessions `[open, close)` in UTC seconds-of-day. Days with no bar
    /// for any symbol are treated as holidays.
    Exchange {
        open_utc_seconds: i64,
        close_utc_seconds: i64,
        #[serde(default = "default_trading_days")]
        trading_days_per_year: f64,
    },
}

fn default_trading_days() -> f64 {
    252.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleaningConfig {
    pub max_gap_fraction: f64,
    pub fill_policy: FillPolicy,
    pub session_calendar: SessionCalendar,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        CleaningConfig {
            max_gap_fraction: 0.05,
            fill_policy: FillPolicy::ForwardFill,
            session_calendar: SessionCalendar::Continuous,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        if !(0.0..=1.0).contains(&self.max_gap_fraction) {
            return Err(DataError::InvalidConfig(format!(
                "max_gap_fraction {} outside [0, 1]",
                self.max_gap_fraction
            )));
        }
        if let SessionCalendar::Exchange {
            open_utc_seconds,
            close_utc_seconds,
            trading_days_per_year,
        } = self.session_calendar
        {
            if !(0..SECONDS_PER_DAY).contains(&open_utc_seconds)
                || !(1..=SECONDS_PER_DAY).contains(&close_utc_seconds)
                || close_utc_seconds <= open_utc_seconds
            {
                return Err(DataError::InvalidConfig(format!(
                    "session [{open_utc_seconds}, {close_utc_seconds}) is not a valid intraday window"
                )));
            }
            if !(trading_days_per_year > 0.0) {
                return Err(DataError::InvalidConfig(
                    "trading_days_per_year must be positive".into(),
                ));
            }
        }
        Ok(())
    }

    fn periods_per_year(&self, interval: i64) -> f64 {
        match self.session_calendar {
            SessionCalendar::Continuous => SECONDS_PER_YEAR / interval as f64,
            SessionCalendar::Exchange {
                open_utc_seconds,
                close_utc_seconds,
                trading_days_per_year,
            } => {
                let per_session = ((close_utc_seconds - open_utc_seconds) / interval).max(1);
                trading_days_per_year * per_session as f64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedSymbol {
    pub symbol: String,
    pub gap_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CleaningReport {
    pub grid_len: usize,
    pub dropped: Vec<DroppedSymbol>,
    /// Filled bars per kept symbol (forward-fill policy).
    pub filled: Vec<(String, usize)>,
    pub dropped_rows: usize,
}

#[derive(Debug, Clone)]
pub struct Cleaned {
    pub panel: MarketPanel,
    pub report: CleaningReport,
}

/// Aligns bars of the requested symbols onto a common interval grid.
///
/// The grid spans from the latest first bar to the earliest last bar across
/// symbols. Symbols whose missing-bar fraction exceeds
/// `cfg.max_gap_fraction` are dropped and listed in the report.
pub fn align_and_clean(
    bars: &[Bar],
    symbols: &[String],
    interval_seconds: i64,
    cfg: &CleaningConfig,
) -> Result<Cleaned, DataError> {
    cfg.validate()?;
    if interval_seconds <= 0 {
        return Err(DataError::NonPositiveInterval(interval_seconds));
    }
    if bars.is_empty() {
        return Err(DataError::EmptyBars);
    }

    let wanted: HashMap<&str, usize> = symbols
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut series: Vec<BTreeMap<i64, &Bar>> = vec![BTreeMap::new(); symbols.len()];
    for bar in bars {
        if let Some(&i) = wanted.get(bar.symbol.as_str()) {
            if series[i].insert(bar.timestamp, bar).is_some() {
                return Err(DataError::DuplicateBar {
                    symbol: bar.symbol.clone(),
                    timestamp: bar.timestamp,
                });
            }
        }
    }
    for (i, s) in series.iter().enumerate() {
        if s.is_empty() {
            return Err(DataError::MissingSymbol(symbols[i].clone()));
        }
    }

    let start = series.iter().map(|s| *s.keys().next().unwrap()).max().unwrap();
    let end = series.iter().map(|s| *s.keys().next_back().unwrap()).min().unwrap();
    if start > end {
        return Err(DataError::NoCommonWindow);
    }

    let grid = build_grid(&series, start, end, interval_seconds, &cfg.session_calendar);
    if grid.is_empty() {
        return Err(DataError::NoCommonWindow);
    }
    let on_grid: BTreeSet<i64> = grid.iter().copied().collect();

    let mut kept = Vec::new();
    let mut report = CleaningReport {
        grid_len: grid.len(),
        ..CleaningReport::default()
    };
    for (i, s) in series.iter().enumerate() {
        for &ts in s.range(start..=end).map(|(ts, _)| ts) {
            if (ts - start) % interval_seconds != 0 {
                return Err(DataError::Misaligned {
                    symbol: symbols[i].clone(),
                    timestamp: ts,
                    interval: interval_seconds,
                });
            }
        }
        let present = s
            .range(start..=end)
            .filter(|(ts, _)| on_grid.contains(ts))
            .count();
        let gap_fraction = (grid.len() - present) as f64 / grid.len() as f64;
        if gap_fraction > cfg.max_gap_fraction {
            log::warn!("dropping {}: gap fraction {gap_fraction:.4}", symbols[i]);
            report.dropped.push(DroppedSymbol {
                symbol: symbols[i].clone(),
                gap_fraction,
            });
        } else {
            kept.push(i);
        }
    }
    if kept.is_empty() {
        return Err(DataError::AllSymbolsDropped(
            report.dropped.iter().map(|d| d.symbol.clone()).collect(),
        ));
    }

    let nf = BASE_FEATURES.len();
    let mut timestamps = Vec::with_capacity(grid.len());
    let mut values = Vec::with_capacity(grid.len() * kept.len() * nf);
    let mut filled = vec![0usize; kept.len()];
    for &ts in &grid {
        let complete = kept.iter().all(|&i| series[i].contains_key(&ts));
        if !complete && cfg.fill_policy == FillPolicy::DropRow {
            report.dropped_rows += 1;
            continue;
        }
        timestamps.push(ts);
        for (k, &i) in kept.iter().enumerate() {
            match series[i].get(&ts) {
                Some(b) => values.extend_from_slice(&[b.close, b.open, b.high, b.low, b.volume]),
                None => {
                    // every symbol has a bar at or before `start`, so a prior bar exists
                    let (_, prior) = series[i].range(..ts).next_back().expect("prior bar");
                    let c = prior.close;
                    values.extend_from_slice(&[c, c, c, c, 0.0]);
                    filled[k] += 1;
                }
            }
        }
    }
    if timestamps.is_empty() {
        return Err(DataError::NoCommonWindow);
    }
    report.filled = kept
        .iter()
        .zip(&filled)
        .map(|(&i, &n)| (symbols[i].clone(), n))
        .collect();

    let panel = MarketPanel::new(
        timestamps,
        kept.iter().map(|&i| symbols[i].clone()).collect(),
        BASE_FEATURES.iter().map(|s| s.to_string()).collect(),
        values,
        interval_seconds,
        cfg.periods_per_year(interval_seconds),
    )?;
    Ok(Cleaned { panel, report })
}

fn build_grid(
    series: &[BTreeMap<i64, &Bar>],
    start: i64,
    end: i64,
    interval: i64,
    calendar: &SessionCalendar,
) -> Vec<i64> {
    let points = (0..=(end - start) / interval).map(|k| start + k * interval);
    match *calendar {
        SessionCalendar::Continuous => points.collect(),
        SessionCalendar::Exchange {
            open_utc_seconds,
            close_utc_seconds,
            ..
        } => {
            let active_days: BTreeSet<i64> = series
                .iter()
                .flat_map(|s| s.keys().map(|ts| ts.div_euclid(SECONDS_PER_DAY)))
                .collect();
            points
                .filter(|ts| {
                    let tod = ts.rem_euclid(SECONDS_PER_DAY);
                    (open_utc_seconds..close_utc_seconds).contains(&tod)
                        && active_days.contains(&ts.div_euclid(SECONDS_PER_DAY))
                })
                .collect()
        }
    }
}
