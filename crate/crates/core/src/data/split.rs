use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{DataError, MarketPanel};

/// Half-open time range `[start, end)` in epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: i64,
    pub end: i64,
}

impl TimeRange {
    pub fn new(start: i64, end: i64) -> Self {
        TimeRange { start, end }
    }

    /// Whole calendar days `first..=last` (UTC), given as `YYYY-MM-DD`.
    pub fn from_dates(first: &str, last: &str) -> Result<Self, DataError> {
        let day = |s: &str| {
            NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
                .map_err(|_| DataError::InvalidDate(s.to_string()))
                .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight").and_utc().timestamp())
        };
        Ok(TimeRange {
            start: day(first)?,
            end: day(last)? + 86_400,
        })
    }

    pub fn overlaps(&self, other: &TimeRange) -> bool {
        self.start < other.end && other.start < self.end
    }
}

impl fmt::Display for TimeRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |ts: i64| {
            chrono::DateTime::from_timestamp(ts, 0)
                .map(|d| d.format("%Y-%m-%dT%H:%M:%SZ").to_string())
                .unwrap_or_else(|| ts.to_string())
        };
        write!(f, "[{}, {})", show(self.start), show(self.end))
    }
}

/// Checks that ranges are non-empty, ordered and pairwise disjoint.
pub fn check_ranges(ranges: &[TimeRange]) -> Result<(), DataError> {
    for r in ranges {
        if r.start >= r.end {
            return Err(DataError::EmptySlice(r.to_string()));
        }
    }
    for w in ranges.windows(2) {
        if w[1].start < w[0].end {
            return Err(DataError::OverlappingRanges {
                first: w[0].to_string(),
                second: w[1].to_string(),
            });
        }
    }
    Ok(())
}

/// Cuts `panel` into contiguous sub-panels, one per range.
pub fn split_panel(panel: &MarketPanel, ranges: &[TimeRange]) -> Result<Vec<MarketPanel>, DataError> {
    check_ranges(ranges)?;
    ranges
        .iter()
        .map(|r| {
            let rows = panel.rows_in(r.start, r.end);
            if rows.is_empty() {
                return Err(DataError::EmptySlice(r.to_string()));
            }
            panel.slice_rows(rows)
        })
        .collect()
}
