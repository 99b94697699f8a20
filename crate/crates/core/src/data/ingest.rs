use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{Bar, DataError, RowError};

/// Maps logical OHLCV fields onto CSV header names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub timestamp: String,
    pub symbol: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    pub volume: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            timestamp: "timestamp".into(),
            symbol: "symbol".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
            volume: "volume".into(),
        }
    }
}

/// Parses epoch seconds, RFC 3339, or `YYYY-MM-DD HH:MM:SS` (taken as UTC).
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp());
    }
    NaiveDateTime::parse_from_str(raw, "%Y-%m-%d %H:%M:%S")
        .ok()
        .map(|dt| dt.and_utc().timestamp())
}

/// Reads OHLCV bars from a CSV file.
///
/// Every data row is validated; if any row fails, the whole load fails with
/// the complete list of offending rows.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Vec<Bar>, DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::io(path, e))?;
    read_bars(file, schema).map_err(|e| match e {
        DataError::Csv { message, .. } => DataError::Csv {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub(crate) fn read_bars<R: std::io::Read>(
    reader: R,
    schema: &CsvSchema,
) -> Result<Vec<Bar>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let csv_err = |e: csv::Error| DataError::Csv {
        path: Default::default(),
        message: e.to_string(),
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let idx = [
        col(&schema.timestamp)?,
        col(&schema.symbol)?,
        col(&schema.open)?,
        col(&schema.high)?,
        col(&schema.low)?,
        col(&schema.close)?,
        col(&schema.volume)?,
    ];

    let mut bars = Vec::new();
    let mut errors = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                errors.push(RowError {
                    row,
                    message: e.to_string(),
                });
                continue;
            }
        };
        match parse_row(&record, &idx) {
            Ok(bar) => bars.push(bar),
            Err(message) => errors.push(RowError { row, message }),
        }
    }
    if errors.is_empty() {
        Ok(bars)
    } else {
        Err(DataError::InvalidRows(errors))
    }
}

fn parse_row(record: &csv::StringRecord, idx: &[usize; 7]) -> Result<Bar, String> {
    let field = |i: usize| record.get(idx[i]).unwrap_or("");
    let timestamp =
        parse_timestamp(field(0)).ok_or_else(|| format!("unparsable timestamp '{}'", field(0)))?;
    let symbol = field(1).to_string();
    if symbol.is_empty() {
        return Err("empty symbol".into());
    }
    let num = |i: usize, name: &str| {
        field(i)
            .parse::<f64>()
            .map_err(|_| format!("unparsable {name} '{}'", field(i)))
    };
    let bar = Bar {
        timestamp,
        symbol,
        open: num(2, "open")?,
        high: num(3, "high")?,
        low: num(4, "low")?,
        close: num(5, "close")?,
        volume: num(6, "volume")?,
    };
    bar.validate().map_err(str::to_string)?;
    Ok(bar)
}
