use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// A single rejected input row, numbered from 1 over data rows (header excluded).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub row: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.message)
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("missing column '{0}' in header")]
    MissingColumn(String),
    #[error("{} invalid row(s): {}", .0.len(), join_rows(.0))]
    InvalidRows(Vec<RowError>),
    #[error("no bars supplied")]
    EmptyBars,
    #[error("requested symbol '{0}' has no bars")]
    MissingSymbol(String),
    #[error("duplicate bar for {symbol} at {timestamp}")]
    DuplicateBar { symbol: String, timestamp: i64 },
    #[error("bar for {symbol} at {timestamp} is not on the {interval}s grid")]
    Misaligned {
        symbol: String,
        timestamp: i64,
        interval: i64,
    },
    #[error("interval must be positive, got {0}")]
    NonPositiveInterval(i64),
    #[error("symbols have no common time window")]
    NoCommonWindow,
    #[error("all symbols dropped by cleaning: {0:?}")]
    AllSymbolsDropped(Vec<String>),
    #[error("invalid cleaning config: {0}")]
    InvalidConfig(String),
    #[error("invalid panel: {0}")]
    InvalidPanel(String),
    #[error("ranges overlap or are out of order: {first} and {second}")]
    OverlappingRanges { first: String, second: String },
    #[error("empty slice for range {0}")]
    EmptySlice(String),
    #[error("invalid date '{0}'")]
    InvalidDate(String),
    #[error("panel metadata: {0}")]
    Metadata(String),
}

fn join_rows(rows: &[RowError]) -> String {
    rows.iter()
        .map(|r| r.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }

    /// Row numbers of rejected input rows, empty for other error kinds.
    pub fn bad_rows(&self) -> Vec<usize> {
        match self {
            DataError::InvalidRows(rows) => rows.iter().map(|r| r.row).collect(),
            _ => Vec::new(),
        }
    }
}
