//! Raw OHLCV ingestion, cleaning and time alignment into [`MarketPanel`]s.

mod bar;
mod clean;
mod error;
mod ingest;
pub mod panel;
mod split;

pub use bar::Bar;
pub use clean::{
    align_and_clean, Cleaned, CleaningConfig, CleaningReport, DroppedSymbol, FillPolicy,
    SessionCalendar,
};
pub use error::{DataError, RowError};
pub use ingest::{load_csv, parse_timestamp, CsvSchema};
pub use panel::MarketPanel;
pub use split::{check_ranges, split_panel, TimeRange};
