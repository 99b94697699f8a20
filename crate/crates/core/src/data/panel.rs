use std::fs;
use std::io::{BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Bar, DataError};

/// Leading feature columns present in every panel, in this order.
pub const BASE_FEATURES: [&str; 5] = ["close", "open", "high", "low", "volume"];

pub const CLOSE: usize = 0;
pub const OPEN: usize = 1;
pub const HIGH: usize = 2;
pub const LOW: usize = 3;
pub const VOLUME: usize = 4;

const META_FILE: &str = "meta.json";
const VALUES_FILE: &str = "values.f64";
const FORMAT_VERSION: u32 = 1;

/// Cleaned, time-aligned `time x symbol x feature` tensor.
///
/// Values are stored row-major in `(time, symbol, feature)` order. A panel is
/// immutable once built; derived panels are produced by the `with_*` and
/// `slice_*` methods.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPanel {
    timestamps: Vec<i64>,
    symbols: Vec<String>,
    feature_names: Vec<String>,
    values: Vec<f64>,
    interval_seconds: i64,
    periods_per_year: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct PanelMeta {
    format_version: u32,
    symbols: Vec<String>,
    feature_names: Vec<String>,
    interval_seconds: i64,
    periods_per_year: f64,
    timestamps: Vec<i64>,
}

impl MarketPanel {
    pub fn new(
        timestamps: Vec<i64>,
        symbols: Vec<String>,
        feature_names: Vec<String>,
        values: Vec<f64>,
        interval_seconds: i64,
        periods_per_year: f64,
    ) -> Result<Self, DataError> {
        let panel = MarketPanel {
            timestamps,
            symbols,
            feature_names,
            values,
            interval_seconds,
            periods_per_year,
        };
        panel.check()?;
        Ok(panel)
    }

    fn check(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidPanel(m));
        if self.timestamps.is_empty() || self.symbols.is_empty() {
            return bad("panel needs at least one row and one symbol".into());
        }
        if self.feature_names.len() < BASE_FEATURES.len()
            || self.feature_names[..BASE_FEATURES.len()] != BASE_FEATURES
        {
            return bad(format!(
                "feature names must begin with {:?}, got {:?}",
                BASE_FEATURES, self.feature_names
            ));
        }
        let mut names = self.feature_names.clone();
        names.sort();
        names.dedup();
        if names.len() != self.feature_names.len() {
            return bad("duplicate feature name".into());
        }
        if self.interval_seconds <= 0 {
            return bad(format!("interval {} must be positive", self.interval_seconds));
        }
        if !(self.periods_per_year.is_finite() && self.periods_per_year > 0.0) {
            return bad(format!("periods_per_year {} must be positive", self.periods_per_year));
        }
        if let Some(w) = self.timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return bad(format!("timestamps not strictly increasing at {}", w[1]));
        }
        if let Some(w) = self
            .timestamps
            .windows(2)
            .find(|w| (w[1] - w[0]) % self.interval_seconds != 0)
        {
            return bad(format!("timestamp {} is off the interval grid", w[1]));
        }
        let expected = self.timestamps.len() * self.symbols.len() * self.feature_names.len();
        if self.values.len() != expected {
            return bad(format!("expected {} values, got {}", expected, self.values.len()));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return bad(format!("non-finite value at flat index {i}"));
        }
        for t in 0..self.n_times() {
            for n in 0..self.n_symbols() {
                if self.close(t, n) <= 0.0 {
                    return bad(format!("non-positive close at row {t}, symbol {n}"));
                }
            }
        }
        Ok(())
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interval_seconds(&self) -> i64 {
        self.interval_seconds
    }

    pub fn periods_per_year(&self) -> f64 {
        self.periods_per_year
    }

    pub fn n_times(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_symbols(&self) -> usize {
        self.symbols.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    #[inline]
    pub fn value(&self, t: usize, n: usize, f: usize) -> f64 {
        let nf = self.feature_names.len();
        self.values[(t * self.symbols.len() + n) * nf + f]
    }

    #[inline]
    pub fn close(&self, t: usize, n: usize) -> f64 {
        self.value(t, n, CLOSE)
    }

    pub fn closes(&self, t: usize) -> Vec<f64> {
        (0..self.n_symbols()).map(|n| self.close(t, n)).collect()
    }

    /// Full time series of one feature for one symbol.
    pub fn column(&self, n: usize, f: usize) -> Vec<f64> {
        (0..self.n_times()).map(|t| self.value(t, n, f)).collect()
    }

    /// Contiguous row slice sharing symbols and features with `self`.
    pub fn slice_rows(&self, rows: Range<usize>) -> Result<MarketPanel, DataError> {
        if rows.start >= rows.end || rows.end > self.n_times() {
            return Err(DataError::EmptySlice(format!("rows {rows:?}")));
        }
        let stride = self.n_symbols() * self.n_features();
        Ok(MarketPanel {
            timestamps: self.timestamps[rows.clone()].to_vec(),
            symbols: self.symbols.clone(),
            feature_names: self.feature_names.clone(),
            values: self.values[rows.start * stride..rows.end * stride].to_vec(),
            interval_seconds: self.interval_seconds,
            periods_per_year: self.periods_per_year,
        })
    }

    /// Rows with `start <= timestamp < end`.
    pub fn rows_in(&self, start: i64, end: i64) -> Range<usize> {
        let lo = self.timestamps.partition_point(|&t| t < start);
        let hi = self.timestamps.partition_point(|&t| t < end);
        lo..hi.max(lo)
    }

    /// Appends feature columns. Each column holds `T * N` values in `(time, symbol)` order.
    pub fn with_features(
        &self,
        columns: Vec<(String, Vec<f64>)>,
    ) -> Result<MarketPanel, DataError> {
        let (t_len, n_len, f_old) = (self.n_times(), self.n_symbols(), self.n_features());
        for (name, data) in &columns {
            if self.feature_index(name).is_some() {
                return Err(DataError::InvalidPanel(format!("duplicate feature name '{name}'")));
            }
            if data.len() != t_len * n_len {
                return Err(DataError::InvalidPanel(format!(
                    "feature '{name}' has {} values, expected {}",
                    data.len(),
                    t_len * n_len
                )));
            }
        }
        let f_new = f_old + columns.len();
        let mut values = Vec::with_capacity(t_len * n_len * f_new);
        for t in 0..t_len {
            for n in 0..n_len {
                let base = (t * n_len + n) * f_old;
                values.extend_from_slice(&self.values[base..base + f_old]);
                values.extend(columns.iter().map(|(_, data)| data[t * n_len + n]));
            }
        }
        let mut feature_names = self.feature_names.clone();
        feature_names.extend(columns.into_iter().map(|(name, _)| name));
        MarketPanel::new(
            self.timestamps.clone(),
            self.symbols.clone(),
            feature_names,
            values,
            self.interval_seconds,
            self.periods_per_year,
        )
    }

    /// Reorders symbols; `order[i]` is the source index placed at position `i`.
    pub fn permute_symbols(&self, order: &[usize]) -> Result<MarketPanel, DataError> {
        let n_len = self.n_symbols();
        let mut seen = vec![false; n_len];
        if order.len() != n_len || order.iter().any(|&i| i >= n_len || std::mem::replace(&mut seen[i], true)) {
            return Err(DataError::InvalidPanel(format!("{order:?} is not a permutation")));
        }
        let nf = self.n_features();
        let mut values = Vec::with_capacity(self.values.len());
        for t in 0..self.n_times() {
            for &src in order {
                let base = (t * n_len + src) * nf;
                values.extend_from_slice(&self.values[base..base + nf]);
            }
        }
        Ok(MarketPanel {
            timestamps: self.timestamps.clone(),
            symbols: order.iter().map(|&i| self.symbols[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            values,
            interval_seconds: self.interval_seconds,
            periods_per_year: self.periods_per_year,
        })
    }

    /// Recovers the OHLCV bars the panel was built from (base columns only).
    pub fn to_bars(&self) -> Vec<Bar> {
        let mut bars = Vec::with_capacity(self.n_times() * self.n_symbols());
        for (t, &timestamp) in self.timestamps.iter().enumerate() {
            for (n, symbol) in self.symbols.iter().enumerate() {
                bars.push(Bar {
                    timestamp,
                    symbol: symbol.clone(),
                    open: self.value(t, n, OPEN),
                    high: self.value(t, n, HIGH),
                    low: self.value(t, n, LOW),
                    close: self.value(t, n, CLOSE),
                    volume: self.value(t, n, VOLUME),
                });
            }
        }
        bars
    }

    /// SHA-256 over the full panel contents, hex encoded.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for ts in &self.timestamps {
            hasher.update(ts.to_le_bytes());
        }
        for s in self.symbols.iter().chain(&self.feature_names) {
            hasher.update((s.len() as u64).to_le_bytes());
            hasher.update(s.as_bytes());
        }
        hasher.update(self.interval_seconds.to_le_bytes());
        hasher.update(self.periods_per_year.to_le_bytes());
        for v in &self.values {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// Writes `meta.json` and a flat little-endian f64 tensor into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), DataError> {
        fs::create_dir_all(dir).map_err(|e| DataError::io(dir, e))?;
        let meta = PanelMeta {
            format_version: FORMAT_VERSION,
            symbols: self.symbols.clone(),
            feature_names: self.feature_names.clone(),
            interval_seconds: self.interval_seconds,
            periods_per_year: self.periods_per_year,
            timestamps: self.timestamps.clone(),
        };
        let meta_path = dir.join(META_FILE);
        let json = serde_json::to_vec_pretty(&meta).map_err(|e| DataError::Metadata(e.to_string()))?;
        fs::write(&meta_path, json).map_err(|e| DataError::io(&meta_path, e))?;

        let values_path = dir.join(VALUES_FILE);
        let file = fs::File::create(&values_path).map_err(|e| DataError::io(&values_path, e))?;
        let mut out = BufWriter::new(file);
        for v in &self.values {
            out.write_all(&v.to_le_bytes())
                .map_err(|e| DataError::io(&values_path, e))?;
        }
        out.flush().map_err(|e| DataError::io(&values_path, e))
    }

    pub fn load(dir: &Path) -> Result<MarketPanel, DataError> {
        let meta_path = dir.join(META_FILE);
        let raw = fs::read(&meta_path).map_err(|e| DataError::io(&meta_path, e))?;
        let meta: PanelMeta =
            serde_json::from_slice(&raw).map_err(|e| DataError::Metadata(e.to_string()))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(DataError::Metadata(format!(
                "unsupported format version {}",
                meta.format_version
            )));
        }
        let values_path = dir.join(VALUES_FILE);
        let mut bytes = Vec::new();
        fs::File::open(&values_path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| DataError::io(&values_path, e))?;
        if bytes.len() % 8 != 0 {
            return Err(DataError::Metadata(format!(
                "{} has {} bytes, not a multiple of 8",
                values_path.display(),
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        MarketPanel::new(
            meta.timestamps,
            meta.symbols,
            meta.feature_names,
            values,
            meta.interval_seconds,
            meta.periods_per_year,
        )
    }
}
