use serde::{Deserialize, Serialize};

/// One OHLCV record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    /// Epoch seconds, UTC.
    pub timestamp: i64,
    pub symbol: String,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    /// Checks the OHLCV invariants, returning a short reason on violation.
    pub fn validate(&self) -> Result<(), &'static str> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().chain([&self.volume]).any(|v| !v.is_finite()) {
            return Err("non-finite value");
        }
        if prices.iter().any(|&p| p <= 0.0) {
            return Err("non-positive price");
        }
        if self.volume < 0.0 {
            return Err("negative volume");
        }
        if self.low > self.open.min(self.close) || self.high < self.open.max(self.close) {
            return Err("OHLC bounds violated");
        }
        Ok(())
    }
}
