//! Technical indicators over a single close-price series.
//!
//! Every function returns a series of the same length as its input. Rows
//! before the first defined value are filled with that first defined value.

use serde::{Deserialize, Serialize};

use super::FeatureError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndicatorKind {
    Sma,
    Ema,
    Macd,
    Rsi,
    BollUpper,
    BollLower,
    RollingVol,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorSpec {
    pub kind: IndicatorKind,
    pub window: usize,
    /// Slow EMA window (MACD only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub secondary_window: Option<usize>,
    /// Signal EMA window (MACD only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal_window: Option<usize>,
}

impl IndicatorSpec {
    pub fn new(kind: IndicatorKind, window: usize) -> Self {
        IndicatorSpec {
            kind,
            window,
            secondary_window: None,
            signal_window: None,
        }
    }

    pub fn macd(fast: usize, slow: usize, signal: usize) -> Self {
        IndicatorSpec {
            kind: IndicatorKind::Macd,
            window: fast,
            secondary_window: Some(slow),
            signal_window: Some(signal),
        }
    }

    /// SMA(20), EMA(12), MACD(12,26,9), RSI(14), BOLL(20) upper/lower, ROLLING_VOL(20).
    pub fn default_set() -> Vec<IndicatorSpec> {
        use IndicatorKind::*;
        vec![
            IndicatorSpec::new(Sma, 20),
            IndicatorSpec::new(Ema, 12),
            IndicatorSpec::macd(12, 26, 9),
            IndicatorSpec::new(Rsi, 14),
            IndicatorSpec::new(BollUpper, 20),
            IndicatorSpec::new(BollLower, 20),
            IndicatorSpec::new(RollingVol, 20),
        ]
    }

    /// Stable column name, e.g. `sma_20` or `macd_12_26_9`.
    pub fn feature_name(&self) -> String {
        let w = self.window;
        match self.kind {
            IndicatorKind::Sma => format!("sma_{w}"),
            IndicatorKind::Ema => format!("ema_{w}"),
            IndicatorKind::Macd => format!(
                "macd_{w}_{}_{}",
                self.secondary_window.unwrap_or(0),
                self.signal_window.unwrap_or(0)
            ),
            IndicatorKind::Rsi => format!("rsi_{w}"),
            IndicatorKind::BollUpper => format!("boll_upper_{w}"),
            IndicatorKind::BollLower => format!("boll_lower_{w}"),
            IndicatorKind::RollingVol => format!("rolling_vol_{w}"),
        }
    }

    /// Longest lookback the indicator uses, in periods.
    pub fn max_window(&self) -> usize {
        self.window.max(self.secondary_window.unwrap_or(0))
    }

    pub fn validate(&self, series_len: usize) -> Result<(), FeatureError> {
        let invalid = |m: String| Err(FeatureError::InvalidSpec(self.feature_name(), m));
        if self.window < 1 {
            return invalid("window must be at least 1".into());
        }
        if self.kind == IndicatorKind::Macd {
            match (self.secondary_window, self.signal_window) {
                (Some(slow), Some(signal)) if slow > self.window && signal >= 1 => {}
                _ => return invalid("MACD needs fast < slow and a signal window".into()),
            }
        } else if self.secondary_window.is_some() || self.signal_window.is_some() {
            return invalid("secondary/signal windows apply to MACD only".into());
        }
        if self.max_window() >= series_len {
            return Err(FeatureError::WindowTooLong {
                name: self.feature_name(),
                window: self.max_window(),
                len: series_len,
            });
        }
        Ok(())
    }

    /// Computes the indicator over `close`. Assumes [`validate`](Self::validate) passed.
    pub fn compute(&self, close: &[f64]) -> Vec<f64> {
        match self.kind {
            IndicatorKind::Sma => sma(close, self.window),
            IndicatorKind::Ema => ema(close, self.window),
            IndicatorKind::Macd => macd(
                close,
                self.window,
                self.secondary_window.expect("validated"),
            ),
            IndicatorKind::Rsi => rsi(close, self.window),
            IndicatorKind::BollUpper => bollinger(close, self.window, 2.0),
            IndicatorKind::BollLower => bollinger(close, self.window, -2.0),
            IndicatorKind::RollingVol => rolling_vol(close, self.window),
        }
    }
}

/// Replaces the leading `first` undefined rows with the value at `first`.
fn backfill_warmup(mut out: Vec<f64>, first: usize) -> Vec<f64> {
    if first < out.len() {
        let v = out[first];
        out[..first].iter_mut().for_each(|x| *x = v);
    }
    out
}

fn window_mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation.
fn window_std(xs: &[f64]) -> f64 {
    let m = window_mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

pub fn sma(close: &[f64], w: usize) -> Vec<f64> {
    let mut out = vec![0.0; close.len()];
    for t in w - 1..close.len() {
        out[t] = window_mean(&close[t + 1 - w..=t]);
    }
    backfill_warmup(out, w - 1)
}

pub fn ema(close: &[f64], w: usize) -> Vec<f64> {
    let alpha = 2.0 / (w as f64 + 1.0);
    let mut out = Vec::with_capacity(close.len());
    let mut prev = close[0];
    for &c in close {
        prev = alpha * c + (1.0 - alpha) * prev;
        out.push(prev);
    }
    out
}

/// MACD line: fast EMA minus slow EMA.
pub fn macd(close: &[f64], fast: usize, slow: usize) -> Vec<f64> {
    ema(close, fast)
        .into_iter()
        .zip(ema(close, slow))
        .map(|(f, s)| f - s)
        .collect()
}

/// Wilder-smoothed RSI. First defined at row `w`.
pub fn rsi(close: &[f64], w: usize) -> Vec<f64> {
    let mut out = vec![0.0; close.len()];
    let change = |t: usize| close[t] - close[t - 1];
    let (mut gain, mut loss) = (0.0, 0.0);
    for t in 1..=w {
        let d = change(t);
        gain += d.max(0.0);
        loss += (-d).max(0.0);
    }
    gain /= w as f64;
    loss /= w as f64;
    out[w] = rsi_value(gain, loss);
    let wf = w as f64;
    for t in w + 1..close.len() {
        let d = change(t);
        gain = (gain * (wf - 1.0) + d.max(0.0)) / wf;
        loss = (loss * (wf - 1.0) + (-d).max(0.0)) / wf;
        out[t] = rsi_value(gain, loss);
    }
    backfill_warmup(out, w)
}

fn rsi_value(avg_gain: f64, avg_loss: f64) -> f64 {
    match (avg_gain == 0.0, avg_loss == 0.0) {
        (true, true) => 50.0,
        (_, true) => 100.0,
        (true, _) => 0.0,
        _ => 100.0 - 100.0 / (1.0 + avg_gain / avg_loss),
    }
}

/// SMA plus `k` population standard deviations.
pub fn bollinger(close: &[f64], w: usize, k: f64) -> Vec<f64> {
    let mut out = vec![0.0; close.len()];
    for t in w - 1..close.len() {
        let win = &close[t + 1 - w..=t];
        out[t] = window_mean(win) + k * window_std(win);
    }
    backfill_warmup(out, w - 1)
}

/// Population std of the last `w` one-period simple returns. First defined at row `w`.
pub fn rolling_vol(close: &[f64], w: usize) -> Vec<f64> {
    let returns: Vec<f64> = close.windows(2).map(|p| p[1] / p[0] - 1.0).collect();
    let mut out = vec![0.0; close.len()];
    for t in w..close.len() {
        out[t] = window_std(&returns[t - w..t]);
    }
    backfill_warmup(out, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sma_of_one_two_three() {
        assert_eq!(sma(&[1.0, 2.0, 3.0], 3), vec![2.0, 2.0, 2.0]);
        assert_eq!(sma(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.5, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn ema_recursion() {
        // alpha = 0.5
        assert_eq!(ema(&[2.0, 4.0, 8.0], 3), vec![2.0, 3.0, 5.5]);
    }

    #[test]
    fn rsi_monotone_series() {
        let up: Vec<f64> = (0..40).map(|t| 10.0 + t as f64).collect();
        assert!(rsi(&up, 14).iter().all(|&v| v == 100.0));
        let down: Vec<f64> = up.iter().rev().copied().collect();
        assert!(rsi(&down, 14).iter().all(|&v| v == 0.0));
        assert!(rsi(&[5.0; 20], 14).iter().all(|&v| v == 50.0));
    }

    #[test]
    fn rsi_wilder_hand_computed() {
        // changes: +1, -1, +2, -1 with w = 2
        let close = [10.0, 11.0, 10.0, 12.0, 11.0];
        let out = rsi(&close, 2);
        // t=2: gain 0.5 loss 0.5 -> 50
        assert!((out[2] - 50.0).abs() < 1e-12);
        // t=3: gain (0.5+2)/2=1.25 loss 0.25 -> 100-100/6
        assert!((out[3] - (100.0 - 100.0 / 6.0)).abs() < 1e-12);
        // t=4: gain 0.625 loss 0.625 -> 50
        assert!((out[4] - 50.0).abs() < 1e-12);
        assert_eq!(out[0], out[2]);
    }

    #[test]
    fn macd_on_constant_is_zero() {
        let spec = IndicatorSpec::macd(12, 26, 9);
        assert!(spec.compute(&[42.0; 60]).iter().all(|&v| v == 0.0));
        assert_eq!(spec.feature_name(), "macd_12_26_9");
    }

    #[test]
    fn bollinger_and_vol() {
        let close = [1.0, 3.0, 1.0, 3.0];
        assert_eq!(bollinger(&close, 2, 2.0), vec![4.0, 4.0, 4.0, 4.0]);
        assert_eq!(bollinger(&close, 2, -2.0), vec![0.0, 0.0, 0.0, 0.0]);
        let flat_growth = [1.0, 2.0, 4.0, 8.0];
        assert_eq!(rolling_vol(&flat_growth, 2), vec![0.0; 4]);
    }

    #[test]
    fn spec_validation() {
        assert!(IndicatorSpec::new(IndicatorKind::Sma, 0).validate(10).is_err());
        assert!(IndicatorSpec::new(IndicatorKind::Sma, 10).validate(10).is_err());
        assert!(IndicatorSpec::macd(26, 12, 9).validate(100).is_err());
        assert!(IndicatorSpec::macd(12, 26, 9).validate(26).is_err());
        assert!(IndicatorSpec::macd(12, 26, 9).validate(27).is_ok());
        let json = serde_json::to_string(&IndicatorSpec::new(IndicatorKind::RollingVol, 5)).unwrap();
        assert_eq!(json, r#"{"kind":"rolling_vol","window":5}"#);
    }
}
