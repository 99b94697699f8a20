//! Technical indicators and the turbulence index, appended as panel columns.

mod indicators;
mod turbulence;

use thiserror::Error;

use crate::data::{DataError, MarketPanel};

pub use indicators::{
    bollinger, ema, macd, rolling_vol, rsi, sma, IndicatorKind, IndicatorSpec,
};
pub use turbulence::{add_turbulence, turbulence, TurbulenceConfig, TURBULENCE_FEATURE};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("invalid indicator {0}: {1}")]
    InvalidSpec(String, String),
    #[error("{name}: window {window} needs more than {len} rows")]
    WindowTooLong { name: String, window: usize, len: usize },
    #[error("duplicate feature name '{0}'")]
    DuplicateFeature(String),
    #[error("turbulence lookback {lookback} must be at least symbols + 2 = {}", symbols + 2)]
    LookbackTooShort { lookback: usize, symbols: usize },
    #[error("covariance not positive definite at row {row}")]
    SingularCovariance { row: usize },
    #[error(transparent)]
    Panel(#[from] DataError),
}

/// Appends one close-price indicator column per spec.
pub fn add_indicators(panel: &MarketPanel, specs: &[IndicatorSpec]) -> Result<MarketPanel, FeatureError> {
    let t_len = panel.n_times();
    let mut names: Vec<String> = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.validate(t_len)?;
        let name = spec.feature_name();
        if panel.feature_index(&name).is_some() || names.contains(&name) {
            return Err(FeatureError::DuplicateFeature(name));
        }
        names.push(name);
    }
    let n_len = panel.n_symbols();
    let closes: Vec<Vec<f64>> = (0..n_len).map(|n| panel.column(n, crate::data::panel::CLOSE)).collect();
    let columns = specs
        .iter()
        .zip(names)
        .map(|(spec, name)| {
            let per_symbol: Vec<Vec<f64>> = closes.iter().map(|c| spec.compute(c)).collect();
            let mut flat = Vec::with_capacity(t_len * n_len);
            for t in 0..t_len {
                flat.extend(per_symbol.iter().map(|s| s[t]));
            }
            (name, flat)
        })
        .collect();
    Ok(panel.with_features(columns)?)
}
