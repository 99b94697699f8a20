use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::data::MarketPanel;
use crate::linalg;

/// Feature column name under which turbulence is stored on a panel.
pub const TURBULENCE_FEATURE: &str = "turbulence";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TurbulenceConfig {
    /// Number of historical returns used for the mean and covariance.
    pub lookback: usize,
    /// Ridge added to the covariance diagonal, relative to `trace(Σ)/N`.
    pub ridge_epsilon: f64,
}

impl Default for TurbulenceConfig {
    fn default() -> Self {
        TurbulenceConfig {
            lookback: 252,
            ridge_epsilon: 1e-8,
        }
    }
}

impl TurbulenceConfig {
    pub fn validate(&self, n_symbols: usize) -> Result<(), FeatureError> {
        if self.lookback < n_symbols + 2 {
            return Err(FeatureError::LookbackTooShort {
                lookback: self.lookback,
                symbols: n_symbols,
            });
        }
        if !(self.ridge_epsilon.is_finite() && self.ridge_epsilon > 0.0) {
            return Err(FeatureError::InvalidSpec(
                TURBULENCE_FEATURE.into(),
                format!("ridge_epsilon {} must be positive", self.ridge_epsilon),
            ));
        }
        Ok(())
    }

    /// Absolute ridge for a covariance matrix; falls back to `ridge_epsilon`
    /// when the covariance is identically zero.
    pub fn ridge_for(&self, cov: &[f64], n: usize) -> f64 {
        let tr = linalg::trace(cov, n);
        if tr > 0.0 {
            self.ridge_epsilon * tr / n as f64
        } else {
            self.ridge_epsilon
        }
    }
}

/// Squared Mahalanobis distance of current returns from their trailing history.
///
/// Row `t` uses the one-period simple returns at `t` against the mean and
/// sample covariance of the `lookback` returns before it. Rows without a full
/// history are zero. Symbols are processed in name order, so the output does
/// not depend on the panel's symbol ordering.
pub fn turbulence(panel: &MarketPanel, cfg: &TurbulenceConfig) -> Result<Vec<f64>, FeatureError> {
    let n = panel.n_symbols();
    cfg.validate(n)?;
    let t_len = panel.n_times();
    if t_len <= cfg.lookback {
        return Err(FeatureError::WindowTooLong {
            name: TURBULENCE_FEATURE.into(),
            window: cfg.lookback,
            len: t_len,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| panel.symbols()[a].cmp(&panel.symbols()[b]));

    // returns[s - 1] holds returns from row s-1 to row s
    let returns: Vec<Vec<f64>> = (1..t_len)
        .map(|s| {
            order
                .iter()
                .map(|&i| panel.close(s, i) / panel.close(s - 1, i) - 1.0)
                .collect()
        })
        .collect();

    let mut out = vec![0.0; t_len];
    for t in cfg.lookback + 1..t_len {
        let history = &returns[t - 1 - cfg.lookback..t - 1];
        let (mean, mut cov) = linalg::mean_and_covariance(history.iter().map(Vec::as_slice), n);
        let eps = cfg.ridge_for(&cov, n);
        linalg::add_ridge(&mut cov, n, eps);
        let chol = linalg::cholesky(&cov, n).ok_or(FeatureError::SingularCovariance { row: t })?;
        let deviation: Vec<f64> = returns[t - 1].iter().zip(&mean).map(|(y, m)| y - m).collect();
        out[t] = linalg::inverse_quadratic_form(&chol, n, &deviation).max(0.0);
    }
    Ok(out)
}

/// Appends turbulence as a feature column, replicated across symbols.
pub fn add_turbulence(panel: &MarketPanel, cfg: &TurbulenceConfig) -> Result<MarketPanel, FeatureError> {
    let series = turbulence(panel, cfg)?;
    let n = panel.n_symbols();
    let column = series.iter().flat_map(|&v| std::iter::repeat_n(v, n)).collect();
    Ok(panel.with_features(vec![(TURBULENCE_FEATURE.to_string(), column)])?)
}
