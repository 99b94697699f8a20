use serde::{Deserialize, Serialize};

use crate::data::panel::BASE_FEATURES;
use crate::data::MarketPanel;
use crate::features::TURBULENCE_FEATURE;

/// Where each block of the flat observation vector comes from.
///
/// Layout: `[cash, holdings(N), closes(N), indicators(N x K), turbulence]`,
/// indicators grouped by symbol. Dimension is `2 + 2N + KN`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationLayout {
    pub n_assets: usize,
    /// Panel feature indices used as indicators, in panel order.
    pub indicator_features: Vec<usize>,
    pub turbulence_feature: Option<usize>,
}

impl ObservationLayout {
    /// Every non-base feature except turbulence becomes an indicator input.
    pub fn for_panel(panel: &MarketPanel) -> Self {
        let turbulence_feature = panel.feature_index(TURBULENCE_FEATURE);
        let indicator_features = (BASE_FEATURES.len()..panel.n_features())
            .filter(|&f| Some(f) != turbulence_feature)
            .collect();
        ObservationLayout {
            n_assets: panel.n_symbols(),
            indicator_features,
            turbulence_feature,
        }
    }

    pub fn n_indicators(&self) -> usize {
        self.indicator_features.len()
    }

    pub fn dimension(&self) -> usize {
        observation_dimension(self.n_assets, self.n_indicators())
    }

    pub fn turbulence(&self, panel: &MarketPanel, t: usize) -> f64 {
        self.turbulence_feature.map_or(0.0, |f| panel.value(t, 0, f))
    }

    pub fn build(&self, panel: &MarketPanel, t: usize, cash: f64, holdings: &[f64]) -> Observation {
        let mut values = Vec::with_capacity(self.dimension());
        values.push(cash);
        values.extend_from_slice(holdings);
        values.extend((0..self.n_assets).map(|n| panel.close(t, n)));
        for n in 0..self.n_assets {
            values.extend(self.indicator_features.iter().map(|&f| panel.value(t, n, f)));
        }
        values.push(self.turbulence(panel, t));
        Observation {
            values,
            n_assets: self.n_assets,
            n_indicators: self.n_indicators(),
        }
    }
}

pub fn observation_dimension(n_assets: usize, n_indicators: usize) -> usize {
    2 + 2 * n_assets + n_indicators * n_assets
}

/// Flat observation vector plus enough shape information to slice it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub values: Vec<f64>,
    pub n_assets: usize,
    pub n_indicators: usize,
}

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cash(&self) -> f64 {
        self.values[0]
    }

    pub fn holdings(&self) -> &[f64] {
        &self.values[1..1 + self.n_assets]
    }

    pub fn closes(&self) -> &[f64] {
        &self.values[1 + self.n_assets..1 + 2 * self.n_assets]
    }

    /// Indicator block for one asset.
    pub fn indicators(&self, asset: usize) -> &[f64] {
        let start = 1 + 2 * self.n_assets + asset * self.n_indicators;
        &self.values[start..start + self.n_indicators]
    }

    pub fn turbulence(&self) -> f64 {
        *self.values.last().expect("non-empty observation")
    }
}
