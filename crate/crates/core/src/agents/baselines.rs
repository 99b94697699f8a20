//! Classical reference strategies. None of them consult the rng.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::portfolio::{mean_variance_weights, min_variance_weights};
use super::{Policy, PolicyRng};
use crate::env::Observation;
use crate::linalg;

/// Projected-gradient iterations used by the variance-based allocators.
pub const SOLVER_ITERATIONS: usize = 500;

/// Buys as much as allowed on the first step, then holds (stock env).
#[derive(Debug, Clone, Default)]
pub struct BuyAndHold {
    started: bool,
}

impl BuyAndHold {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Policy for BuyAndHold {
    fn name(&self) -> &str {
        "buy_and_hold"
    }

    fn reset(&mut self) {
        self.started = false;
    }

    fn act(&mut self, obs: &Observation, _rng: &mut PolicyRng) -> Vec<f64> {
        let fill = if self.started { 0.0 } else { 1.0 };
        self.started = true;
        vec![fill; obs.n_assets]
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// Equal logits every step, i.e. weights `1/N` (allocation env).
#[derive(Debug, Clone, Default)]
pub struct EqualWeight;

impl Policy for EqualWeight {
    fn name(&self) -> &str {
        "equal_weight"
    }

    fn act(&mut self, obs: &Observation, _rng: &mut PolicyRng) -> Vec<f64> {
        vec![0.0; obs.n_assets]
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// Keeps the last `capacity` close vectors seen by a policy.
#[derive(Debug, Clone)]
struct PriceHistory {
    capacity: usize,
    closes: VecDeque<Vec<f64>>,
}

impl PriceHistory {
    fn new(capacity: usize) -> Self {
        PriceHistory {
            capacity,
            closes: VecDeque::with_capacity(capacity),
        }
    }

    fn push(&mut self, closes: &[f64]) {
        if self.closes.len() == self.capacity {
            self.closes.pop_front();
        }
        self.closes.push_back(closes.to_vec());
    }

    fn is_full(&self) -> bool {
        self.closes.len() == self.capacity
    }

    fn clear(&mut self) {
        self.closes.clear();
    }

    /// Simple returns between consecutive stored rows.
    fn returns(&self) -> Vec<Vec<f64>> {
        self.closes
            .iter()
            .zip(self.closes.iter().skip(1))
            .map(|(a, b)| b.iter().zip(a).map(|(pb, pa)| pb / pa - 1.0).collect())
            .collect()
    }
}

/// Buys the `top_k` best trailing performers and sells the rest (stock env).
///
/// Ranks by `close_t / close_{t-lookback} - 1`; ties go to the lower symbol
/// index. Emits zeros until `lookback` periods have been observed.
#[derive(Debug, Clone)]
pub struct Momentum {
    lookback: usize,
    top_k: usize,
    history: PriceHistory,
}

impl Momentum {
    pub fn new(lookback: usize, top_k: usize) -> Self {
        assert!(lookback >= 1 && top_k >= 1, "lookback and top_k must be at least 1");
        Momentum {
            lookback,
            top_k,
            history: PriceHistory::new(lookback + 1),
        }
    }
}

impl Policy for Momentum {
    fn name(&self) -> &str {
        "momentum"
    }

    fn reset(&mut self) {
        self.history.clear();
    }

    fn act(&mut self, obs: &Observation, _rng: &mut PolicyRng) -> Vec<f64> {
        self.history.push(obs.closes());
        let n = obs.n_assets;
        if !self.history.is_full() {
            return vec![0.0; n];
        }
        let first = &self.history.closes[0];
        let last = &self.history.closes[self.lookback];
        let trailing: Vec<f64> = (0..n).map(|i| last[i] / first[i] - 1.0).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| trailing[b].total_cmp(&trailing[a]).then(a.cmp(&b)));
        let mut action = vec![-1.0; n];
        for &i in order.iter().take(self.top_k.min(n)) {
            action[i] = 1.0;
        }
        action
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// Mean and ridge-regularized sample covariance of trailing returns.
fn trailing_moments(returns: &[Vec<f64>], n: usize, ridge_epsilon: f64) -> (Vec<f64>, Vec<f64>) {
    let (mean, mut cov) = linalg::mean_and_covariance(returns.iter().map(Vec::as_slice), n);
    let tr = linalg::trace(&cov, n);
    let eps = if tr > 0.0 { ridge_epsilon * tr / n as f64 } else { ridge_epsilon };
    linalg::add_ridge(&mut cov, n, eps);
    (mean, cov)
}

fn weights_to_logits(weights: &[f64]) -> Vec<f64> {
    weights.iter().map(|w| w.max(1e-300).ln()).collect()
}

/// Trailing-window variance-based allocator (allocation env).
///
/// Falls back to equal weights while fewer than `lookback` returns are
/// available or when `lookback < N + 2`.
#[derive(Debug, Clone)]
pub struct VarianceAllocator {
    lookback: usize,
    /// `None` for minimum variance, `Some(λ)` for mean-variance.
    risk_aversion: Option<f64>,
    ridge_epsilon: f64,
    history: PriceHistory,
}

impl VarianceAllocator {
    pub fn min_variance(lookback: usize) -> Self {
        VarianceAllocator {
            lookback,
            risk_aversion: None,
            ridge_epsilon: 1e-8,
            history: PriceHistory::new(lookback + 1),
        }
    }

    pub fn mean_variance(lookback: usize, risk_aversion: f64) -> Self {
        assert!(risk_aversion > 0.0, "risk aversion must be positive");
        VarianceAllocator {
            risk_aversion: Some(risk_aversion),
            ..Self::min_variance(lookback)
        }
    }

    /// Current target weights given the history observed so far.
    pub fn target_weights(&self, n: usize) -> Vec<f64> {
        if self.lookback < n + 2 || !self.history.is_full() {
            return vec![1.0 / n as f64; n];
        }
        let (mu, cov) = trailing_moments(&self.history.returns(), n, self.ridge_epsilon);
        match self.risk_aversion {
            None => min_variance_weights(&cov, n, SOLVER_ITERATIONS).weights,
            Some(lambda) => mean_variance_weights(&mu, &cov, lambda, n, SOLVER_ITERATIONS).weights,
        }
    }
}

impl Policy for VarianceAllocator {
    fn name(&self) -> &str {
        match self.risk_aversion {
            None => "min_variance",
            Some(_) => "mean_variance",
        }
    }

    fn reset(&mut self) {
        self.history.clear();
    }

    fn act(&mut self, obs: &Observation, _rng: &mut PolicyRng) -> Vec<f64> {
        self.history.push(obs.closes());
        weights_to_logits(&self.target_weights(obs.n_assets))
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }
}

/// Serializable description of a baseline, used in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineSpec {
    BuyAndHold,
    EqualWeight,
    Momentum { lookback: usize, top_k: usize },
    MinVariance { lookback: usize },
    MeanVariance { lookback: usize, risk_aversion: f64 },
}

impl BaselineSpec {
    pub fn build(&self) -> Box<dyn Policy> {
        match *self {
            BaselineSpec::BuyAndHold => Box::new(BuyAndHold::new()),
            BaselineSpec::EqualWeight => Box::new(EqualWeight),
            BaselineSpec::Momentum { lookback, top_k } => Box::new(Momentum::new(lookback, top_k)),
            BaselineSpec::MinVariance { lookback } => Box::new(VarianceAllocator::min_variance(lookback)),
            BaselineSpec::MeanVariance { lookback, risk_aversion } => {
                Box::new(VarianceAllocator::mean_variance(lookback, risk_aversion))
            }
        }
    }
}
