use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::stock::check_episode_length;
use super::{CostKind, EnvConfig, EnvError, Environment, Observation, ObservationLayout, Step, StepInfo};
use crate::data::MarketPanel;

/// State of the weight-level allocation environment; holdings are fractional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationState {
    pub step_index: usize,
    pub cash: f64,
    pub holdings: Vec<f64>,
    pub done: bool,
}

fn value_at(state: &AllocationState, panel: &MarketPanel, t: usize) -> f64 {
    state.cash
        + state
            .holdings
            .iter()
            .enumerate()
            .map(|(n, &h)| h * panel.close(t, n))
            .sum::<f64>()
}

pub fn allocation_value(state: &AllocationState, panel: &MarketPanel) -> f64 {
    value_at(state, panel, state.step_index)
}

/// Numerically stable softmax. Non-finite logits are rejected.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>, EnvError> {
    if logits.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(EnvError::InvalidAction(format!("logits {logits:?} are not finite")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(EnvError::InvalidAction("all logits are -inf".into()));
    }
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

pub fn reset_allocation(
    panel: &MarketPanel,
    cfg: &EnvConfig,
    _seed: u64,
) -> Result<(AllocationState, Observation), EnvError> {
    cfg.validate()?;
    check_episode_length(panel, cfg)?;
    let state = AllocationState {
        step_index: cfg.start_step,
        cash: cfg.initial_cash,
        holdings: vec![0.0; panel.n_symbols()],
        done: false,
    };
    let obs = ObservationLayout::for_panel(panel).build(panel, state.step_index, state.cash, &state.holdings);
    Ok((state, obs))
}

/// Trading cost of moving from `current` position values to `weights * v`.
fn rebalance_cost(cfg: &EnvConfig, weights: &[f64], current: &[f64], v: f64) -> f64 {
    let rate = cfg.bid_ask_spread
        + match cfg.cost_model.kind {
            CostKind::PerSharePercentage => cfg.cost_model.rate,
            CostKind::FlatFee => 0.0,
        };
    let mut cost = 0.0;
    for (w, c) in weights.iter().zip(current) {
        let traded = (w * v - c).abs();
        cost += rate * traded;
        if cfg.cost_model.kind == CostKind::FlatFee && traded > 1e-12 * v.abs().max(1.0) {
            cost += cfg.cost_model.flat_fee;
        }
    }
    cost
}

/// Rebalances to `softmax(logits)` value weights, then advances one row.
///
/// Turnover is charged at `(rate + spread) * traded value` plus the flat fee
/// per traded asset. The post-cost value `V'` solves `V' = V - cost(V')`,
/// found by fixed-point iteration (a contraction, since the marginal cost
/// rate is below one). Reward is `ln(V_{t+1} / V_t)`. When turbulence
/// reaches the threshold the target is all cash.
pub fn step_allocation(
    state: &AllocationState,
    logits: &[f64],
    panel: &MarketPanel,
    cfg: &EnvConfig,
) -> Result<(AllocationState, f64, bool, StepInfo), EnvError> {
    step_allocation_with_layout(state, logits, panel, cfg, &ObservationLayout::for_panel(panel))
}

pub(super) fn step_allocation_with_layout(
    state: &AllocationState,
    logits: &[f64],
    panel: &MarketPanel,
    cfg: &EnvConfig,
    layout: &ObservationLayout,
) -> Result<(AllocationState, f64, bool, StepInfo), EnvError> {
    if state.done {
        return Err(EnvError::EpisodeDone);
    }
    let n_assets = panel.n_symbols();
    if logits.len() != n_assets {
        return Err(EnvError::ActionDimension {
            expected: n_assets,
            got: logits.len(),
        });
    }
    let t = state.step_index;
    if t + 1 >= panel.n_times() {
        return Err(EnvError::EpisodeDone);
    }
    let closes = panel.closes(t);
    let value_before = value_at(state, panel, t);
    let turbulence = layout.turbulence(panel, t);
    let triggered = cfg.turbulence_threshold.is_some_and(|th| turbulence >= th);
    let weights = if triggered {
        vec![0.0; n_assets]
    } else {
        softmax(logits)?
    };
    let current: Vec<f64> = state.holdings.iter().zip(&closes).map(|(h, p)| h * p).collect();

    let mut v_post = value_before;
    for _ in 0..200 {
        let next = value_before - rebalance_cost(cfg, &weights, &current, v_post);
        let converged = (next - v_post).abs() <= 1e-15 * value_before.abs();
        v_post = next;
        if converged {
            break;
        }
    }

    let mut next = state.clone();
    let costs;
    if v_post > 0.0 {
        costs = value_before - v_post;
        next.holdings = weights.iter().zip(&closes).map(|(w, p)| w * v_post / p).collect();
        let invested: f64 = weights.iter().map(|w| w * v_post).sum();
        next.cash = (v_post - invested).max(0.0);
    } else {
        // fees would consume the whole portfolio; keep positions as they are
        costs = 0.0;
    }
    let executed: Vec<f64> = next
        .holdings
        .iter()
        .zip(&state.holdings)
        .map(|(a, b)| a - b)
        .collect();
    let value_after_trade = value_at(&next, panel, t);

    next.step_index = t + 1;
    next.done = next.step_index + 1 >= panel.n_times();
    let value = value_at(&next, panel, next.step_index);
    let reward = if value > 0.0 && value_before > 0.0 {
        (value / value_before).ln()
    } else {
        return Err(EnvError::InvalidAction("portfolio value became non-positive".into()));
    };
    let info = StepInfo {
        timestamp: panel.timestamps()[next.step_index],
        turbulence,
        turbulence_triggered: triggered,
        executed,
        costs,
        slippage: 0.0,
        value_before,
        value_after_trade,
        value,
    };
    let done = next.done;
    Ok((next, reward, done, info))
}

/// Stateful portfolio-allocation environment.
#[derive(Debug, Clone)]
pub struct AllocationEnv {
    panel: Arc<MarketPanel>,
    cfg: EnvConfig,
    layout: ObservationLayout,
    state: AllocationState,
}

impl AllocationEnv {
    pub fn new(panel: Arc<MarketPanel>, cfg: EnvConfig) -> Result<Self, EnvError> {
        let (state, _) = reset_allocation(&panel, &cfg, 0)?;
        let layout = ObservationLayout::for_panel(&panel);
        Ok(AllocationEnv {
            panel,
            cfg,
            layout,
            state,
        })
    }

    pub fn state(&self) -> &AllocationState {
        &self.state
    }
}

impl Environment for AllocationEnv {
    fn reset(&mut self, _seed: u64) -> Observation {
        self.state = AllocationState {
            step_index: self.cfg.start_step,
            cash: self.cfg.initial_cash,
            holdings: vec![0.0; self.panel.n_symbols()],
            done: false,
        };
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step, EnvError> {
        let (next, reward, done, info) =
            step_allocation_with_layout(&self.state, action, &self.panel, &self.cfg, &self.layout)?;
        self.state = next;
        Ok(Step {
            observation: self.observation(),
            reward,
            done,
            info,
        })
    }

    fn observation(&self) -> Observation {
        self.layout
            .build(&self.panel, self.state.step_index, self.state.cash, &self.state.holdings)
    }

    fn action_dim(&self) -> usize {
        self.panel.n_symbols()
    }

    fn observation_dim(&self) -> usize {
        self.layout.dimension()
    }

    fn portfolio_value(&self) -> f64 {
        allocation_value(&self.state, &self.panel)
    }

    fn timestamp(&self) -> i64 {
        self.panel.timestamps()[self.state.step_index]
    }

    fn is_done(&self) -> bool {
        self.state.done
    }

    fn remaining_steps(&self) -> usize {
        self.panel.n_times() - 1 - self.state.step_index
    }
}
