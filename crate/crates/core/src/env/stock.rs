use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{EnvConfig, EnvError, Environment, Observation, ObservationLayout, Step, StepInfo};
use crate::data::MarketPanel;

/// Mutable state of the share-level stock trading environment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub step_index: usize,
    pub cash: f64,
    pub holdings: Vec<i64>,
    pub done: bool,
}

impl EnvState {
    fn holdings_f64(&self) -> Vec<f64> {
        self.holdings.iter().map(|&h| h as f64).collect()
    }
}

/// `cash + Σ holdings_i * close_i` at the state's current row.
pub fn portfolio_value(state: &EnvState, panel: &MarketPanel) -> f64 {
    value_at(state, panel, state.step_index)
}

fn value_at(state: &EnvState, panel: &MarketPanel, t: usize) -> f64 {
    state.cash
        + state
            .holdings
            .iter()
            .enumerate()
            .map(|(n, &h)| h as f64 * panel.close(t, n))
            .sum::<f64>()
}

pub(super) fn check_episode_length(panel: &MarketPanel, cfg: &EnvConfig) -> Result<(), EnvError> {
    let rows = panel.n_times().saturating_sub(cfg.start_step);
    if rows < 2 {
        return Err(EnvError::PanelTooShort {
            rows: panel.n_times(),
            start_step: cfg.start_step,
        });
    }
    Ok(())
}

/// Starts an episode at `cfg.start_step` with all cash and no holdings.
///
/// Replay is deterministic, so `_seed` does not influence the environment;
/// it is accepted to keep the episodic contract uniform.
pub fn reset(panel: &MarketPanel, cfg: &EnvConfig, _seed: u64) -> Result<(EnvState, Observation), EnvError> {
    cfg.validate()?;
    check_episode_length(panel, cfg)?;
    let state = EnvState {
        step_index: cfg.start_step,
        cash: cfg.initial_cash,
        holdings: vec![0; panel.n_symbols()],
        done: false,
    };
    let obs = ObservationLayout::for_panel(panel).build(panel, state.step_index, state.cash, &state.holdings_f64());
    Ok((state, obs))
}

/// Maps intents in `[-1, 1]` to signed share deltas. NaN maps to zero.
pub fn share_deltas(action: &[f64], hmax: i64) -> Vec<i64> {
    action
        .iter()
        .map(|&a| {
            let a = if a.is_nan() { 0.0 } else { a.clamp(-1.0, 1.0) };
            (a * hmax as f64).round() as i64
        })
        .collect()
}

/// Advances one step: sells, then buys, then moves to the next row.
///
/// Sells fill at `close * (1 - spread)` and buys at `close * (1 + spread)`,
/// each less/plus the configured fee. Buys are filled in symbol order and
/// cut down to what the remaining cash affords. When turbulence at the
/// current row reaches the threshold, buy intents are cancelled and sell
/// intents become liquidations.
pub fn step(
    state: &EnvState,
    action: &[f64],
    panel: &MarketPanel,
    cfg: &EnvConfig,
) -> Result<(EnvState, f64, bool, StepInfo), EnvError> {
    step_with_layout(state, action, panel, cfg, &ObservationLayout::for_panel(panel))
}

pub(super) fn step_with_layout(
    state: &EnvState,
    action: &[f64],
    panel: &MarketPanel,
    cfg: &EnvConfig,
    layout: &ObservationLayout,
) -> Result<(EnvState, f64, bool, StepInfo), EnvError> {
    if state.done {
        return Err(EnvError::EpisodeDone);
    }
    let n_assets = panel.n_symbols();
    if action.len() != n_assets {
        return Err(EnvError::ActionDimension {
            expected: n_assets,
            got: action.len(),
        });
    }
    let t = state.step_index;
    if t + 1 >= panel.n_times() {
        return Err(EnvError::EpisodeDone);
    }
    let value_before = value_at(state, panel, t);
    let turbulence = layout.turbulence(panel, t);
    let triggered = cfg.turbulence_threshold.is_some_and(|th| turbulence >= th);

    let mut deltas = share_deltas(action, cfg.hmax);
    if triggered {
        for (d, &h) in deltas.iter_mut().zip(&state.holdings) {
            *d = if *d < 0 { -cfg.liquidation.shares_to_sell(h) } else { 0 };
        }
    }

    let mut next = state.clone();
    let mut executed = vec![0i64; n_assets];
    let (mut costs, mut slippage) = (0.0, 0.0);
    let spread = cfg.bid_ask_spread;

    for n in 0..n_assets {
        let shares = (-deltas[n]).min(next.holdings[n]);
        if shares <= 0 {
            continue;
        }
        let close = panel.close(t, n);
        let exec = close * (1.0 - spread);
        let proceeds = shares as f64 * exec;
        let fee = cfg.cost_model.fee(shares as f64, exec);
        if next.cash + proceeds - fee < 0.0 {
            continue;
        }
        next.cash = next.cash + proceeds - fee;
        next.holdings[n] -= shares;
        executed[n] = -shares;
        costs += fee;
        slippage += shares as f64 * close * spread;
    }

    for n in 0..n_assets {
        if deltas[n] <= 0 {
            continue;
        }
        let close = panel.close(t, n);
        let exec = close * (1.0 + spread);
        let shares = deltas[n].min(cfg.cost_model.max_affordable(next.cash, exec));
        if shares <= 0 {
            continue;
        }
        let fee = cfg.cost_model.fee(shares as f64, exec);
        let total = shares as f64 * exec + fee;
        debug_assert!(total <= next.cash);
        next.cash -= total;
        next.holdings[n] += shares;
        executed[n] = shares;
        costs += fee;
        slippage += shares as f64 * close * spread;
    }

    let value_after_trade = value_at(&next, panel, t);
    next.step_index = t + 1;
    next.done = next.step_index + 1 >= panel.n_times();
    let value = value_at(&next, panel, next.step_index);
    let reward = (value - value_before) * cfg.reward_scaling;

    let info = StepInfo {
        timestamp: panel.timestamps()[next.step_index],
        turbulence,
        turbulence_triggered: triggered,
        executed: executed.iter().map(|&s| s as f64).collect(),
        costs,
        slippage,
        value_before,
        value_after_trade,
        value,
    };
    let done = next.done;
    Ok((next, reward, done, info))
}

/// Stateful wrapper over [`reset`]/[`step`] implementing [`Environment`].
#[derive(Debug, Clone)]
pub struct StockTradingEnv {
    panel: Arc<MarketPanel>,
    cfg: EnvConfig,
    layout: ObservationLayout,
    state: EnvState,
}

impl StockTradingEnv {
    pub fn new(panel: Arc<MarketPanel>, cfg: EnvConfig) -> Result<Self, EnvError> {
        let (state, _) = reset(&panel, &cfg, 0)?;
        let layout = ObservationLayout::for_panel(&panel);
        Ok(StockTradingEnv {
            panel,
            cfg,
            layout,
            state,
        })
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }
}

impl Environment for StockTradingEnv {
    fn reset(&mut self, _seed: u64) -> Observation {
        self.state = EnvState {
            step_index: self.cfg.start_step,
            cash: self.cfg.initial_cash,
            holdings: vec![0; self.panel.n_symbols()],
            done: false,
        };
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<Step, EnvError> {
        let (next, reward, done, info) =
            step_with_layout(&self.state, action, &self.panel, &self.cfg, &self.layout)?;
        self.state = next;
        Ok(Step {
            observation: self.observation(),
            reward,
            done,
            info,
        })
    }

    fn observation(&self) -> Observation {
        self.layout.build(
            &self.panel,
            self.state.step_index,
            self.state.cash,
            &self.state.holdings_f64(),
        )
    }

    fn action_dim(&self) -> usize {
        self.panel.n_symbols()
    }

    fn observation_dim(&self) -> usize {
        self.layout.dimension()
    }

    fn portfolio_value(&self) -> f64 {
        portfolio_value(&self.state, &self.panel)
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
