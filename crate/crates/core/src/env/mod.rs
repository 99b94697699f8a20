//! Data-replay trading MDPs.
//!
//! Two variants share one observation layout: [`StockTradingEnv`] trades
//! whole shares with per-step limits, frictions and a turbulence override;
//! [`AllocationEnv`] rebalances to softmax weights each step. Rewards are
//! undiscounted; discounting belongs to the learner.

mod allocation;
mod config;
mod observation;
mod stock;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::MarketPanel;

pub use allocation::{
    allocation_value, reset_allocation, softmax, step_allocation, AllocationEnv, AllocationState,
};
pub use config::{CostKind, CostModel, EnvConfig, Liquidation};
pub use observation::{observation_dimension, Observation, ObservationLayout};
pub use stock::{portfolio_value, reset, share_deltas, step, EnvState, StockTradingEnv};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("panel has {rows} rows; need at least 2 from start_step {start_step}")]
    PanelTooShort { rows: usize, start_step: usize },
    #[error("step called on a finished episode")]
    EpisodeDone,
    #[error("action has {got} entries, environment expects {expected}")]
    ActionDimension { expected: usize, got: usize },
    #[error("invalid action: {0}")]
    InvalidAction(String),
}

/// Per-step diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// Timestamp of the row the step advanced to.
    pub timestamp: i64,
    pub turbulence: f64,
    pub turbulence_triggered: bool,
    /// Signed quantity traded per asset (shares or fractional units).
    pub executed: Vec<f64>,
    pub costs: f64,
    pub slippage: f64,
    /// Value before trading, at the pre-step prices.
    pub value_before: f64,
    /// Value right after trading, still at the pre-step prices.
    pub value_after_trade: f64,
    /// Value at the new row's prices.
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct Step {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Episodic environment contract every policy can be plugged into.
pub trait Environment: Send {
    fn reset(&mut self, seed: u64) -> Observation;
    fn step(&mut self, action: &[f64]) -> Result<Step, EnvError>;
    fn observation(&self) -> Observation;
    fn action_dim(&self) -> usize;
    fn observation_dim(&self) -> usize;
    fn portfolio_value(&self) -> f64;
    fn timestamp(&self) -> i64;
    fn is_done(&self) -> bool;
    fn remaining_steps(&self) -> usize;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    #[default]
    Stock,
    Allocation,
}

/// Everything needed to build an environment instance; cheap to clone.
#[derive(Debug, Clone)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub panel: Arc<MarketPanel>,
    pub config: EnvConfig,
}

impl EnvSpec {
    pub fn new(kind: EnvKind, panel: Arc<MarketPanel>, config: EnvConfig) -> Self {
        EnvSpec { kind, panel, config }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>, EnvError> {
        Ok(match self.kind {
            EnvKind::Stock => Box::new(StockTradingEnv::new(self.panel.clone(), self.config.clone())?),
            EnvKind::Allocation => {
                Box::new(AllocationEnv::new(self.panel.clone(), self.config.clone())?)
            }
        })
    }

    pub fn n_assets(&self) -> usize {
        self.panel.n_symbols()
    }

    pub fn observation_dim(&self) -> usize {
        ObservationLayout::for_panel(&self.panel).dimension()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub done: bool,
}

/// One rolled-out episode (or episode prefix).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    pub transitions: Vec<Transition>,
    /// Timestamps of `values`, starting at the reset row.
    pub timestamps: Vec<i64>,
    /// Portfolio value at reset and after every step.
    pub values: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward).collect()
    }

    pub fn total_reward(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    /// Equality on the bit patterns of every float.
    pub fn bitwise_eq(&self, other: &Trajectory) -> bool {
        fn same(a: &[f64], b: &[f64]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        }
        self.seed == other.seed
            && self.timestamps == other.timestamps
            && same(&self.values, &other.values)
            && self.transitions.len() == other.transitions.len()
            && self.transitions.iter().zip(&other.transitions).all(|(a, b)| {
                a.done == b.done
                    && a.reward.to_bits() == b.reward.to_bits()
                    && same(&a.observation, &b.observation)
                    && same(&a.action, &b.action)
                    && same(&a.next_observation, &b.next_observation)
            })
    }
}
