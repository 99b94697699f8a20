use serde::{Deserialize, Serialize};

use super::EnvError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostKind {
    /// Fixed currency amount per executed trade.
    FlatFee,
    /// Fraction of traded value.
    PerSharePercentage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub kind: CostKind,
    #[serde(default)]
    pub flat_fee: f64,
    #[serde(default)]
    pub rate: f64,
}

impl CostModel {
    pub const ZERO: CostModel = CostModel {
        kind: CostKind::PerSharePercentage,
        flat_fee: 0.0,
        rate: 0.0,
    };

    pub fn flat(fee: f64) -> Self {
        CostModel {
            kind: CostKind::FlatFee,
            flat_fee: fee,
            rate: 0.0,
        }
    }

    pub fn percentage(rate: f64) -> Self {
        CostModel {
            kind: CostKind::PerSharePercentage,
            flat_fee: 0.0,
            rate,
        }
    }

    /// Fee for trading `shares` at `exec_price`.
    pub fn fee(&self, shares: f64, exec_price: f64) -> f64 {
        if shares == 0.0 {
            return 0.0;
        }
        match self.kind {
            CostKind::FlatFee => self.flat_fee,
            CostKind::PerSharePercentage => self.rate * shares * exec_price,
        }
    }

    /// Largest whole number of shares whose price plus fee fits into `cash`.
    pub fn max_affordable(&self, cash: f64, exec_price: f64) -> i64 {
        let shares = match self.kind {
            CostKind::FlatFee if cash <= self.flat_fee => 0.0,
            CostKind::FlatFee => ((cash - self.flat_fee) / exec_price).floor(),
            CostKind::PerSharePercentage => (cash / (exec_price * (1.0 + self.rate))).floor(),
        };
        let fits = |s: i64| s as f64 * exec_price + self.fee(s as f64, exec_price) <= cash;
        let mut shares = shares.max(0.0) as i64;
        // the rounded quotient can land one share off either way
        while fits(shares + 1) {
            shares += 1;
        }
        while shares > 0 && !fits(shares) {
            shares -= 1;
        }
        shares
    }

    fn validate(&self) -> Result<(), EnvError> {
        if !(self.flat_fee.is_finite() && self.flat_fee >= 0.0) {
            return Err(EnvError::InvalidConfig(format!("flat_fee {} must be >= 0", self.flat_fee)));
        }
        if !(0.0..1.0).contains(&self.rate) {
            return Err(EnvError::InvalidConfig(format!("rate {} outside [0, 1)", self.rate)));
        }
        Ok(())
    }
}

/// How holdings are unwound once turbulence crosses the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Liquidation {
    /// Sell the whole position in one step.
    #[default]
    Full,
    /// Sell `ceil(fraction * holding)` shares per step.
    Fraction { fraction: f64 },
}

impl Liquidation {
    pub fn shares_to_sell(&self, holding: i64) -> i64 {
        match *self {
            Liquidation::Full => holding,
            Liquidation::Fraction { fraction } => ((holding as f64) * fraction).ceil() as i64,
        }
        .clamp(0, holding)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub initial_cash: f64,
    /// Maximum shares traded per symbol per step.
    pub hmax: i64,
    pub cost_model: CostModel,
    /// Half-spread: buys fill at `close * (1 + s)`, sells at `close * (1 - s)`.
    pub bid_ask_spread: f64,
    /// `None` disables the turbulence override.
    pub turbulence_threshold: Option<f64>,
    pub liquidation: Liquidation,
    pub reward_scaling: f64,
    /// First tradable panel row.
    pub start_step: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            initial_cash: 1_000_000.0,
            hmax: 100,
            cost_model: CostModel::percentage(0.001),
            bid_ask_spread: 0.0,
            turbulence_threshold: None,
            liquidation: Liquidation::Full,
            reward_scaling: 1.0,
            start_step: 0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::InvalidConfig(m));
        if !(self.initial_cash.is_finite() && self.initial_cash > 0.0) {
            return bad(format!("initial_cash {} must be > 0", self.initial_cash));
        }
        if self.hmax < 1 {
            return bad(format!("hmax {} must be >= 1", self.hmax));
        }
        self.cost_model.validate()?;
        if !(0.0..1.0).contains(&self.bid_ask_spread) {
            return bad(format!("bid_ask_spread {} outside [0, 1)", self.bid_ask_spread));
        }
        if let Some(th) = self.turbulence_threshold {
            if !(th >= 0.0) {
                return bad(format!("turbulence_threshold {th} must be >= 0"));
            }
        }
        if let Liquidation::Fraction { fraction } = self.liquidation {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return bad(format!("liquidation fraction {fraction} outside (0, 1]"));
            }
        }
        if !(self.reward_scaling.is_finite() && self.reward_scaling > 0.0) {
            return bad(format!("reward_scaling {} must be > 0", self.reward_scaling));
        }
        Ok(())
    }
}
