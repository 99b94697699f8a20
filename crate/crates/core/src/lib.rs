//! Market-environment universe and backtesting engine.
//!
//! The crate is layered: [`data`] turns raw OHLCV files into cleaned
//! [`data::MarketPanel`]s, [`features`] appends indicators and the turbulence
//! index, [`env`] exposes trading MDPs over a panel, [`agents`] provides
//! plug-in policies and a policy-gradient trainer, [`parallel`] rolls out many
//! environments on a worker pool, [`evaluation`] computes performance metrics
//! and [`pipeline`] ties it all together into a train/validate/test/paper-trade
//! workflow.

pub mod agents;
pub mod data;
pub mod env;
pub mod evaluation;
pub mod features;
pub mod linalg;
pub mod parallel;
pub mod pipeline;
pub mod seed;
