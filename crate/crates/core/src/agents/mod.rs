//! Plug-in policies: classical baselines, a linear Gaussian policy and its
//! REINFORCE trainer.
//!
//! Anything implementing [`Policy`] can be rolled out in any
//! [`Environment`](crate::env::Environment) whose dimensions it matches.

mod baselines;
mod checkpoint;
mod linear;
pub mod portfolio;
mod reinforce;

use rand::{Rng, SeedableRng};
use thiserror::Error;

use crate::env::{EnvError, EnvSpec, Environment, Observation, Trajectory, Transition};

pub use baselines::{BaselineSpec, BuyAndHold, EqualWeight, Momentum, VarianceAllocator, SOLVER_ITERATIONS};
pub use checkpoint::{AgentCheckpoint, AgentState, CHECKPOINT_VERSION};
pub use linear::{LinearPolicy, Normalizer};
pub use reinforce::{
    build_batch, discounted_returns, policy_gradient, surrogate_objective, train_reinforce,
    BaselineKind, NoiseSchedule, ReinforceConfig, Sample, TrainOutcome,
};

/// Random source handed to policies. Seeded per episode.
pub type PolicyRng = rand_chacha::ChaCha8Rng;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("policy expects {what} dimension {expected}, environment has {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("training diverged at update {update}: parameters are no longer finite")]
    Diverged { update: usize },
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sim(#[from] crate::parallel::SimError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Maps observations to actions.
///
/// A policy may keep per-episode memory (cleared by [`reset`](Policy::reset));
/// apart from that, its output is a function of the observation and the rng.
pub trait Policy: Send + Sync {
    fn name(&self) -> &str;

    fn reset(&mut self) {}

    fn act(&mut self, obs: &Observation, rng: &mut PolicyRng) -> Vec<f64>;

    fn boxed_clone(&self) -> Box<dyn Policy>;

    /// Toggles exploration noise; no-op for deterministic policies.
    fn set_exploration(&mut self, _on: bool) {}

    /// Fixed observation dimension, if the policy has one.
    fn observation_dim(&self) -> Option<usize> {
        None
    }

    /// Fixed action dimension, if the policy has one.
    fn action_dim(&self) -> Option<usize> {
        None
    }
}

impl Clone for Box<dyn Policy> {
    fn clone(&self) -> Self {
        self.boxed_clone()
    }
}

/// Always emits zeros: hold in the stock env, equal weights in allocation.
#[derive(Debug, Clone, Default)]
pub struct ZeroPolicy;

impl Policy for ZeroPolicy {
    fn name(&self) -> &str {
        "zero"
    }

    fn act(&mut self, obs: &Observation, _rng: &mut PolicyRng) -> Vec<f64> {
        vec![0.0; obs.n_assets]
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(ZeroPolicy)
    }
}

/// Uniform actions in `[-1, 1]`.
#[derive(Debug, Clone, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn act(&mut self, obs: &Observation, rng: &mut PolicyRng) -> Vec<f64> {
        (0..obs.n_assets).map(|_| rng.random_range(-1.0..=1.0)).collect()
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(RandomPolicy)
    }
}

pub(crate) fn check_dimensions(policy: &dyn Policy, env: &dyn Environment) -> Result<(), AgentError> {
    if let Some(expected) = policy.observation_dim() {
        if expected != env.observation_dim() {
            return Err(AgentError::DimensionMismatch {
                what: "observation",
                expected,
                got: env.observation_dim(),
            });
        }
    }
    if let Some(expected) = policy.action_dim() {
        if expected != env.action_dim() {
            return Err(AgentError::DimensionMismatch {
                what: "action",
                expected,
                got: env.action_dim(),
            });
        }
    }
    Ok(())
}

/// Runs one episode (or at most `max_steps` steps) from reset.
///
/// The policy's rng is seeded from `seed`, so the trajectory is a pure
/// function of `(environment, policy, seed)`.
pub fn rollout(
    env: &mut dyn Environment,
    policy: &mut dyn Policy,
    seed: u64,
    max_steps: Option<usize>,
) -> Result<Trajectory, AgentError> {
    check_dimensions(policy, env)?;
    let mut rng = PolicyRng::seed_from_u64(seed);
    policy.reset();
    let mut obs = env.reset(seed);
    let limit = max_steps.unwrap_or(usize::MAX).min(env.remaining_steps());
    let mut traj = Trajectory {
        seed,
        transitions: Vec::with_capacity(limit.min(1 << 16)),
        timestamps: vec![env.timestamp()],
        values: vec![env.portfolio_value()],
    };
    while traj.transitions.len() < limit && !env.is_done() {
        let action = policy.act(&obs, &mut rng);
        let step = env.step(&action)?;
        traj.timestamps.push(step.info.timestamp);
        traj.values.push(step.info.value);
        traj.transitions.push(Transition {
            observation: obs.values,
            action,
            reward: step.reward,
            next_observation: step.observation.values.clone(),
            done: step.done,
        });
        obs = step.observation;
    }
    Ok(traj)
}

/// One deterministic (exploration-free) episode of `policy` on a fresh environment.
pub fn evaluate_policy(policy: &dyn Policy, env: &EnvSpec, seed: u64) -> Result<Trajectory, AgentError> {
    let mut policy = policy.boxed_clone();
    policy.set_exploration(false);
    let mut env = env.build()?;
    rollout(env.as_mut(), policy.as_mut(), seed, None)
}
