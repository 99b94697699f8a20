//! Bar-by-bar replay of held-out data through a frozen agent.

use rand::SeedableRng;

use crate::agents::{check_dimensions, AgentError, Policy, PolicyRng};
use crate::env::{EnvSpec, Environment, Observation, StepInfo, Trajectory, Transition};

/// A live-style session: each call to [`on_bar`](Self::on_bar) consumes the
/// next bar, asks the policy for an action and executes it.
pub struct LiveSession {
    env: Box<dyn Environment>,
    policy: Box<dyn Policy>,
    rng: PolicyRng,
    last: Observation,
    trajectory: Trajectory,
}

impl LiveSession {
    pub fn start(spec: &EnvSpec, policy: &dyn Policy, seed: u64) -> Result<Self, AgentError> {
        let mut env = spec.build()?;
        let mut policy = policy.boxed_clone();
        policy.set_exploration(false);
        check_dimensions(policy.as_ref(), env.as_ref())?;
        policy.reset();
        let last = env.reset(seed);
        let trajectory = Trajectory {
            seed,
            transitions: Vec::new(),
            timestamps: vec![env.timestamp()],
            values: vec![env.portfolio_value()],
        };
        Ok(LiveSession {
            env,
            policy,
            rng: PolicyRng::seed_from_u64(seed),
            last,
            trajectory,
        })
    }

    /// Trades on the next bar; `None` once the data is exhausted.
    pub fn on_bar(&mut self) -> Result<Option<StepInfo>, AgentError> {
        if self.env.is_done() {
            return Ok(None);
        }
        let action = self.policy.act(&self.last, &mut self.rng);
        let step = self.env.step(&action)?;
        self.trajectory.timestamps.push(step.info.timestamp);
        self.trajectory.values.push(step.info.value);
        let observation = std::mem::replace(&mut self.last, step.observation);
        self.trajectory.transitions.push(Transition {
            observation: observation.values,
            action,
            reward: step.reward,
            next_observation: self.last.values.clone(),
            done: step.done,
        });
        Ok(Some(step.info))
    }

    pub fn portfolio_value(&self) -> f64 {
        self.env.portfolio_value()
    }

    pub fn finish(self) -> Trajectory {
        self.trajectory
    }
}

/// Streams every bar of `spec` through `policy`.
pub fn replay(spec: &EnvSpec, policy: &dyn Policy, seed: u64) -> Result<Trajectory, AgentError> {
    let mut session = LiveSession::start(spec, policy, seed)?;
    while let Some(info) = session.on_bar()? {
        log::trace!("paper trade {}: value {:.2}", info.timestamp, info.value);
    }
    Ok(session.finish())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::agents::{evaluate_policy, Momentum, RandomPolicy};
    use crate::data::panel::test_support::panel_from_closes;
    use crate::env::{EnvConfig, EnvKind};

    #[test]
    fn replay_matches_batch_evaluation() {
        let closes = vec![
            (0..60).map(|t| 100.0 + (t as f64 * 0.2).sin() * 4.0).collect(),
            (0..60).map(|t| 80.0 + t as f64 * 0.1).collect(),
        ];
        let spec = EnvSpec::new(EnvKind::Stock, Arc::new(panel_from_closes(&closes)), EnvConfig::default());
        for policy in [Box::new(Momentum::new(3, 1)) as Box<dyn Policy>, Box::new(RandomPolicy)] {
            let live = replay(&spec, policy.as_ref(), 5).unwrap();
            let batch = evaluate_policy(policy.as_ref(), &spec, 5).unwrap();
            assert!(live.bitwise_eq(&batch));
            assert_eq!(live.len(), 59);
        }
    }
}
