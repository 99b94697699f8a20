//! Monte-Carlo policy gradient for [`LinearPolicy`].

use serde::{Deserialize, Serialize};

use super::{AgentError, LinearPolicy};
use crate::env::{EnvSpec, Trajectory};
use crate::parallel::{run_batch, WorkerPoolConfig};
use crate::seed;

/// Seed tag for the normalizer warm-up batch; update `u` uses tag `u`.
const WARMUP_TAG: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    None,
    /// Mean of every `G_t` in the batch.
    #[default]
    MeanReturn,
}

/// Exploration σ, interpolated linearly from `initial` to `final` across updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub initial: f64,
    #[serde(rename = "final")]
    pub final_: f64,
}

impl NoiseSchedule {
    pub fn constant(sigma: f64) -> Self {
        NoiseSchedule { initial: sigma, final_: sigma }
    }

    pub fn sigma(&self, update: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.initial;
        }
        let frac = update as f64 / (total - 1) as f64;
        self.initial + (self.final_ - self.initial) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReinforceConfig {
    pub gamma: f64,
    pub learning_rate: f64,
    pub episodes_per_update: usize,
    pub total_updates: usize,
    pub seed: u64,
    pub baseline: BaselineKind,
    pub noise: NoiseSchedule,
    /// Rescale the gradient to at most this L2 norm.
    pub max_grad_norm: Option<f64>,
    /// Truncate training episodes to this many steps.
    pub steps_per_episode: Option<usize>,
    pub workers: usize,
}

impl Default for ReinforceConfig {
    fn default() -> Self {
        ReinforceConfig {
            gamma: 0.99,
            learning_rate: 0.01,
            episodes_per_update: 8,
            total_updates: 50,
            seed: 0,
            baseline: BaselineKind::MeanReturn,
            noise: NoiseSchedule { initial: 0.5, final_: 0.1 },
            max_grad_norm: Some(10.0),
            steps_per_episode: None,
            workers: 1,
        }
    }
}

impl ReinforceConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |m: String| Err(AgentError::InvalidConfig(m));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma {} outside (0, 1)", self.gamma));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning_rate {} must be >= 0", self.learning_rate));
        }
        if self.episodes_per_update == 0 || self.total_updates == 0 || self.workers == 0 {
            return bad("episodes_per_update, total_updates and workers must be >= 1".into());
        }
        for s in [self.noise.initial, self.noise.final_] {
            if !(s.is_finite() && s > 0.0) {
                return bad(format!("noise sigma {s} must be > 0"));
            }
        }
        if let Some(g) = self.max_grad_norm {
            if !(g > 0.0) {
                return bad(format!("max_grad_norm {g} must be > 0"));
            }
        }
        if self.steps_per_episode == Some(0) {
            return bad("steps_per_episode must be >= 1".into());
        }
        Ok(())
    }
}

/// `G_t = Σ_k γ^k r_{t+k}`, computed backwards.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (g, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *g = acc;
    }
    out
}

/// One step of the surrogate: normalized input, taken action and its weight `G_t - b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub action: Vec<f64>,
    pub weight: f64,
}

/// Flattens trajectories into samples, in episode then time order.
pub fn build_batch(policy: &LinearPolicy, trajectories: &[Trajectory], gamma: f64, baseline: BaselineKind) -> Vec<Sample> {
    let returns: Vec<Vec<f64>> = trajectories
        .iter()
        .map(|t| discounted_returns(&t.rewards(), gamma))
        .collect();
    let b = match baseline {
        BaselineKind::None => 0.0,
        BaselineKind::MeanReturn => {
            let count: usize = returns.iter().map(Vec::len).sum();
            if count == 0 {
                0.0
            } else {
                returns.iter().flatten().sum::<f64>() / count as f64
            }
        }
    };
    trajectories
        .iter()
        .zip(&returns)
        .flat_map(|(traj, g)| {
            traj.transitions.iter().zip(g).map(move |(tr, &g_t)| Sample {
                input: policy.normalizer.normalize(&tr.observation),
                action: tr.action.clone(),
                weight: g_t - b,
            })
        })
        .collect()
}

/// `(1/E) Σ (G_t - b) log π(a_t | s_t)` over `episodes` episodes.
pub fn surrogate_objective(policy: &LinearPolicy, samples: &[Sample], episodes: usize) -> f64 {
    samples
        .iter()
        .map(|s| s.weight * policy.log_prob(&s.input, &s.action))
        .sum::<f64>()
        / episodes as f64
}

/// Analytic gradient of [`surrogate_objective`], summed in sample order.
pub fn policy_gradient(policy: &LinearPolicy, samples: &[Sample], episodes: usize) -> Vec<f64> {
    let mut grad = vec![0.0; policy.n_params()];
    let scale = 1.0 / episodes as f64;
    for s in samples {
        policy.accumulate_log_prob_grad(&s.input, &s.action, scale * s.weight, &mut grad);
    }
    grad
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: LinearPolicy,
    /// Mean undiscounted episode return per update.
    pub learning_curve: Vec<f64>,
}

fn update_normalizer(policy: &mut LinearPolicy, trajectories: &[Trajectory]) {
    for traj in trajectories {
        for tr in &traj.transitions {
            policy.normalizer.update(&tr.observation);
        }
    }
}

/// Trains `policy` on episodes of `env`.
///
/// Each update rolls out `episodes_per_update` episodes with exploration
/// noise, seeded from `(cfg.seed, update)`, takes one gradient-ascent step
/// and then folds the batch's observations into the normalizer. A fresh
/// normalizer is first warmed up on one extra batch. The result depends only
/// on the inputs, never on `cfg.workers`.
pub fn train_reinforce(env: &EnvSpec, mut policy: LinearPolicy, cfg: &ReinforceConfig) -> Result<TrainOutcome, AgentError> {
    cfg.validate()?;
    super::check_dimensions(&policy, env.build()?.as_ref())?;
    let specs = vec![env.clone(); cfg.episodes_per_update];
    let pool = |tag: u64| WorkerPoolConfig::new(cfg.workers, seed::derive(cfg.seed, tag));

    policy.normalizer.frozen = false;
    if policy.normalizer.count == 0.0 {
        policy.sigma = cfg.noise.sigma(0, cfg.total_updates);
        policy.set_exploring(true);
        let warmup = run_batch(&specs, &policy, cfg.steps_per_episode, &pool(WARMUP_TAG))?;
        update_normalizer(&mut policy, &warmup.trajectories);
    }

    let mut curve = Vec::with_capacity(cfg.total_updates);
    for update in 0..cfg.total_updates {
        policy.sigma = cfg.noise.sigma(update, cfg.total_updates);
        policy.set_exploring(true);
        let batch = run_batch(&specs, &policy, cfg.steps_per_episode, &pool(update as u64))?;
        let trajectories = &batch.trajectories;
        let mean_return = trajectories.iter().map(Trajectory::total_reward).sum::<f64>() / trajectories.len() as f64;
        curve.push(mean_return);

        let samples = build_batch(&policy, trajectories, cfg.gamma, cfg.baseline);
        let mut grad = policy_gradient(&policy, &samples, trajectories.len());
        if let Some(limit) = cfg.max_grad_norm {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > limit {
                grad.iter_mut().for_each(|g| *g *= limit / norm);
            }
        }
        let params: Vec<f64> = policy
            .params()
            .iter()
            .zip(&grad)
            .map(|(p, g)| p + cfg.learning_rate * g)
            .collect();
        policy.set_params(&params);
        if !policy.params_finite() {
            return Err(AgentError::Diverged { update });
        }
        update_normalizer(&mut policy, trajectories);
        log::debug!("update {update}: mean return {mean_return:.6}, sigma {:.4}", policy.sigma);
    }
    policy.normalizer.frozen = true;
    policy.set_exploring(false);
    Ok(TrainOutcome { policy, learning_curve: curve })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::data::panel::test_support::panel_from_closes;
    use crate::env::{CostModel, EnvConfig, EnvKind, Transition};

    fn drift_spec() -> EnvSpec {
        let closes = vec![
            (0..30).map(|t| 100.0 * 1.002f64.powi(t)).collect(),
            vec![100.0; 30],
        ];
        EnvSpec::new(
            EnvKind::Stock,
            Arc::new(panel_from_closes(&closes)),
            EnvConfig {
                initial_cash: 100_000.0,
                hmax: 100,
                cost_model: CostModel::ZERO,
                reward_scaling: 1e-3,
                ..EnvConfig::default()
            },
        )
    }

    #[test]
    fn discounted_return_hand_sum() {
        let g = discounted_returns(&[1.0, 1.0, 1.0], 0.99);
        assert!((g[0] - 2.9701).abs() < 1e-12);
        assert!((g[1] - 1.99).abs() < 1e-12);
        assert_eq!(g[2], 1.0);
        assert!(discounted_returns(&[], 0.5).is_empty());
    }

    #[test]
    fn schedule_endpoints() {
        let s = NoiseSchedule { initial: 1.0, final_: 0.2 };
        assert_eq!(s.sigma(0, 5), 1.0);
        assert!((s.sigma(4, 5) - 0.2).abs() < 1e-15);
        assert_eq!(s.sigma(0, 1), 1.0);
    }

    #[test]
    fn mean_baseline_centres_weights() {
        let policy = LinearPolicy::new(1, 1, 1.0);
        let traj = |rewards: &[f64]| Trajectory {
            seed: 0,
            transitions: rewards
                .iter()
                .map(|&r| Transition {
                    observation: vec![0.0],
                    action: vec![0.0],
                    reward: r,
                    next_observation: vec![0.0],
                    done: false,
                })
                .collect(),
            timestamps: vec![],
            values: vec![],
        };
        let samples = build_batch(&policy, &[traj(&[1.0, 2.0]), traj(&[3.0])], 0.5, BaselineKind::MeanReturn);
        // returns 2, 2, 3 -> baseline 7/3
        let w: Vec<f64> = samples.iter().map(|s| s.weight).collect();
        assert!((w.iter().sum::<f64>()).abs() < 1e-12);
        assert!((w[2] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut start = LinearPolicy::new(drift_spec().observation_dim(), 2, 0.3);
        start.bias = vec![0.2, -0.1];
        let cfg = ReinforceConfig { learning_rate: 0.0, total_updates: 3, ..ReinforceConfig::default() };
        let out = train_reinforce(&drift_spec(), start.clone(), &cfg).unwrap();
        assert_eq!(out.policy.params(), start.params());
        assert!(out.policy.normalizer.frozen);
    }

    #[test]
    fn deterministic_across_runs_and_workers() {
        let start = LinearPolicy::new(drift_spec().observation_dim(), 2, 0.3);
        let cfg = ReinforceConfig { total_updates: 5, ..ReinforceConfig::default() };
        let a = train_reinforce(&drift_spec(), start.clone(), &cfg).unwrap();
        let b = train_reinforce(&drift_spec(), start.clone(), &ReinforceConfig { workers: 4, ..cfg.clone() }).unwrap();
        assert_eq!(a.learning_curve, b.learning_curve);
        assert_eq!(a.policy, b.policy);
    }

    #[test]
    fn divergence_is_reported() {
        let start = LinearPolicy::new(drift_spec().observation_dim(), 2, 0.3);
        let cfg = ReinforceConfig { learning_rate: f64::MAX, max_grad_norm: None, ..ReinforceConfig::default() };
        assert!(matches!(
            train_reinforce(&drift_spec(), start, &cfg),
            Err(AgentError::Diverged { .. })
        ));
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            ReinforceConfig { gamma: 1.0, ..ReinforceConfig::default() },
            ReinforceConfig { learning_rate: -1.0, ..ReinforceConfig::default() },
            ReinforceConfig { episodes_per_update: 0, ..ReinforceConfig::default() },
            ReinforceConfig { noise: NoiseSchedule::constant(0.0), ..ReinforceConfig::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }
}
