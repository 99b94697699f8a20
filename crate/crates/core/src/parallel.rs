//! Multi-worker rollouts with scheduling-independent output.
//!
//! Environments are dealt round-robin to `W` scoped threads. Every
//! environment gets its own policy clone and the seed `base_seed + index`,
//! and results are gathered back in index order, so the batch payload never
//! depends on `W` or on thread timing.

use std::any::Any;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::thread;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::agents::{rollout, AgentError, Policy, RandomPolicy};
use crate::env::{EnvSpec, Trajectory};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("worker pool needs at least one {0}")]
    Empty(&'static str),
    #[error("environment {env_index} failed: {source}")]
    Rollout {
        env_index: usize,
        #[source]
        source: Box<AgentError>,
    },
    #[error("environment {env_index} panicked: {message}")]
    Panicked { env_index: usize, message: String },
    #[error("benchmark output: {0}")]
    Output(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WorkerPoolConfig {
    pub workers: usize,
    pub base_seed: u64,
}

impl WorkerPoolConfig {
    pub fn new(workers: usize, base_seed: u64) -> Self {
        WorkerPoolConfig { workers, base_seed }
    }

    /// Worker count actually used for `envs` environments.
    pub fn effective_workers(&self, envs: usize) -> usize {
        self.workers.min(envs).max(1)
    }

    pub fn env_seed(&self, env_index: usize) -> u64 {
        self.base_seed.wrapping_add(env_index as u64)
    }
}

#[derive(Debug, Clone)]
pub struct RolloutBatch {
    /// One trajectory per environment, in environment-index order.
    pub trajectories: Vec<Trajectory>,
    pub transition_count: usize,
    pub workers: usize,
    pub duration: Duration,
    pub steps_per_sec: f64,
}

impl RolloutBatch {
    /// Bitwise comparison of everything except the timing fields.
    pub fn same_payload(&self, other: &RolloutBatch) -> bool {
        self.transition_count == other.transition_count
            && self.trajectories.len() == other.trajectories.len()
            && self
                .trajectories
                .iter()
                .zip(&other.trajectories)
                .all(|(a, b)| a.bitwise_eq(b))
    }
}

fn panic_message(payload: Box<dyn Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

fn run_one(spec: &EnvSpec, policy: &dyn Policy, seed: u64, steps: Option<usize>) -> Result<Trajectory, AgentError> {
    let mut env = spec.build()?;
    let mut policy = policy.boxed_clone();
    rollout(env.as_mut(), policy.as_mut(), seed, steps)
}

/// Rolls every environment out for `steps_per_env` steps (or to episode end).
///
/// The policy is cloned per environment, so any per-episode memory starts
/// fresh and the shared instance is never mutated. On failure the error for
/// the lowest environment index is returned.
pub fn run_batch(
    envs: &[EnvSpec],
    policy: &dyn Policy,
    steps_per_env: Option<usize>,
    pool: &WorkerPoolConfig,
) -> Result<RolloutBatch, SimError> {
    if envs.is_empty() {
        return Err(SimError::Empty("environment"));
    }
    if pool.workers == 0 {
        return Err(SimError::Empty("worker"));
    }
    let workers = pool.effective_workers(envs.len());
    let start = Instant::now();

    let mut gathered: Vec<(usize, Result<Trajectory, SimError>)> = thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..envs.len())
                        .step_by(workers)
                        .map(|i| {
                            let seed = pool.env_seed(i);
                            let outcome = panic::catch_unwind(AssertUnwindSafe(|| {
                                run_one(&envs[i], policy, seed, steps_per_env)
                            }));
                            let result = match outcome {
                                Ok(Ok(traj)) => Ok(traj),
                                Ok(Err(e)) => Err(SimError::Rollout { env_index: i, source: Box::new(e) }),
                                Err(p) => Err(SimError::Panicked { env_index: i, message: panic_message(p) }),
                            };
                            (i, result)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("rollout worker panicked outside catch_unwind"))
            .collect()
    });
    gathered.sort_by_key(|(i, _)| *i);

    let trajectories = gathered
        .into_iter()
        .map(|(_, r)| r)
        .collect::<Result<Vec<_>, _>>()?;
    let duration = start.elapsed();
    let transition_count = trajectories.iter().map(Trajectory::len).sum();
    Ok(RolloutBatch {
        trajectories,
        transition_count,
        workers,
        duration,
        steps_per_sec: transition_count as f64 / duration.as_secs_f64().max(1e-9),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    /// Effective worker count (capped at `envs`).
    pub workers: usize,
    pub envs: usize,
    pub steps: usize,
    pub seconds: f64,
    pub steps_per_sec: f64,
}

/// Measures random-policy rollout throughput on `envs` copies of `spec`
/// for each requested worker count. Purely observational.
pub fn throughput_benchmark(
    spec: &EnvSpec,
    envs: usize,
    worker_counts: &[usize],
    steps: usize,
    base_seed: u64,
) -> Result<Vec<BenchmarkRow>, SimError> {
    let specs = vec![spec.clone(); envs];
    worker_counts
        .iter()
        .map(|&w| {
            let batch = run_batch(&specs, &RandomPolicy, Some(steps), &WorkerPoolConfig::new(w, base_seed))?;
            log::info!("bench: {} workers, {:.0} steps/s", batch.workers, batch.steps_per_sec);
            Ok(BenchmarkRow {
                workers: batch.workers,
                envs,
                steps: batch.transition_count,
                seconds: batch.duration.as_secs_f64(),
                steps_per_sec: batch.steps_per_sec,
            })
        })
        .collect()
}

/// CSV with header `workers,envs,steps,seconds,steps_per_sec`.
pub fn write_benchmark_csv<W: Write>(rows: &[BenchmarkRow], out: W) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| SimError::Output(e.to_string()))?;
    }
    w.flush().map_err(|e| SimError::Output(e.to_string()))
}
