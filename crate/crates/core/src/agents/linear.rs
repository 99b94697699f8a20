use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Policy, PolicyRng};
use crate::env::Observation;

const STD_FLOOR: f64 = 1e-8;
const CLIP: f64 = 10.0;

/// Running per-dimension mean/variance (Welford), frozen after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
    pub frozen: bool,
}

impl Normalizer {
    pub fn new(dim: usize) -> Self {
        Normalizer {
            count: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            frozen: false,
        }
    }

    pub fn update(&mut self, x: &[f64]) {
        if self.frozen {
            return;
        }
        self.count += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / self.count;
            *s += delta * (v - *m);
        }
    }

    pub fn std(&self, i: usize) -> f64 {
        if self.count < 2.0 {
            1.0
        } else {
            (self.m2[i] / (self.count - 1.0)).sqrt().max(STD_FLOOR)
        }
    }

    /// `(x - mean) / std`, clipped to ±10.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &v)| ((v - self.mean[i]) / self.std(i)).clamp(-CLIP, CLIP))
            .collect()
    }
}

/// Gaussian policy with a linear mean: `a ~ N(W·norm(s) + b, σ²I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearPolicy {
    pub observation_dim: usize,
    pub action_dim: usize,
    /// Row-major `action_dim x observation_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub sigma: f64,
    pub normalizer: Normalizer,
    #[serde(skip)]
    explore: bool,
}

impl LinearPolicy {
    /// Zero-initialized parameters.
    pub fn new(observation_dim: usize, action_dim: usize, sigma: f64) -> Self {
        LinearPolicy {
            observation_dim,
            action_dim,
            weights: vec![0.0; action_dim * observation_dim],
            bias: vec![0.0; action_dim],
            sigma,
            normalizer: Normalizer::new(observation_dim),
            explore: false,
        }
    }

    pub fn set_exploring(&mut self, on: bool) {
        self.explore = on;
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Parameters flattened as `[weights..., bias...]`.
    pub fn params(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.bias).copied().collect()
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let (w, b) = params.split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
    }

    pub fn params_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    /// Mean action for an already-normalized input.
    pub fn mean_action(&self, x: &[f64]) -> Vec<f64> {
        (0..self.action_dim)
            .map(|i| {
                let row = &self.weights[i * self.observation_dim..(i + 1) * self.observation_dim];
                self.bias[i] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// `log π(a | x)` for a normalized input `x`.
    pub fn log_prob(&self, x: &[f64], action: &[f64]) -> f64 {
        let var = self.sigma * self.sigma;
        let norm = -self.sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        self.mean_action(x)
            .iter()
            .zip(action)
            .map(|(m, a)| norm - (a - m) * (a - m) / (2.0 * var))
            .sum()
    }

    /// Adds `scale * ∇_θ log π(a | x)` into `grad` (layout of [`params`](Self::params)).
    pub fn accumulate_log_prob_grad(&self, x: &[f64], action: &[f64], scale: f64, grad: &mut [f64]) {
        let var = self.sigma * self.sigma;
        let mean = self.mean_action(x);
        let (gw, gb) = grad.split_at_mut(self.weights.len());
        for i in 0..self.action_dim {
            let coeff = scale * (action[i] - mean[i]) / var;
            gb[i] += coeff;
            let row = &mut gw[i * self.observation_dim..(i + 1) * self.observation_dim];
            for (g, v) in row.iter_mut().zip(x) {
                *g += coeff * v;
            }
        }
    }
}

impl Policy for LinearPolicy {
    fn name(&self) -> &str {
        "linear"
    }

    fn act(&mut self, obs: &Observation, rng: &mut PolicyRng) -> Vec<f64> {
        let x = self.normalizer.normalize(obs.as_slice());
        let mut action = self.mean_action(&x);
        if self.explore && self.sigma > 0.0 {
            for a in &mut action {
                let z: f64 = StandardNormal.sample(rng);
                *a += self.sigma * z;
            }
        }
        action
    }

    fn boxed_clone(&self) -> Box<dyn Policy> {
        Box::new(self.clone())
    }

    fn set_exploration(&mut self, on: bool) {
        self.explore = on;
    }

    fn observation_dim(&self) -> Option<usize> {
        Some(self.observation_dim)
    }

    fn action_dim(&self) -> Option<usize> {
        Some(self.action_dim)
    }
}
