//! Long-only portfolio optimization on the probability simplex.

use crate::linalg;

/// Euclidean projection onto `{w : w >= 0, Σw = 1}` (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexSolution {
    pub weights: Vec<f64>,
    /// Objective value at the start point and after every iteration.
    pub objective_trace: Vec<f64>,
}

fn objective(q: &[f64], linear: &[f64], n: usize, w: &[f64]) -> f64 {
    linalg::dot(w, &linalg::mat_vec(q, n, w)) - linalg::dot(linear, w)
}

/// Minimizes `wᵀQw - cᵀw` over the simplex by projected gradient descent.
///
/// Starts at equal weights and takes `iterations` steps of size `1/L`, with
/// `L = 2 max_i Σ_j |Q_ij|` bounding the gradient's Lipschitz constant. A
/// step that would raise the objective through rounding is not taken, so the
/// recorded trace is non-increasing.
pub fn minimize_on_simplex(q: &[f64], linear: &[f64], n: usize, iterations: usize) -> SimplexSolution {
    let mut w = vec![1.0 / n as f64; n];
    let mut f = objective(q, linear, n, &w);
    let mut trace = Vec::with_capacity(iterations + 1);
    trace.push(f);
    let bound = (0..n)
        .map(|i| (0..n).map(|j| q[i * n + j].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    if bound == 0.0 {
        // objective is linear: put everything on the largest coefficient
        let best = (0..n).fold(0, |b, i| if linear[i] > linear[b] { i } else { b });
        let mut corner = vec![0.0; n];
        corner[best] = 1.0;
        let fc = objective(q, linear, n, &corner);
        if fc <= f {
            w = corner;
            f = fc;
        }
        trace.resize(iterations + 1, f);
        return SimplexSolution { weights: w, objective_trace: trace };
    }
    let step = 1.0 / (2.0 * bound);
    for _ in 0..iterations {
        let qw = linalg::mat_vec(q, n, &w);
        let moved: Vec<f64> = (0..n)
            .map(|i| w[i] - step * (2.0 * qw[i] - linear[i]))
            .collect();
        let candidate = project_simplex(&moved);
        let fc = objective(q, linear, n, &candidate);
        if fc <= f {
            w = candidate;
            f = fc;
        }
        trace.push(f);
    }
    SimplexSolution { weights: w, objective_trace: trace }
}

/// `argmin wᵀΣw` on the simplex.
pub fn min_variance_weights(cov: &[f64], n: usize, iterations: usize) -> SimplexSolution {
    minimize_on_simplex(cov, &vec![0.0; n], n, iterations)
}

/// `argmax μᵀw - λ wᵀΣw` on the simplex (solved as the equivalent minimization).
pub fn mean_variance_weights(
    mu: &[f64],
    cov: &[f64],
    risk_aversion: f64,
    n: usize,
    iterations: usize,
) -> SimplexSolution {
    let q: Vec<f64> = cov.iter().map(|c| risk_aversion * c).collect();
    minimize_on_simplex(&q, mu, n, iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diagonal_covariance_matches_inverse_variance() {
        let sol = min_variance_weights(&[1.0, 0.0, 0.0, 4.0], 2, 500);
        assert!((sol.weights[0] - 0.8).abs() < 1e-4, "{:?}", sol.weights);
        assert!((sol.weights[1] - 0.2).abs() < 1e-4);
        assert!(sol.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn symmetric_and_single_asset() {
        let sol = min_variance_weights(&[2.0, 0.5, 0.5, 2.0], 2, 500);
        assert!((sol.weights[0] - 0.5).abs() < 1e-12);
        let sol = min_variance_weights(&[3.0], 1, 500);
        assert_eq!(sol.weights, vec![1.0]);
    }

    #[test]
    fn mean_variance_limits() {
        let cov = [0.04, 0.01, 0.01, 0.09];
        let mv = min_variance_weights(&cov, 2, 500);
        let heavy = mean_variance_weights(&[0.1, 0.0], &cov, 1e6, 2, 500);
        for (a, b) in heavy.weights.iter().zip(&mv.weights) {
            assert!((a - b).abs() < 1e-3);
        }
        let light = mean_variance_weights(&[0.1, 0.0], &[1.0, 0.0, 0.0, 1.0], 0.01, 2, 500);
        assert!(light.weights[0] > 0.5);
        let zero_mu = mean_variance_weights(&[0.0, 0.0], &cov, 1.0, 2, 500);
        assert_eq!(zero_mu, mv);
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_simplex(&[0.5, 0.5]), vec![0.5, 0.5]);
        assert_eq!(project_simplex(&[2.0, 0.0]), vec![1.0, 0.0]);
        assert_eq!(project_simplex(&[0.0, 0.0]), vec![0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn projection_lands_on_simplex(v in prop::collection::vec(-100.0f64..100.0, 1..20)) {
            let w = project_simplex(&v);
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn argmin_is_scale_invariant(
            a in 0.1f64..2.0, b in 0.1f64..2.0, c in -0.05f64..0.05, scale in 0.01f64..100.0
        ) {
            let cov = [a, c, c, b];
            let base = min_variance_weights(&cov, 2, 500);
            let scaled: Vec<f64> = cov.iter().map(|x| x * scale).collect();
            let other = min_variance_weights(&scaled, 2, 500);
            for (x, y) in base.weights.iter().zip(&other.weights) {
                prop_assert!((x - y).abs() <= 1e-6);
            }
        }
    }
}
