//! Small dense helpers over row-major `n x n` matrices stored in flat slices.

/// Column means and sample covariance (denominator `m - 1`) of `m` samples.
///
/// `samples` yields rows of length `n`.
pub fn mean_and_covariance<'a, I>(samples: I, n: usize) -> (Vec<f64>, Vec<f64>)
where
    I: IntoIterator<Item = &'a [f64]> + Clone,
{
    let mut mean = vec![0.0; n];
    let mut m = 0usize;
    for row in samples.clone() {
        for (acc, x) in mean.iter_mut().zip(row) {
            *acc += x;
        }
        m += 1;
    }
    for v in &mut mean {
        *v /= m as f64;
    }
    let mut cov = vec![0.0; n * n];
    for row in samples {
        for i in 0..n {
            let di = row[i] - mean[i];
            for j in i..n {
                cov[i * n + j] += di * (row[j] - mean[j]);
            }
        }
    }
    let denom = (m.max(2) - 1) as f64;
    for i in 0..n {
        for j in i..n {
            let v = cov[i * n + j] / denom;
            cov[i * n + j] = v;
            cov[j * n + i] = v;
        }
    }
    (mean, cov)
}

pub fn trace(a: &[f64], n: usize) -> f64 {
    (0..n).map(|i| a[i * n + i]).sum()
}

/// Adds `eps` to the diagonal in place.
pub fn add_ridge(a: &mut [f64], n: usize, eps: f64) {
    for i in 0..n {
        a[i * n + i] += eps;
    }
}

/// Lower-triangular Cholesky factor, or `None` if `a` is not positive definite.
pub fn cholesky(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

/// `dᵀ A⁻¹ d` given the Cholesky factor `L` of `A`.
pub fn inverse_quadratic_form(chol: &[f64], n: usize, d: &[f64]) -> f64 {
    // forward-substitute L z = d; then dᵀA⁻¹d = zᵀz
    let mut z = vec![0.0; n];
    for i in 0..n {
        let mut s = d[i];
        for k in 0..i {
            s -= chol[i * n + k] * z[k];
        }
        z[i] = s / chol[i * n + i];
    }
    z.iter().map(|v| v * v).sum()
}

/// `A x` for square `A`.
pub fn mat_vec(a: &[f64], n: usize, x: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| (0..n).map(|j| a[i * n + j] * x[j]).sum())
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
