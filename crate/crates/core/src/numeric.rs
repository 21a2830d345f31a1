//! Log-space arithmetic and small dense linear-algebra helpers.

use nalgebra::{Cholesky, Matrix3, Vector3};

use crate::error::{Error, Result};

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Diagonal jitter added when a 3×3 factorization fails on a near-singular matrix.
pub const CHOLESKY_JITTER: f64 = 1e-12;

/// `ln Σ exp(xs)` with max-shifting. Empty input, or all entries `-∞`, gives `-∞`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Turns log weights into a probability vector. Returns `None` when every weight is `-∞`
/// (or any weight is NaN).
pub fn normalize_log_weights(log_weights: &[f64]) -> Option<Vec<f64>> {
    if log_weights.iter().any(|w| w.is_nan()) {
        return None;
    }
    let lse = log_sum_exp(log_weights);
    if !lse.is_finite() {
        return None;
    }
    Some(log_weights.iter().map(|&w| (w - lse).exp()).collect())
}

/// Index of the largest value; ties resolve to the lowest index. `None` on empty input.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

/// Cholesky factor of a symmetric 3×3 matrix (lower triangle is read).
pub fn cholesky3(m: &Matrix3<f64>) -> Result<Cholesky<f64, nalgebra::U3>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularCovariance);
    }
    Cholesky::new(symmetrize(m)).ok_or(Error::SingularCovariance)
}

/// Like [`cholesky3`], but retries once with [`CHOLESKY_JITTER`] on the diagonal.
pub fn cholesky3_jittered(m: &Matrix3<f64>) -> Result<Cholesky<f64, nalgebra::U3>> {
    cholesky3(m).or_else(|_| cholesky3(&(m + Matrix3::identity() * CHOLESKY_JITTER)))
}

/// Strict SPD test (no jitter).
pub fn is_spd(m: &Matrix3<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
        && (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max().max(1.0)
        && Cholesky::new(*m).is_some()
}

pub fn symmetrize(m: &Matrix3<f64>) -> Matrix3<f64> {
    (m + m.transpose()) * 0.5
}

/// Squared Mahalanobis distance and log-determinant from a precomputed factor.
pub(crate) fn mahalanobis_and_logdet(
    x: &Vector3<f64>,
    mu: &Vector3<f64>,
    chol: &Cholesky<f64, nalgebra::U3>,
) -> (f64, f64) {
    let diff = x - mu;
    let l = chol.l();
    let z = l
        .solve_lower_triangular(&diff)
        .expect("cholesky factor has a positive diagonal");
    let logdet = 2.0 * (0..3).map(|i| l[(i, i)].ln()).sum::<f64>();
    (z.norm_squared(), logdet)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance; `None` for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs);
    Some(xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64)
}
