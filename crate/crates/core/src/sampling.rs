//! Random draws used by the generative process and the Gibbs sampler.
//!
//! Dirichlet draws are built from log-space Gamma variates so that small
//! concentrations (α = 0.3 and below) never collapse to an all-zero vector.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::numeric::{cholesky3_jittered, log_sum_exp, symmetrize};

/// `ln G` for `G ~ Gamma(shape, 1)`.
///
/// For `shape < 1` the boost `G(a) = G(a + 1) · U^{1/a}` is applied in log space.
pub fn sample_log_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    debug_assert!(shape > 0.0);
    if shape >= 1.0 {
        let g: f64 = Gamma::new(shape, 1.0).expect("shape > 0").sample(rng);
        g.ln()
    } else {
        let g: f64 = Gamma::new(shape + 1.0, 1.0).expect("shape > 0").sample(rng);
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        g.ln() + u.ln() / shape
    }
}

/// One draw from `Dir(concentrations)`.
///
/// Entries are floored at `f64::MIN_POSITIVE` so that the result never carries an exact zero.
pub fn sample_dirichlet<R: Rng + ?Sized>(concentrations: &[f64], rng: &mut R) -> Vec<f64> {
    if concentrations.len() == 1 {
        return vec![1.0];
    }
    let logs: Vec<f64> = concentrations
        .iter()
        .map(|&a| sample_log_gamma(a, rng))
        .collect();
    let lse = log_sum_exp(&logs);
    logs.iter()
        .map(|&l| (l - lse).exp().max(f64::MIN_POSITIVE))
        .collect()
}

/// Truncated stick-breaking weights: `v_k ~ Beta(1, γ)` for `k < K−1`, the last weight takes
/// what remains of the stick.
pub fn sample_stick_breaking<R: Rng + ?Sized>(gamma: f64, k: usize, rng: &mut R) -> Vec<f64> {
    let beta = Beta::new(1.0, gamma).expect("gamma > 0");
    let mut weights = Vec::with_capacity(k);
    let mut remaining = 1.0;
    for _ in 0..k.saturating_sub(1) {
        let v: f64 = beta.sample(rng);
        weights.push(remaining * v);
        remaining *= 1.0 - v;
    }
    if k > 0 {
        weights.push(remaining);
    }
    weights
}

/// Categorical draw from a probability vector (need not be exactly normalized).
pub fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    // rounding fell off the end: last index with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

pub fn sample_standard_normal3<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    Vector3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    )
}

/// `x ~ N(mean, cov)`.
pub fn sample_mvn<R: Rng + ?Sized>(
    mean: &Vector3<f64>,
    cov: &Matrix3<f64>,
    rng: &mut R,
) -> Result<Vector3<f64>> {
    let chol = cholesky3_jittered(cov)?;
    Ok(mean + chol.l() * sample_standard_normal3(rng))
}

/// `Σ ~ IW(scale, dof)` in three dimensions via the Bartlett decomposition.
///
/// With `scale = U Uᵀ` and `A` the Bartlett factor of a standard Wishart draw,
/// `Σ = (U A⁻ᵀ)(U A⁻ᵀ)ᵀ`, which is SPD by construction.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(
    scale: &Matrix3<f64>,
    dof: f64,
    rng: &mut R,
) -> Result<Matrix3<f64>> {
    if !(dof > 2.0) {
        return Err(Error::InvalidHyperparams(format!(
            "inverse-Wishart degrees of freedom must exceed 2, got {dof}"
        )));
    }
    let upper_chol = cholesky3_jittered(scale)?;
    let u = upper_chol.l();

    let mut a = Matrix3::zeros();
    for i in 0..3 {
        let chi: f64 = ChiSquared::new(dof - i as f64).expect("dof > 2").sample(rng);
        a[(i, i)] = chi.sqrt();
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let a_inv = a
        .solve_lower_triangular(&Matrix3::identity())
        .ok_or(Error::SingularCovariance)?;
    let m = u * a_inv.transpose();
    Ok(symmetrize(&(m * m.transpose())))
}
