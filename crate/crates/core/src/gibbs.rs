//! Blocked Gibbs sampler for the spatial-concept model.
//!
//! One sweep resamples every assignment `C_i` given the current parameters, then the Gaussian
//! block `(μ_k, Σ_k)` from its Normal–inverse–Wishart conditional, then the class, word and
//! mixing distributions from their Dirichlet conditionals.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{object_logfactor, ConceptModel, Hyperparams, LabeledDataset, Position};
use crate::numeric::{cholesky3, mahalanobis_and_logdet, normalize_log_weights, symmetrize};
use crate::sampling::{sample_categorical, sample_dirichlet, sample_inverse_wishart, sample_mvn};

/// Sampler state after a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsState {
    pub assignments: Vec<usize>,
    pub model: ConceptModel,
    pub iteration: usize,
    pub joint_logprob: f64,
}

/// Normal–inverse–Wishart parameters after conditioning on a set of points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorNIW {
    pub mu_n: Position,
    pub kappa_n: f64,
    pub nu_n: f64,
    pub psi_n: Matrix3<f64>,
}

impl PosteriorNIW {
    /// `E[Σ] = ψ' / (ν' − 4)`.
    pub fn mean_covariance(&self) -> Matrix3<f64> {
        self.psi_n / (self.nu_n - 4.0)
    }
}

/// Conjugate update of the NIW prior in `h` with `points`. An empty set returns the prior.
pub fn niw_posterior(points: &[Position], h: &Hyperparams) -> PosteriorNIW {
    let n = points.len() as f64;
    if points.is_empty() {
        return PosteriorNIW { mu_n: h.mu0, kappa_n: h.kappa0, nu_n: h.nu0, psi_n: h.psi0 };
    }
    let xbar = points.iter().fold(Vector3::zeros(), |acc, p| acc + p) / n;
    let scatter = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p - xbar;
        acc + d * d.transpose()
    });
    let kappa_n = h.kappa0 + n;
    let nu_n = h.nu0 + n;
    let mu_n = (h.mu0 * h.kappa0 + xbar * n) / kappa_n;
    let dm = xbar - h.mu0;
    let psi_n = symmetrize(&(h.psi0 + scatter + dm * dm.transpose() * (h.kappa0 * n / kappa_n)));
    PosteriorNIW { mu_n, kappa_n, nu_n, psi_n }
}

/// Draws `C_i` from its full conditional.
pub fn sample_assignment<R: Rng + ?Sized>(
    i: usize,
    model: &ConceptModel,
    dataset: &LabeledDataset,
    rng: &mut R,
) -> Result<usize> {
    let o = &dataset.observations[i];
    let logs = (0..model.num_concepts())
        .map(|k| object_logfactor(&o.position, o.object_class, &o.words, k, model))
        .collect::<Result<Vec<_>>>()?;
    let probs = normalize_log_weights(&logs).ok_or(Error::UnnormalizableAssignment { index: i })?;
    Ok(sample_categorical(&probs, rng))
}

/// Draws `Σ_k ~ IW(ψ'_k, ν'_k)` then `μ_k ~ N(μ'_k, Σ_k / κ'_k)` for every concept.
/// Concepts with no points draw from the prior.
pub fn sample_gaussian_params<R: Rng + ?Sized>(
    points_per_concept: &[Vec<Position>],
    h: &Hyperparams,
    rng: &mut R,
) -> Result<(Vec<Position>, Vec<Matrix3<f64>>)> {
    let mut mus = Vec::with_capacity(points_per_concept.len());
    let mut sigmas = Vec::with_capacity(points_per_concept.len());
    for points in points_per_concept {
        let post = niw_posterior(points, h);
        let sigma = sample_inverse_wishart(&post.psi_n, post.nu_n, rng)?;
        let mu = sample_mvn(&post.mu_n, &(sigma / post.kappa_n), rng)?;
        mus.push(mu);
        sigmas.push(sigma);
    }
    Ok((mus, sigmas))
}

/// `Dir(prior + counts)` with a symmetric scalar prior, one draw per count vector.
pub fn sample_dirichlet_params<R: Rng + ?Sized>(
    counts: &[Vec<f64>],
    prior: f64,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    counts
        .iter()
        .map(|c| {
            if c.is_empty() {
                Vec::new()
            } else {
                let conc: Vec<f64> = c.iter().map(|&n| prior + n).collect();
                sample_dirichlet(&conc, rng)
            }
        })
        .collect()
}

/// Per-concept sufficient statistics of an assignment vector.
struct ConceptStats {
    points: Vec<Vec<Position>>,
    class_counts: Vec<Vec<f64>>,
    word_counts: Vec<Vec<f64>>,
    sizes: Vec<f64>,
}

impl ConceptStats {
    fn collect(dataset: &LabeledDataset, assignments: &[usize], k: usize) -> Self {
        let mut s = Self {
            points: vec![Vec::new(); k],
            class_counts: vec![vec![0.0; dataset.num_classes]; k],
            word_counts: vec![vec![0.0; dataset.num_words]; k],
            sizes: vec![0.0; k],
        };
        for (o, &c) in dataset.observations.iter().zip(assignments) {
            s.points[c].push(o.position);
            s.class_counts[c][o.object_class] += 1.0;
            for &w in &o.words {
                s.word_counts[c][w] += 1.0;
            }
            s.sizes[c] += 1.0;
        }
        s
    }
}

fn sample_parameters<R: Rng + ?Sized>(
    dataset: &LabeledDataset,
    assignments: &[usize],
    h: &Hyperparams,
    rng: &mut R,
) -> Result<ConceptModel> {
    let stats = ConceptStats::collect(dataset, assignments, h.k);
    let (mu, sigma) = sample_gaussian_params(&stats.points, h, rng)?;
    let phi = sample_dirichlet_params(&stats.class_counts, h.alpha, rng);
    let eta = sample_dirichlet_params(&stats.word_counts, h.beta, rng);
    let pi = sample_dirichlet_params(std::slice::from_ref(&stats.sizes), h.gamma, rng)
        .pop()
        .expect("one vector in, one out");
    ConceptModel::new(mu, sigma, phi, eta, pi)
}

/// Expected parameters under the conditional posterior given fixed assignments:
/// `μ = μ'`, `Σ = ψ'/(ν'−4)`, and Dirichlet means for `φ`, `η`, `π`.
pub fn posterior_mean_model(
    dataset: &LabeledDataset,
    assignments: &[usize],
    h: &Hyperparams,
) -> Result<ConceptModel> {
    let stats = ConceptStats::collect(dataset, assignments, h.k);
    let dir_mean = |c: &Vec<f64>, prior: f64| -> Vec<f64> {
        let total: f64 = c.iter().map(|n| n + prior).sum();
        c.iter().map(|n| (n + prior) / total).collect()
    };
    let mut mu = Vec::with_capacity(h.k);
    let mut sigma = Vec::with_capacity(h.k);
    for points in &stats.points {
        let post = niw_posterior(points, h);
        mu.push(post.mu_n);
        sigma.push(post.mean_covariance());
    }
    let phi = stats.class_counts.iter().map(|c| dir_mean(c, h.alpha)).collect();
    let eta = stats.word_counts.iter().map(|c| dir_mean(c, h.beta)).collect();
    let pi = dir_mean(&stats.sizes, h.gamma);
    ConceptModel::new(mu, sigma, phi, eta, pi)
}

fn ln_multivariate_gamma3(a: f64) -> f64 {
    1.5 * std::f64::consts::PI.ln() + (0..3).map(|j| ln_gamma(a - j as f64 / 2.0)).sum::<f64>()
}

fn ln_dirichlet_density(p: &[f64], prior: f64) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    let v = p.len() as f64;
    ln_gamma(prior * v) - v * ln_gamma(prior) + p.iter().map(|x| (prior - 1.0) * x.ln()).sum::<f64>()
}

fn ln_inverse_wishart_density(sigma: &Matrix3<f64>, psi: &Matrix3<f64>, nu: f64) -> Result<f64> {
    let chol_s = cholesky3(sigma)?;
    let chol_p = cholesky3(psi)?;
    let logdet = |c: &nalgebra::Cholesky<f64, nalgebra::U3>| {
        2.0 * (0..3).map(|i| c.l()[(i, i)].ln()).sum::<f64>()
    };
    let trace = (psi * chol_s.inverse()).trace();
    Ok(0.5 * nu * logdet(&chol_p)
        - 1.5 * nu * std::f64::consts::LN_2
        - ln_multivariate_gamma3(nu / 2.0)
        - 0.5 * (nu + 4.0) * logdet(&chol_s)
        - 0.5 * trace)
}

/// `ln p(C, Θ, O | h)` up to the multinomial coefficients.
pub fn joint_logprob(
    dataset: &LabeledDataset,
    assignments: &[usize],
    model: &ConceptModel,
    h: &Hyperparams,
) -> Result<f64> {
    let mut total = 0.0;
    for (o, &c) in dataset.observations.iter().zip(assignments) {
        total += object_logfactor(&o.position, o.object_class, &o.words, c, model)?;
    }
    for k in 0..model.num_concepts() {
        let sigma = &model.sigma()[k];
        total += ln_inverse_wishart_density(sigma, &h.psi0, h.nu0)?;
        let chol = cholesky3(&(sigma / h.kappa0))?;
        let (maha, logdet) = mahalanobis_and_logdet(&model.mu()[k], &h.mu0, &chol);
        total += -0.5 * (3.0 * crate::numeric::LN_2PI + logdet + maha);
        total += ln_dirichlet_density(&model.phi()[k], h.alpha);
        total += ln_dirichlet_density(&model.eta()[k], h.beta);
    }
    total += ln_dirichlet_density(model.pi(), h.gamma);
    Ok(total)
}

/// Which sweep supplies the planning parameters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepSelection {
    /// Sweep with the highest joint log-probability.
    #[default]
    MaxJoint,
    Final,
}

/// How the planning parameters are read off the selected sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaEstimate {
    /// Conditional posterior mean given the sweep's assignments.
    #[default]
    PosteriorMean,
    /// The sampled parameters themselves.
    Sample,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GibbsOptions {
    pub iterations: usize,
    pub seed: u64,
}

impl GibbsOptions {
    pub const DEFAULT_ITERATIONS: usize = 100;
}

/// Output of [`gibbs_fit`].
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsFit {
    pub final_state: GibbsState,
    /// Highest-joint sweep (first one on ties).
    pub best_state: GibbsState,
    /// Joint log-probability after each sweep, `trace[s]` for sweep `s + 1`.
    pub trace: Vec<f64>,
}

impl GibbsFit {
    pub fn selected(&self, selection: SweepSelection) -> &GibbsState {
        match selection {
            SweepSelection::MaxJoint => &self.best_state,
            SweepSelection::Final => &self.final_state,
        }
    }

    /// Parameters handed to the planner.
    pub fn planning_model(
        &self,
        dataset: &LabeledDataset,
        h: &Hyperparams,
        selection: SweepSelection,
        estimate: ThetaEstimate,
    ) -> Result<ConceptModel> {
        let state = self.selected(selection);
        match estimate {
            ThetaEstimate::Sample => Ok(state.model.clone()),
            ThetaEstimate::PosteriorMean => posterior_mean_model(dataset, &state.assignments, h),
        }
    }
}

/// Runs `iterations` full sweeps from a uniformly random initial assignment.
pub fn gibbs_fit(dataset: &LabeledDataset, h: &Hyperparams, opts: &GibbsOptions) -> Result<GibbsFit> {
    gibbs_fit_with_observer(dataset, h, opts, |_| {})
}

/// [`gibbs_fit`] with a callback invoked on the state after every sweep.
pub fn gibbs_fit_with_observer<F: FnMut(&GibbsState)>(
    dataset: &LabeledDataset,
    h: &Hyperparams,
    opts: &GibbsOptions,
    mut observer: F,
) -> Result<GibbsFit> {
    h.validate()?;
    dataset.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("cannot fit an empty dataset".into()));
    }
    if opts.iterations == 0 {
        return Err(Error::InvalidConfig("at least one Gibbs iteration is required".into()));
    }
    run_chain(dataset, h, opts.iterations, ChaCha8Rng::seed_from_u64(opts.seed), &mut observer)
}

/// Runs `chains` independent chains and keeps the one whose best sweep has the highest joint
/// log-probability (lowest chain index on ties). Chain `c` draws from stream `c` of the seed,
/// so chain 0 reproduces [`gibbs_fit`]. Chains run on separate threads.
pub fn gibbs_fit_chains(
    dataset: &LabeledDataset,
    h: &Hyperparams,
    opts: &GibbsOptions,
    chains: usize,
) -> Result<GibbsFit> {
    if chains == 0 {
        return Err(Error::InvalidConfig("at least one chain is required".into()));
    }
    h.validate()?;
    dataset.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("cannot fit an empty dataset".into()));
    }
    if opts.iterations == 0 {
        return Err(Error::InvalidConfig("at least one Gibbs iteration is required".into()));
    }
    let fits: Vec<Result<GibbsFit>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains as u64)
            .map(|c| {
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                    rng.set_stream(c);
                    run_chain(dataset, h, opts.iterations, rng, &mut |_| {})
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread panicked")).collect()
    });
    let mut best: Option<GibbsFit> = None;
    for fit in fits {
        let fit = fit?;
        if best.as_ref().is_none_or(|b| fit.best_state.joint_logprob > b.best_state.joint_logprob) {
            best = Some(fit);
        }
    }
    Ok(best.expect("chains >= 1"))
}

fn run_chain(
    dataset: &LabeledDataset,
    h: &Hyperparams,
    iterations: usize,
    mut rng: ChaCha8Rng,
    observer: &mut dyn FnMut(&GibbsState),
) -> Result<GibbsFit> {
    let mut assignments: Vec<usize> =
        (0..dataset.len()).map(|_| rng.random_range(0..h.k)).collect();
    let mut model = sample_parameters(dataset, &assignments, h, &mut rng)?;

    let mut trace = Vec::with_capacity(iterations);
    let mut best: Option<GibbsState> = None;
    let mut state = None;
    for sweep in 1..=iterations {
        for i in 0..dataset.len() {
            assignments[i] = sample_assignment(i, &model, dataset, &mut rng)?;
        }
        model = sample_parameters(dataset, &assignments, h, &mut rng)?;
        let joint = joint_logprob(dataset, &assignments, &model, h)?;
        trace.push(joint);
        let s = GibbsState {
            assignments: assignments.clone(),
            model: model.clone(),
            iteration: sweep,
            joint_logprob: joint,
        };
        observer(&s);
        if best.as_ref().is_none_or(|b| joint > b.joint_logprob) {
            best = Some(s.clone());
        }
        state = Some(s);
    }
    Ok(GibbsFit {
        final_state: state.expect("iterations >= 1"),
        best_state: best.expect("iterations >= 1"),
        trace,
    })
}
