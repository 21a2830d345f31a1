//! Spatial-concept generative model: domain types, forward sampling and log-density primitives.
//!
//! A concept `k` couples a 3D Gaussian footprint `(μ_k, Σ_k)` with a distribution `φ_k` over
//! object classes and a distribution `η_k` over place words. Records are drawn by picking a
//! concept from the mixing weights `π` and emitting a position, a class and an optional word bag.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{cholesky3, is_spd, mahalanobis_and_logdet, LN_2PI};
use crate::sampling::{
    sample_categorical, sample_dirichlet, sample_inverse_wishart, sample_mvn,
    sample_stick_breaking,
};

pub type Position = Vector3<f64>;

/// Tolerance on the sum of every probability vector held by a [`ConceptModel`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// One training record: where an object was seen, its detected class and the place words
/// heard with it (possibly none).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub position: Position,
    /// Index of the active entry of the class one-hot vector.
    pub object_class: usize,
    /// Word indices as a multiset; repeated indices count repeatedly.
    #[serde(default)]
    pub words: Vec<usize>,
}

impl Observation {
    pub fn new(position: Position, object_class: usize, words: Vec<usize>) -> Self {
        Self { position, object_class, words }
    }

    pub fn validate(&self, num_classes: usize, num_words: usize) -> Result<()> {
        if self.position.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidObservation("non-finite position".into()));
        }
        if self.object_class >= num_classes {
            return Err(Error::InvalidObservation(format!(
                "class {} outside vocabulary of {num_classes}",
                self.object_class
            )));
        }
        if let Some(&w) = self.words.iter().find(|&&w| w >= num_words) {
            return Err(Error::InvalidObservation(format!(
                "word {w} outside vocabulary of {num_words}"
            )));
        }
        Ok(())
    }

    /// Dense word-count vector of length `num_words`.
    pub fn word_counts(&self, num_words: usize) -> Vec<u32> {
        let mut counts = vec![0; num_words];
        for &w in &self.words {
            counts[w] += 1;
        }
        counts
    }
}

/// Learned parameter set: per-concept Gaussian, class and word distributions, and mixing weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConceptModel")]
pub struct ConceptModel {
    mu: Vec<Position>,
    sigma: Vec<Matrix3<f64>>,
    phi: Vec<Vec<f64>>,
    eta: Vec<Vec<f64>>,
    pi: Vec<f64>,
}

#[derive(Deserialize)]
struct RawConceptModel {
    mu: Vec<Position>,
    sigma: Vec<Matrix3<f64>>,
    phi: Vec<Vec<f64>>,
    eta: Vec<Vec<f64>>,
    pi: Vec<f64>,
}

impl TryFrom<RawConceptModel> for ConceptModel {
    type Error = Error;

    fn try_from(raw: RawConceptModel) -> Result<Self> {
        ConceptModel::new(raw.mu, raw.sigma, raw.phi, raw.eta, raw.pi)
    }
}

fn check_simplex(name: &str, p: &[f64]) -> Result<()> {
    if p.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidModel(format!("{name} has a negative or non-finite entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(Error::InvalidModel(format!("{name} sums to {sum}, not 1")));
    }
    Ok(())
}

impl ConceptModel {
    /// Builds a model, checking every invariant. `eta` vectors may be empty when the word
    /// vocabulary is empty.
    pub fn new(
        mu: Vec<Position>,
        sigma: Vec<Matrix3<f64>>,
        phi: Vec<Vec<f64>>,
        eta: Vec<Vec<f64>>,
        pi: Vec<f64>,
    ) -> Result<Self> {
        let k = pi.len();
        if k == 0 {
            return Err(Error::InvalidModel("model needs at least one concept".into()));
        }
        if mu.len() != k || sigma.len() != k || phi.len() != k || eta.len() != k {
            return Err(Error::InvalidModel(format!(
                "concept count mismatch: pi {k}, mu {}, sigma {}, phi {}, eta {}",
                mu.len(),
                sigma.len(),
                phi.len(),
                eta.len()
            )));
        }
        check_simplex("pi", &pi)?;
        let num_classes = phi[0].len();
        let num_words = eta[0].len();
        if num_classes == 0 {
            return Err(Error::InvalidModel("object-class vocabulary is empty".into()));
        }
        for c in 0..k {
            if mu[c].iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("mu[{c}] is not finite")));
            }
            if !is_spd(&sigma[c]) {
                return Err(Error::InvalidModel(format!("sigma[{c}] is not SPD")));
            }
            if phi[c].len() != num_classes || eta[c].len() != num_words {
                return Err(Error::InvalidModel(format!("vocabulary size mismatch at concept {c}")));
            }
            check_simplex(&format!("phi[{c}]"), &phi[c])?;
            if num_words > 0 {
                check_simplex(&format!("eta[{c}]"), &eta[c])?;
            }
        }
        Ok(Self { mu, sigma, phi, eta, pi })
    }

    pub fn num_concepts(&self) -> usize {
        self.pi.len()
    }

    pub fn num_classes(&self) -> usize {
        self.phi[0].len()
    }

    pub fn num_words(&self) -> usize {
        self.eta[0].len()
    }

    pub fn mu(&self) -> &[Position] {
        &self.mu
    }

    pub fn sigma(&self) -> &[Matrix3<f64>] {
        &self.sigma
    }

    pub fn phi(&self) -> &[Vec<f64>] {
        &self.phi
    }

    pub fn eta(&self) -> &[Vec<f64>] {
        &self.eta
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    /// Per-concept `ln N(x | μ_k, Σ_k) + ln φ_k[class] + ln π_k`, the summands of the
    /// position likelihood of one object given its class.
    pub fn position_log_terms(&self, x: &Position, object_class: usize) -> Result<Vec<f64>> {
        (0..self.num_concepts())
            .map(|k| {
                Ok(gaussian_logpdf(x, &self.mu[k], &self.sigma[k])?
                    + self.phi[k][object_class].ln()
                    + self.pi[k].ln())
            })
            .collect()
    }
}

/// Prior hyperparameters plus the weak-limit truncation `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Dirichlet concentration of the class distributions.
    pub alpha: f64,
    /// Dirichlet concentration of the word distributions.
    pub beta: f64,
    /// Concentration of the mixing weights.
    pub gamma: f64,
    pub mu0: Position,
    pub kappa0: f64,
    pub psi0: Matrix3<f64>,
    pub nu0: f64,
    /// Number of concepts kept by the weak-limit truncation.
    pub k: usize,
}

pub const DEFAULT_CONCEPTS: usize = 10;

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidHyperparams(m));
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.kappa0 > 0.0 && self.kappa0.is_finite()) {
            return bad(format!("kappa0 must be positive, got {}", self.kappa0));
        }
        if !(self.nu0 > 4.0 && self.nu0.is_finite()) {
            return bad(format!("nu0 must exceed 4, got {}", self.nu0));
        }
        if self.mu0.iter().any(|v| !v.is_finite()) {
            return bad("mu0 is not finite".into());
        }
        if !is_spd(&self.psi0) {
            return bad("psi0 is not SPD".into());
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        Ok(())
    }

    /// Stage 1 (toy boxes) values.
    pub fn stage1() -> Self {
        Self {
            alpha: 0.5,
            beta: 10.0,
            gamma: 15.0,
            mu0: Vector3::new(2.719, -0.394, 0.655),
            kappa0: 0.1,
            psi0: Matrix3::from_diagonal_element(0.01),
            nu0: 1000.0,
            k: DEFAULT_CONCEPTS,
        }
    }

    /// Stage 2-1 (furnished home, known objects only).
    pub fn stage2_1() -> Self {
        Self {
            alpha: 0.5,
            beta: 10.0,
            gamma: 10.0,
            mu0: Vector3::new(1.611, 0.841, 0.628),
            kappa0: 0.1,
            psi0: Matrix3::from_diagonal_element(0.01),
            nu0: 1000.0,
            k: DEFAULT_CONCEPTS,
        }
    }

    /// Stage 2-2 (furnished home with objects of unknown place).
    pub fn stage2_2() -> Self {
        Self { alpha: 0.3, beta: 0.3, ..Self::stage2_1() }
    }
}

/// A training set, with the generating concept of each record when it is known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub num_classes: usize,
    pub num_words: usize,
    pub observations: Vec<Observation>,
    pub truth_assignments: Option<Vec<usize>>,
}

impl LabeledDataset {
    pub fn new(
        num_classes: usize,
        num_words: usize,
        observations: Vec<Observation>,
        truth_assignments: Option<Vec<usize>>,
    ) -> Result<Self> {
        let ds = Self { num_classes, num_words, observations, truth_assignments };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        for o in &self.observations {
            o.validate(self.num_classes, self.num_words)?;
        }
        if let Some(t) = &self.truth_assignments {
            if t.len() != self.observations.len() {
                return Err(Error::InvalidObservation(format!(
                    "{} truth labels for {} observations",
                    t.len(),
                    self.observations.len()
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Mean position of all records.
    pub fn mean_position(&self) -> Option<Position> {
        if self.is_empty() {
            return None;
        }
        let sum = self.observations.iter().fold(Vector3::zeros(), |acc, o| acc + o.position);
        Some(sum / self.len() as f64)
    }
}

/// `ln N(x; μ, Σ)`. Fails with [`Error::SingularCovariance`] when `Σ` is not SPD.
pub fn gaussian_logpdf(x: &Position, mu: &Position, sigma: &Matrix3<f64>) -> Result<f64> {
    let chol = cholesky3(sigma)?;
    let (maha, logdet) = mahalanobis_and_logdet(x, mu, &chol);
    Ok(-0.5 * (3.0 * LN_2PI + logdet + maha))
}

/// `Σ_v counts[v] · ln p[v]`, without the multinomial coefficient.
///
/// A positive count on a zero-probability category yields `-∞`; all-zero counts yield 0.
pub fn categorical_logpmf(counts: &[u32], p: &[f64]) -> f64 {
    debug_assert_eq!(counts.len(), p.len());
    counts
        .iter()
        .zip(p)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &pv)| c as f64 * pv.ln())
        .sum()
}

/// Log of the per-concept factor `N(x) · Mult(o | φ_k) · Mult(w | η_k) · π_k` for one record.
/// An empty word bag contributes nothing.
pub fn object_logfactor(
    position: &Position,
    object_class: usize,
    words: &[usize],
    k: usize,
    model: &ConceptModel,
) -> Result<f64> {
    if k >= model.num_concepts() {
        return Err(Error::InvalidModel(format!(
            "concept {k} out of range for K = {}",
            model.num_concepts()
        )));
    }
    let gauss = gaussian_logpdf(position, &model.mu[k], &model.sigma[k])?;
    let class = model.phi[k][object_class].ln();
    let word: f64 = words.iter().map(|&w| model.eta[k][w].ln()).sum();
    Ok(gauss + class + word + model.pi[k].ln())
}

/// Vocabulary sizes and word-bag length for forward sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GenerativeShape {
    pub num_classes: usize,
    pub num_words: usize,
    /// Words emitted per record; 0 disables the word modality.
    pub words_per_record: usize,
}

/// Draws a model from the prior and then `count` records from it.
pub fn sample_generative<R: Rng + ?Sized>(
    h: &Hyperparams,
    shape: GenerativeShape,
    count: usize,
    rng: &mut R,
) -> Result<(LabeledDataset, ConceptModel)> {
    h.validate()?;
    if count == 0 {
        return Err(Error::InvalidConfig("record count must be at least 1".into()));
    }
    if shape.num_classes == 0 {
        return Err(Error::InvalidConfig("object-class vocabulary is empty".into()));
    }
    let pi = sample_stick_breaking(h.gamma, h.k, rng);
    let mut mu = Vec::with_capacity(h.k);
    let mut sigma = Vec::with_capacity(h.k);
    let mut phi = Vec::with_capacity(h.k);
    let mut eta = Vec::with_capacity(h.k);
    for _ in 0..h.k {
        let s = sample_inverse_wishart(&h.psi0, h.nu0, rng)?;
        mu.push(sample_mvn(&h.mu0, &(s / h.kappa0), rng)?);
        sigma.push(s);
        phi.push(sample_dirichlet(&vec![h.alpha; shape.num_classes], rng));
        eta.push(if shape.num_words > 0 {
            sample_dirichlet(&vec![h.beta; shape.num_words], rng)
        } else {
            Vec::new()
        });
    }
    // stick-breaking remainders can carry a few ulps of drift
    let total: f64 = pi.iter().sum();
    let pi = pi.into_iter().map(|p| p / total).collect();
    let model = ConceptModel::new(mu, sigma, phi, eta, pi)?;
    let data = sample_records(&model, count, shape.words_per_record, rng)?;
    Ok((data, model))
}

/// Draws `count` records from a fixed model, keeping the generating concept of each.
pub fn sample_records<R: Rng + ?Sized>(
    model: &ConceptModel,
    count: usize,
    words_per_record: usize,
    rng: &mut R,
) -> Result<LabeledDataset> {
    let mut observations = Vec::with_capacity(count);
    let mut truth = Vec::with_capacity(count);
    let with_words = words_per_record > 0 && model.num_words() > 0;
    for _ in 0..count {
        let c = sample_categorical(model.pi(), rng);
        let position = sample_mvn(&model.mu[c], &model.sigma[c], rng)?;
        let object_class = sample_categorical(&model.phi[c], rng);
        let words = if with_words {
            (0..words_per_record).map(|_| sample_categorical(&model.eta[c], rng)).collect()
        } else {
            Vec::new()
        };
        observations.push(Observation { position, object_class, words });
        truth.push(c);
    }
    LabeledDataset::new(model.num_classes(), model.num_words(), observations, Some(truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const HALF_LN_2PI3: f64 = 2.756_815_599_614_018; // (3/2) ln 2π

    /// Direct evaluation with an explicit cofactor inverse and determinant; shares no code
    /// with the Cholesky path.
    fn oracle_logpdf(x: &Position, mu: &Position, s: &Matrix3<f64>) -> f64 {
        let (a, b, c) = (s[(0, 0)], s[(0, 1)], s[(0, 2)]);
        let (d, e, f) = (s[(1, 0)], s[(1, 1)], s[(1, 2)]);
        let (g, h, i) = (s[(2, 0)], s[(2, 1)], s[(2, 2)]);
        let det = a * (e * i - f * h) - b * (d * i - f * g) + c * (d * h - e * g);
        let inv = Matrix3::new(
            e * i - f * h,
            c * h - b * i,
            b * f - c * e,
            f * g - d * i,
            a * i - c * g,
            c * d - a * f,
            d * h - e * g,
            b * g - a * h,
            a * e - b * d,
        ) / det;
        let diff = x - mu;
        let q = (diff.transpose() * inv * diff)[(0, 0)];
        -0.5 * q - 0.5 * det.ln() - 1.5 * (2.0 * std::f64::consts::PI).ln()
    }

    fn random_spd(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        a * a.transpose() + Matrix3::identity() * 0.1
    }

    fn toy_model() -> ConceptModel {
        ConceptModel::new(
            vec![Vector3::zeros(), Vector3::new(5.0, 0.0, 0.0)],
            vec![Matrix3::identity(), Matrix3::identity() * 2.0],
            vec![vec![0.7, 0.3, 0.0], vec![0.2, 0.3, 0.5]],
            vec![vec![0.5, 0.5], vec![0.1, 0.9]],
            vec![0.4, 0.6],
        )
        .unwrap()
    }

    #[test]
    fn logpdf_at_mean_of_standard_normal() {
        let v = gaussian_logpdf(&Vector3::zeros(), &Vector3::zeros(), &Matrix3::identity()).unwrap();
        assert!((v - (-HALF_LN_2PI3)).abs() < 1e-12);
        assert!((v - (-2.756815)).abs() < 1e-6);
    }

    #[test]
    fn logpdf_at_unit_mahalanobis_distance() {
        let v = gaussian_logpdf(&Vector3::new(1.0, 0.0, 0.0), &Vector3::zeros(), &Matrix3::identity())
            .unwrap();
        assert!((v - (-HALF_LN_2PI3 - 0.5)).abs() < 1e-12);
        assert!((v - (-3.256815)).abs() < 1e-6);
    }

    #[test]
    fn logpdf_matches_cofactor_oracle_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        for _ in 0..20 {
            let s = random_spd(&mut rng);
            let mu = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let x = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
            let got = gaussian_logpdf(&x, &mu, &s).unwrap();
            let want = oracle_logpdf(&x, &mu, &s);
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn logpdf_rejects_singular_covariance() {
        let s = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0));
        assert!(matches!(
            gaussian_logpdf(&Vector3::zeros(), &Vector3::zeros(), &s),
            Err(Error::SingularCovariance)
        ));
    }

    #[test]
    fn logpdf_integrates_to_one_by_monte_carlo() {
        // uniform draws over the box [-5, 5]^3 (mass outside is ~4e-6)
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let volume = 1000.0;
        let mut acc = 0.0;
        for _ in 0..n {
            let x = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
            acc += gaussian_logpdf(&x, &Vector3::zeros(), &Matrix3::identity()).unwrap().exp();
        }
        let integral = acc / n as f64 * volume;
        assert!((integral - 1.0).abs() < 1e-1, "integral {integral}");
    }

    #[test]
    fn categorical_examples() {
        assert!((categorical_logpmf(&[0, 1, 0, 0], &[0.25; 4]) - 0.25f64.ln()).abs() < 1e-15);
        assert_eq!(categorical_logpmf(&[0, 0, 0], &[0.5, 0.3, 0.2]), 0.0);
        let v = categorical_logpmf(&[2, 1, 0], &[0.5, 0.3, 0.2]);
        assert!((v - (-2.590267)).abs() < 1e-6, "{v}");
        assert_eq!(categorical_logpmf(&[1, 0], &[0.0, 1.0]), f64::NEG_INFINITY);
    }

    proptest! {
        #[test]
        fn categorical_is_monotone_in_counts(
            counts in proptest::collection::vec(0u32..5, 4),
            raw in proptest::collection::vec(0.01f64..1.0, 4),
            bump in 0usize..4,
        ) {
            let total: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let before = categorical_logpmf(&counts, &p);
            let mut more = counts.clone();
            more[bump] += 1;
            prop_assert!(categorical_logpmf(&more, &p) <= before);
        }
    }

    #[test]
    fn logfactor_composes_terms() {
        let m = ConceptModel::new(
            vec![Vector3::new(1.0, 2.0, 3.0)],
            vec![Matrix3::identity()],
            vec![vec![0.25, 0.75]],
            vec![vec![1.0]],
            vec![1.0],
        )
        .unwrap();
        let x = Vector3::new(1.5, 2.0, 2.0);
        let got = object_logfactor(&x, 1, &[], 0, &m).unwrap();
        let want = gaussian_logpdf(&x, &m.mu()[0], &m.sigma()[0]).unwrap()
            + categorical_logpmf(&[0, 1], &m.phi()[0])
            + 1f64.ln();
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn logfactor_is_neg_inf_for_impossible_class() {
        let m = toy_model();
        let v = object_logfactor(&Vector3::zeros(), 2, &[], 0, &m).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
    }

    #[test]
    fn logfactor_matches_term_by_term_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let h = Hyperparams {
            alpha: 1.0,
            beta: 1.0,
            gamma: 2.0,
            mu0: Vector3::zeros(),
            kappa0: 0.5,
            psi0: Matrix3::identity(),
            nu0: 8.0,
            k: 4,
        };
        let shape = GenerativeShape { num_classes: 5, num_words: 3, words_per_record: 2 };
        let (data, model) = sample_generative(&h, shape, 30, &mut rng).unwrap();
        for o in &data.observations {
            for k in 0..model.num_concepts() {
                let got = object_logfactor(&o.position, o.object_class, &o.words, k, &model).unwrap();
                let mut class_counts = vec![0u32; 5];
                class_counts[o.object_class] = 1;
                let want = oracle_logpdf(&o.position, &model.mu()[k], &model.sigma()[k])
                    + categorical_logpmf(&class_counts, &model.phi()[k])
                    + categorical_logpmf(&o.word_counts(3), &model.eta()[k])
                    + model.pi()[k].ln();
                assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{got} vs {want}");
            }
        }
    }

    #[test]
    fn model_rejects_broken_simplex_and_nonspd() {
        let ok = toy_model();
        assert!(ConceptModel::new(
            ok.mu().to_vec(),
            ok.sigma().to_vec(),
            ok.phi().to_vec(),
            ok.eta().to_vec(),
            vec![0.5, 0.6],
        )
        .is_err());
        let mut sig = ok.sigma().to_vec();
        sig[1] = -Matrix3::identity();
        assert!(ConceptModel::new(ok.mu().to_vec(), sig, ok.phi().to_vec(), ok.eta().to_vec(), ok.pi().to_vec())
            .is_err());
    }

    #[test]
    fn model_round_trips_through_json() {
        let m = toy_model();
        let s = serde_json::to_string(&m).unwrap();
        let back: ConceptModel = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        let broken = s.replace("0.4", "0.9");
        assert!(serde_json::from_str::<ConceptModel>(&broken).is_err());
    }

    #[test]
    fn single_concept_truncation_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = Hyperparams { k: 1, ..Hyperparams::stage1() };
        let shape = GenerativeShape { num_classes: 12, num_words: 0, words_per_record: 0 };
        let (data, model) = sample_generative(&h, shape, 50, &mut rng).unwrap();
        assert_eq!(model.pi(), &[1.0]);
        assert!(data.truth_assignments.unwrap().iter().all(|&c| c == 0));
    }

    #[test]
    fn stage_hyperparameters_generate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for h in [Hyperparams::stage1(), Hyperparams::stage2_1(), Hyperparams::stage2_2()] {
            let shape = GenerativeShape { num_classes: 15, num_words: 6, words_per_record: 1 };
            let (data, model) = sample_generative(&h, shape, 227, &mut rng).unwrap();
            assert_eq!(data.len(), 227);
            assert_eq!(model.num_concepts(), 10);
            for p in model.phi().iter().chain(model.eta()).chain(std::iter::once(&model.pi().to_vec())) {
                assert!((p.iter().sum::<f64>() - 1.0).abs() < SIMPLEX_TOLERANCE);
            }
        }
    }

    #[test]
    fn empirical_concept_frequencies_follow_pi() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pi = vec![0.1, 0.2, 0.3, 0.4];
        let model = ConceptModel::new(
            (0..4).map(|k| Vector3::new(k as f64, 0.0, 0.0)).collect(),
            vec![Matrix3::identity() * 0.01; 4],
            vec![vec![0.5, 0.5]; 4],
            vec![vec![]; 4],
            pi.clone(),
        )
        .unwrap();
        let n = 100_000;
        let data = sample_records(&model, n, 0, &mut rng).unwrap();
        let mut freq = [0usize; 4];
        for &c in data.truth_assignments.as_ref().unwrap() {
            freq[c] += 1;
        }
        for k in 0..4 {
            assert!((freq[k] as f64 / n as f64 - pi[k]).abs() < 0.01);
        }
    }

    #[test]
    fn conditional_sample_means_converge_to_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = Hyperparams {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            mu0: Vector3::zeros(),
            kappa0: 0.05,
            psi0: Matrix3::identity() * 6.0,
            nu0: 10.0,
            k: 5,
        };
        let shape = GenerativeShape { num_classes: 3, num_words: 0, words_per_record: 0 };
        let (data, model) = sample_generative(&h, shape, 2000, &mut rng).unwrap();
        let truth = data.truth_assignments.as_ref().unwrap();
        for k in 0..5 {
            let members: Vec<&Observation> =
                data.observations.iter().zip(truth).filter(|(_, &c)| c == k).map(|(o, _)| o).collect();
            if members.len() < 30 {
                continue;
            }
            let n = members.len() as f64;
            let mean = members.iter().fold(Vector3::zeros(), |a, o| a + o.position) / n;
            for d in 0..3 {
                let sd = model.sigma()[k][(d, d)].sqrt();
                assert!((mean[d] - model.mu()[k][d]).abs() <= 3.0 * sd / n.sqrt() + 1e-12);
            }
        }
    }

    #[test]
    fn hyperparams_validation() {
        assert!(Hyperparams::stage1().validate().is_ok());
        assert!(Hyperparams { nu0: 4.0, ..Hyperparams::stage1() }.validate().is_err());
        assert!(Hyperparams { alpha: 0.0, ..Hyperparams::stage1() }.validate().is_err());
        assert!(Hyperparams { k: 0, ..Hyperparams::stage1() }.validate().is_err());
    }
}
