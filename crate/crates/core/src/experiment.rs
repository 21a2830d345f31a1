//! Train-then-evaluate pipeline shared by the command-line driver and the acceptance suite.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::TidyDatabase;
use crate::error::{Error, Result};
use crate::gibbs::{gibbs_fit_chains, GibbsOptions, SweepSelection, ThetaEstimate};
use crate::metrics::{welch_t_test, WelchTest};
use crate::model::{ConceptModel, Hyperparams, LabeledDataset};
use crate::numeric::{mean, sample_variance};
use crate::oracle::ScriptedOracle;
use crate::planner::PlannerConfig;
use crate::sim::{
    generate_training_data, run_episode, Episode, NearestPlanner, NoiseProfile, ProposedPlanner, RandomPlanner,
    Scenario, TidyPlanner,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Proposed,
    Baseline1,
    Baseline2,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 3] = [PlannerKind::Proposed, PlannerKind::Baseline1, PlannerKind::Baseline2];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Proposed => "proposed",
            PlannerKind::Baseline1 => "baseline1",
            PlannerKind::Baseline2 => "baseline2",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// How training data is produced and fitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Records to generate; the scenario's count when unset.
    pub count: Option<usize>,
    pub noise: NoiseProfile,
    pub iterations: usize,
    /// Independent chains; the best sweep over all of them is kept.
    pub chains: usize,
    /// Stage defaults when unset.
    pub hyperparams: Option<Hyperparams>,
    /// Replace `mu0` with the mean training position.
    pub mu0_from_data: bool,
    pub selection: SweepSelection,
    pub estimate: ThetaEstimate,
}

/// Chains per fit. A single chain often merges two places into one concept and never splits
/// them again, because empty concepts are redrawn from a very tight prior around `mu0`.
pub const DEFAULT_CHAINS: usize = 16;

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            count: None,
            noise: NoiseProfile::noise_free(),
            iterations: GibbsOptions::DEFAULT_ITERATIONS,
            chains: DEFAULT_CHAINS,
            hyperparams: None,
            mu0_from_data: true,
            selection: SweepSelection::default(),
            estimate: ThetaEstimate::default(),
        }
    }
}

/// A fitted scenario: data, prior actually used, planning model, trace and baseline database.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trained {
    pub dataset: LabeledDataset,
    pub hyperparams: Hyperparams,
    pub model: ConceptModel,
    pub trace: Vec<f64>,
    pub db: TidyDatabase,
}

/// Hyperparameters for fitting `dataset` in `scenario` under `config`.
pub fn resolve_hyperparams(scenario: &Scenario, dataset: &LabeledDataset, config: &TrainingConfig) -> Hyperparams {
    let mut h = config.hyperparams.clone().unwrap_or_else(|| scenario.stage.hyperparams());
    if config.mu0_from_data {
        if let Some(m) = dataset.mean_position() {
            h.mu0 = m;
        }
    }
    h
}

/// Fits `dataset` and derives the planning model.
pub fn fit(dataset: &LabeledDataset, h: &Hyperparams, config: &TrainingConfig, seed: u64) -> Result<Trained> {
    let fit = gibbs_fit_chains(dataset, h, &GibbsOptions { iterations: config.iterations, seed }, config.chains)?;
    let model = fit.planning_model(dataset, h, config.selection, config.estimate)?;
    Ok(Trained {
        dataset: dataset.clone(),
        hyperparams: h.clone(),
        model,
        trace: fit.trace,
        db: TidyDatabase::from_dataset(dataset),
    })
}

/// Generates training data for `scenario` and fits it, all from one seed.
pub fn train(scenario: &Scenario, config: &TrainingConfig, seed: u64) -> Result<Trained> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = config.count.unwrap_or(scenario.training_count);
    let dataset = generate_training_data(scenario, count, &config.noise, &mut rng)?;
    let h = resolve_hyperparams(scenario, &dataset, config);
    fit(&dataset, &h, config, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationConfig {
    pub trials: usize,
    pub seed: u64,
    /// Steps per episode.
    pub steps: usize,
    pub noise: NoiseProfile,
    pub planner: PlannerConfig,
    pub planners: Vec<PlannerKind>,
    /// Baseline 2 draws targets from the detected class's records only.
    pub baseline2_same_class: bool,
    /// Retrain on fresh data every trial instead of using a supplied model.
    pub retrain: Option<TrainingConfig>,
}

/// Results of one planner across all trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerResults {
    pub planner: PlannerKind,
    pub scores: Vec<u32>,
    pub max_possible: Vec<u32>,
    pub mean_score: f64,
    /// `loglik[trial][step]`, step 0 being the scattered layout.
    pub loglik: Vec<Vec<f64>>,
    pub step_mean: Vec<f64>,
    /// Empty cells (`None`) with a single trial.
    pub step_sd: Vec<Option<f64>>,
    /// Mean over steps `1..=steps` per trial.
    pub trial_mean_loglik: Vec<f64>,
}

/// Welch tests of the proposed planner against one baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: PlannerKind,
    /// Per step `0..=steps`; `None` when suppressed.
    pub per_step: Vec<Option<WelchTest>>,
    /// On the per-trial means over steps.
    pub across_steps: Option<WelchTest>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub scenario: String,
    pub config_hash: String,
    /// Log-likelihoods are evaluated at true object positions and classes.
    pub loglik_positions: String,
    pub trials: usize,
    pub results: Vec<PlannerResults>,
    pub comparisons: Vec<Comparison>,
}

impl EvaluationReport {
    pub fn results_for(&self, kind: PlannerKind) -> Option<&PlannerResults> {
        self.results.iter().find(|r| r.planner == kind)
    }

    /// `step,<planner>_mean,<planner>_sd,...` table of per-step log-likelihood statistics.
    pub fn loglik_csv(&self) -> String {
        let mut out = String::from("step");
        for r in &self.results {
            out.push_str(&format!(",{0}_mean,{0}_sd", r.planner.name()));
        }
        out.push('\n');
        let steps = self.results.first().map_or(0, |r| r.step_mean.len());
        for s in 0..steps {
            out.push_str(&s.to_string());
            for r in &self.results {
                let sd = r.step_sd[s].map(|v| format!("{v:?}")).unwrap_or_default();
                out.push_str(&format!(",{:?},{}", r.step_mean[s], sd));
            }
            out.push('\n');
        }
        out
    }

    /// `trial,<planner>,...` score table with a final mean row.
    pub fn scores_csv(&self) -> String {
        let mut out = String::from("trial");
        for r in &self.results {
            out.push_str(&format!(",{}", r.planner.name()));
        }
        out.push('\n');
        for t in 0..self.trials {
            out.push_str(&t.to_string());
            for r in &self.results {
                out.push_str(&format!(",{}/{}", r.scores[t], r.max_possible[t]));
            }
            out.push('\n');
        }
        out.push_str("mean");
        for r in &self.results {
            out.push_str(&format!(",{:?}", r.mean_score));
        }
        out.push('\n');
        out
    }
}

/// SHA-256 of the JSON form of `value`, hex encoded.
pub fn config_hash<T: Serialize>(value: &T) -> Result<String> {
    let bytes = serde_json::to_vec(value)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Model and baseline database a planner runs with.
#[derive(Clone, Copy, Debug)]
pub struct Fitted<'a> {
    pub model: &'a ConceptModel,
    pub db: &'a TidyDatabase,
}

impl Trained {
    pub fn fitted(&self) -> Fitted<'_> {
        Fitted { model: &self.model, db: &self.db }
    }
}

/// Builds a planner of the given kind for one episode.
pub fn make_planner(
    kind: PlannerKind,
    scenario: &Scenario,
    fitted: Fitted<'_>,
    config: &EvaluationConfig,
) -> Box<dyn TidyPlanner> {
    match kind {
        PlannerKind::Proposed => {
            Box::new(ProposedPlanner { model: fitted.model.clone(), config: config.planner.clone() })
        }
        PlannerKind::Baseline1 => {
            Box::new(NearestPlanner { db: fitted.db.clone(), robot_position: scenario.robot_start() })
        }
        PlannerKind::Baseline2 => {
            Box::new(RandomPlanner { db: fitted.db.clone(), same_class: config.baseline2_same_class })
        }
    }
}

/// One episode of `kind` with a truthful scripted oracle.
pub fn run_planner_episode(
    kind: PlannerKind,
    scenario: &Scenario,
    fitted: Fitted<'_>,
    config: &EvaluationConfig,
    seed: u64,
) -> Result<Episode> {
    let mut planner = make_planner(kind, scenario, fitted, config);
    let mut oracle = ScriptedOracle::new(scenario.oracle_answers());
    run_episode(scenario, planner.as_mut(), fitted.model, config.steps, &config.noise, &mut oracle, seed)
}

/// Runs `trials` episodes per planner. Trial `t` uses seed `config.seed + t` for training (when
/// retraining) and for the episode, so every planner faces the same scatter in a trial.
/// The config hash covers the scenario, the config and any fixed model.
pub fn evaluate(scenario: &Scenario, fixed: Option<Fitted<'_>>, config: &EvaluationConfig) -> Result<EvaluationReport> {
    if config.trials == 0 {
        return Err(Error::InvalidConfig("at least one trial is required".into()));
    }
    if config.planners.is_empty() {
        return Err(Error::InvalidConfig("no planners selected".into()));
    }
    if fixed.is_none() && config.retrain.is_none() {
        return Err(Error::InvalidConfig("evaluation needs a trained model or a training config".into()));
    }
    config.planner.validate()?;

    let mut results: Vec<PlannerResults> = config
        .planners
        .iter()
        .map(|&planner| PlannerResults {
            planner,
            scores: Vec::new(),
            max_possible: Vec::new(),
            mean_score: 0.0,
            loglik: Vec::new(),
            step_mean: Vec::new(),
            step_sd: Vec::new(),
            trial_mean_loglik: Vec::new(),
        })
        .collect();

    for t in 0..config.trials {
        let seed = config.seed.wrapping_add(t as u64);
        let retrained;
        let fitted = match (&config.retrain, fixed) {
            (Some(tc), _) => {
                retrained = train(scenario, tc, seed)?;
                retrained.fitted()
            }
            (None, Some(f)) => f,
            (None, None) => unreachable!("checked above"),
        };
        for r in &mut results {
            let ep = run_planner_episode(r.planner, scenario, fitted, config, seed)?;
            r.scores.push(ep.score.total);
            r.max_possible.push(ep.score.max_possible);
            r.trial_mean_loglik.push(if ep.log.loglik.len() > 1 { mean(&ep.log.loglik[1..]) } else { ep.log.loglik[0] });
            r.loglik.push(ep.log.loglik);
        }
    }

    for r in &mut results {
        r.mean_score = mean(&r.scores.iter().map(|&s| s as f64).collect::<Vec<_>>());
        let steps = r.loglik[0].len();
        for s in 0..steps {
            let column: Vec<f64> = r.loglik.iter().map(|row| row[s]).collect();
            r.step_mean.push(mean(&column));
            r.step_sd.push(sample_variance(&column).map(f64::sqrt));
        }
    }

    let mut comparisons = Vec::new();
    if let Some(proposed) = results.iter().find(|r| r.planner == PlannerKind::Proposed) {
        for other in results.iter().filter(|r| r.planner != PlannerKind::Proposed) {
            let per_step = (0..proposed.step_mean.len())
                .map(|s| {
                    let a: Vec<f64> = proposed.loglik.iter().map(|row| row[s]).collect();
                    let b: Vec<f64> = other.loglik.iter().map(|row| row[s]).collect();
                    welch_t_test(&a, &b)
                })
                .collect();
            comparisons.push(Comparison {
                baseline: other.planner,
                per_step,
                across_steps: welch_t_test(&proposed.trial_mean_loglik, &other.trial_mean_loglik),
            });
        }
    }

    Ok(EvaluationReport {
        scenario: scenario.name.clone(),
        config_hash: config_hash(&(scenario, config, fixed.map(|f| (f.model, f.db))))?,
        loglik_positions: "true".into(),
        trials: config.trials,
        results,
        comparisons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_config(trials: usize) -> EvaluationConfig {
        EvaluationConfig {
            trials,
            seed: 100,
            steps: 10,
            noise: NoiseProfile::noise_free(),
            planner: PlannerConfig::new(1),
            planners: PlannerKind::ALL.to_vec(),
            baseline2_same_class: false,
            retrain: None,
        }
    }

    #[test]
    fn single_trial_suppresses_spread_and_tests() {
        let s = Scenario::builtin("stage1").unwrap();
        let trained = train(&s, &TrainingConfig { iterations: 5, ..TrainingConfig::default() }, 1).unwrap();
        let report = evaluate(&s, Some(trained.fitted()), &quick_config(1)).unwrap();
        assert_eq!(report.results.len(), 3);
        for r in &report.results {
            assert!(r.step_sd.iter().all(Option::is_none));
        }
        for c in &report.comparisons {
            assert!(c.per_step.iter().all(Option::is_none));
            assert!(c.across_steps.is_none());
        }
        assert_eq!(report.config_hash.len(), 64);
    }

    #[test]
    fn identical_planners_compare_with_p_one() {
        let s = Scenario::builtin("stage1").unwrap();
        let trained = train(&s, &TrainingConfig { iterations: 5, ..TrainingConfig::default() }, 2).unwrap();
        let mut cfg = quick_config(4);
        cfg.planners = vec![PlannerKind::Proposed, PlannerKind::Proposed];
        let report = evaluate(&s, Some(trained.fitted()), &cfg).unwrap();
        let (a, b) = (&report.results[0], &report.results[1]);
        assert_eq!(a.loglik, b.loglik);
        for s in 0..a.step_mean.len() {
            let col = |r: &PlannerResults| r.loglik.iter().map(|row| row[s]).collect::<Vec<f64>>();
            assert!((welch_t_test(&col(a), &col(b)).unwrap().p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn report_tables_have_expected_shape() {
        let s = Scenario::builtin("stage1").unwrap();
        let trained = train(&s, &TrainingConfig { iterations: 5, ..TrainingConfig::default() }, 3).unwrap();
        let report = evaluate(&s, Some(trained.fitted()), &quick_config(3)).unwrap();
        let scores = report.scores_csv();
        assert_eq!(scores.lines().next().unwrap(), "trial,proposed,baseline1,baseline2");
        assert_eq!(scores.lines().count(), 5);
        assert_eq!(report.loglik_csv().lines().count(), 12);
        assert!(evaluate(&s, Some(trained.fitted()), &quick_config(0)).is_err());
    }
}
