//! Experiment settings from a TOML file, overlaid by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tidyup::experiment::{PlannerKind, TrainingConfig, DEFAULT_CHAINS};
use tidyup::gibbs::GibbsOptions;
use tidyup::model::{Hyperparams, LabeledDataset};
use tidyup::nalgebra::{Matrix3, Vector3};
use tidyup::sim::{NoiseProfile, Scenario, Stage};

/// Execution noise: a profile name (`noise_free`, `stage1`, `stage2_1`, `stage2_2`) or explicit
/// values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NoiseSpec {
    Named(String),
    Profile(NoiseProfile),
}

impl NoiseSpec {
    pub fn resolve(&self) -> Result<NoiseProfile> {
        match self {
            NoiseSpec::Named(name) => NoiseProfile::named(name).with_context(|| format!("unknown noise profile {name}")),
            NoiseSpec::Profile(p) => {
                p.validate()?;
                Ok(p.clone())
            }
        }
    }
}

/// `psi0` as one isotropic variance or a full matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Isotropic(f64),
    Full([[f64; 3]; 3]),
}

impl MatrixSpec {
    fn to_matrix(&self) -> Matrix3<f64> {
        match self {
            MatrixSpec::Isotropic(v) => Matrix3::from_diagonal_element(*v),
            MatrixSpec::Full(rows) => Matrix3::from_fn(|i, j| rows[i][j]),
        }
    }
}

/// Prior overrides on top of the stage defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperparamsSpec {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub mu0: Option<[f64; 3]>,
    pub kappa0: Option<f64>,
    pub psi0: Option<MatrixSpec>,
    pub nu0: Option<f64>,
    pub k: Option<usize>,
}

impl HyperparamsSpec {
    fn apply(&self, mut h: Hyperparams) -> Hyperparams {
        if let Some(v) = self.alpha {
            h.alpha = v;
        }
        if let Some(v) = self.beta {
            h.beta = v;
        }
        if let Some(v) = self.gamma {
            h.gamma = v;
        }
        if let Some(v) = self.mu0 {
            h.mu0 = Vector3::from(v);
        }
        if let Some(v) = self.kappa0 {
            h.kappa0 = v;
        }
        if let Some(v) = &self.psi0 {
            h.psi0 = v.to_matrix();
        }
        if let Some(v) = self.nu0 {
            h.nu0 = v;
        }
        if let Some(v) = self.k {
            h.k = v;
        }
        h
    }
}

/// Everything an experiment can be configured with. Every field is optional so that a file
/// and the command line can each supply part of it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in scenario name or path to a scenario file.
    pub scenario: Option<String>,
    pub stage: Option<Stage>,
    pub hyperparams: Option<HyperparamsSpec>,
    pub planner: Option<PlannerKind>,
    pub planners: Option<Vec<PlannerKind>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    /// Noise during episodes.
    pub noise: Option<NoiseSpec>,
    /// Noise when generating training data.
    pub training_noise: Option<NoiseSpec>,
    /// Objects to tidy per episode or plan.
    pub n: Option<usize>,
    pub lambda: Option<f64>,
    pub defer_unknowns: Option<bool>,
    pub baseline2_same_class: Option<bool>,
    pub iterations: Option<usize>,
    pub chains: Option<usize>,
    /// Training records to generate.
    pub count: Option<usize>,
    pub out: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        ExperimentConfig { $($f: $top.$f.or($base.$f)),* }
    };
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Loads `path` when given and lets every field set in `flags` win.
    pub fn resolve(path: Option<&Path>, flags: ExperimentConfig) -> Result<Self> {
        let base = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        Ok(base.overlay(flags))
    }

    pub fn overlay(self, top: ExperimentConfig) -> Self {
        let base = self;
        overlay!(
            base,
            top,
            scenario,
            stage,
            hyperparams,
            planner,
            planners,
            trials,
            seed,
            noise,
            training_noise,
            n,
            lambda,
            defer_unknowns,
            baseline2_same_class,
            iterations,
            chains,
            count,
            out
        )
    }

    pub fn scenario(&self) -> Result<Scenario> {
        let name = self.scenario.as_deref().context("no scenario given (use --scenario or `scenario` in the config)")?;
        load_scenario(name)
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().context("no output directory given (use --out or `out` in the config)")
    }

    pub fn noise(&self) -> Result<NoiseProfile> {
        self.noise.as_ref().map_or(Ok(NoiseProfile::noise_free()), NoiseSpec::resolve)
    }

    pub fn training_noise(&self) -> Result<NoiseProfile> {
        self.training_noise.as_ref().map_or(Ok(NoiseProfile::noise_free()), NoiseSpec::resolve)
    }

    pub fn trials(&self) -> Result<usize> {
        let t = self.trials.unwrap_or(10);
        if t == 0 {
            bail!("trials must be at least 1");
        }
        Ok(t)
    }

    /// Prior for `dataset`: stage defaults (from the config, else `fallback`) with overrides.
    /// `mu0` is the mean training position unless set explicitly.
    pub fn hyperparams(&self, fallback: Option<Stage>, dataset: &LabeledDataset) -> Result<Hyperparams> {
        let stage = self
            .stage
            .or(fallback)
            .context("cannot tell which stage's prior to use (set --stage or `stage` in the config)")?;
        let spec = self.hyperparams.clone().unwrap_or_default();
        let mut h = spec.apply(stage.hyperparams());
        if spec.mu0.is_none() {
            if let Some(m) = dataset.mean_position() {
                h.mu0 = m;
            }
        }
        h.validate()?;
        Ok(h)
    }

    /// Training settings for commands that generate and fit their own data.
    pub fn training(&self) -> Result<TrainingConfig> {
        let hyperparams = match (&self.stage, &self.hyperparams) {
            (None, None) => None,
            _ => {
                let stage = match self.stage {
                    Some(s) => s,
                    None => self.scenario()?.stage,
                };
                Some(self.hyperparams.clone().unwrap_or_default().apply(stage.hyperparams()))
            }
        };
        let mu0_set = self.hyperparams.as_ref().is_some_and(|h| h.mu0.is_some());
        Ok(TrainingConfig {
            count: self.count,
            noise: self.training_noise()?,
            iterations: self.iterations.unwrap_or(GibbsOptions::DEFAULT_ITERATIONS),
            chains: self.chains.unwrap_or(DEFAULT_CHAINS),
            hyperparams,
            mu0_from_data: !mu0_set,
            ..TrainingConfig::default()
        })
    }
}

pub fn load_scenario(name: &str) -> Result<Scenario> {
    if let Some(s) = Scenario::builtin(name) {
        return Ok(s);
    }
    let path = Path::new(name);
    if !path.exists() {
        bail!("{name} is neither a built-in scenario ({}) nor a file", Scenario::builtin_names().join(", "));
    }
    Ok(Scenario::load(path)?)
}

pub fn parse_planner(s: &str) -> Result<PlannerKind, String> {
    PlannerKind::parse(s).ok_or_else(|| format!("expected proposed, baseline1 or baseline2, got {s}"))
}

pub fn parse_stage(s: &str) -> Result<Stage, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| format!("expected stage1, stage2_1 or stage2_2, got {s}"))
}

pub fn parse_noise(s: &str) -> Result<NoiseSpec, String> {
    NoiseProfile::named(s)
        .map(|_| NoiseSpec::Named(s.into()))
        .ok_or_else(|| format!("expected noise_free, stage1, stage2_1 or stage2_2, got {s}"))
}

pub fn parse_position(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("bad coordinate in {s}: {e}"))?;
    <[f64; 3]>::try_from(parts).map_err(|_| format!("expected x,y,z, got {s}"))
}
