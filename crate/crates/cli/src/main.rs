//! `tidyup`: generate training data, train spatial concepts, plan tidy-up steps, simulate
//! episodes and evaluate planners over seeded trials.

mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use tidyup::baselines::TidyDatabase;
use tidyup::experiment::{self, config_hash, EvaluationConfig, Fitted, PlannerKind};
use tidyup::io::{read_database, read_dataset, trace_csv, write_database, write_dataset, ModelFile, FORMAT_VERSION};
use tidyup::nalgebra::Vector3;
use tidyup::oracle::{NoOracle, PlaceOracle, ScriptedOracle, TerminalOracle};
use tidyup::planner::{plan_sequence, DetectedObject, PlanStep, PlannerConfig, DEFAULT_UNKNOWN_THRESHOLD};
use tidyup::sim::{generate_training_data, NearestPlanner, RandomPlanner, Scenario, Stage, TidyPlanner};

use config::{parse_noise, parse_planner, parse_position, parse_stage, ExperimentConfig, NoiseSpec};

#[derive(Parser)]
#[command(name = "tidyup", version, about = "Spatial-concept tidy-up experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled training dataset for a scenario.
    Generate(GenerateArgs),
    /// Fit spatial concepts to a dataset.
    Train(TrainArgs),
    /// Plan tidy-up steps for a set of detections.
    Plan(PlanArgs),
    /// Run one simulated episode.
    Simulate(SimulateArgs),
    /// Compare planners over seeded trials.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct ConfigFile {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArg {
    /// Built-in scenario (stage1, stage2_1, stage2_2) or path to a scenario file.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args)]
struct TrainingArgs {
    /// Gibbs sweeps.
    #[arg(long)]
    iterations: Option<usize>,
    /// Independent Gibbs chains.
    #[arg(long)]
    chains: Option<usize>,
    /// Stage whose prior is used.
    #[arg(long, value_parser = parse_stage)]
    stage: Option<Stage>,
}

#[derive(Args)]
struct GenerationArgs {
    /// Training records to generate.
    #[arg(long)]
    count: Option<usize>,
    /// Noise profile for training data.
    #[arg(long, value_parser = parse_noise)]
    training_noise: Option<NoiseSpec>,
}

#[derive(Args)]
struct PlannerArgs {
    /// Definedness threshold below which the oracle is asked.
    #[arg(long)]
    lambda: Option<f64>,
    /// Tidy known objects before unknown ones.
    #[arg(long)]
    defer_unknowns: bool,
    /// Baseline 2 draws targets from records of the detected class only.
    #[arg(long)]
    same_class: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    file: ConfigFile,
    #[command(flatten)]
    scenario: ScenarioArg,
    #[command(flatten)]
    generation: GenerationArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; receives dataset.jsonl.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    file: ConfigFile,
    /// Dataset written by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Scenario supplying the stage and names when the dataset does not.
    #[command(flatten)]
    scenario: ScenarioArg,
    #[command(flatten)]
    training: TrainingArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; receives model.json, trace.csv and tidy_db.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    file: ConfigFile,
    /// Model written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Detections, one JSON object per line: {"id", "position", "object_class"}.
    #[arg(long)]
    detections: PathBuf,
    /// Baseline database; defaults to tidy_db.json next to the model.
    #[arg(long)]
    db: Option<PathBuf>,
    #[arg(long, value_parser = parse_planner)]
    planner: Option<PlannerKind>,
    /// Steps to plan; all detections by default.
    #[arg(long)]
    n: Option<usize>,
    #[command(flatten)]
    planner_args: PlannerArgs,
    /// Scripted oracle answers.
    #[arg(long, conflicts_with = "interactive")]
    oracle_script: Option<PathBuf>,
    /// Ask place questions on the terminal.
    #[arg(long)]
    interactive: bool,
    /// Robot position x,y,z for baseline 1.
    #[arg(long, value_parser = parse_position, allow_hyphen_values = true)]
    robot: Option<[f64; 3]>,
    /// Seed for baseline 2.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; receives plan.jsonl. Printed to stdout when unset.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EpisodeArgs {
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Planning model; trained from generated data when unset.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Baseline database; defaults to tidy_db.json next to the model.
    #[arg(long, requires = "model")]
    db: Option<PathBuf>,
    /// Steps per episode; the scatter count by default.
    #[arg(long)]
    n: Option<usize>,
    /// Execution noise profile.
    #[arg(long, value_parser = parse_noise)]
    noise: Option<NoiseSpec>,
    #[command(flatten)]
    planner_args: PlannerArgs,
    #[command(flatten)]
    training: TrainingArgs,
    #[command(flatten)]
    generation: GenerationArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    file: ConfigFile,
    #[arg(long, value_parser = parse_planner)]
    planner: Option<PlannerKind>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    episode: EpisodeArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    file: ConfigFile,
    /// Comma-separated planners; all three by default.
    #[arg(long, value_parser = parse_planner, value_delimiter = ',')]
    planners: Option<Vec<PlannerKind>>,
    #[arg(long)]
    trials: Option<usize>,
    /// Seed base; trial t uses seed + t.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    episode: EpisodeArgs,
}

impl PlannerArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        c.lambda = self.lambda;
        c.defer_unknowns = self.defer_unknowns.then_some(true);
        c.baseline2_same_class = self.same_class.then_some(true);
    }
}

impl TrainingArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        c.iterations = self.iterations;
        c.chains = self.chains;
        c.stage = self.stage;
    }
}

impl GenerationArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        c.count = self.count;
        c.training_noise = self.training_noise.clone();
    }
}

impl EpisodeArgs {
    fn apply(&self, c: &mut ExperimentConfig) {
        c.scenario = self.scenario.scenario.clone();
        c.n = self.n;
        c.noise = self.noise.clone();
        c.out = self.out.clone();
        self.planner_args.apply(c);
        self.training.apply(c);
        self.generation.apply(c);
    }
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Plan(a) => plan(a),
        Command::Simulate(a) => simulate(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn planner_config(c: &ExperimentConfig, n: usize) -> Result<PlannerConfig> {
    let config = PlannerConfig {
        lambda: c.lambda.unwrap_or(DEFAULT_UNKNOWN_THRESHOLD),
        defer_unknowns: c.defer_unknowns.unwrap_or(false),
        ..PlannerConfig::new(n)
    };
    config.validate()?;
    Ok(config)
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut flags = ExperimentConfig {
        scenario: a.scenario.scenario,
        seed: a.seed,
        out: a.out,
        ..Default::default()
    };
    a.generation.apply(&mut flags);
    let c = ExperimentConfig::resolve(a.file.config.as_deref(), flags)?;
    let scenario = c.scenario()?;
    let seed = c.seed.unwrap_or(0);
    let count = c.count.unwrap_or(scenario.training_count);
    if count == 0 {
        bail!("count must be at least 1");
    }
    let noise = c.training_noise()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dataset = generate_training_data(&scenario, count, &noise, &mut rng)?;
    let provenance = json!({
        "scenario": scenario.name,
        "stage": scenario.stage,
        "seed": seed,
        "count": count,
        "noise": noise,
        "class_names": scenario.class_names(),
        "word_names": scenario.word_names(),
        "config_hash": config_hash(&(&scenario, count, &noise, seed))?,
    });
    let out = c.out_dir()?;
    write(out, "dataset.jsonl", &write_dataset(&dataset, &provenance)?)?;
    let with_words = dataset.observations.iter().filter(|o| !o.words.is_empty()).count();
    println!("wrote {} records ({with_words} with words) to {}", dataset.len(), out.join("dataset.jsonl").display());
    Ok(())
}

fn names(provenance: &serde_json::Value, key: &str, fallback: Option<Vec<String>>) -> Vec<String> {
    serde_json::from_value(provenance[key].clone()).ok().or(fallback).unwrap_or_default()
}

fn train(a: TrainArgs) -> Result<()> {
    let mut flags = ExperimentConfig { scenario: a.scenario.scenario, seed: a.seed, out: a.out, ..Default::default() };
    a.training.apply(&mut flags);
    let c = ExperimentConfig::resolve(a.file.config.as_deref(), flags)?;
    let (dataset, provenance) = read_dataset(&read(&a.data)?).with_context(|| format!("parsing {}", a.data.display()))?;
    if dataset.is_empty() {
        bail!("{} holds no records", a.data.display());
    }
    let scenario = match &c.scenario {
        Some(_) => Some(c.scenario()?),
        None => None,
    };
    let provenance_stage: Option<Stage> = serde_json::from_value(provenance["stage"].clone()).ok();
    let h = c.hyperparams(provenance_stage.or(scenario.as_ref().map(|s| s.stage)), &dataset)?;
    let training = experiment::TrainingConfig { hyperparams: Some(h.clone()), mu0_from_data: false, ..c.training()? };
    let seed = c.seed.unwrap_or(0);
    let trained = experiment::fit(&dataset, &h, &training, seed)?;

    let file = ModelFile {
        format_version: FORMAT_VERSION,
        model: trained.model,
        hyperparams: h,
        selection: training.selection,
        estimate: training.estimate,
        iterations: training.iterations,
        seed,
        class_names: names(&provenance, "class_names", scenario.as_ref().map(Scenario::class_names)),
        word_names: names(&provenance, "word_names", scenario.as_ref().map(Scenario::word_names)),
    };
    let out = c.out_dir()?;
    write(out, "model.json", &file.to_json()?)?;
    write(out, "trace.csv", &trace_csv(&trained.trace))?;
    write(out, "tidy_db.json", &write_database(&trained.db)?)?;
    let best = trained.trace.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("trained {} sweeps x {} chains; best joint log-probability {best:.3}", training.iterations, training.chains);
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelFile> {
    ModelFile::from_json(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_db(db: Option<&Path>, model: &Path) -> Result<TidyDatabase> {
    let path = match db {
        Some(p) => p.to_path_buf(),
        None => model.with_file_name("tidy_db.json"),
    };
    read_database(&read(&path)?).with_context(|| format!("parsing {}", path.display()))
}

fn read_detections(path: &Path) -> Result<Vec<DetectedObject>> {
    read(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{} line {}", path.display(), i + 1)))
        .collect()
}

fn plan(a: PlanArgs) -> Result<()> {
    let mut flags = ExperimentConfig { planner: a.planner, n: a.n, seed: a.seed, out: a.out, ..Default::default() };
    a.planner_args.apply(&mut flags);
    let c = ExperimentConfig::resolve(a.file.config.as_deref(), flags)?;
    let file = load_model(&a.model)?;
    let detections = read_detections(&a.detections)?;
    let n = c.n.unwrap_or(detections.len());
    if n > detections.len() {
        bail!("cannot plan {n} steps for {} detections", detections.len());
    }
    let config = planner_config(&c, n)?;
    let kind = c.planner.unwrap_or(PlannerKind::Proposed);

    let steps: Vec<PlanStep> = match kind {
        PlannerKind::Proposed => {
            let mut oracle: Box<dyn PlaceOracle> = if let Some(p) = &a.oracle_script {
                Box::new(ScriptedOracle::load(p)?)
            } else if a.interactive {
                Box::new(TerminalOracle::new(
                    io::stdin().lock(),
                    io::stderr(),
                    file.word_names.clone(),
                    file.class_names.clone(),
                ))
            } else {
                Box::new(NoOracle)
            };
            plan_sequence(&detections, &file.model, &config, oracle.as_mut(), None)?
        }
        PlannerKind::Baseline1 | PlannerKind::Baseline2 => {
            let db = load_db(a.db.as_deref(), &a.model)?;
            let mut rng = ChaCha8Rng::seed_from_u64(c.seed.unwrap_or(0));
            let robot = a.robot.map(Vector3::from).unwrap_or_else(Vector3::zeros);
            let same_class = c.baseline2_same_class.unwrap_or(false);
            let mut nearest = NearestPlanner { db: db.clone(), robot_position: robot };
            let mut random = RandomPlanner { db, same_class };
            let mut remaining = detections.clone();
            let mut steps = Vec::with_capacity(n);
            for _ in 0..n {
                let planned = if kind == PlannerKind::Baseline1 {
                    nearest.plan(&remaining, &mut NoOracle, &mut rng)?
                } else {
                    random.plan(&remaining, &mut NoOracle, &mut rng)?
                };
                // objects of classes without records are left alone
                let Some(step) = planned else { break };
                nearest.robot_position = step.target;
                remaining.retain(|d| d.id != step.object_id);
                steps.push(step);
            }
            steps
        }
    };

    let mut text = String::new();
    for s in &steps {
        text.push_str(&serde_json::to_string(s)?);
        text.push('\n');
    }
    match &c.out {
        Some(dir) => write(dir, "plan.jsonl", &text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

/// Model and database loaded from disk for episodes.
struct EpisodeModel {
    model: tidyup::ConceptModel,
    db: TidyDatabase,
    /// Hash of the loaded files.
    source_hash: Option<String>,
}

fn episode_model(a: &EpisodeArgs, scenario: &Scenario) -> Result<Option<EpisodeModel>> {
    let Some(path) = &a.model else { return Ok(None) };
    let file = load_model(path)?;
    let db = load_db(a.db.as_deref(), path)?;
    if file.model.num_classes() != scenario.num_classes() {
        bail!(
            "model knows {} classes but scenario {} has {}",
            file.model.num_classes(),
            scenario.name,
            scenario.num_classes()
        );
    }
    let source_hash = Some(config_hash(&(&file, &db))?);
    Ok(Some(EpisodeModel { model: file.model, db, source_hash }))
}

fn evaluation_config(c: &ExperimentConfig, scenario: &Scenario, trials: usize, seed: u64, retrain: bool) -> Result<EvaluationConfig> {
    let steps = c.n.unwrap_or(scenario.scatter_count);
    Ok(EvaluationConfig {
        trials,
        seed,
        steps,
        noise: c.noise()?,
        planner: planner_config(c, steps)?,
        planners: c.planners.clone().unwrap_or_else(|| PlannerKind::ALL.to_vec()),
        baseline2_same_class: c.baseline2_same_class.unwrap_or(false),
        retrain: if retrain { Some(c.training()?) } else { None },
    })
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    scenario: &'a str,
    planner: PlannerKind,
    seed: u64,
    config_hash: String,
    loglik_positions: &'a str,
    score: &'a tidyup::sim::ScoreSheet,
    loglik: &'a [f64],
    steps: &'a [PlanStep],
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut flags = ExperimentConfig { planner: a.planner, seed: a.seed, ..Default::default() };
    a.episode.apply(&mut flags);
    let c = ExperimentConfig::resolve(a.file.config.as_deref(), flags)?;
    let scenario = c.scenario()?;
    let seed = c.seed.unwrap_or(0);
    let kind = c.planner.unwrap_or(PlannerKind::Proposed);
    let loaded = episode_model(&a.episode, &scenario)?;
    let mut eval = evaluation_config(&c, &scenario, 1, seed, loaded.is_none())?;
    eval.planners = vec![kind];

    let trained;
    let (fitted, source_hash) = match &loaded {
        Some(m) => (Fitted { model: &m.model, db: &m.db }, m.source_hash.clone()),
        None => {
            trained = experiment::train(&scenario, eval.retrain.as_ref().expect("set above"), seed)?;
            (trained.fitted(), None)
        }
    };
    let episode = experiment::run_planner_episode(kind, &scenario, fitted, &eval, seed)?;
    let report = SimulationReport {
        scenario: &scenario.name,
        planner: kind,
        seed,
        config_hash: config_hash(&(&scenario, &eval, &source_hash))?,
        loglik_positions: "true",
        score: &episode.score,
        loglik: &episode.log.loglik,
        steps: &episode.log.steps,
    };
    let out = c.out_dir()?;
    write(out, "score.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write(out, "episode.csv", &episode.log.to_csv())?;
    println!("{} on {}: {}/{}", kind.name(), scenario.name, episode.score.total, episode.score.max_possible);
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let mut flags =
        ExperimentConfig { planners: a.planners, trials: a.trials, seed: a.seed, ..Default::default() };
    a.episode.apply(&mut flags);
    let c = ExperimentConfig::resolve(a.file.config.as_deref(), flags)?;
    let seed = c.seed.context("evaluate needs a seed (use --seed or `seed` in the config)")?;
    let scenario = c.scenario()?;
    let loaded = episode_model(&a.episode, &scenario)?;
    let eval = evaluation_config(&c, &scenario, c.trials()?, seed, loaded.is_none())?;
    let fixed = loaded.as_ref().map(|m| Fitted { model: &m.model, db: &m.db });
    let report = experiment::evaluate(&scenario, fixed, &eval)?;

    let out = c.out_dir()?;
    write(out, "report.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    write(out, "loglik.csv", &report.loglik_csv())?;
    write(out, "scores.csv", &report.scores_csv())?;

    println!("{} ({} trials, seed {seed})", scenario.name, report.trials);
    for r in &report.results {
        let sd = tidyup::numeric::sample_variance(&r.scores.iter().map(|&s| s as f64).collect::<Vec<_>>())
            .map_or(String::new(), |v| format!(" ± {:.2}", v.sqrt()));
        println!("  {:<10} mean score {:.2}{sd} / {}", r.planner.name(), r.mean_score, r.max_possible[0]);
    }
    for cmp in &report.comparisons {
        match &cmp.across_steps {
            Some(w) => println!("  proposed vs {}: t = {:.3}, df = {:.2}, p = {:.3e}", cmp.baseline.name(), w.t, w.df, w.p),
            None => println!("  proposed vs {}: not tested", cmp.baseline.name()),
        }
    }
    Ok(())
}
