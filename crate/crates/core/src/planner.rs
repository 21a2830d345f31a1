//! Likelihood-ratio tidy-up planner.
//!
//! Each step scores every detected object by the log ratio between its position likelihood at
//! the mean of its most probable concept and at its current position, moves the best-scoring
//! object, and asks the oracle for a place word when the object's class is too poorly explained
//! by any concept. Because object positions are conditionally independent given the model,
//! repeating the greedy step `N` times solves the joint `N`-object problem; [`batch_plan`]
//! solves it by enumeration for cross-checking.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ConceptModel, Position};
use crate::numeric::{argmax, log_sum_exp};
use crate::oracle::PlaceOracle;

/// Threshold on definedness below which an object is treated as unknown.
pub const DEFAULT_UNKNOWN_THRESHOLD: f64 = 0.003;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub id: u64,
    pub position: Position,
    /// Index of the active entry of the class one-hot vector.
    pub object_class: usize,
}

/// One planner decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub object_id: u64,
    pub concept: usize,
    pub target: Position,
    /// `max_k φ_k[class] · π_k` for the chosen object.
    pub definedness: f64,
    /// Log ratio against the final target (after any oracle query).
    pub log_ratio: f64,
    /// Log ratio the object was selected with.
    pub selection_log_ratio: f64,
    pub unknown_flag: bool,
    /// Words returned by the oracle; empty when no query was made.
    pub resolved_words: Vec<usize>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub lambda: f64,
    /// Objects to tidy per episode.
    pub n: usize,
    #[serde(default)]
    pub tie_break: TieBreak,
    /// Handle every known object before any unknown one.
    #[serde(default)]
    pub defer_unknowns: bool,
}

impl PlannerConfig {
    pub fn new(n: usize) -> Self {
        Self { lambda: DEFAULT_UNKNOWN_THRESHOLD, n, tie_break: TieBreak::LowestId, defer_unknowns: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Most probable concept for a class, and its probability `φ_k[class] · π_k`.
/// Ties go to the lowest concept index.
pub fn select_concept(object_class: usize, model: &ConceptModel) -> (usize, f64) {
    let scores: Vec<f64> = (0..model.num_concepts())
        .map(|k| model.phi()[k][object_class] * model.pi()[k])
        .collect();
    let k = argmax(&scores).expect("model has at least one concept");
    (k, scores[k])
}

/// Tidy position for a concept: its Gaussian mean.
pub fn target_position(concept: usize, model: &ConceptModel) -> Position {
    model.mu()[concept]
}

/// `ln Σ_k N(x | μ_k, Σ_k) φ_k[class] π_k`.
pub fn position_loglik(x: &Position, object_class: usize, model: &ConceptModel) -> Result<f64> {
    Ok(log_sum_exp(&model.position_log_terms(x, object_class)?))
}

/// Log of the ratio of one object's position likelihood at `x_target` over that at `x_d`.
pub fn log_likelihood_ratio(
    x_d: &Position,
    x_target: &Position,
    object_class: usize,
    model: &ConceptModel,
) -> Result<f64> {
    let after = position_loglik(x_target, object_class, model)?;
    let before = position_loglik(x_d, object_class, model)?;
    if after == f64::NEG_INFINITY && before == f64::NEG_INFINITY {
        return Err(Error::UndefinedRatio);
    }
    Ok(after - before)
}

/// Joint log-likelihood of the detected positions given their classes; 0 for no objects.
pub fn marginal_object_loglik(detections: &[DetectedObject], model: &ConceptModel) -> Result<f64> {
    detections
        .iter()
        .map(|d| position_loglik(&d.position, d.object_class, model))
        .sum()
}

/// Concept for an unknown object given one place word: `argmax_k η_k[w] · π_k`.
pub fn resolve_unknown(word: usize, model: &ConceptModel) -> Result<usize> {
    resolve_unknown_bag(&[word], model)
}

/// Bag-of-words form of [`resolve_unknown`], summing `ln η_k[w]` over the bag.
pub fn resolve_unknown_bag(words: &[usize], model: &ConceptModel) -> Result<usize> {
    let first = *words.first().ok_or(Error::UnresolvableWord { word: usize::MAX })?;
    if let Some(&w) = words.iter().find(|&&w| w >= model.num_words()) {
        return Err(Error::UnresolvableWord { word: w });
    }
    let scores: Vec<f64> = (0..model.num_concepts())
        .map(|k| words.iter().map(|&w| model.eta()[k][w].ln()).sum::<f64>() + model.pi()[k].ln())
        .collect();
    if scores.iter().all(|&s| s == f64::NEG_INFINITY) {
        return Err(Error::UnresolvableWord { word: first });
    }
    Ok(argmax(&scores).expect("model has at least one concept"))
}

/// Per-object quantities evaluated at decision time.
#[derive(Clone, Debug)]
struct Candidate {
    index: usize,
    concept: usize,
    definedness: f64,
    log_ratio: f64,
}

fn evaluate(detections: &[DetectedObject], model: &ConceptModel) -> Result<Vec<Candidate>> {
    detections
        .iter()
        .enumerate()
        .map(|(index, d)| {
            let (concept, definedness) = select_concept(d.object_class, model);
            let log_ratio =
                log_likelihood_ratio(&d.position, &target_position(concept, model), d.object_class, model)?;
            Ok(Candidate { index, concept, definedness, log_ratio })
        })
        .collect()
}

/// Higher ratio wins; equal ratios go to the lower object id.
fn better(a: &Candidate, b: &Candidate, detections: &[DetectedObject]) -> bool {
    match a.log_ratio.partial_cmp(&b.log_ratio) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Less) => false,
        _ => detections[a.index].id < detections[b.index].id,
    }
}

/// Chooses the next object, its concept and target; queries `oracle` for unknown objects.
pub fn plan_next(
    detections: &[DetectedObject],
    model: &ConceptModel,
    config: &PlannerConfig,
    oracle: &mut dyn PlaceOracle,
) -> Result<PlanStep> {
    config.validate()?;
    if detections.is_empty() {
        return Err(Error::InvalidConfig("no detected objects to plan for".into()));
    }
    let candidates = evaluate(detections, model)?;
    let any_known = candidates.iter().any(|c| c.definedness >= config.lambda);
    let eligible = |c: &&Candidate| !config.defer_unknowns || !any_known || c.definedness >= config.lambda;
    let best = candidates
        .iter()
        .filter(eligible)
        .fold(None::<&Candidate>, |acc, c| match acc {
            Some(b) if !better(c, b, detections) => Some(b),
            _ => Some(c),
        })
        .expect("at least one eligible candidate");

    let object = &detections[best.index];
    let unknown = best.definedness < config.lambda;
    let (concept, log_ratio, resolved_words) = if unknown {
        let words = oracle.ask(object.id, object.object_class)?;
        let concept = resolve_unknown_bag(&words, model)?;
        let lr = log_likelihood_ratio(
            &object.position,
            &target_position(concept, model),
            object.object_class,
            model,
        )?;
        (concept, lr, words)
    } else {
        (best.concept, best.log_ratio, Vec::new())
    };
    Ok(PlanStep {
        object_id: object.id,
        concept,
        target: target_position(concept, model),
        definedness: best.definedness,
        log_ratio,
        selection_log_ratio: best.log_ratio,
        unknown_flag: unknown,
        resolved_words,
    })
}

/// Hook called between steps with the current detections and the step just planned; returns
/// the detections for the next step.
pub type RefreshHook<'a> = dyn FnMut(&[DetectedObject], &PlanStep) -> Vec<DetectedObject> + 'a;

/// `config.n` greedy steps. Without a hook, the chosen object is dropped from the detection set
/// after each step.
pub fn plan_sequence(
    detections: &[DetectedObject],
    model: &ConceptModel,
    config: &PlannerConfig,
    oracle: &mut dyn PlaceOracle,
    mut refresh: Option<&mut RefreshHook<'_>>,
) -> Result<Vec<PlanStep>> {
    if config.n > detections.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot tidy {} objects out of {} detected",
            config.n,
            detections.len()
        )));
    }
    let mut current = detections.to_vec();
    let mut steps = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        if current.is_empty() {
            break;
        }
        let step = plan_next(&current, model, config, oracle)?;
        current = match refresh.as_mut() {
            Some(hook) => hook(&current, &step),
            None => current.into_iter().filter(|d| d.id != step.object_id).collect(),
        };
        steps.push(step);
    }
    Ok(steps)
}

/// Result of the exhaustive joint maximization.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPlan {
    /// Selected object ids in ascending order.
    pub object_ids: Vec<u64>,
    /// Target concept per selected object, aligned with `object_ids`.
    pub concepts: Vec<usize>,
    pub targets: Vec<Position>,
    /// `L(after) − L(before)` in log space.
    pub log_gain: f64,
}

/// Largest detection count [`batch_plan`] accepts.
pub const BATCH_PLAN_MAX_OBJECTS: usize = 8;

/// Maximizes the joint likelihood over every size-`n` subset and every assignment of concept
/// means to the subset, by full enumeration. Intended for cross-checking at small scale.
pub fn batch_plan(detections: &[DetectedObject], model: &ConceptModel, n: usize) -> Result<BatchPlan> {
    let d = detections.len();
    if n > d || d > BATCH_PLAN_MAX_OBJECTS {
        return Err(Error::InvalidConfig(format!(
            "batch planning needs n <= D <= {BATCH_PLAN_MAX_OBJECTS}, got n = {n}, D = {d}"
        )));
    }
    let k = model.num_concepts();
    let before = marginal_object_loglik(detections, model)?;
    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;

    for subset in combinations(d, n) {
        let mut concepts = vec![0usize; n];
        loop {
            let mut moved = detections.to_vec();
            for (slot, &obj) in subset.iter().enumerate() {
                moved[obj].position = model.mu()[concepts[slot]];
            }
            let gain = marginal_object_loglik(&moved, model)? - before;
            if best.as_ref().is_none_or(|(g, _, _)| gain > *g) {
                best = Some((gain, subset.clone(), concepts.clone()));
            }
            if !advance_odometer(&mut concepts, k) {
                break;
            }
        }
    }

    let (log_gain, subset, concepts) = best.expect("at least the empty subset is enumerated");
    let mut picked: Vec<(u64, usize)> =
        subset.iter().zip(&concepts).map(|(&i, &c)| (detections[i].id, c)).collect();
    picked.sort_by_key(|&(id, _)| id);
    Ok(BatchPlan {
        object_ids: picked.iter().map(|p| p.0).collect(),
        concepts: picked.iter().map(|p| p.1).collect(),
        targets: picked.iter().map(|p| model.mu()[p.1]).collect(),
        log_gain,
    })
}

/// All `n`-element index subsets of `0..d` in lexicographic order.
fn combinations(d: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    loop {
        out.push(current.clone());
        let Some(i) = (0..n).rev().find(|&i| current[i] < d - n + i) else {
            return out;
        };
        current[i] += 1;
        for j in i + 1..n {
            current[j] = current[j - 1] + 1;
        }
    }
}

fn advance_odometer(digits: &mut [usize], base: usize) -> bool {
    for digit in digits.iter_mut().rev() {
        *digit += 1;
        if *digit < base {
            return true;
        }
        *digit = 0;
    }
    false
}
