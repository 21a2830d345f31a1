//! Environment state, sensing and manipulation noise.

use nalgebra::Vector3;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LabeledDataset, Observation, Position};
use crate::planner::{DetectedObject, PlanStep};

use super::scenario::{Scenario, Stage};

/// Largest distance from the target at which a failed release leaves the object.
pub const RELEASE_DROP_RADIUS: f64 = 0.5;

/// Detection and manipulation reliability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub detection_accuracy: f64,
    pub grasp_success: f64,
    pub release_success: f64,
    pub position_jitter_sd: f64,
}

/// Jitter applied by the measured profiles.
pub const DEFAULT_JITTER_SD: f64 = 0.02;

impl NoiseProfile {
    /// Perfect sensing and manipulation.
    pub fn noise_free() -> Self {
        Self { detection_accuracy: 1.0, grasp_success: 1.0, release_success: 1.0, position_jitter_sd: 0.0 }
    }

    /// Accuracies measured on the real system for each stage.
    pub fn measured(stage: Stage) -> Self {
        let (d, g, r) = match stage {
            Stage::Stage1 => (1.00, 0.64, 0.84),
            Stage::Stage2_1 => (0.96, 0.69, 0.79),
            Stage::Stage2_2 => (0.95, 0.76, 0.68),
        };
        Self { detection_accuracy: d, grasp_success: g, release_success: r, position_jitter_sd: DEFAULT_JITTER_SD }
    }

    /// `noise_free`, `stage1`, `stage2_1` or `stage2_2`.
    pub fn named(name: &str) -> Option<Self> {
        match name {
            "noise_free" => Some(Self::noise_free()),
            "stage1" => Some(Self::measured(Stage::Stage1)),
            "stage2_1" => Some(Self::measured(Stage::Stage2_1)),
            "stage2_2" => Some(Self::measured(Stage::Stage2_2)),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("detection_accuracy", self.detection_accuracy),
            ("grasp_success", self.grasp_success),
            ("release_success", self.release_success),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.position_jitter_sd >= 0.0 && self.position_jitter_sd.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "position_jitter_sd must be non-negative, got {}",
                self.position_jitter_sd
            )));
        }
        Ok(())
    }
}

fn jitter<R: Rng + ?Sized>(x: &Position, sd: f64, rng: &mut R) -> Position {
    if sd == 0.0 {
        return *x;
    }
    let n = Normal::new(0.0, sd).expect("sd validated");
    x + Vector3::from_fn(|_, _| n.sample(rng))
}

/// Class reported for an object of class `class`: a uniformly random different member of
/// `candidates` with probability `1 − accuracy`.
fn detect_class<R: Rng + ?Sized>(class: usize, candidates: &[usize], accuracy: f64, rng: &mut R) -> usize {
    if accuracy >= 1.0 || rng.random::<f64>() < accuracy {
        return class;
    }
    let others: Vec<usize> = candidates.iter().copied().filter(|&c| c != class).collect();
    others.choose(rng).copied().unwrap_or(class)
}

/// Records of known objects observed at their tidy places.
///
/// Classes cycle through the known classes. Exactly `round(word_fraction · count)` records carry
/// their place word; those records are spread round-robin over the places. Misdetections flip
/// to another known class.
pub fn generate_training_data<R: Rng + ?Sized>(
    scenario: &Scenario,
    count: usize,
    noise: &NoiseProfile,
    rng: &mut R,
) -> Result<LabeledDataset> {
    noise.validate()?;
    if count == 0 {
        return Err(Error::InvalidConfig("training count must be at least 1".into()));
    }
    let known = scenario.known_classes();
    let classes: Vec<usize> = (0..count).map(|i| known[i % known.len()]).collect();
    let mut observations = Vec::with_capacity(count);
    let mut truth = Vec::with_capacity(count);
    for &c in &classes {
        let place = scenario.place_of(c);
        let position = jitter(&scenario.places[place].center, noise.position_jitter_sd, rng);
        let detected = detect_class(c, &known, noise.detection_accuracy, rng);
        observations.push(Observation::new(position, detected, Vec::new()));
        truth.push(place);
    }

    let wanted = (scenario.word_fraction * count as f64).round() as usize;
    let mut by_place: Vec<Vec<usize>> = vec![Vec::new(); scenario.places.len()];
    for (i, &p) in truth.iter().enumerate() {
        by_place[p].push(i);
    }
    let mut cursor = vec![0usize; by_place.len()];
    let mut assigned = 0;
    'outer: while assigned < wanted {
        let mut progressed = false;
        for (p, records) in by_place.iter().enumerate() {
            if assigned == wanted {
                break 'outer;
            }
            if let Some(&i) = records.get(cursor[p]) {
                observations[i].words.push(p);
                cursor[p] += 1;
                assigned += 1;
                progressed = true;
            }
        }
        if !progressed {
            break;
        }
    }
    LabeledDataset::new(scenario.num_classes(), scenario.num_words(), observations, Some(truth))
}

/// An object in the simulated world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimObject {
    pub id: u64,
    pub object_class: usize,
    pub position: Position,
}

/// Draws `n` objects from the scenario pool and places them uniformly in the scatter region.
/// Pool classes of unknown place are always included (up to `n`); the rest are drawn without
/// replacement from the known part of the pool. Ids are assigned after shuffling.
pub fn scatter<R: Rng + ?Sized>(scenario: &Scenario, n: usize, rng: &mut R) -> Result<Vec<SimObject>> {
    let pool = scenario.pool();
    if n > pool.len() {
        return Err(Error::InvalidConfig(format!("cannot scatter {n} objects from a pool of {}", pool.len())));
    }
    let (mut unknown, mut known): (Vec<usize>, Vec<usize>) =
        pool.into_iter().partition(|&c| scenario.classes[c].unknown);
    unknown.shuffle(rng);
    known.shuffle(rng);
    let mut chosen: Vec<usize> = unknown.into_iter().chain(known).take(n).collect();
    chosen.shuffle(rng);
    let region = &scenario.scatter_region;
    Ok(chosen
        .into_iter()
        .enumerate()
        .map(|(id, object_class)| {
            let position = Vector3::from_fn(|i, _| {
                if region.min[i] == region.max[i] {
                    region.min[i]
                } else {
                    rng.random_range(region.min[i]..=region.max[i])
                }
            });
            SimObject { id: id as u64, object_class, position }
        })
        .collect())
}

/// Detections of every object not resting inside a place, with class flips and position jitter.
pub fn observe<R: Rng + ?Sized>(
    scenario: &Scenario,
    objects: &[SimObject],
    noise: &NoiseProfile,
    rng: &mut R,
) -> Vec<DetectedObject> {
    let all: Vec<usize> = (0..scenario.num_classes()).collect();
    objects
        .iter()
        .filter(|o| scenario.place_containing(&o.position).is_none())
        .map(|o| DetectedObject {
            id: o.id,
            object_class: detect_class(o.object_class, &all, noise.detection_accuracy, rng),
            position: jitter(&o.position, noise.position_jitter_sd, rng),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// Where the object ended up; `None` when it was not picked up.
    pub moved_to: Option<Position>,
    pub grasp_failed: bool,
    pub release_failed: bool,
}

fn uniform_ball<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.random_range(-1.0..=1.0));
        if v.norm_squared() <= 1.0 {
            return v * radius;
        }
    }
}

/// Grasp, carry and release one object. A failed grasp leaves it in place; a failed release
/// leaves it uniformly within [`RELEASE_DROP_RADIUS`] of the target.
pub fn execute_step<R: Rng + ?Sized>(
    objects: &mut [SimObject],
    step: &PlanStep,
    noise: &NoiseProfile,
    rng: &mut R,
) -> Result<StepOutcome> {
    let object = objects
        .iter_mut()
        .find(|o| o.id == step.object_id)
        .ok_or(Error::StalePlan { object_id: step.object_id })?;
    if rng.random::<f64>() >= noise.grasp_success {
        return Ok(StepOutcome { moved_to: None, grasp_failed: true, release_failed: false });
    }
    let release_failed = rng.random::<f64>() >= noise.release_success;
    object.position = if release_failed { step.target + uniform_ball(RELEASE_DROP_RADIUS, rng) } else { step.target };
    Ok(StepOutcome { moved_to: Some(object.position), grasp_failed: false, release_failed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn step_for(id: u64, target: Position) -> PlanStep {
        PlanStep {
            object_id: id,
            concept: 0,
            target,
            definedness: 1.0,
            log_ratio: 0.0,
            selection_log_ratio: 0.0,
            unknown_flag: false,
            resolved_words: Vec::new(),
        }
    }

    #[test]
    fn noise_free_training_sits_on_place_centers() {
        let s = Scenario::builtin("stage1").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = generate_training_data(&s, 227, &NoiseProfile::noise_free(), &mut rng).unwrap();
        assert_eq!(ds.len(), 227);
        for (o, &p) in ds.observations.iter().zip(ds.truth_assignments.as_ref().unwrap()) {
            assert_eq!(o.position, s.places[p].center);
            assert_eq!(s.place_of(o.object_class), p);
            assert!(o.words.is_empty());
        }
    }

    #[test]
    fn word_count_is_rounded_fraction_and_spread_over_places() {
        let s = Scenario::builtin("stage2_2").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ds = generate_training_data(&s, 225, &NoiseProfile::noise_free(), &mut rng).unwrap();
        let with_words: Vec<&Observation> = ds.observations.iter().filter(|o| !o.words.is_empty()).collect();
        assert_eq!(with_words.len(), 11);
        for p in 0..s.num_words() {
            assert!(with_words.iter().any(|o| o.words == vec![p]));
        }
        for o in &with_words {
            assert_eq!(s.place_of(o.object_class), o.words[0]);
        }
        assert!(ds.observations.iter().all(|o| !s.classes[o.object_class].unknown));
    }

    #[test]
    fn training_class_corruption_rate_matches_accuracy() {
        let s = Scenario::builtin("stage2_2").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = NoiseProfile { detection_accuracy: 0.9, ..NoiseProfile::noise_free() };
        let ds = generate_training_data(&s, 10_000, &noise, &mut rng).unwrap();
        let known = s.known_classes();
        let flipped = (0..ds.len()).filter(|&i| ds.observations[i].object_class != known[i % known.len()]).count();
        // 99.9% binomial interval around 1000
        assert!((flipped as f64 - 1000.0).abs() < 3.3 * 30.0, "{flipped}");
        assert!(ds.observations.iter().all(|o| !s.classes[o.object_class].unknown));
    }

    #[test]
    fn zero_count_is_rejected() {
        let s = Scenario::builtin("stage1").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(generate_training_data(&s, 0, &NoiseProfile::noise_free(), &mut rng).is_err());
    }

    #[test]
    fn scatter_stays_in_region_and_includes_unknowns() {
        let s = Scenario::builtin("stage2_2").unwrap();
        for seed in 0..1000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let objs = scatter(&s, 10, &mut rng).unwrap();
            assert_eq!(objs.len(), 10);
            assert!(objs.iter().all(|o| s.scatter_region.contains(&o.position)));
            assert_eq!(objs.iter().filter(|o| s.classes[o.object_class].unknown).count(), 3);
            let mut classes: Vec<usize> = objs.iter().map(|o| o.object_class).collect();
            classes.sort();
            classes.dedup();
            assert_eq!(classes.len(), 10);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(scatter(&s, 0, &mut rng).unwrap().is_empty());
        assert!(scatter(&s, 13, &mut rng).is_err());
    }

    #[test]
    fn observe_skips_stored_objects_and_keeps_exact_positions_without_noise() {
        let s = Scenario::builtin("stage1").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut objs = scatter(&s, 10, &mut rng).unwrap();
        objs[3].position = s.places[0].center;
        let dets = observe(&s, &objs, &NoiseProfile::noise_free(), &mut rng);
        assert_eq!(dets.len(), 9);
        assert!(dets.iter().all(|d| d.id != 3));
        for d in &dets {
            let o = objs.iter().find(|o| o.id == d.id).unwrap();
            assert_eq!((d.position, d.object_class), (o.position, o.object_class));
        }
    }

    #[test]
    fn observe_flip_rate_matches_measured_profile() {
        let s = Scenario::builtin("stage2_2").unwrap();
        let noise = NoiseProfile { position_jitter_sd: 0.0, ..NoiseProfile::measured(Stage::Stage2_2) };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let objs = scatter(&s, 10, &mut rng).unwrap();
        let mut flips = 0;
        let rounds = 2000;
        for _ in 0..rounds {
            let dets = observe(&s, &objs, &noise, &mut rng);
            flips += dets.iter().zip(&objs).filter(|(d, o)| d.object_class != o.object_class).count();
        }
        let n = (rounds * 10) as f64;
        let rate = flips as f64 / n;
        let se = (0.05 * 0.95 / n).sqrt();
        assert!((rate - 0.05).abs() < 4.0 * se, "{rate}");
    }

    #[test]
    fn execute_step_outcomes() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let target = Vector3::new(1.0, 2.0, 3.0);
        let mut objs = vec![SimObject { id: 5, object_class: 0, position: Vector3::zeros() }];
        let out = execute_step(&mut objs, &step_for(5, target), &NoiseProfile::noise_free(), &mut rng).unwrap();
        assert_eq!(out.moved_to, Some(target));
        assert_eq!(objs[0].position, target);

        let stuck = NoiseProfile { grasp_success: 0.0, ..NoiseProfile::noise_free() };
        objs[0].position = Vector3::zeros();
        for _ in 0..100 {
            let out = execute_step(&mut objs, &step_for(5, target), &stuck, &mut rng).unwrap();
            assert!(out.grasp_failed);
        }
        assert_eq!(objs[0].position, Vector3::zeros());

        let slippery = NoiseProfile { release_success: 0.0, ..NoiseProfile::noise_free() };
        for _ in 0..100 {
            let out = execute_step(&mut objs, &step_for(5, target), &slippery, &mut rng).unwrap();
            assert!(out.release_failed);
            assert!((objs[0].position - target).norm() <= RELEASE_DROP_RADIUS);
        }
        assert!(matches!(
            execute_step(&mut objs, &step_for(9, target), &slippery, &mut rng),
            Err(Error::StalePlan { object_id: 9 })
        ));
    }

    #[test]
    fn stage1_profile_success_rate() {
        let noise = NoiseProfile::measured(Stage::Stage1);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut objs = vec![SimObject { id: 0, object_class: 0, position: Vector3::zeros() }];
        let n = 20_000;
        let ok = (0..n)
            .filter(|_| {
                let o = execute_step(&mut objs, &step_for(0, Vector3::zeros()), &noise, &mut rng).unwrap();
                !o.grasp_failed && !o.release_failed
            })
            .count();
        let rate = ok as f64 / n as f64;
        let se = (0.5376 * 0.4624 / n as f64).sqrt();
        assert!((rate - 0.64 * 0.84).abs() < 4.0 * se, "{rate}");
    }
}
