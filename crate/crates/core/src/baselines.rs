//! Comparison planners: nearest object to its recorded position, and random object to a random
//! recorded position.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LabeledDataset, Position};
use crate::planner::{DetectedObject, PlanStep};

/// `(class, position)` records harvested from training data, in record order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TidyDatabase {
    pub records: Vec<(usize, Position)>,
}

impl TidyDatabase {
    pub fn from_dataset(dataset: &LabeledDataset) -> Self {
        Self { records: dataset.observations.iter().map(|o| (o.object_class, o.position)).collect() }
    }

    /// First recorded position of `class`.
    pub fn first_for(&self, class: usize) -> Option<Position> {
        self.records.iter().find(|r| r.0 == class).map(|r| r.1)
    }

    pub fn contains_class(&self, class: usize) -> bool {
        self.records.iter().any(|r| r.0 == class)
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn baseline_step(object_id: u64, target: Position) -> PlanStep {
    PlanStep {
        object_id,
        concept: 0,
        target,
        definedness: 1.0,
        log_ratio: 0.0,
        selection_log_ratio: 0.0,
        unknown_flag: false,
        resolved_words: Vec::new(),
    }
}

/// Closest detection to `robot_position` (ties to the lowest id), sent to its class's first
/// database position.
pub fn baseline_nearest(
    detections: &[DetectedObject],
    robot_position: &Position,
    db: &TidyDatabase,
) -> Result<PlanStep> {
    let nearest = detections
        .iter()
        .min_by(|a, b| {
            let da = (a.position - robot_position).norm();
            let db = (b.position - robot_position).norm();
            da.total_cmp(&db).then(a.id.cmp(&b.id))
        })
        .ok_or_else(|| Error::InvalidConfig("no detected objects to plan for".into()))?;
    let target = db
        .first_for(nearest.object_class)
        .ok_or(Error::MissingDatabaseEntry { class: nearest.object_class })?;
    Ok(baseline_step(nearest.id, target))
}

/// Uniformly random detection, sent to a uniformly random database position. With `same_class`
/// the position is drawn from records of the detected class only.
pub fn baseline_random<R: Rng + ?Sized>(
    detections: &[DetectedObject],
    db: &TidyDatabase,
    same_class: bool,
    rng: &mut R,
) -> Result<PlanStep> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let chosen = detections
        .choose(rng)
        .ok_or_else(|| Error::InvalidConfig("no detected objects to plan for".into()))?;
    let target = if same_class {
        let candidates: Vec<Position> =
            db.records.iter().filter(|r| r.0 == chosen.object_class).map(|r| r.1).collect();
        *candidates.choose(rng).ok_or(Error::MissingDatabaseEntry { class: chosen.object_class })?
    } else {
        db.records.choose(rng).expect("non-empty").1
    };
    Ok(baseline_step(chosen.id, target))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Observation;
    use nalgebra::Vector3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn det(id: u64, x: f64, class: usize) -> DetectedObject {
        DetectedObject { id, position: Vector3::new(x, 0.0, 0.0), object_class: class }
    }

    fn db() -> TidyDatabase {
        TidyDatabase {
            records: vec![
                (0, Vector3::new(5.0, 0.0, 0.0)),
                (1, Vector3::new(6.0, 0.0, 0.0)),
                (0, Vector3::new(9.0, 0.0, 0.0)),
            ],
        }
    }

    #[test]
    fn nearest_picks_closer_object_and_first_record() {
        let step = baseline_nearest(&[det(1, 2.0, 1), det(2, 1.0, 0)], &Vector3::zeros(), &db()).unwrap();
        assert_eq!(step.object_id, 2);
        assert_eq!(step.target, Vector3::new(5.0, 0.0, 0.0));
        assert!(!step.unknown_flag);
        let tie = baseline_nearest(&[det(8, -1.0, 0), det(3, 1.0, 0)], &Vector3::zeros(), &db()).unwrap();
        assert_eq!(tie.object_id, 3);
    }

    #[test]
    fn nearest_reports_missing_class() {
        assert!(matches!(
            baseline_nearest(&[det(1, 1.0, 4)], &Vector3::zeros(), &db()),
            Err(Error::MissingDatabaseEntry { class: 4 })
        ));
    }

    #[test]
    fn database_from_jitter_free_data_holds_true_positions() {
        let p = Vector3::new(1.0, 2.0, 0.5);
        let ds = LabeledDataset::new(2, 0, vec![Observation::new(p, 1, vec![])], None).unwrap();
        let db = TidyDatabase::from_dataset(&ds);
        assert_eq!(db.first_for(1), Some(p));
        assert_eq!(db.first_for(0), None);
    }

    #[test]
    fn random_single_pair_and_empty_db() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let one = TidyDatabase { records: vec![(0, Vector3::new(1.0, 1.0, 1.0))] };
        let step = baseline_random(&[det(4, 0.0, 0)], &one, false, &mut rng).unwrap();
        assert_eq!((step.object_id, step.target), (4, Vector3::new(1.0, 1.0, 1.0)));
        assert!(matches!(
            baseline_random(&[det(4, 0.0, 0)], &TidyDatabase::default(), false, &mut rng),
            Err(Error::EmptyDatabase)
        ));
    }

    #[test]
    fn random_choice_is_uniform_and_seeded() {
        let dets: Vec<DetectedObject> = (0..4).map(|i| det(i, i as f64, 0)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[baseline_random(&dets, &db(), false, &mut rng).unwrap().object_id as usize] += 1;
        }
        let se = (0.25f64 * 0.75 / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - 0.25).abs() < 4.0 * se, "{counts:?}");
        }
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| baseline_random(&dets, &db(), true, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert!(run(3).iter().all(|s| s.target.x == 5.0 || s.target.x == 9.0));
    }
}
