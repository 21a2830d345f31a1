//! Tidied layouts, object pools and scatter regions.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Hyperparams, Position};

/// Default acceptance radius of a place, in meters.
pub const DEFAULT_PLACE_RADIUS: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Stage1,
    Stage2_1,
    Stage2_2,
}

impl Stage {
    /// Prior settings used for this stage; `mu0` is normally replaced by the data mean.
    pub fn hyperparams(self) -> Hyperparams {
        match self {
            Stage::Stage1 => Hyperparams::stage1(),
            Stage::Stage2_1 => Hyperparams::stage2_1(),
            Stage::Stage2_2 => Hyperparams::stage2_2(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Place {
    /// Place name, which doubles as the place word.
    pub name: String,
    pub center: Position,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_radius() -> f64 {
    DEFAULT_PLACE_RADIUS
}

fn default_true() -> bool {
    true
}

/// One object class and where it belongs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    /// Name of the class's tidy place.
    pub place: String,
    /// Never seen in training; its place is only known to the person answering queries.
    #[serde(default)]
    pub unknown: bool,
    /// Whether the class can be scattered in an episode.
    #[serde(default = "default_true")]
    pub in_pool: bool,
}

/// Axis-aligned box objects are scattered in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub min: Position,
    pub max: Position,
}

impl Region {
    pub fn contains(&self, x: &Position) -> bool {
        (0..3).all(|i| x[i] >= self.min[i] && x[i] <= self.max[i])
    }

    fn distance_to(&self, x: &Position) -> f64 {
        let closest = Vector3::from_fn(|i, _| x[i].clamp(self.min[i], self.max[i]));
        (x - closest).norm()
    }
}

/// A tidy-up environment. Class indices follow the order of `classes`; word indices follow the
/// order of `places`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub stage: Stage,
    pub training_count: usize,
    /// Fraction of training records that carry their place word.
    #[serde(default = "default_word_fraction")]
    pub word_fraction: f64,
    pub scatter_count: usize,
    pub scatter_region: Region,
    /// Where the robot starts an episode; defaults to the floor-level center of the scatter
    /// region.
    #[serde(default)]
    pub robot_start: Option<Position>,
    pub places: Vec<Place>,
    pub classes: Vec<ClassSpec>,
}

fn default_word_fraction() -> f64 {
    0.05
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Built-in scenario by name: `stage1`, `stage2_1` or `stage2_2`.
    pub fn builtin(name: &str) -> Option<Self> {
        let text = match name {
            "stage1" => include_str!("../../scenarios/stage1.toml"),
            "stage2_1" => include_str!("../../scenarios/stage2_1.toml"),
            "stage2_2" => include_str!("../../scenarios/stage2_2.toml"),
            _ => return None,
        };
        Some(Self::from_toml(text).expect("built-in scenario is valid"))
    }

    pub fn builtin_names() -> [&'static str; 3] {
        ["stage1", "stage2_1", "stage2_2"]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(format!("scenario {}: {m}", self.name)));
        if self.places.is_empty() || self.classes.is_empty() {
            return bad("needs at least one place and one class".into());
        }
        for (i, p) in self.places.iter().enumerate() {
            if !(p.radius > 0.0) {
                return bad(format!("place {} has non-positive radius", p.name));
            }
            if self.places[..i].iter().any(|q| q.name == p.name) {
                return bad(format!("duplicate place {}", p.name));
            }
            if self.scatter_region.distance_to(&p.center) <= p.radius {
                return bad(format!("scatter region overlaps place {}", p.name));
            }
        }
        for (i, c) in self.classes.iter().enumerate() {
            if self.place_index(&c.place).is_none() {
                return bad(format!("class {} refers to unknown place {}", c.name, c.place));
            }
            if self.classes[..i].iter().any(|d| d.name == c.name) {
                return bad(format!("duplicate class {}", c.name));
            }
        }
        if self.known_classes().is_empty() {
            return bad("no class is known from training".into());
        }
        if (0..3).any(|i| self.scatter_region.min[i] > self.scatter_region.max[i]) {
            return bad("scatter region min exceeds max".into());
        }
        if !(0.0..=1.0).contains(&self.word_fraction) {
            return bad(format!("word_fraction {} outside [0, 1]", self.word_fraction));
        }
        if self.scatter_count > self.pool().len() {
            return bad(format!("scatter_count {} exceeds pool size {}", self.scatter_count, self.pool().len()));
        }
        Ok(())
    }

    pub fn robot_start(&self) -> Position {
        self.robot_start.unwrap_or_else(|| {
            let r = &self.scatter_region;
            let c = (r.min + r.max) / 2.0;
            Vector3::new(c.x, c.y, r.min.z)
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn num_words(&self) -> usize {
        self.places.len()
    }

    pub fn place_index(&self, name: &str) -> Option<usize> {
        self.places.iter().position(|p| p.name == name)
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    /// Tidy place of a class.
    pub fn place_of(&self, class: usize) -> usize {
        self.place_index(&self.classes[class].place).expect("validated")
    }

    /// Classes that appear in training data.
    pub fn known_classes(&self) -> Vec<usize> {
        (0..self.classes.len()).filter(|&c| !self.classes[c].unknown).collect()
    }

    /// Classes that may be scattered.
    pub fn pool(&self) -> Vec<usize> {
        (0..self.classes.len()).filter(|&c| self.classes[c].in_pool).collect()
    }

    pub fn word_names(&self) -> Vec<String> {
        self.places.iter().map(|p| p.name.clone()).collect()
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    /// Index of the place whose acceptance sphere contains `x`, if any.
    pub fn place_containing(&self, x: &Position) -> Option<usize> {
        self.places.iter().position(|p| (x - p.center).norm() <= p.radius)
    }

    /// Class → place-word answers of a truthful person.
    pub fn oracle_answers(&self) -> Vec<(usize, usize)> {
        (0..self.classes.len()).map(|c| (c, self.place_of(c))).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_parse_and_match_expected_vocabularies() {
        let s1 = Scenario::builtin("stage1").unwrap();
        assert_eq!((s1.num_classes(), s1.num_words(), s1.pool().len()), (12, 4, 12));
        assert_eq!(s1.training_count, 227);
        let s21 = Scenario::builtin("stage2_1").unwrap();
        assert_eq!((s21.num_classes(), s21.num_words(), s21.pool().len()), (15, 6, 12));
        let s22 = Scenario::builtin("stage2_2").unwrap();
        assert_eq!(s22.word_names(), ["shelf", "work_desk", "nakamura_desk", "white_table", "low_table", "sofa"]);
        assert_eq!(s22.training_count, 225);
        let unknown_in_pool = s22.pool().into_iter().filter(|&c| s22.classes[c].unknown).count();
        assert_eq!(unknown_in_pool, 3);
        assert_eq!(s22.known_classes().len(), 12);
        assert!(Scenario::builtin("stage3").is_none());
    }

    #[test]
    fn validation_rejects_overlapping_scatter_region() {
        let mut s = Scenario::builtin("stage1").unwrap();
        s.scatter_region.max = Vector3::new(3.5, 0.7, 0.5);
        assert!(s.validate().is_err());
    }

    #[test]
    fn validation_rejects_dangling_place_and_bad_radius() {
        let mut s = Scenario::builtin("stage1").unwrap();
        s.classes[0].place = "attic".into();
        assert!(s.validate().is_err());
        let mut s = Scenario::builtin("stage1").unwrap();
        s.places[0].radius = 0.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn place_containing_uses_radius() {
        let s = Scenario::builtin("stage1").unwrap();
        let c = s.places[2].center;
        assert_eq!(s.place_containing(&c), Some(2));
        assert_eq!(s.place_containing(&(c + Vector3::new(0.0, 0.0, 0.29))), Some(2));
        assert_eq!(s.place_containing(&(c + Vector3::new(0.0, 0.0, 0.31))), None);
    }
}
