//! Benchmark point accounting.

use serde::{Deserialize, Serialize};

use super::env::SimObject;
use super::scenario::{Scenario, Stage};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreLine {
    pub rule: String,
    pub points_each: u32,
    pub count: u32,
    /// Objects this rule could apply to.
    pub max_count: u32,
}

impl ScoreLine {
    pub fn points(&self) -> u32 {
        self.points_each * self.count
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreSheet {
    pub lines: Vec<ScoreLine>,
    pub total: u32,
    pub max_possible: u32,
}

impl ScoreSheet {
    fn from_lines(lines: Vec<ScoreLine>) -> Self {
        let total = lines.iter().map(ScoreLine::points).sum();
        let max_possible = lines.iter().map(|l| l.points_each * l.max_count).sum();
        Self { lines, total, max_possible }
    }
}

/// Scores the final object positions.
///
/// Stage 1: 3 points per object in any place, 2 more if it is the object's own place.
/// Stage 2: 5 points per object in its own place, 3 more per such object of unknown place.
pub fn score(scenario: &Scenario, objects: &[SimObject]) -> ScoreSheet {
    let n = objects.len() as u32;
    let located: Vec<(Option<usize>, usize, bool)> = objects
        .iter()
        .map(|o| {
            let class = &scenario.classes[o.object_class];
            (scenario.place_containing(&o.position), scenario.place_of(o.object_class), class.unknown)
        })
        .collect();
    let correct = located.iter().filter(|(at, own, _)| *at == Some(*own)).count() as u32;
    match scenario.stage {
        Stage::Stage1 => {
            let stored = located.iter().filter(|(at, _, _)| at.is_some()).count() as u32;
            ScoreSheet::from_lines(vec![
                ScoreLine { rule: "object in a storage place".into(), points_each: 3, count: stored, max_count: n },
                ScoreLine { rule: "object in its correct place".into(), points_each: 2, count: correct, max_count: n },
            ])
        }
        Stage::Stage2_1 | Stage::Stage2_2 => {
            let unknown = located.iter().filter(|(_, _, u)| *u).count() as u32;
            let unknown_correct = located.iter().filter(|(at, own, u)| *u && *at == Some(*own)).count() as u32;
            ScoreSheet::from_lines(vec![
                ScoreLine { rule: "object in its correct place".into(), points_each: 5, count: correct, max_count: n },
                ScoreLine {
                    rule: "unknown undeformable object in its correct place".into(),
                    points_each: 3,
                    count: unknown_correct,
                    max_count: unknown,
                },
            ])
        }
    }
}
