//! Question/answer interface standing in for the person asked "where should I put this?".

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Answers a place query for one object with a bag of word indices (usually a single word).
pub trait PlaceOracle {
    fn ask(&mut self, object_id: u64, object_class: usize) -> Result<Vec<usize>>;
}

/// Oracle that is never available. Any query fails with [`Error::UnresolvedUnknown`].
#[derive(Clone, Copy, Debug, Default)]
pub struct NoOracle;

impl PlaceOracle for NoOracle {
    fn ask(&mut self, object_id: u64, _object_class: usize) -> Result<Vec<usize>> {
        Err(Error::UnresolvedUnknown { object_id, reason: "no oracle configured".into() })
    }
}

pub const ORACLE_FORMAT_VERSION: u32 = 1;

/// Fixed class → word map, e.g. loaded from a script file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedOracle {
    answers: BTreeMap<usize, usize>,
    #[serde(skip)]
    asked: Vec<(u64, usize)>,
}

#[derive(Serialize, Deserialize)]
struct ScriptFile {
    format_version: u32,
    answers: Vec<ScriptEntry>,
}

#[derive(Serialize, Deserialize)]
struct ScriptEntry {
    class: usize,
    word: usize,
}

impl ScriptedOracle {
    pub fn new(answers: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Self { answers: answers.into_iter().collect(), asked: Vec::new() }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScriptFile = serde_json::from_str(text)?;
        if file.format_version != ORACLE_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                found: file.format_version,
                expected: ORACLE_FORMAT_VERSION,
            });
        }
        Ok(Self::new(file.answers.into_iter().map(|e| (e.class, e.word))))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ScriptFile {
            format_version: ORACLE_FORMAT_VERSION,
            answers: self.answers.iter().map(|(&class, &word)| ScriptEntry { class, word }).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    /// `(object id, class)` of every query so far, in order.
    pub fn asked(&self) -> &[(u64, usize)] {
        &self.asked
    }
}

impl PlaceOracle for ScriptedOracle {
    fn ask(&mut self, object_id: u64, object_class: usize) -> Result<Vec<usize>> {
        self.asked.push((object_id, object_class));
        self.answers
            .get(&object_class)
            .map(|&w| vec![w])
            .ok_or_else(|| Error::UnresolvedUnknown {
                object_id,
                reason: format!("script has no answer for class {object_class}"),
            })
    }
}

/// Prompts on a terminal-like stream pair. Answers are place names or word indices separated
/// by whitespace; an empty line gives up on the object.
pub struct TerminalOracle<R, W> {
    input: R,
    output: W,
    word_names: Vec<String>,
    class_names: Vec<String>,
}

impl<R: BufRead, W: Write> TerminalOracle<R, W> {
    pub fn new(input: R, output: W, word_names: Vec<String>, class_names: Vec<String>) -> Self {
        Self { input, output, word_names, class_names }
    }

    fn parse_word(&self, token: &str) -> Option<usize> {
        self.word_names
            .iter()
            .position(|n| n == token)
            .or_else(|| token.parse::<usize>().ok().filter(|&i| i < self.word_names.len()))
    }
}

impl<R: BufRead, W: Write> PlaceOracle for TerminalOracle<R, W> {
    fn ask(&mut self, object_id: u64, object_class: usize) -> Result<Vec<usize>> {
        let class = self
            .class_names
            .get(object_class)
            .cloned()
            .unwrap_or_else(|| format!("class {object_class}"));
        loop {
            writeln!(
                self.output,
                "Where should I put object {object_id} ({class})? [{}]",
                self.word_names.join(", ")
            )?;
            self.output.flush()?;
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 || line.trim().is_empty() {
                return Err(Error::UnresolvedUnknown { object_id, reason: "no answer given".into() });
            }
            let words: Option<Vec<usize>> = line.split_whitespace().map(|t| self.parse_word(t)).collect();
            match words {
                Some(w) => return Ok(w),
                None => writeln!(self.output, "Unrecognized place name, try again.")?,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn scripted_oracle_answers_by_class_and_records_queries() {
        let mut o = ScriptedOracle::new([(12, 5)]);
        assert_eq!(o.ask(3, 12).unwrap(), vec![5]);
        assert!(matches!(o.ask(4, 1), Err(Error::UnresolvedUnknown { object_id: 4, .. })));
        assert_eq!(o.asked(), &[(3, 12), (4, 1)]);
    }

    #[test]
    fn scripted_oracle_file_round_trip_and_version_check() {
        let o = ScriptedOracle::new([(12, 5), (13, 0)]);
        let text = o.to_json().unwrap();
        assert_eq!(ScriptedOracle::from_json(&text).unwrap(), o);
        let bad = text.replace("\"format_version\": 1", "\"format_version\": 7");
        assert!(matches!(ScriptedOracle::from_json(&bad), Err(Error::FormatVersion { found: 7, .. })));
    }

    #[test]
    fn terminal_oracle_parses_names_and_retries() {
        let words = vec!["shelf".to_string(), "sofa".to_string()];
        let input = Cursor::new("kitchen\nsofa\n");
        let mut out = Vec::new();
        let mut o = TerminalOracle::new(input, &mut out, words, vec!["doll_penguin".into()]);
        assert_eq!(o.ask(1, 0).unwrap(), vec![1]);
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("doll_penguin"));
        assert!(text.contains("Unrecognized"));
    }

    #[test]
    fn terminal_oracle_gives_up_on_eof() {
        let mut out = Vec::new();
        let mut o = TerminalOracle::new(Cursor::new(""), &mut out, vec!["shelf".into()], vec![]);
        assert!(o.ask(2, 0).is_err());
        assert!(NoOracle.ask(2, 0).is_err());
    }
}
