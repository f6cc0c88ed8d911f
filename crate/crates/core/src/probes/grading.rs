use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{Oracle, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradingConfig {
    /// Placed before each item, separated by a blank line.
    pub instruction: String,
    pub min_grade: u32,
    pub max_grade: u32,
    pub max_tokens: u32,
}

impl Default for GradingConfig {
    fn default() -> Self {
        Self {
            instruction: "Assign a grade between 1 and 100 to the following essay. Reply with the grade only.".into(),
            min_grade: 1,
            max_grade: 100,
            max_tokens: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub counts: BTreeMap<u32, usize>,
    pub parsed: usize,
    /// Indices of items whose response held no grade in range.
    pub unparsed: Vec<usize>,
    /// Fraction of parsed grades divisible by 5.
    pub multiple_of_5_mass: f64,
    /// Most frequent grade; the lowest wins ties.
    pub mode: Option<u32>,
    pub provenance: Provenance,
}

/// Grades every item once and histograms the first in-range integer of each reply.
pub fn run_grading(items: &[String], oracle: &Oracle, config: &GradingConfig) -> Result<Histogram> {
    if items.is_empty() {
        return Err(Error::InvalidProbe("no items to grade".into()));
    }
    if config.max_tokens < 3 {
        return Err(Error::InvalidProbe("grading needs max_tokens >= 3".into()));
    }
    if config.min_grade > config.max_grade {
        return Err(Error::InvalidProbe("min_grade above max_grade".into()));
    }
    let responses: Vec<_> = items
        .par_iter()
        .map(|item| oracle.complete_text(&format!("{}\n\n{item}", config.instruction), config.max_tokens))
        .collect::<Result<_>>()?;

    let timestamp = responses.iter().map(|r| r.timestamp).max().unwrap_or(0);
    let grades = responses
        .iter()
        .map(|r| parse_grade(&r.text, config.min_grade, config.max_grade));
    Ok(histogram(grades, oracle.provenance(timestamp)))
}

pub(crate) fn histogram(grades: impl Iterator<Item = Option<u32>>, provenance: Provenance) -> Histogram {
    let mut counts = BTreeMap::new();
    let mut unparsed = Vec::new();
    for (i, grade) in grades.enumerate() {
        match grade {
            Some(g) => *counts.entry(g).or_insert(0) += 1,
            None => unparsed.push(i),
        }
    }
    let parsed: usize = counts.values().sum();
    let fives: usize = counts.iter().filter(|(g, _)| *g % 5 == 0).map(|(_, c)| c).sum();
    let mode = counts
        .iter()
        .fold(None, |best: Option<(u32, usize)>, (&g, &c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((g, c)),
        })
        .map(|(g, _)| g);
    Histogram {
        multiple_of_5_mass: if parsed == 0 { 0.0 } else { fives as f64 / parsed as f64 },
        counts,
        parsed,
        unparsed,
        mode,
        provenance,
    }
}

/// First run of ASCII digits whose value lies in `[min, max]`.
pub fn parse_grade(text: &str, min: u32, max: u32) -> Option<u32> {
    text.split(|c: char| !c.is_ascii_digit())
        .filter(|run| !run.is_empty())
        .filter_map(|run| run.parse::<u32>().ok())
        .find(|g| (min..=max).contains(g))
}
