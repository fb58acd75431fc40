use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Rating;
use crate::error::{Error, Result};
use crate::types::{ItemId, UserId};

/// On-disk layout of a raw rating file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RatingFormat {
    /// `UserID::MovieID::Rating::Timestamp`
    #[serde(rename = "movielens1m", alias = "movielens", alias = "ml1m", alias = "ml-1m")]
    MovieLens1M,
    /// `user item rating [ignored...]`, whitespace or comma separated.
    #[serde(rename = "tabular", alias = "epinions", alias = "epinions_tabular")]
    EpinionsTabular,
}

/// Inclusive bounds for valid rating values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f32,
    pub max: f32,
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale { min: 1.0, max: 5.0 }
    }
}

impl RatingScale {
    pub fn contains(&self, value: f32) -> bool {
        value.is_finite() && value >= self.min && value <= self.max
    }
}

/// Parsed records plus an account of every line that did not produce one.
#[derive(Debug, Clone, Default)]
pub struct ParseReport {
    pub ratings: Vec<Rating>,
    /// Non-blank, non-comment lines that failed to parse.
    pub skipped: usize,
    /// Line number and reason for the first few skipped lines.
    pub skipped_examples: Vec<(usize, String)>,
    /// Later duplicates of an earlier `(user, item)` pair; the later value wins.
    pub duplicates: usize,
}

impl ParseReport {
    /// Number of valid records read, before duplicate resolution.
    pub fn valid_lines(&self) -> usize {
        self.ratings.len() + self.duplicates
    }
}

const MAX_SKIP_EXAMPLES: usize = 20;

pub fn parse_ratings(path: &Path, format: RatingFormat, scale: RatingScale) -> Result<ParseReport> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reader(BufReader::new(file), format, scale).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn parse_reader<R: BufRead>(reader: R, format: RatingFormat, scale: RatingScale) -> Result<ParseReport> {
    let mut report = ParseReport::default();
    let mut position: std::collections::HashMap<(UserId, ItemId), usize> = Default::default();

    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            continue;
        }
        let parsed = match format {
            RatingFormat::MovieLens1M => parse_movielens(trimmed),
            RatingFormat::EpinionsTabular => parse_tabular(trimmed),
        }
        .and_then(|r| {
            if scale.contains(r.value) {
                Ok(r)
            } else {
                Err(format!(
                    "rating {} outside scale [{}, {}]",
                    r.value, scale.min, scale.max
                ))
            }
        });
        match parsed {
            Ok(rating) => match position.entry((rating.user, rating.item)) {
                std::collections::hash_map::Entry::Occupied(slot) => {
                    report.ratings[*slot.get()] = rating;
                    report.duplicates += 1;
                }
                std::collections::hash_map::Entry::Vacant(slot) => {
                    slot.insert(report.ratings.len());
                    report.ratings.push(rating);
                }
            },
            Err(reason) => {
                report.skipped += 1;
                if report.skipped_examples.len() < MAX_SKIP_EXAMPLES {
                    report.skipped_examples.push((line_no, reason));
                }
            }
        }
    }
    Ok(report)
}

fn parse_movielens(line: &str) -> Result<Rating, String> {
    let fields: Vec<&str> = line.split("::").collect();
    if fields.len() != 4 {
        return Err(format!("expected 4 `::`-separated fields, found {}", fields.len()));
    }
    Ok(Rating {
        user: UserId(int_field(fields[0], "user")?),
        item: ItemId(int_field(fields[1], "item")?),
        value: value_field(fields[2])?,
        timestamp: Some(
            fields[3]
                .trim()
                .parse::<i64>()
                .map_err(|_| format!("bad timestamp `{}`", fields[3]))?,
        ),
    })
}

fn parse_tabular(line: &str) -> Result<Rating, String> {
    let fields: Vec<&str> = line
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|f| !f.is_empty())
        .collect();
    if fields.len() < 3 {
        return Err(format!("expected at least 3 fields, found {}", fields.len()));
    }
    Ok(Rating {
        user: UserId(int_field(fields[0], "user")?),
        item: ItemId(int_field(fields[1], "item")?),
        value: value_field(fields[2])?,
        timestamp: None,
    })
}

fn int_field(field: &str, what: &str) -> Result<u64, String> {
    field
        .trim()
        .parse::<u64>()
        .map_err(|_| format!("bad {what} id `{field}`"))
}

fn value_field(field: &str) -> Result<f32, String> {
    field
        .trim()
        .parse::<f32>()
        .map_err(|_| format!("bad rating value `{field}`"))
}
