//! Per-class instance counts and the statistics derived from them.
//!
//! The negative count of a class includes every other foreground instance
//! plus a dataset-level background count, `n_bg = round(r * sum(n_c))`,
//! where `r` is the background-to-foreground ratio observed in the
//! classification head.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub id: u32,
    pub name: String,
    pub instance_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    #[serde(rename = "categories")]
    pub entries: Vec<ClassEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountsFormat {
    Json,
    Csv,
}

impl CountsFormat {
    /// Guesses the format from a file extension, defaulting to JSON.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => CountsFormat::Csv,
            _ => CountsFormat::Json,
        }
    }
}

impl ClassCounts {
    pub fn new(entries: Vec<ClassEntry>, background_ratio: Option<f64>) -> Result<Self> {
        let counts = ClassCounts {
            entries,
            background_ratio,
        };
        counts.validate()?;
        Ok(counts)
    }

    /// Builds counts with ids `0..n` and generated names.
    pub fn from_counts(counts: &[u64]) -> Self {
        ClassCounts {
            entries: counts
                .iter()
                .enumerate()
                .map(|(i, &n)| ClassEntry {
                    id: i as u32,
                    name: format!("class_{i}"),
                    instance_count: n,
                })
                .collect(),
            background_ratio: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if !seen.insert(e.id) {
                return Err(Error::validation("class_id", format!("duplicate id {}", e.id)));
            }
        }
        if let Some(r) = self.background_ratio {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::validation(
                    "background_ratio",
                    format!("must be a nonnegative finite number, got {r}"),
                ));
            }
        }
        Ok(())
    }

    pub fn foreground_total(&self) -> u64 {
        self.entries.iter().map(|e| e.instance_count).sum()
    }

    pub fn get(&self, class_id: u32) -> Option<&ClassEntry> {
        self.entries.iter().find(|e| e.id == class_id)
    }
}

pub fn load_counts(path: impl AsRef<Path>, format: CountsFormat) -> Result<ClassCounts> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    match format {
        CountsFormat::Json => parse_counts_json(&text),
        CountsFormat::Csv => parse_counts_csv(&text),
    }
}

pub fn parse_counts_json(text: &str) -> Result<ClassCounts> {
    let counts: ClassCounts = serde_json::from_str(text).map_err(|e| Error::Input {
        location: format!("line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    counts.validate()?;
    Ok(counts)
}

pub fn parse_counts_csv(text: &str) -> Result<ClassCounts> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(csv_error)?.clone();
    let expected = ["id", "name", "instance_count"];
    if headers.len() != expected.len() || headers.iter().zip(expected).any(|(h, e)| h.trim() != e) {
        return Err(Error::Input {
            location: "line 1".into(),
            message: format!("expected header `id,name,instance_count`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut entries = Vec::new();
    for row in reader.deserialize::<ClassEntry>() {
        entries.push(row.map_err(csv_error)?);
    }
    ClassCounts::new(entries, None)
}

fn csv_error(e: csv::Error) -> Error {
    let location = match e.position() {
        Some(pos) => format!("line {}", pos.line()),
        None => "unknown position".into(),
    };
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => match err.field() {
            Some(field) => format!("field {}: {}", field + 1, err.kind()),
            None => err.kind().to_string(),
        },
        _ => e.to_string(),
    };
    Error::Input { location, message }
}

/// Dataset-level background count `round(ratio * sum(n_c))`, rounding half away from zero.
pub fn background_count(counts: &ClassCounts, ratio: f64) -> Result<u64> {
    if !(ratio.is_finite() && ratio >= 0.0) {
        return Err(Error::validation(
            "background_ratio",
            format!("must be a nonnegative finite number, got {ratio}"),
        ));
    }
    let total = counts.foreground_total();
    if total == 0 {
        return Err(Error::validation("counts", "total foreground count is zero"));
    }
    // f64::round rounds half away from zero.
    Ok((ratio * total as f64).round() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    n_plus: u64,
    n_minus: u64,
    alpha: f64,
}

impl ClassStats {
    pub fn new(n_plus: u64, n_minus: u64) -> Result<Self> {
        if n_plus == 0 {
            return Err(Error::validation("n_plus", "class has no positive samples; margins are undefined"));
        }
        if n_minus == 0 {
            return Err(Error::validation("n_minus", "class has no negative samples"));
        }
        Ok(ClassStats {
            n_plus,
            n_minus,
            alpha: n_minus as f64 / n_plus as f64,
        })
    }

    pub fn n_plus(&self) -> u64 {
        self.n_plus
    }

    pub fn n_minus(&self) -> u64 {
        self.n_minus
    }

    /// Negative-to-positive ratio `n_minus / n_plus`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

pub fn class_stats(counts: &ClassCounts, class_id: u32, background: u64) -> Result<ClassStats> {
    let entry = counts.get(class_id).ok_or(Error::UnknownClass(class_id))?;
    let n_c = entry.instance_count;
    if n_c == 0 {
        return Err(Error::validation(
            "instance_count",
            format!("class {class_id} has zero instances; margins are undefined"),
        ));
    }
    let total = counts.foreground_total() + background;
    ClassStats::new(n_c, total - n_c)
}

/// Stats for every class, in entry order.
pub fn all_stats(counts: &ClassCounts, background: u64) -> Result<Vec<(u32, ClassStats)>> {
    counts
        .entries
        .iter()
        .map(|e| class_stats(counts, e.id, background).map(|s| (e.id, s)))
        .collect()
}
