use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::Failure;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Rounds to 12 significant digits.
pub fn sig12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// A command's result: a JSON body and, where it has one, a CSV table.
pub struct Output {
    pub header: Value,
    pub body: Map<String, Value>,
    pub csv: Option<String>,
}

impl Output {
    pub fn new(header: Value) -> Self {
        Output { header, body: Map::new(), csv: None }
    }

    pub fn field(mut self, key: &str, value: impl Serialize) -> Self {
        self.body.insert(key.to_string(), serde_json::to_value(value).expect("output values serialize"));
        self
    }

    pub fn csv(mut self, table: String) -> Self {
        self.csv = Some(table);
        self
    }

    pub fn render(&self, format: Format) -> Result<String, Failure> {
        match format {
            Format::Json => {
                let mut doc = Map::new();
                doc.insert("config".into(), self.header.clone());
                doc.extend(self.body.clone());
                let mut text = serde_json::to_string_pretty(&Value::Object(doc)).expect("json serializes");
                text.push('\n');
                Ok(text)
            }
            Format::Csv => {
                let table = self
                    .csv
                    .as_ref()
                    .ok_or_else(|| Failure::Usage("this command has no CSV output; use --format json".into()))?;
                let mut text = String::new();
                writeln!(text, "# config: {}", self.header).expect("write to string");
                text.push_str(table);
                Ok(text)
            }
        }
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
}

/// Writes to `out` when given, otherwise to standard output.
pub fn emit(out: Option<&PathBuf>, contents: &str) -> Result<(), Failure> {
    match out {
        Some(path) => write_file(path, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}
