//! Deterministic CSV/JSON writers shared by every experiment.
//!
//! CSV files start with one `# columns: name = meaning; ...` comment line,
//! followed by a header row of names and comma-separated data rows. Floats use
//! the shortest representation that round-trips.

use crate::error::{io, Result};
use serde::Serialize;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Num(v)
    }
}

impl From<usize> for Field {
    fn from(v: usize) -> Self {
        Field::Int(v as u64)
    }
}

impl From<bool> for Field {
    fn from(v: bool) -> Self {
        Field::Bool(v)
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.to_owned())
    }
}

impl From<String> for Field {
    fn from(v: String) -> Self {
        Field::Text(v)
    }
}

/// Shortest round-trip decimal; scientific notation outside `[1e-4, 1e15)`.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else if v == 0.0 || (1e-4..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Num(v) => format_f64(*v),
            Field::Int(v) => v.to_string(),
            Field::Text(s) => s.clone(),
            Field::Bool(b) => b.to_string(),
        }
    }
}

/// A CSV table with documented columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    /// `(name, meaning)` per column.
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<Field>>,
}

impl CsvTable {
    pub fn new<S: Into<String>, M: Into<String>>(columns: impl IntoIterator<Item = (S, M)>) -> Self {
        Self {
            columns: columns.into_iter().map(|(n, m)| (n.into(), m.into())).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let doc: Vec<String> = self.columns.iter().map(|(n, m)| format!("{n} = {m}")).collect();
        let mut out = format!("# columns: {}\n", doc.join("; "));
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(self.columns.iter().map(|(n, _)| n.as_str())).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(Field::render)).expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields"));
        out
    }
}

pub fn write_csv(path: &Path, table: &CsvTable) -> Result<()> {
    std::fs::write(path, table.render()).map_err(io(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(io(path))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io(path))
}
