//! Minimal CSV emission: comma-separated, header row, '.' decimal point.
//!
//! Floats are written with Rust's shortest round-trip formatting so the
//! emitted bytes are a pure function of the values, which the determinism
//! contract on CLI outputs relies on.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// An in-memory CSV table.
#[derive(Debug, Clone)]
pub struct CsvTable {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        CsvTable { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push_row<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        let row: Vec<String> = row.into_iter().map(Into::into).collect();
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&join(&self.header));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&join(row));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

fn join(fields: &[String]) -> String {
    fields.iter().map(|f| escape(f)).collect::<Vec<_>>().join(",")
}

fn escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

/// Shortest round-trip decimal for a float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
