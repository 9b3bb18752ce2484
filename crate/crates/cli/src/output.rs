use std::path::Path;

use serde::Serialize;

use crate::cache::atomic_write;
use crate::error::CliError;

/// CSV table whose columns are the first-seen union of the row keys.
#[derive(Default)]
pub struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<(String, String)>>,
}

impl Table {
    pub fn push(&mut self, row: Vec<(String, String)>) {
        for (k, _) in &row {
            if !self.columns.contains(k) {
                self.columns.push(k.clone());
            }
        }
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            let record: Vec<&str> = self
                .columns
                .iter()
                .map(|c| row.iter().find(|(k, _)| k == c).map_or("", |(_, v)| v.as_str()))
                .collect();
            w.write_record(record)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
        atomic_write(path, &bytes)
    }
}

pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn cell(k: impl Into<String>, v: f64) -> (String, String) {
    (k.into(), num(v))
}

pub fn flag(k: impl Into<String>, v: bool) -> (String, String) {
    (k.into(), v.to_string())
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    for item in items {
        serde_json::to_writer(&mut bytes, item)?;
        bytes.push(b'\n');
    }
    atomic_write(path, &bytes)
}

pub fn write_json<T: Serialize>(path: &Path, item: &T) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(item)?;
    bytes.push(b'\n');
    atomic_write(path, &bytes)
}
