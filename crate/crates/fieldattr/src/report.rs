//! Report tables, summary records and their on-disk form.
//!
//! `emit` writes one CSV per table (`<name>.csv`), a `summary.json` with the
//! per-stage summary records, and a `manifest.json`. Nothing written depends
//! on the clock, so equal inputs give byte-identical files.
//!
//! Numeric cells use Rust's shortest round-trip formatting and always carry
//! a decimal point or exponent, so integers and floats stay distinct when a
//! table is read back. Text cells must not look like numbers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value as Json};

use crate::error::{AppError, Result};

#[derive(Debug, Clone)]
pub enum Value {
    Int(i64),
    Num(f64),
    Text(String),
    Missing,
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => a == b,
            (Value::Num(a), Value::Num(b)) => a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()),
            (Value::Text(a), Value::Text(b)) => a == b,
            (Value::Missing, Value::Missing) => true,
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Num(x) => write!(f, "{x:?}"),
            Value::Text(s) => f.write_str(s),
            Value::Missing => Ok(()),
        }
    }
}

impl Value {
    pub fn parse(cell: &str) -> Self {
        if cell.is_empty() {
            Value::Missing
        } else if let Ok(i) = cell.parse::<i64>() {
            Value::Int(i)
        } else if let Ok(x) = cell.parse::<f64>() {
            Value::Num(x)
        } else {
            Value::Text(cell.to_string())
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Num(x) => Some(*x),
            _ => None,
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Num(x)
    }
}

impl From<usize> for Value {
    fn from(x: usize) -> Self {
        Value::Int(x as i64)
    }
}

impl From<bool> for Value {
    fn from(x: bool) -> Self {
        Value::Text(if x { "true" } else { "false" }.into())
    }
}

impl From<&str> for Value {
    fn from(x: &str) -> Self {
        Value::Text(x.into())
    }
}

impl From<String> for Value {
    fn from(x: String) -> Self {
        Value::Text(x)
    }
}

impl<T: Into<Value>> From<Option<T>> for Value {
    fn from(x: Option<T>) -> Self {
        x.map_or(Value::Missing, Into::into)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        assert_eq!(row.len(), self.columns.len(), "row width differs from header of {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Value>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| &r[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string())).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }

    pub fn parse(name: impl Into<String>, text: &str) -> std::result::Result<Self, csv::Error> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let columns = r.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(Value::parse).collect());
        }
        Ok(Self { name: name.into(), columns, rows })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", content = "message", rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed(String),
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageRecord {
    pub stage: String,
    #[serde(flatten)]
    pub status: StageStatus,
}

/// Everything needed to rerun a report: the resolved configuration, its
/// hash, the seeds and the digests of every input file.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub config: Json,
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProtocolReport {
    pub tables: Vec<Table>,
    /// Summary records keyed by stage name.
    pub summary: Map<String, Json>,
    pub manifest: Manifest,
}

impl ProtocolReport {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn failed(&self) -> bool {
        self.manifest.stages.iter().any(|s| matches!(s.status, StageStatus::Failed(_)))
    }

    /// The file names and contents `emit` writes.
    pub fn files(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = self.tables.iter().map(|t| (format!("{}.csv", t.name), t.to_csv())).collect();
        if !self.summary.is_empty() {
            out.push(("summary.json".into(), pretty(&Json::Object(self.summary.clone()))));
        }
        out.push(("manifest.json".into(), pretty(&serde_json::to_value(&self.manifest).expect("manifest is plain data"))));
        out
    }
}

fn pretty(v: &Json) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

/// Writes the report into `dir`, creating it if needed.
pub fn emit(report: &ProtocolReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| AppError::Output { path: dir.into(), source })?;
    let mut written = Vec::new();
    for (name, body) in report.files() {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|source| AppError::Output { path: path.clone(), source })?;
        written.push(path);
    }
    Ok(written)
}
