//! Tables, the manifest and the summary written to the output directory.
//!
//! Floats are written in their shortest round-trip decimal form, so equal
//! values always produce equal bytes.

use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{Format, Resolved};

/// Version of the CSV and JSON table layouts.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Str(String),
    Bool(bool),
    Empty,
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Str(v.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => v.to_string(),
            Cell::Str(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Str(s) => json!(s),
            Cell::Bool(b) => json!(b),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> io::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::text))?;
        }
        w.into_inner().map_err(|e| io::Error::other(e.to_string()))
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| {
                    let obj: Map<String, Value> = self
                        .header
                        .iter()
                        .zip(row)
                        .map(|(h, c)| (h.to_string(), c.json()))
                        .collect();
                    Value::Object(obj)
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

/// Everything a subcommand produces.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub results: Value,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| c.name.as_str())
            .collect()
    }
}

fn to_pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("json values always serialize");
    s.push(b'\n');
    s
}

pub fn manifest(cfg: &Resolved) -> Value {
    let scales = cfg.scales().map(|s| {
        json!({
            "w_value": s.w_value,
            "width_scale": s.cal_w,
            "time_scale": s.cal_t,
        })
    });
    json!({
        "tool": "moran",
        "version": env!("CARGO_PKG_VERSION"),
        "schema_version": SCHEMA_VERSION,
        "command": cfg.command,
        "config": cfg,
        "scales": scales,
        "seed_rule": "replicate i of a sub-experiment uses ChaCha8 keyed by its seed on stream i",
    })
}

pub fn summary(cfg: &Resolved, outcome: &Outcome) -> Value {
    json!({
        "command": cfg.command,
        "pass": outcome.pass(),
        "failures": outcome.failures(),
        "checks": outcome.checks,
        "results": outcome.results,
    })
}

/// Writes the manifest, the summary and every table in each format.
pub fn write_all(cfg: &Resolved, outcome: &Outcome, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("manifest.json"), to_pretty(&manifest(cfg)))?;
    fs::write(dir.join("summary.json"), to_pretty(&summary(cfg, outcome)))?;
    for table in &outcome.tables {
        for format in &cfg.formats {
            match format {
                Format::Csv => fs::write(dir.join(format!("{}.csv", table.name)), table.to_csv()?)?,
                Format::Json => fs::write(
                    dir.join(format!("{}.json", table.name)),
                    to_pretty(&table.to_json()),
                )?,
            }
        }
    }
    Ok(())
}
