//! CSV tables and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// A table cell: numbers render with 17 significant digits so that reading
/// them back reproduces the same doubles.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Bool(bool),
    Text(String),
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_f64(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()
    }

    /// Numeric column `name` of a written table.
    pub fn read_column(path: &Path, name: &str) -> std::io::Result<Vec<f64>> {
        let bad = |m: String| std::io::Error::new(std::io::ErrorKind::InvalidData, m);
        let mut r = csv::Reader::from_path(path)?;
        let idx = r
            .headers()?
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("no column {name}")))?;
        let mut out = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let s = rec.get(idx).unwrap_or("");
            out.push(s.parse().map_err(|_| bad(format!("bad number {s:?}")))?);
        }
        Ok(out)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<T: Serialize, S: Serialize> {
    pub command: String,
    pub scenario: String,
    pub config_path: Option<PathBuf>,
    pub config_hash: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub version: String,
    pub tolerances: T,
    pub outputs: Vec<String>,
    pub results_summary: S,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
    fs::write(path, text + "\n")
}
