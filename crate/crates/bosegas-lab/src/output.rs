//! Run outputs: `results.csv` plus `manifest.json`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use bosegas::sampler::RNG_ALGORITHM;
use bosegas::{Error, Result};
use serde::Serialize;

/// One CSV cell. Floats are written with 17 significant digits; `Na` is the
/// sentinel for an undefined entry and is written as `NA`.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Na,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Float(x) if x.is_finite() => format!("{x:.16e}"),
            Cell::Float(_) | Cell::Na => "NA".into(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Int(i64::from(x))
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.into())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&self.columns).map_err(err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(err)?;
        }
        w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub rng_algorithm: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub wall_time_seconds: f64,
    /// Resolutions of formula ambiguities adopted by this run.
    pub choices: serde_json::Value,
    pub details: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value, seeds: Vec<u64>) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            rng_algorithm: RNG_ALGORITHM.into(),
            config,
            seeds,
            wall_time_seconds: 0.0,
            choices: serde_json::json!({}),
            details: serde_json::json!({}),
        }
    }
}

/// Result of one subcommand before it is written out.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub table: Table,
    pub choices: serde_json::Value,
    pub details: serde_json::Value,
    /// Extra files `(name, bytes)` written next to `results.csv`.
    pub extra_files: Vec<(String, Vec<u8>)>,
}

impl RunOutput {
    pub fn new(table: Table) -> Self {
        Self { table, choices: serde_json::json!({}), details: serde_json::json!({}), extra_files: Vec::new() }
    }
}

/// Write `results.csv`, `manifest.json` and any extra files into `dir`.
pub fn write_run(dir: &Path, out: &RunOutput, mut manifest: Manifest, elapsed: Duration) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("results.csv");
    std::fs::write(&csv_path, out.table.to_csv()?)?;
    for (name, bytes) in &out.extra_files {
        std::fs::write(dir.join(name), bytes)?;
    }
    manifest.wall_time_seconds = elapsed.as_secs_f64();
    manifest.choices = out.choices.clone();
    manifest.details = out.details.clone();
    std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(csv_path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        let x = 0.1 + 0.2;
        let s = Cell::Float(x).render();
        assert_eq!(s.parse::<f64>().unwrap(), x);
        assert_eq!(Cell::Float(f64::NAN).render(), "NA");
    }

    #[test]
    fn csv_quotes_text() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![Cell::from("x,y"), Cell::from(3usize)]);
        let s = String::from_utf8(t.to_csv().unwrap()).unwrap();
        assert_eq!(s, "a,b\n\"x,y\",3\n");
    }
}
