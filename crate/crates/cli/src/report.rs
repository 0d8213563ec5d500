use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use mfg_antimono::certify::ConstantLedger;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: String,
    pub pass: bool,
    pub margin: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl CheckRow {
    /// Passes when `lhs <= rhs`; the margin is `rhs - lhs`.
    pub fn at_most(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), pass: lhs <= rhs, margin: rhs - lhs, lhs, rhs }
    }

    /// Passes when `lhs >= rhs`; the margin is `lhs - rhs`.
    pub fn at_least(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self { name: name.into(), pass: lhs >= rhs, margin: lhs - rhs, lhs, rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v:.16e}"),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

/// A table written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self { name: name.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    pub config: BTreeMap<String, BTreeMap<String, String>>,
    /// Asserted checks; the exit code depends on these only.
    pub checks: Vec<CheckRow>,
    /// Reported but not asserted.
    pub diagnostics: Vec<CheckRow>,
    pub constants: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
    /// Pre-rendered CSV files keyed by file name.
    pub files: Vec<(String, Vec<u8>)>,
    pub error: Option<String>,
    pub wall_clock_seconds: f64,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    command: &'a str,
    seed: u64,
    config: &'a BTreeMap<String, BTreeMap<String, String>>,
    checks: &'a [CheckRow],
    diagnostics: &'a [CheckRow],
    constants: &'a BTreeMap<String, f64>,
    files: Vec<String>,
    passed: bool,
    error: Option<&'a str>,
    wall_clock_seconds: f64,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.pass)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect()
    }

    pub fn constant(&mut self, name: &str, v: f64) {
        self.constants.insert(name.to_string(), v);
    }

    /// Binding ledger checks become asserted checks; the rest are diagnostics.
    pub fn add_ledger(&mut self, ledger: &ConstantLedger<f64>, prefix: &str) {
        for c in &ledger.checks {
            let row = CheckRow { name: format!("{prefix}{}", c.name), pass: c.pass, margin: c.margin, lhs: c.lhs, rhs: c.rhs };
            if c.binding {
                self.checks.push(row);
            } else {
                self.diagnostics.push(row);
            }
        }
        for (k, v) in ledger.constants() {
            self.constants.insert(format!("{prefix}{k}"), v);
        }
    }

    fn file_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.tables.iter().map(|t| format!("{}.csv", t.name)).collect();
        names.extend(self.files.iter().map(|f| f.0.clone()));
        names
    }

    pub fn to_json(&self) -> String {
        let j = JsonReport {
            command: &self.command,
            seed: self.seed,
            config: &self.config,
            checks: &self.checks,
            diagnostics: &self.diagnostics,
            constants: &self.constants,
            files: self.file_names(),
            passed: self.passed(),
            error: self.error.as_deref(),
            wall_clock_seconds: self.wall_clock_seconds,
        };
        let mut s = serde_json::to_string_pretty(&j).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Writes `report.json` and every table and file into `dir`.
pub fn write_report(report: &RunReport, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for t in &report.tables {
        let mut buf = Vec::new();
        t.write(&mut buf)?;
        fs::write(dir.join(format!("{}.csv", t.name)), buf)?;
    }
    for (name, bytes) in &report.files {
        fs::write(dir.join(name), bytes)?;
    }
    fs::write(dir.join("report.json"), report.to_json())
}
