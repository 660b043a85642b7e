//! Comparison of a run report against a stored reference.
//!
//! A golden file is a report in the JSON layout written by `--out` (or any
//! subset of it). Every scalar and every numeric table cell in the golden is
//! checked; text cells act as keys and must match exactly. An optional
//! `tolerances` object maps a scalar name or a table name to its own relative
//! tolerance.

use std::collections::BTreeMap;
use std::path::Path;

use mmcool::{Error, Result};
use serde::Deserialize;

use crate::report::{Cell, RunReport, Table};

#[derive(Debug, Clone, Deserialize)]
pub struct Golden {
    pub subcommand: String,
    #[serde(default)]
    pub tables: BTreeMap<String, Table>,
    #[serde(default)]
    pub scalars: BTreeMap<String, f64>,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
}

impl Golden {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative tolerance for quantities without their own entry.
    pub relative: f64,
    /// Expected values smaller than this in magnitude are compared absolutely
    /// against it.
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub quantity: String,
    pub expected: f64,
    pub actual: f64,
    pub error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

fn relative_error(expected: f64, actual: f64, floor: f64) -> f64 {
    if expected == actual {
        return 0.0;
    }
    (actual - expected).abs() / expected.abs().max(floor)
}

fn column_index(table: &Table, name: &str, label: &str) -> Result<usize> {
    table
        .columns
        .iter()
        .position(|c| c == name)
        .ok_or_else(|| Error::Schema(format!("table {label} has no column {name}")))
}

/// Per-quantity relative errors of `report` against `golden`.
pub fn compare_against_golden(report: &RunReport, golden: &Golden, tol: Tolerances) -> Result<Vec<Check>> {
    if report.subcommand != golden.subcommand {
        return Err(Error::Schema(format!(
            "report is from `{}`, golden from `{}`",
            report.subcommand, golden.subcommand
        )));
    }
    let tolerance = |key: &str| golden.tolerances.get(key).copied().unwrap_or(tol.relative);
    let mut checks = Vec::new();
    for (name, &expected) in &golden.scalars {
        let actual = *report.scalars.get(name).ok_or_else(|| Error::Schema(format!("report has no scalar {name}")))?;
        checks.push(Check {
            quantity: name.clone(),
            expected,
            actual,
            error: relative_error(expected, actual, tol.floor),
            tolerance: tolerance(name),
        });
    }
    for (name, want) in &golden.tables {
        let have = report.tables.get(name).ok_or_else(|| Error::Schema(format!("report has no table {name}")))?;
        if have.rows.len() != want.rows.len() {
            return Err(Error::Schema(format!(
                "table {name} has {} rows, golden has {}",
                have.rows.len(),
                want.rows.len()
            )));
        }
        let index: Vec<usize> = want.columns.iter().map(|c| column_index(have, c, name)).collect::<Result<_>>()?;
        for (r, (want_row, have_row)) in want.rows.iter().zip(&have.rows).enumerate() {
            if want_row.len() != want.columns.len() {
                return Err(Error::Schema(format!("golden table {name} row {r} has the wrong width")));
            }
            for (c, cell) in want_row.iter().enumerate() {
                let quantity = format!("{name}[{r}].{}", want.columns[c]);
                match (cell, &have_row[index[c]]) {
                    (Cell::Num(e), Cell::Num(a)) => checks.push(Check {
                        error: relative_error(*e, *a, tol.floor),
                        expected: *e,
                        actual: *a,
                        tolerance: tolerance(name),
                        quantity,
                    }),
                    (Cell::Text(e), Cell::Text(a)) if e == a => {}
                    (e, a) => {
                        return Err(Error::Schema(format!("{quantity}: expected {}, found {}", e.render(), a.render())))
                    }
                }
            }
        }
    }
    Ok(checks)
}

pub fn checks_table(checks: &[Check]) -> Table {
    let mut t = Table::new(["quantity", "expected", "actual", "relative_error", "tolerance", "status"]);
    for c in checks {
        t.push(vec![
            c.quantity.clone().into(),
            c.expected.into(),
            c.actual.into(),
            c.error.into(),
            c.tolerance.into(),
            if c.passed() { "pass" } else { "FAIL" }.into(),
        ]);
    }
    t
}
