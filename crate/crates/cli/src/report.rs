//! Run reports and their CSV/JSON serializations.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl Cell {
    /// 17 significant digits, enough to round-trip an f64.
    pub fn render(&self) -> String {
        match self {
            Cell::Num(x) => format!("{x:.16e}"),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_owned())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub subcommand: String,
    /// The parsed input configuration.
    pub config: serde_json::Value,
    pub tables: BTreeMap<String, Table>,
    pub scalars: BTreeMap<String, f64>,
    #[serde(default)]
    pub flags: Vec<Flag>,
    #[serde(default)]
    pub wall_time_s: f64,
}

impl RunReport {
    pub fn new(subcommand: &str, config: &toml::Table) -> Self {
        Self {
            subcommand: subcommand.to_owned(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            tables: BTreeMap::new(),
            scalars: BTreeMap::new(),
            flags: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn table(&mut self, name: &str, table: Table) {
        self.tables.insert(name.to_owned(), table);
    }

    pub fn scalar(&mut self, name: impl Into<String>, value: f64) {
        self.scalars.insert(name.into(), value);
    }

    pub fn csv_name(&self, table: &str) -> String {
        format!("{}_{table}.csv", self.subcommand)
    }

    pub fn json_name(&self) -> String {
        format!("{}.json", self.subcommand)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    /// Writes the JSON report and, for CSV output, one file per table.
    /// Returns the files written.
    pub fn write_to(&self, dir: &Path, csv_tables: bool) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        if csv_tables {
            for (name, table) in &self.tables {
                let path = dir.join(self.csv_name(name));
                table.write_csv(std::fs::File::create(&path)?).map_err(std::io::Error::other)?;
                written.push(path);
            }
        }
        let path = dir.join(self.json_name());
        std::fs::write(&path, self.to_json().map_err(std::io::Error::other)? + "\n")?;
        written.push(path);
        Ok(written)
    }

    /// CSV tables on stdout, each preceded by a `# name` line.
    pub fn print_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (name, table) in &self.tables {
            writeln!(out, "# {name}")?;
            table.write_csv(&mut out).map_err(std::io::Error::other)?;
        }
        if !self.scalars.is_empty() {
            writeln!(out, "# scalars")?;
            let mut t = Table::new(["quantity", "value"]);
            for (k, v) in &self.scalars {
                t.push(vec![k.as_str().into(), (*v).into()]);
            }
            t.write_csv(&mut out).map_err(std::io::Error::other)?;
        }
        Ok(())
    }
}
