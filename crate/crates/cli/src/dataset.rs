//! Tabular datasets and their CSV / JSON encodings.
//!
//! CSV files start with one `#`-prefixed line holding the JSON metadata, then a
//! header row. Floats are written as `{:.16e}` (17 significant digits, exact
//! round trip), so identical runs give byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::Format;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Str(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) if x.is_nan() => "NaN".into(),
            Cell::Num(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Num(x) => format!("{x:.16e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Str(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(_) | Cell::Empty => Value::Null,
            Cell::Int(i) => json!(i),
            Cell::Str(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Str(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Str(s)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Dataset-specific metadata, merged into the header next to the config.
    pub meta: Value,
}

impl Dataset {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Self { name: name.into(), columns: columns.to_vec(), rows: Vec::new(), meta: json!({}) }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn with_meta(mut self, meta: Value) -> Self {
        self.meta = meta;
        self
    }

    fn header(&self, config: &Value) -> Value {
        json!({ "dataset": self.name, "columns": self.columns, "rows": self.rows.len(), "config": config, "info": self.meta })
    }

    /// Writes `<dir>/<name>.<ext>` and returns the path.
    pub fn write(&self, dir: &Path, format: Format, config: &Value) -> CliResult<PathBuf> {
        let path = dir.join(format!("{}.{}", self.name, format.extension()));
        let io = |source| CliError::Io { path: path.clone(), source };
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        match format {
            Format::Csv => {
                writeln!(w, "# {}", self.header(config)).map_err(io)?;
                let mut cw = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(&mut w);
                cw.write_record(&self.columns).map_err(|e| io(e.into()))?;
                for row in &self.rows {
                    cw.write_record(row.iter().map(Cell::csv)).map_err(|e| io(e.into()))?;
                }
                cw.flush().map_err(io)?;
            }
            Format::Json => {
                let columns: Vec<Value> = self
                    .columns
                    .iter()
                    .enumerate()
                    .map(|(k, name)| json!({ "name": name, "values": self.rows.iter().map(|r| r[k].json()).collect::<Vec<_>>() }))
                    .collect();
                let doc = json!({ "metadata": self.header(config), "columns": columns });
                serde_json::to_writer_pretty(&mut w, &doc).map_err(|e| io(e.into()))?;
                writeln!(w).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
        Ok(path)
    }
}
