//! Output formatting shared by all commands.
//!
//! CSV real numbers carry 12 significant digits, locale-independent, so that
//! golden files stay stable across platforms. JSON uses serde's
//! shortest-round-trip rendering.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use clap::ValueEnum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

/// Formats a real with 12 significant digits, `%g`-style: positional in
/// moderate ranges, scientific otherwise, trailing zeros trimmed.
pub fn fmt_g12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exponent) = sci.split_once('e').expect("scientific format");
    let exponent: i32 = exponent.parse().expect("valid exponent");
    if (-4..12).contains(&exponent) {
        let decimals = (11 - exponent).max(0) as usize;
        let fixed = format!("{x:.decimals$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exponent}")
    }
}

/// One named-column table, rendered as CSV text or a JSON array of objects.
pub struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone)]
pub enum Cell {
    Int(u64),
    Real(f64),
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => {
                let mut out = String::new();
                out.push_str(&self.columns.join(","));
                out.push('\n');
                for row in &self.rows {
                    let line: Vec<String> = row
                        .iter()
                        .map(|cell| match cell {
                            Cell::Int(v) => v.to_string(),
                            Cell::Real(v) => fmt_g12(*v),
                        })
                        .collect();
                    let _ = writeln!(out, "{}", line.join(","));
                }
                out
            }
            OutputFormat::Json => {
                let objects: Vec<serde_json::Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let mut map = serde_json::Map::new();
                        for (name, cell) in self.columns.iter().zip(row) {
                            let value = match cell {
                                Cell::Int(v) => serde_json::json!(v),
                                Cell::Real(v) => serde_json::json!(v),
                            };
                            map.insert((*name).to_string(), value);
                        }
                        serde_json::Value::Object(map)
                    })
                    .collect();
                let mut text = serde_json::to_string_pretty(&objects).expect("table serializes");
                text.push('\n');
                text
            }
        }
    }
}

/// Writes to the path, or to stdout when no path is given.
pub fn emit(text: &str, output: Option<&Path>) -> anyhow::Result<()> {
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| anyhow::anyhow!("cannot write {}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
