//! Tabular reports written as CSV with a JSON mirror.
//!
//! Floats carry six decimals; infinities are spelled `inf` / `-inf`; missing
//! values are empty in CSV and `null` in JSON.

use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{CicError, Result};
use crate::metrics::Psnr;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Float(f64),
    Int(u64),
    Empty,
}

impl Cell {
    pub fn opt_float(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }

    pub fn csv(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Float(v) => format_float(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Empty => String::new(),
        }
    }

    pub fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Float(v) if v.is_finite() => {
                let rounded: f64 = format_float(*v).parse().expect("formatted float parses");
                serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number)
            }
            Cell::Float(v) => Value::String(format_float(*v)),
            Cell::Int(v) => Value::from(*v),
            Cell::Empty => Value::Null,
        }
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        let s = format!("{v:.6}");
        if s == "-0.000000" {
            "0.000000".into()
        } else {
            s
        }
    }
}

/// `cic - sic` for PSNR; two infinite values count as no change.
pub fn psnr_delta(sic: Psnr, cic: Psnr) -> f64 {
    match (sic, cic) {
        (Psnr::Infinite, Psnr::Infinite) => 0.0,
        _ => cic.value() - sic.value(),
    }
}

/// One table: fixed column names and rows of equal width.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CicError::Io(std::io::Error::other(e));
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv)).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CicError::Io(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("utf-8 cells"))
    }

    pub fn json_rows(&self) -> Value {
        Value::Array(self.rows.iter().map(|r| self.json_row(r)).collect())
    }

    pub fn json_row(&self, row: &[Cell]) -> Value {
        let map: Map<String, Value> = self
            .columns
            .iter()
            .zip(row)
            .map(|(k, c)| ((*k).to_owned(), c.json()))
            .collect();
        Value::Object(map)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn write_json(path: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    write_text(path, &text)
}
