//! Tables written as CSV (17 significant digits) or JSON.

use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::config::Format;
use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Full-precision decimal: 17 significant digits round-trip every `f64`.
pub fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Num(v) => fmt_num(*v),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            // JSON has no NaN; non-finite values become null
            Cell::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns).map_err(io)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::csv)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|row| Value::Object(self.columns.iter().cloned().zip(row.iter().map(Cell::json)).collect::<Map<_, _>>()))
                .collect(),
        )
    }

    /// Writes `<dir>/<stem>.csv` or `<dir>/<stem>.json`.
    pub fn write(&self, dir: &Path, stem: &str, format: Format) -> Result<(), CliError> {
        let (name, text) = match format {
            Format::Csv => (format!("{stem}.csv"), self.to_csv()?),
            Format::Json => (format!("{stem}.json"), serde_json::to_string_pretty(&self.to_json()).map_err(io)?),
        };
        fs::create_dir_all(dir).map_err(io)?;
        fs::write(dir.join(name), text).map_err(io)
    }
}

/// Key/value record written as a two-column CSV or a JSON object.
pub fn write_record(value: &Value, dir: &Path, stem: &str, format: Format) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io)?;
    match format {
        Format::Json => fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(value).map_err(io)?).map_err(io),
        Format::Csv => {
            let mut t = Table::new(&["key", "value"]);
            if let Value::Object(map) = value {
                for (k, v) in map {
                    let cell = match v {
                        Value::Number(n) => n.as_f64().map_or(Cell::Empty, Cell::Num),
                        Value::Null => Cell::Empty,
                        Value::String(s) => Cell::Text(s.clone()),
                        other => Cell::Text(other.to_string()),
                    };
                    t.push(vec![Cell::Text(k.clone()), cell]);
                }
            }
            fs::write(dir.join(format!("{stem}.csv")), t.to_csv()?).map_err(io)
        }
    }
}

fn io<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1.28, 6.02e23, -2.5e-300] {
            let s = fmt_num(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
            let mantissa = s.split('e').next().unwrap().replace(['-', '.'], "");
            assert_eq!(mantissa.len(), 17);
        }
    }

    #[test]
    fn csv_has_header_and_blanks() {
        let mut t = Table::new(&["x", "V", "region"]);
        t.push(vec![1.0.into(), Cell::Empty, "continuation".into()]);
        let s = t.to_csv().unwrap();
        assert_eq!(s, "x,V,region\n1.0000000000000000e0,,continuation\n");
        assert_eq!(t.to_json()[0]["V"], Value::Null);
    }
}
