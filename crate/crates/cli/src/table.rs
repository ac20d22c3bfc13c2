use std::io::Write;

use clap::ValueEnum;
use serde_json::{Map, Number, Value};

use crate::error::CliResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i128),
    Float(f64),
    Text(String),
    Bool(bool),
    Missing,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x as i128)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Missing, Into::into)
    }
}

/// Rounds to 12 significant digits.
pub fn significant(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

fn float_text(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        let r = significant(x);
        if r == 0.0 || (1e-5..1e15).contains(&r.abs()) {
            r.to_string()
        } else {
            format!("{r:e}")
        }
    }
}

fn float_json(x: f64) -> Value {
    Number::from_f64(significant(x)).map_or_else(|| Value::String(float_text(x)), Value::Number)
}

/// Joins floats with `;` for list-valued cells.
pub fn float_list(xs: &[f64]) -> Cell {
    Cell::Text(xs.iter().map(|&x| float_text(x)).collect::<Vec<_>>().join(";"))
}

impl Cell {
    fn text(&self) -> String {
        match self {
            Cell::Int(x) => x.to_string(),
            Cell::Float(x) => float_text(*x),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Missing => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(x) => i64::try_from(*x)
                .map(Value::from)
                .or_else(|_| u64::try_from(*x).map(Value::from))
                .unwrap_or_else(|_| Value::String(x.to_string())),
            Cell::Float(x) => float_json(*x),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Missing => Value::Null,
        }
    }
}

/// Rounds every float in a JSON document; non-finite values become strings.
pub fn round_json(value: Value) -> Value {
    match value {
        Value::Number(n) if !(n.is_i64() || n.is_u64()) => n.as_f64().map_or(Value::Number(n), float_json),
        Value::Array(items) => Value::Array(items.into_iter().map(round_json).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

/// Long-format result table of one subcommand.
#[derive(Debug, Clone)]
pub struct Table {
    command: &'static str,
    columns: &'static [&'static str],
    rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(command: &'static str, columns: &'static [&'static str]) -> Self {
        Self {
            command,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for {}", self.command);
        self.rows.push(row);
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> CliResult<()> {
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(self.columns).map_err(csv_error)?;
        for row in &self.rows {
            writer.write_record(row.iter().map(Cell::text)).map_err(csv_error)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> = self
                    .columns
                    .iter()
                    .zip(row)
                    .map(|(c, cell)| (c.to_string(), cell.json()))
                    .collect();
                Value::Object(obj)
            })
            .collect();
        serde_json::json!({
            "command": self.command,
            "columns": self.columns,
            "rows": Value::Array(rows),
        })
    }
}

fn csv_error(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(significant(2.0 / 3.0), 0.666666666667);
        assert_eq!(float_text(1.0 / 3.0), "0.333333333333");
        assert_eq!(float_text(f64::NEG_INFINITY), "-inf");
        assert_eq!(float_text(1e-20 / 3.0), "3.33333333333e-21");
    }

    #[test]
    fn csv_has_header_and_blank_missing() {
        let mut t = Table::new("demo", &["a", "b"]);
        t.push(vec![1usize.into(), Cell::Missing]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1,\n");
    }

    #[test]
    fn json_rounds_nested_numbers() {
        let v = round_json(serde_json::json!({"x": [0.1 + 0.2, 3], "y": {"z": 1.0 / 3.0}}));
        assert_eq!(v["x"][0], serde_json::json!(0.3));
        assert_eq!(v["x"][1], serde_json::json!(3));
        assert_eq!(v["y"]["z"], serde_json::json!(0.333333333333));
    }
}
