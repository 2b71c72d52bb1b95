//! Result rows and their sinks.
//!
//! CSV prints reals with 17 significant digits. JSON lines carry the same
//! cells plus the nested `components` record of rate rows. Every row is
//! flushed as soon as it is written.

use std::collections::BTreeMap;
use std::io::Write;

use serde_json::{Map, Value};

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(u64),
    Real(f64),
    Text(String),
    Bool(bool),
    /// A column this row has no value for.
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Real(v) if v.is_nan() => "nan".into(),
            Cell::Real(v) => if *v > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            // non-finite reals have no JSON number form
            Cell::Real(v) => serde_json::Number::from_f64(*v).map_or_else(|| Value::String(self.csv()), Value::Number),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
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

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// One flat record. Column order is insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Row {
    cells: Vec<(String, Cell)>,
    components: Option<BTreeMap<String, f64>>,
}

impl Row {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, key: &str, v: impl Into<Cell>) -> Self {
        self.cells.push((key.to_string(), v.into()));
        self
    }

    /// Attaches the decomposition of a rate. CSV spells each entry as a
    /// `c_<key>` column.
    pub fn with_components(mut self, c: &BTreeMap<String, f64>) -> Self {
        self.components = Some(c.clone());
        self
    }

    fn flat(&self) -> Vec<(String, Cell)> {
        let mut out = self.cells.clone();
        if let Some(c) = &self.components {
            out.extend(c.iter().map(|(k, v)| (format!("c_{k}"), Cell::Real(*v))));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    JsonLines,
}

impl Format {
    pub fn for_path(path: Option<&std::path::Path>) -> Self {
        match path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some("json") | Some("jsonl") => Format::JsonLines,
            _ => Format::Csv,
        }
    }
}

pub struct Sink<W: Write> {
    out: W,
    format: Format,
    header: Option<Vec<String>>,
}

impl<W: Write> Sink<W> {
    pub fn new(out: W, format: Format) -> Self {
        Self {
            out,
            format,
            header: None,
        }
    }

    pub fn write(&mut self, row: &Row) -> Result<(), CliError> {
        let flat = row.flat();
        let keys: Vec<String> = flat.iter().map(|(k, _)| k.clone()).collect();
        match &self.header {
            Some(h) if *h != keys => {
                return Err(CliError::Internal(format!("row keys changed within a run: {keys:?}")));
            }
            Some(_) => {}
            None => {
                if self.format == Format::Csv {
                    self.csv_line(&keys)?;
                }
                self.header = Some(keys);
            }
        }
        match self.format {
            Format::Csv => {
                let vals: Vec<String> = flat.iter().map(|(_, v)| v.csv()).collect();
                self.csv_line(&vals)?;
            }
            Format::JsonLines => {
                let mut m = Map::new();
                for (k, v) in &row.cells {
                    m.insert(k.clone(), v.json());
                }
                if let Some(c) = &row.components {
                    let comps = c.iter().map(|(k, v)| (k.clone(), Cell::Real(*v).json())).collect();
                    m.insert("components".into(), Value::Object(comps));
                }
                writeln!(self.out, "{}", Value::Object(m)).map_err(CliError::io)?;
            }
        }
        self.out.flush().map_err(CliError::io)
    }

    fn csv_line(&mut self, fields: &[String]) -> Result<(), CliError> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(fields).map_err(|e| CliError::Io(e.to_string()))?;
        let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
        self.out.write_all(&bytes).map_err(CliError::io)
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reals_round_trip_through_csv() {
        for v in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-300, 123456.789] {
            let s = Cell::Real(v).csv();
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(Cell::Real(0.25).csv(), "2.5000000000000000e-1");
    }

    #[test]
    fn csv_header_once_and_stable_keys() {
        let mut s = Sink::new(Vec::new(), Format::Csv);
        s.write(&Row::new().set("a", 1u64).set("b", "x,y")).unwrap();
        s.write(&Row::new().set("a", 2u64).set("b", Cell::Empty)).unwrap();
        let text = String::from_utf8(s.into_inner()).unwrap();
        assert_eq!(text, "a,b\n1,\"x,y\"\n2,\n");
        let mut s = Sink::new(Vec::new(), Format::Csv);
        s.write(&Row::new().set("a", 1u64)).unwrap();
        assert!(s.write(&Row::new().set("b", 1u64)).is_err());
    }

    #[test]
    fn json_lines_nest_components() {
        let mut s = Sink::new(Vec::new(), Format::JsonLines);
        let c = BTreeMap::from([("n".to_string(), 10.0)]);
        s.write(&Row::new().set("rate", 0.5).with_components(&c)).unwrap();
        let v: Value = serde_json::from_slice(&s.into_inner()).unwrap();
        assert_eq!(v["components"]["n"], 10.0);
        assert_eq!(v["rate"], 0.5);
    }
}
