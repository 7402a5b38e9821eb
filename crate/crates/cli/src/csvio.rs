//! Typed CSV tables. Floats are written with 17 significant digits so a
//! write/read cycle is bit-exact; NaN is rejected in both directions and an
//! empty cell means "no value".

use std::fs::File;
use std::path::Path;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    Int,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Column {
    pub name: &'static str,
    pub kind: Kind,
}

impl Column {
    pub const fn float(name: &'static str) -> Self {
        Self { name, kind: Kind::Float }
    }

    pub const fn int(name: &'static str) -> Self {
        Self { name, kind: Kind::Int }
    }

    pub const fn text(name: &'static str) -> Self {
        Self { name, kind: Kind::Text }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Float(f64),
    Int(i64),
    Text(String),
    Missing,
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Float(v) => Some(*v),
            Value::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Text(s) => Some(s),
            _ => None,
        }
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<Option<f64>> for Value {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Value::Missing, Value::Float)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as i64)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

pub type Row = Vec<Value>;

pub mod schema {
    use super::Column;

    pub const CONVERGE: &[Column] =
        &[Column::int("N"), Column::text("scheme"), Column::float("rmse_grad"), Column::float("rmse_lap")];
    pub const NOISE: &[Column] =
        &[Column::float("s"), Column::text("scheme"), Column::float("rmse_grad"), Column::float("rmse_lap")];
    pub const SWEEP: &[Column] = &[Column::float("k"), Column::float("theta"), Column::float("rmse"), Column::int("used")];
    pub const DERIVE_1D: &[Column] = &[
        Column::float("x"),
        Column::float("phi"),
        Column::float("grad"),
        Column::float("lap"),
        Column::float("grad_exact"),
        Column::float("lap_exact"),
    ];
    pub const DERIVE_2D: &[Column] = &[
        Column::float("x"),
        Column::float("y"),
        Column::float("grad_x"),
        Column::float("grad_y"),
        Column::float("lap"),
        Column::float("grad_x_exact"),
        Column::float("grad_y_exact"),
        Column::float("lap_exact"),
    ];
    pub const DNN_TABLE: &[Column] = &[
        Column::text("function"),
        Column::float("dnn_grad"),
        Column::float("implicit_grad"),
        Column::float("implicit_lap"),
        Column::float("explicit_grad"),
        Column::float("explicit_lap"),
    ];
    pub const BURGERS_SNAPSHOT: &[Column] = &[Column::float("t"), Column::float("x"), Column::float("u")];
    pub const EULER_SNAPSHOT: &[Column] =
        &[Column::float("t"), Column::float("x"), Column::float("rho"), Column::float("u"), Column::float("p")];
    pub const GRID: &[Column] = &[Column::int("i"), Column::float("x_node"), Column::float("x_interface_right")];
    pub const RETRAIN: &[Column] =
        &[Column::int("step"), Column::float("time"), Column::float("k"), Column::float("theta")];
    pub const SOD_METRICS: &[Column] = &[
        Column::text("scheme"),
        Column::text("region"),
        Column::float("l1"),
        Column::float("linf"),
        Column::float("thickness"),
        Column::float("post_shock_osc"),
        Column::float("tv"),
    ];
}

fn schema_err(column: &str, reason: impl Into<String>) -> CliError {
    CliError::Schema { column: column.to_string(), reason: reason.into() }
}

fn format_value(col: &Column, v: &Value) -> Result<String> {
    match (col.kind, v) {
        (_, Value::Missing) => Ok(String::new()),
        (Kind::Float, Value::Float(x)) if x.is_nan() => Err(CliError::NanValue(col.name.to_string())),
        (Kind::Float, Value::Float(x)) => Ok(format!("{x:.16e}")),
        (Kind::Int, Value::Int(i)) => Ok(i.to_string()),
        (Kind::Text, Value::Text(s)) => Ok(s.clone()),
        (kind, other) => Err(schema_err(col.name, format!("expected {kind:?}, got {other:?}"))),
    }
}

fn parse_value(col: &Column, s: &str) -> Result<Value> {
    if s.is_empty() {
        return Ok(Value::Missing);
    }
    match col.kind {
        Kind::Float => {
            let v: f64 = s.parse().map_err(|_| schema_err(col.name, format!("'{s}' is not a number")))?;
            if v.is_nan() {
                return Err(CliError::NanValue(col.name.to_string()));
            }
            Ok(Value::Float(v))
        }
        Kind::Int => s.parse().map(Value::Int).map_err(|_| schema_err(col.name, format!("'{s}' is not an integer"))),
        Kind::Text => Ok(Value::Text(s.to_string())),
    }
}

/// Writes the header and `rows`. Nothing is written if any cell is invalid.
pub fn write_csv(path: &Path, schema: &[Column], rows: &[Row]) -> Result<()> {
    let mut records = Vec::with_capacity(rows.len());
    for row in rows {
        if row.len() != schema.len() {
            let col = schema.get(row.len()).map_or("<extra>", |c| c.name);
            return Err(schema_err(col, format!("row has {} cells, schema has {}", row.len(), schema.len())));
        }
        records.push(schema.iter().zip(row).map(|(c, v)| format_value(c, v)).collect::<Result<Vec<_>>>()?);
    }
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(schema.iter().map(|c| c.name))?;
    for r in records {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path, schema: &[Column]) -> Result<Vec<Row>> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    for (i, col) in schema.iter().enumerate() {
        match header.get(i) {
            Some(h) if h == col.name => {}
            Some(h) => return Err(schema_err(col.name, format!("header has '{h}' in its place"))),
            None => return Err(schema_err(col.name, "missing from header")),
        }
    }
    if let Some(extra) = header.get(schema.len()) {
        return Err(schema_err(extra, "not in schema"));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push(schema.iter().zip(rec.iter()).map(|(c, s)| parse_value(c, s)).collect::<Result<Row>>()?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, schema::CONVERGE, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "N,scheme,rmse_grad,rmse_lap\n");
        assert!(read_csv(&p, schema::CONVERGE).unwrap().is_empty());
    }

    #[test]
    fn nan_rejected_on_write() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let row = vec![Value::Int(10), "fd".into(), f64::NAN.into(), 1.0.into()];
        match write_csv(&p, schema::CONVERGE, &[row]) {
            Err(CliError::NanValue(c)) => assert_eq!(c, "rmse_grad"),
            other => panic!("{other:?}"),
        }
        assert!(!p.exists());
    }

    #[test]
    fn header_mismatch_names_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_csv(&p, schema::NOISE, &[]).unwrap();
        match read_csv(&p, schema::CONVERGE) {
            Err(CliError::Schema { column, .. }) => assert_eq!(column, "N"),
            other => panic!("{other:?}"),
        }
    }
}
