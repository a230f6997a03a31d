use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::schema::{FeatureKind, FeatureSchema};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// A single observed structured value.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    /// Continuous measurement, or 0/1 for binary features.
    Number(f64),
    Category(String),
}

impl FeatureValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            FeatureValue::Number(v) => Some(*v),
            FeatureValue::Category(_) => None,
        }
    }
}

/// One ICU admission. `values` is aligned with the owning cohort's schema.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub id: String,
    pub values: Vec<Option<FeatureValue>>,
    pub note_text: String,
    pub label_hospital: bool,
    pub label_30day: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "hospital")]
    Hospital,
    #[serde(rename = "30day")]
    ThirtyDay,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Hospital => "hospital",
            Outcome::ThirtyDay => "30day",
        }
    }
}

impl PatientRecord {
    pub fn label(&self, outcome: Outcome) -> bool {
        match outcome {
            Outcome::Hospital => self.label_hospital,
            Outcome::ThirtyDay => self.label_30day,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub schema: FeatureSchema,
    pub records: Vec<PatientRecord>,
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    id: String,
    features: Map<String, Value>,
    note: String,
    label_hospital: Value,
    label_30day: Value,
}

fn parse_flag(v: &Value, what: &str) -> std::result::Result<bool, String> {
    match v {
        Value::Bool(b) => Ok(*b),
        Value::Number(n) if n.as_f64() == Some(0.0) => Ok(false),
        Value::Number(n) if n.as_f64() == Some(1.0) => Ok(true),
        other => Err(format!("{what} must be 0/1, got {other}")),
    }
}

impl Cohort {
    pub fn new(schema: FeatureSchema, records: Vec<PatientRecord>) -> Result<Self> {
        let cohort = Self { schema, records };
        cohort.validate()?;
        Ok(cohort)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for (r, rec) in self.records.iter().enumerate() {
            if !ids.insert(rec.id.as_str()) {
                return Err(Error::Schema(format!("duplicate record id `{}`", rec.id)));
            }
            if rec.values.len() != self.schema.len() {
                return Err(Error::Schema(format!(
                    "record {r} has {} values for {} features",
                    rec.values.len(),
                    self.schema.len()
                )));
            }
            for (f, v) in self.schema.features().iter().zip(&rec.values) {
                if let Some(v) = v {
                    check_value(f.kind, &f.categories, v)
                        .map_err(|m| Error::Schema(format!("record `{}`, `{}`: {m}", rec.id, f.name)))?;
                }
            }
        }
        Ok(())
    }

    pub fn labels(&self, outcome: Outcome) -> Vec<bool> {
        self.records.iter().map(|r| r.label(outcome)).collect()
    }

    pub fn select(&self, idx: &[usize]) -> Cohort {
        Cohort {
            schema: self.schema.clone(),
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Drop records whose note is empty (final analysis cohorts require notes).
    pub fn without_empty_notes(&self) -> Cohort {
        Cohort {
            schema: self.schema.clone(),
            records: self
                .records
                .iter()
                .filter(|r| !r.note_text.trim().is_empty())
                .cloned()
                .collect(),
        }
    }

    /// Continuous block as `(rows, Option<value>)`, columns in schema order
    /// of the continuous features.
    pub fn continuous_block(&self) -> (Vec<usize>, Vec<Vec<Option<f64>>>) {
        let cols = self.schema.continuous_indices();
        let rows = self
            .records
            .iter()
            .map(|r| {
                cols.iter()
                    .map(|&c| r.values[c].as_ref().and_then(FeatureValue::as_number))
                    .collect()
            })
            .collect();
        (cols, rows)
    }

    /// Copy with the continuous block replaced by `completed`.
    pub fn with_continuous_block(&self, completed: &DenseMatrix) -> Result<Cohort> {
        let cols = self.schema.continuous_indices();
        if completed.rows() != self.len() || completed.cols() != cols.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len() * cols.len(),
                found: completed.rows() * completed.cols(),
            });
        }
        let mut out = self.clone();
        for (r, rec) in out.records.iter_mut().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                rec.values[c] = Some(FeatureValue::Number(completed.get(r, j)));
            }
        }
        Ok(out)
    }

    pub fn from_jsonl(text: &str, schema: &FeatureSchema) -> Result<Cohort> {
        let mut records = Vec::new();
        let mut ids = HashSet::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let rec = parse_line(line, schema).map_err(|message| Error::Parse {
                line: line_no,
                message,
            })?;
            if !ids.insert(rec.id.clone()) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("duplicate record id `{}`", rec.id),
                });
            }
            records.push(rec);
        }
        Ok(Cohort {
            schema: schema.clone(),
            records,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for rec in &self.records {
            out.push_str(&self.record_line(rec));
            out.push('\n');
        }
        out
    }

    fn record_line(&self, rec: &PatientRecord) -> String {
        let mut features = Map::new();
        for (f, v) in self.schema.features().iter().zip(&rec.values) {
            let json = match v {
                None => Value::Null,
                Some(FeatureValue::Number(x)) => serde_json::Number::from_f64(*x)
                    .map(Value::Number)
                    .unwrap_or(Value::Null),
                Some(FeatureValue::Category(c)) => Value::String(c.clone()),
            };
            features.insert(f.name.clone(), json);
        }
        let line = RecordLine {
            id: rec.id.clone(),
            features,
            note: rec.note_text.clone(),
            label_hospital: Value::from(u8::from(rec.label_hospital)),
            label_30day: Value::from(u8::from(rec.label_30day)),
        };
        serde_json::to_string(&line).expect("record serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for rec in &self.records {
            writeln!(w, "{}", self.record_line(rec)).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn check_value(
    kind: FeatureKind,
    categories: &[String],
    v: &FeatureValue,
) -> std::result::Result<(), String> {
    match (kind, v) {
        (FeatureKind::Continuous, FeatureValue::Number(x)) if x.is_finite() => Ok(()),
        (FeatureKind::Binary, FeatureValue::Number(x)) if *x == 0.0 || *x == 1.0 => Ok(()),
        (FeatureKind::Categorical, FeatureValue::Category(c)) if categories.contains(c) => Ok(()),
        (FeatureKind::Categorical, FeatureValue::Category(c)) => {
            Err(format!("category `{c}` not in {categories:?}"))
        }
        (k, v) => Err(format!("value {v:?} is not valid for a {k:?} feature")),
    }
}

fn parse_line(line: &str, schema: &FeatureSchema) -> std::result::Result<PatientRecord, String> {
    let raw: RecordLine = serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))?;
    let mut values: Vec<Option<FeatureValue>> = vec![None; schema.len()];
    for (name, v) in &raw.features {
        let idx = schema
            .index_of(name)
            .ok_or_else(|| format!("unknown feature `{name}`"))?;
        let desc = &schema.features()[idx];
        let value = match (desc.kind, v) {
            (_, Value::Null) => None,
            (FeatureKind::Continuous, Value::Number(n)) => Some(FeatureValue::Number(
                n.as_f64().ok_or_else(|| format!("`{name}`: bad number"))?,
            )),
            (FeatureKind::Binary, Value::Bool(b)) => Some(FeatureValue::Number(f64::from(u8::from(*b)))),
            (FeatureKind::Binary, Value::Number(n)) => {
                Some(FeatureValue::Number(n.as_f64().unwrap_or(f64::NAN)))
            }
            (FeatureKind::Categorical, Value::String(s)) => Some(FeatureValue::Category(s.clone())),
            (kind, other) => {
                return Err(format!("`{name}`: {other} is not a valid {kind:?} value"));
            }
        };
        if let Some(v) = &value {
            check_value(desc.kind, &desc.categories, v).map_err(|m| format!("`{name}`: {m}"))?;
        }
        values[idx] = value;
    }
    Ok(PatientRecord {
        id: raw.id,
        values,
        note_text: raw.note,
        label_hospital: parse_flag(&raw.label_hospital, "label_hospital")?,
        label_30day: parse_flag(&raw.label_30day, "label_30day")?,
    })
}

/// Read a JSONL cohort file, validating every line against `schema`.
pub fn load_cohort(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Cohort> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| Error::io(path, e))?);
        text.push('\n');
    }
    Cohort::from_jsonl(&text, schema)
}

pub fn save_cohort(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    cohort.save(path)
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<FeatureSchema> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
