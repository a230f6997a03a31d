use serde::{Deserialize, Serialize};

use super::record::{Cohort, FeatureValue};
use super::schema::{FeatureKind, FeatureSchema};
use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;

/// Fitted layout and scaling for the structured block: z-scored continuous
/// columns, 0/1 binary columns and full one-hot categorical columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredEncoder {
    schema: FeatureSchema,
    /// `(first column, width)` per schema feature.
    spans: Vec<(usize, usize)>,
    /// Mean and population standard deviation per schema feature; `(0, 1)`
    /// for non-continuous features.
    stats: Vec<(f64, f64)>,
    warnings: Vec<String>,
}

impl StructuredEncoder {
    pub fn n_columns(&self) -> usize {
        self.spans.last().map_or(0, |&(s, w)| s + w)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn span(&self, feature: &str) -> Option<(usize, usize)> {
        self.schema.index_of(feature).map(|i| self.spans[i])
    }

    /// Mean and standard deviation used for a continuous feature.
    pub fn scaling(&self, feature: &str) -> Option<(f64, f64)> {
        let i = self.schema.index_of(feature)?;
        (self.schema.features()[i].kind == FeatureKind::Continuous).then(|| self.stats[i])
    }

    /// Human-readable column names; categorical columns are `name=category`.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.n_columns());
        for f in self.schema.features() {
            match f.kind {
                FeatureKind::Categorical => {
                    out.extend(f.categories.iter().map(|c| format!("{}={c}", f.name)))
                }
                _ => out.push(f.name.clone()),
            }
        }
        out
    }
}

/// Fit column statistics on `cohort`. Continuous features must be complete.
pub fn fit_encoder(cohort: &Cohort) -> Result<StructuredEncoder> {
    if cohort.is_empty() {
        return Err(Error::invalid("cannot fit an encoder on an empty cohort"));
    }
    let schema = cohort.schema.clone();
    let mut spans = Vec::with_capacity(schema.len());
    let mut stats = Vec::with_capacity(schema.len());
    let mut warnings = Vec::new();
    let mut col = 0;
    let n = cohort.len() as f64;
    for (i, f) in schema.features().iter().enumerate() {
        spans.push((col, f.width()));
        col += f.width();
        if f.kind != FeatureKind::Continuous {
            stats.push((0.0, 1.0));
            continue;
        }
        let mut values = Vec::with_capacity(cohort.len());
        for rec in &cohort.records {
            match &rec.values[i] {
                Some(FeatureValue::Number(v)) => values.push(*v),
                _ => return Err(Error::MissingValue(f.name.clone())),
            }
        }
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sd = var.sqrt();
        if !(sd > 1e-12) || !sd.is_finite() {
            let msg = format!("column `{}` is constant; using sd = 1", f.name);
            log::warn!("{msg}");
            warnings.push(msg);
            sd = 1.0;
        }
        stats.push((mean, sd));
    }
    Ok(StructuredEncoder {
        schema,
        spans,
        stats,
        warnings,
    })
}

/// Encode `cohort` into a dense matrix with one row per record.
pub fn encode(encoder: &StructuredEncoder, cohort: &Cohort) -> Result<FeatureMatrix> {
    if cohort.schema != encoder.schema {
        return Err(Error::Schema("cohort schema differs from the encoder's".into()));
    }
    let width = encoder.n_columns();
    let mut out = FeatureMatrix::zeros(cohort.len(), width);
    for (r, rec) in cohort.records.iter().enumerate() {
        let row = out.row_mut(r);
        for (i, f) in encoder.schema.features().iter().enumerate() {
            let (start, _) = encoder.spans[i];
            let value = rec.values[i].as_ref();
            match (f.kind, value) {
                (FeatureKind::Continuous, Some(FeatureValue::Number(v))) => {
                    let (mean, sd) = encoder.stats[i];
                    row[start] = (v - mean) / sd;
                }
                (FeatureKind::Binary, Some(FeatureValue::Number(v))) => row[start] = *v,
                (FeatureKind::Categorical, Some(FeatureValue::Category(c))) => {
                    let k = f.categories.iter().position(|x| x == c).ok_or_else(|| {
                        Error::Schema(format!("unseen category `{c}` for `{}`", f.name))
                    })?;
                    row[start + k] = 1.0;
                }
                (_, None) => return Err(Error::MissingValue(f.name.clone())),
                (kind, Some(v)) => {
                    return Err(Error::Schema(format!(
                        "value {v:?} invalid for {kind:?} feature `{}`",
                        f.name
                    )))
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::record::PatientRecord;
    use crate::cohort::schema::FeatureDescriptor;

    fn schema() -> FeatureSchema {
        FeatureSchema::new(vec![
            FeatureDescriptor::continuous("x", ""),
            FeatureDescriptor::binary("b", ""),
            FeatureDescriptor::categorical("race", &["White", "Black", "Hispanic", "Asian", "Other"]),
        ])
        .unwrap()
    }

    fn rec(id: &str, x: Option<f64>, b: f64, race: &str) -> PatientRecord {
        PatientRecord {
            id: id.into(),
            values: vec![
                x.map(FeatureValue::Number),
                Some(FeatureValue::Number(b)),
                Some(FeatureValue::Category(race.into())),
            ],
            note_text: "n".into(),
            label_hospital: false,
            label_30day: false,
        }
    }

    #[test]
    fn population_sd_and_one_hot() {
        let c = Cohort::new(
            schema(),
            vec![rec("a", Some(2.0), 1.0, "Asian"), rec("b", Some(4.0), 0.0, "White")],
        )
        .unwrap();
        let enc = fit_encoder(&c).unwrap();
        assert_eq!(enc.scaling("x"), Some((3.0, 1.0)));
        assert_eq!(enc.n_columns(), 7);
        let m = encode(&enc, &c).unwrap();
        assert_eq!(m.row(0), &[-1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(m.row(1), &[1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(enc.column_names()[5], "race=Asian");
    }

    #[test]
    fn mean_value_encodes_to_zero() {
        let c = Cohort::new(
            schema(),
            vec![
                rec("a", Some(1.0), 1.0, "Other"),
                rec("b", Some(5.0), 0.0, "Other"),
                rec("c", Some(3.0), 0.0, "Black"),
            ],
        )
        .unwrap();
        let enc = fit_encoder(&c).unwrap();
        let m = encode(&enc, &c).unwrap();
        assert_eq!(m.get(2, 0), 0.0);
    }

    #[test]
    fn degenerate_and_missing() {
        let c = Cohort::new(schema(), vec![rec("a", Some(2.0), 1.0, "Asian")]).unwrap();
        let enc = fit_encoder(&c).unwrap();
        assert_eq!(enc.scaling("x"), Some((2.0, 1.0)));
        assert_eq!(enc.warnings().len(), 1);

        let c = Cohort::new(schema(), vec![rec("a", None, 1.0, "Asian")]).unwrap();
        assert!(matches!(fit_encoder(&c), Err(Error::MissingValue(_))));
    }

    #[test]
    fn default_schema_width() {
        let s = FeatureSchema::default_sepsis();
        let values = s
            .features()
            .iter()
            .map(|f| match f.kind {
                FeatureKind::Categorical => Some(FeatureValue::Category(f.categories[0].clone())),
                _ => Some(FeatureValue::Number(1.0)),
            })
            .collect();
        let c = Cohort::new(
            s,
            vec![PatientRecord {
                id: "a".into(),
                values,
                note_text: String::new(),
                label_hospital: false,
                label_30day: false,
            }],
        )
        .unwrap();
        assert_eq!(fit_encoder(&c).unwrap().n_columns(), 58);
    }
}
