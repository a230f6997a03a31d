use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::{Cohort, FeatureValue};
use super::schema::{FeatureKind, FeatureSchema};
use crate::error::{Error, Result};

const DEFAULT_RANGES: &str = include_str!("../../data/plausible_ranges.json");

/// Inclusive physiologically plausible bounds per continuous feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, [f64; 2]>", into = "BTreeMap<String, [f64; 2]>")]
pub struct PlausibleRangeTable {
    ranges: BTreeMap<String, (f64, f64)>,
}

impl TryFrom<BTreeMap<String, [f64; 2]>> for PlausibleRangeTable {
    type Error = Error;

    fn try_from(raw: BTreeMap<String, [f64; 2]>) -> Result<Self> {
        PlausibleRangeTable::new(raw.into_iter().map(|(k, [lo, hi])| (k, (lo, hi))).collect())
    }
}

impl From<PlausibleRangeTable> for BTreeMap<String, [f64; 2]> {
    fn from(t: PlausibleRangeTable) -> Self {
        t.ranges.into_iter().map(|(k, (lo, hi))| (k, [lo, hi])).collect()
    }
}

/// Per-feature count of values replaced by missing.
pub type RemovalReport = BTreeMap<String, usize>;

impl PlausibleRangeTable {
    pub fn new(ranges: BTreeMap<String, (f64, f64)>) -> Result<Self> {
        for (name, &(lo, hi)) in &ranges {
            if !(lo < hi) {
                return Err(Error::Config(format!(
                    "range for `{name}` must satisfy min < max, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { ranges })
    }

    /// The shipped default table.
    pub fn default_table() -> Self {
        serde_json::from_str(DEFAULT_RANGES).expect("bundled range table parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn get(&self, name: &str) -> Option<(f64, f64)> {
        self.ranges.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Every entry must name a continuous feature of `schema`.
    pub fn validate_for(&self, schema: &FeatureSchema) -> Result<()> {
        for name in self.ranges.keys() {
            match schema.get(name) {
                Some(f) if f.kind == FeatureKind::Continuous => {}
                Some(_) => {
                    return Err(Error::Config(format!("range given for non-continuous `{name}`")))
                }
                None => return Err(Error::Config(format!("range given for unknown `{name}`"))),
            }
        }
        Ok(())
    }
}

/// Replace values strictly outside their plausible range with missing.
/// Records are never dropped; entries for unknown or non-continuous features
/// are ignored with a warning.
pub fn filter_outliers(cohort: &Cohort, ranges: &PlausibleRangeTable) -> (Cohort, RemovalReport) {
    let mut bounds = Vec::new();
    for (name, &(lo, hi)) in &ranges.ranges {
        match cohort.schema.index_of(name) {
            Some(i) if cohort.schema.features()[i].kind == FeatureKind::Continuous => {
                bounds.push((i, name.as_str(), lo, hi))
            }
            _ => log::warn!("range table entry `{name}` ignored: not a continuous schema feature"),
        }
    }
    let mut out = cohort.clone();
    let mut report = RemovalReport::new();
    for rec in &mut out.records {
        for &(i, name, lo, hi) in &bounds {
            if let Some(FeatureValue::Number(v)) = rec.values[i] {
                if v < lo || v > hi {
                    rec.values[i] = None;
                    *report.entry(name.to_string()).or_insert(0) += 1;
                }
            }
        }
    }
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::record::PatientRecord;

    fn cohort_with_hr(values: &[Option<f64>]) -> Cohort {
        let schema = FeatureSchema::default_sepsis();
        let hr = schema.index_of("heart_rate").unwrap();
        let records = values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let mut vals = vec![None; schema.len()];
                vals[hr] = v.map(FeatureValue::Number);
                PatientRecord {
                    id: format!("p{i}"),
                    values: vals,
                    note_text: "note".into(),
                    label_hospital: false,
                    label_30day: false,
                }
            })
            .collect();
        Cohort::new(schema, records).unwrap()
    }

    #[test]
    fn default_table_covers_continuous_features() {
        let t = PlausibleRangeTable::default_table();
        let schema = FeatureSchema::default_sepsis();
        t.validate_for(&schema).unwrap();
        assert_eq!(t.len(), 36);
        assert_eq!(t.get("heart_rate"), Some((0.0, 350.0)));
        assert_eq!(t.get("temperature"), Some((26.0, 45.0)));
        assert_eq!(t.get("ph"), Some((6.5, 8.0)));
    }

    #[test]
    fn out_of_range_becomes_missing() {
        let c = cohort_with_hr(&[Some(400.0), Some(80.0), None, Some(350.0)]);
        let (f, report) = filter_outliers(&c, &PlausibleRangeTable::default_table());
        let hr = c.schema.index_of("heart_rate").unwrap();
        assert_eq!(f.records[0].values[hr], None);
        assert_eq!(f.records[1].values[hr], Some(FeatureValue::Number(80.0)));
        assert_eq!(f.records[3].values[hr], Some(FeatureValue::Number(350.0)));
        assert_eq!(report.get("heart_rate"), Some(&1));
        assert_eq!(report.len(), 1);
        assert_eq!(f.len(), 4);
    }

    #[test]
    fn in_range_is_identity_and_idempotent() {
        let c = cohort_with_hr(&[Some(60.0), None]);
        let t = PlausibleRangeTable::default_table();
        let (f, report) = filter_outliers(&c, &t);
        assert_eq!(f, c);
        assert!(report.is_empty());
        let c = cohort_with_hr(&[Some(-5.0), Some(500.0), Some(70.0)]);
        let (once, _) = filter_outliers(&c, &t);
        let (twice, r2) = filter_outliers(&once, &t);
        assert_eq!(once, twice);
        assert!(r2.is_empty());
    }

    #[test]
    fn unknown_entries_ignored_and_bad_bounds_rejected() {
        let mut m = BTreeMap::new();
        m.insert("pulse".to_string(), (0.0, 1.0));
        let t = PlausibleRangeTable::new(m).unwrap();
        let c = cohort_with_hr(&[Some(1000.0)]);
        let (f, report) = filter_outliers(&c, &t);
        assert_eq!(f, c);
        assert!(report.is_empty());
        assert!(t.validate_for(&c.schema).is_err());

        let mut m = BTreeMap::new();
        m.insert("ph".to_string(), (8.0, 6.5));
        assert!(PlausibleRangeTable::new(m).is_err());
    }
}
