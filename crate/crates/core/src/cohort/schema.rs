use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Continuous,
    Binary,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub unit: String,
}

impl FeatureDescriptor {
    pub fn continuous(name: &str, unit: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Continuous,
            categories: Vec::new(),
            unit: unit.to_string(),
        }
    }

    pub fn binary(name: &str, unit: &str) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Binary,
            categories: Vec::new(),
            unit: unit.to_string(),
        }
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: FeatureKind::Categorical,
            categories: categories.iter().map(|s| s.to_string()).collect(),
            unit: String::new(),
        }
    }

    /// Number of encoded columns this feature occupies.
    pub fn width(&self) -> usize {
        match self.kind {
            FeatureKind::Continuous | FeatureKind::Binary => 1,
            FeatureKind::Categorical => self.categories.len(),
        }
    }
}

/// Ordered list of structured features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<FeatureDescriptor>", into = "Vec<FeatureDescriptor>")]
pub struct FeatureSchema {
    features: Vec<FeatureDescriptor>,
}

impl TryFrom<Vec<FeatureDescriptor>> for FeatureSchema {
    type Error = Error;

    fn try_from(features: Vec<FeatureDescriptor>) -> Result<Self> {
        FeatureSchema::new(features)
    }
}

impl From<FeatureSchema> for Vec<FeatureDescriptor> {
    fn from(s: FeatureSchema) -> Self {
        s.features
    }
}

// Physiological measurements taken at first ICU measurement.
const PHYSIOLOGICAL: [(&str, &str); 31] = [
    ("aspartate_aminotransferase", "IU/L"),
    ("base_excess", "mEq/L"),
    ("bicarbonate", "mEq/L"),
    ("creatinine", "mg/dL"),
    ("potassium", "mEq/L"),
    ("sodium", "mEq/L"),
    ("bilirubin", "mg/dL"),
    ("blood_urea_nitrogen", "mg/dL"),
    ("chloride", "mEq/L"),
    ("carbon_dioxide", "mEq/L"),
    ("diastolic_bp", "mmHg"),
    ("gcs_motor", "score"),
    ("glucose", "mg/dL"),
    ("heart_rate", "bpm"),
    ("hematocrit", "%"),
    ("hemoglobin", "g/dL"),
    ("inr", "ratio"),
    ("lactate", "mmol/L"),
    ("magnesium", "mg/dL"),
    ("mean_arterial_pressure", "mmHg"),
    ("ph", "unit"),
    ("platelet_count", "K/uL"),
    ("ptt", "sec"),
    ("rbc_count", "m/uL"),
    ("respiration_rate", "insp/min"),
    ("spo2", "%"),
    ("systolic_bp", "mmHg"),
    ("temperature", "Celsius"),
    ("urine_output", "ml"),
    ("wbc_count", "K/uL"),
    ("albumin", "g/dL"),
];

pub const RACE_CATEGORIES: [&str; 5] = ["White", "Black", "Hispanic", "Asian", "Other"];
pub const MARITAL_CATEGORIES: [&str; 5] = ["Divorced", "Married", "Single", "Widowed", "Unknown"];
pub const INSURANCE_CATEGORIES: [&str; 5] =
    ["Government", "Medicaid", "Medicare", "Private", "Self-pay"];
pub const ADMISSION_CATEGORIES: [&str; 3] = ["Elective", "Emergency", "Urgent"];

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDescriptor>) -> Result<Self> {
        let mut seen = HashSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{}`", f.name)));
            }
            match f.kind {
                FeatureKind::Categorical => {
                    if f.categories.is_empty() {
                        return Err(Error::Schema(format!(
                            "categorical feature `{}` has no categories",
                            f.name
                        )));
                    }
                    let mut cats = HashSet::new();
                    for c in &f.categories {
                        if !cats.insert(c.as_str()) {
                            return Err(Error::Schema(format!(
                                "duplicate category `{c}` in `{}`",
                                f.name
                            )));
                        }
                    }
                }
                _ if !f.categories.is_empty() => {
                    return Err(Error::Schema(format!(
                        "non-categorical feature `{}` declares categories",
                        f.name
                    )));
                }
                _ => {}
            }
        }
        Ok(Self { features })
    }

    /// The 44-feature admission schema: 36 continuous, 4 binary, 4 categorical.
    pub fn default_sepsis() -> Self {
        let mut f = vec![
            FeatureDescriptor::continuous("age", "years"),
            FeatureDescriptor::continuous("bmi", "kg/m2"),
            FeatureDescriptor::continuous("elixhauser_score", "score"),
            FeatureDescriptor::continuous("sofa", "score"),
            FeatureDescriptor::continuous("sirs", "score"),
        ];
        f.extend(
            PHYSIOLOGICAL
                .iter()
                .map(|(n, u)| FeatureDescriptor::continuous(n, u)),
        );
        f.push(FeatureDescriptor::binary("sex", "1 = male"));
        f.push(FeatureDescriptor::binary("metastatic_cancer", "1 = yes"));
        f.push(FeatureDescriptor::binary("diabetes", "1 = yes"));
        f.push(FeatureDescriptor::binary("mechanical_ventilation", "1 = yes"));
        f.push(FeatureDescriptor::categorical("race", &RACE_CATEGORIES));
        f.push(FeatureDescriptor::categorical("marital_status", &MARITAL_CATEGORIES));
        f.push(FeatureDescriptor::categorical("insurance", &INSURANCE_CATEGORIES));
        f.push(FeatureDescriptor::categorical("admission_type", &ADMISSION_CATEGORIES));
        Self::new(f).expect("default schema is valid")
    }

    pub fn features(&self) -> &[FeatureDescriptor] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&FeatureDescriptor> {
        self.features.iter().find(|f| f.name == name)
    }

    /// Schema positions of continuous features, in schema order.
    pub fn continuous_indices(&self) -> Vec<usize> {
        self.indices_of(FeatureKind::Continuous)
    }

    pub fn indices_of(&self, kind: FeatureKind) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn encoded_width(&self) -> usize {
        self.features.iter().map(FeatureDescriptor::width).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schema_counts() {
        let s = FeatureSchema::default_sepsis();
        assert_eq!(s.len(), 44);
        assert_eq!(s.indices_of(FeatureKind::Continuous).len(), 36);
        assert_eq!(s.indices_of(FeatureKind::Binary).len(), 4);
        let cats: Vec<usize> = s
            .features()
            .iter()
            .filter(|f| f.kind == FeatureKind::Categorical)
            .map(|f| f.categories.len())
            .collect();
        assert_eq!(cats, vec![5, 5, 5, 3]);
        assert_eq!(s.encoded_width(), 58);
    }

    #[test]
    fn rejects_duplicates() {
        let f = vec![
            FeatureDescriptor::continuous("a", ""),
            FeatureDescriptor::continuous("a", ""),
        ];
        assert!(FeatureSchema::new(f).is_err());
        let f = vec![FeatureDescriptor::categorical("c", &["x", "x"])];
        assert!(FeatureSchema::new(f).is_err());
        let f = vec![FeatureDescriptor::categorical("c", &[])];
        assert!(FeatureSchema::new(f).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = FeatureSchema::default_sepsis();
        let text = serde_json::to_string(&s).unwrap();
        let back: FeatureSchema = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
    }
}
