//! Seeded synthetic cohorts with a known logistic ground truth.
//!
//! Structured values are drawn from Gaussian or log-normal marginals matched
//! to published admission statistics, coupled through a few shared latent
//! factors. Notes are bags of filler words with Poisson counts of risk and
//! protective tokens. The true log-odds combine a standardized structured
//! score and a standardized token score, each scaled by its configured
//! weight; intercepts are found by bisection so empirical base rates hit
//! their targets.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ranges::PlausibleRangeTable;
use super::record::{Cohort, FeatureValue, PatientRecord};
use super::schema::{
    FeatureSchema, ADMISSION_CATEGORIES, INSURANCE_CATEGORIES, MARITAL_CATEGORIES, RACE_CATEGORIES,
};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

const STOPWORD_FILE: &str = include_str!("../../data/stopwords.txt");

#[derive(Debug, Clone, Copy)]
enum Marginal {
    Normal,
    LogNormal,
}

struct ContinuousSpec {
    name: &'static str,
    mean: f64,
    sd: f64,
    marginal: Marginal,
    /// Loadings on the (severity, anemia, electrolyte) latent factors.
    loadings: [f64; 3],
    /// Ground-truth log-odds effect per unit of the latent z.
    effect: f64,
}

const fn cs(
    name: &'static str,
    mean: f64,
    sd: f64,
    marginal: Marginal,
    loadings: [f64; 3],
    effect: f64,
) -> ContinuousSpec {
    ContinuousSpec {
        name,
        mean,
        sd,
        marginal,
        loadings,
        effect,
    }
}

use Marginal::{LogNormal as Ln, Normal as N};

const CONTINUOUS: [ContinuousSpec; 36] = [
    cs("age", 65.5, 17.6, N, [0.1, 0.0, 0.0], 0.7),
    cs("bmi", 28.6, 8.55, Ln, [0.0, 0.0, 0.0], -0.1),
    cs("elixhauser_score", 3.80, 7.00, N, [0.2, 0.0, 0.0], 0.3),
    cs("sofa", 4.61, 3.10, N, [0.7, 0.0, 0.0], 1.0),
    cs("sirs", 2.92, 0.93, N, [0.35, 0.0, 0.0], 0.0),
    cs("aspartate_aminotransferase", 191.0, 837.0, Ln, [0.25, 0.0, 0.0], 0.0),
    cs("base_excess", -1.52, 5.45, N, [-0.55, 0.0, 0.0], 0.0),
    cs("bicarbonate", 22.9, 4.95, N, [-0.5, 0.0, 0.0], 0.0),
    cs("creatinine", 1.55, 1.64, Ln, [0.4, 0.0, 0.0], 0.0),
    cs("potassium", 4.18, 0.79, N, [0.15, 0.0, 0.3], 0.0),
    cs("sodium", 138.0, 5.66, N, [0.0, 0.0, 0.75], 0.0),
    cs("bilirubin", 1.56, 3.38, Ln, [0.3, 0.0, 0.0], 0.2),
    cs("blood_urea_nitrogen", 29.0, 24.1, Ln, [0.4, 0.0, 0.0], 0.4),
    cs("chloride", 105.0, 6.85, N, [0.0, 0.0, 0.75], 0.0),
    cs("carbon_dioxide", 24.6, 5.77, N, [-0.45, 0.0, 0.0], 0.0),
    cs("diastolic_bp", 66.7, 17.5, N, [-0.35, 0.0, 0.0], 0.0),
    cs("gcs_motor", 4.92, 1.80, N, [-0.4, 0.0, 0.0], -0.35),
    cs("glucose", 148.0, 72.1, Ln, [0.15, 0.0, 0.0], 0.0),
    cs("heart_rate", 91.1, 20.4, N, [0.35, 0.0, 0.0], 0.25),
    cs("hematocrit", 32.3, 6.17, N, [0.0, 0.9, 0.0], 0.0),
    cs("hemoglobin", 10.8, 2.09, N, [0.0, 0.9, 0.0], -0.1),
    cs("inr", 1.50, 0.75, Ln, [0.35, 0.0, 0.0], 0.2),
    cs("lactate", 2.16, 1.74, Ln, [0.55, 0.0, 0.0], 0.5),
    cs("magnesium", 1.92, 0.44, N, [0.0, 0.0, 0.2], 0.0),
    cs("mean_arterial_pressure", 82.0, 18.5, N, [-0.45, 0.0, 0.0], -0.3),
    cs("ph", 7.36, 0.10, N, [-0.45, 0.0, 0.0], 0.0),
    cs("platelet_count", 214.0, 116.0, Ln, [-0.25, 0.0, 0.0], -0.15),
    cs("ptt", 36.8, 21.7, Ln, [0.25, 0.0, 0.0], 0.0),
    cs("rbc_count", 3.58, 0.71, N, [0.0, 0.85, 0.0], 0.0),
    cs("respiration_rate", 19.4, 6.64, N, [0.3, 0.0, 0.0], 0.25),
    cs("spo2", 96.7, 4.47, N, [-0.25, 0.0, 0.0], -0.2),
    cs("systolic_bp", 124.0, 25.1, N, [-0.4, 0.0, 0.0], 0.0),
    cs("temperature", 36.6, 1.03, N, [-0.1, 0.0, 0.0], -0.15),
    cs("urine_output", 214.0, 207.0, Ln, [-0.35, 0.0, 0.0], 0.0),
    cs("wbc_count", 12.7, 12.7, Ln, [0.2, 0.0, 0.0], 0.15),
    cs("albumin", 3.01, 0.61, N, [-0.35, 0.0, 0.0], -0.4),
];

// (name, prevalence, severity loading on the log-odds scale, effect)
const BINARY: [(&str, f64, f64, f64); 4] = [
    ("sex", 0.441, 0.0, 0.0),
    ("metastatic_cancer", 0.0576, 0.0, 0.9),
    ("diabetes", 0.284, 0.0, -0.05),
    ("mechanical_ventilation", 0.479, 0.8, 0.4),
];

const RACE_P: [f64; 5] = [72.7, 8.77, 3.37, 3.09, 12.1];
const MARITAL_P: [f64; 5] = [6.08, 44.1, 28.5, 14.7, 6.63];
const INSURANCE_P: [f64; 5] = [2.91, 9.86, 57.9, 28.5, 0.85];
const ADMISSION_P: [f64; 3] = [5.74, 93.1, 1.11];
const ADMISSION_EFFECT: [f64; 3] = [-0.6, 0.0, -0.2];

const CLINICAL_FILLER: &[&str] = &[
    "pt", "patient", "admitted", "micu", "icu", "nursing", "progress", "note", "plan", "assessment",
    "neuro", "cv", "resp", "gi", "gu", "id", "skin", "social", "family", "update", "aware", "sinus",
    "rhythm", "tachycardia", "bradycardia", "lungs", "clear", "coarse", "crackles", "bases",
    "diminished", "abdomen", "soft", "nontender", "distended", "bowel", "sounds", "present",
    "foley", "catheter", "draining", "yellow", "urine", "output", "adequate", "iv", "fluids",
    "bolus", "ns", "lr", "given", "received", "antibiotics", "vancomycin", "zosyn", "cefepime",
    "cultures", "sent", "blood", "sputum", "wbc", "elevated", "febrile", "temp", "max", "tylenol",
    "pain", "controlled", "morphine", "fentanyl", "sedation", "propofol", "weaning", "peep", "fio2",
    "abg", "sats", "nc", "liters", "face", "tent", "cough", "secretions", "suctioned", "thick",
    "tan", "white", "edema", "pitting", "extremities", "pulses", "palpable", "warm", "dry", "intact",
    "labs", "pending", "repeat", "am", "pm", "overnight", "today", "tomorrow", "continue", "monitor",
    "closely", "goal", "map", "sbp", "hr", "rr", "bp", "cxr", "ct", "scan", "head", "chest",
    "infiltrate", "pneumonia", "uti", "cellulitis", "line", "picc", "central", "art", "placed",
    "ordered", "md", "team", "rounds", "discussed", "consult", "renal", "surgery", "cardiology",
    "insulin", "sliding", "scale", "glucose", "npo", "diet", "tube", "feeds", "ogt", "ngt", "skin",
    "turned", "repositioned", "q2h", "bath", "mouth", "care", "daughter", "son", "wife", "husband",
    "called", "phone", "questions", "answered", "status", "full", "code", "remains", "unchanged",
    "noted", "per", "report", "history", "hx", "copd", "chf", "cad", "htn", "dm", "ckd", "afib",
    "sepsis", "septic", "infection", "source", "urinary", "hemodynamically",
];

pub const DEFAULT_RISK_TOKENS: &[&str] = &[
    "hypotensive", "pressors", "levophed", "intubated", "lactic", "coagulopathy", "dnr",
    "cmo", "anuric", "mottled", "unresponsive", "vasopressin",
];

pub const DEFAULT_PROTECTIVE_TOKENS: &[&str] = &[
    "ambulating", "tolerating", "alert", "oriented", "stable", "extubated", "afebrile", "improving",
];

fn default_n() -> usize {
    5396
}
fn default_hospital_rate() -> f64 {
    0.1294
}
fn default_30day_rate() -> f64 {
    0.1651
}
fn default_structured_weight() -> f64 {
    1.6
}
fn default_text_weight() -> f64 {
    1.3
}
fn default_token_rate() -> f64 {
    0.3
}
fn default_note_len() -> (usize, usize) {
    (80, 200)
}
fn default_outlier_rate() -> f64 {
    0.002
}
fn default_pseudo_words() -> usize {
    3000
}
fn default_missing_rate() -> f64 {
    0.01
}
fn default_missingness() -> BTreeMap<String, f64> {
    [
        ("bmi", 0.48),
        ("aspartate_aminotransferase", 0.41),
        ("base_excess", 0.35),
        ("bilirubin", 0.39),
        ("carbon_dioxide", 0.35),
        ("inr", 0.11),
        ("lactate", 0.33),
        ("ph", 0.33),
        ("ptt", 0.11),
        ("albumin", 0.48),
        ("age", 0.0),
        ("elixhauser_score", 0.0),
        ("sofa", 0.0),
        ("sirs", 0.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}
fn to_strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}
fn default_risk_tokens() -> Vec<String> {
    to_strings(DEFAULT_RISK_TOKENS)
}
fn default_protective_tokens() -> Vec<String> {
    to_strings(DEFAULT_PROTECTIVE_TOKENS)
}

/// Generator configuration. Every field has a default, so `{}` is a valid
/// JSON config for a full-size cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_hospital_rate")]
    pub hospital_rate: f64,
    #[serde(default = "default_30day_rate")]
    pub thirty_day_rate: f64,
    /// Missing-completely-at-random rate per continuous feature.
    #[serde(default = "default_missingness")]
    pub missingness: BTreeMap<String, f64>,
    /// Rate for continuous features absent from `missingness`.
    #[serde(default = "default_missing_rate")]
    pub default_missing_rate: f64,
    /// Log-odds standard deviation contributed by structured features.
    #[serde(default = "default_structured_weight")]
    pub structured_weight: f64,
    /// Log-odds standard deviation contributed by note tokens.
    #[serde(default = "default_text_weight")]
    pub text_weight: f64,
    #[serde(default = "default_risk_tokens")]
    pub risk_tokens: Vec<String>,
    #[serde(default = "default_protective_tokens")]
    pub protective_tokens: Vec<String>,
    /// Poisson mean count of each risk/protective token per note.
    #[serde(default = "default_token_rate")]
    pub token_rate: f64,
    /// Inclusive range of filler tokens per note.
    #[serde(default = "default_note_len")]
    pub note_length: (usize, usize),
    /// Probability that a continuous value is replaced by an implausible one.
    #[serde(default = "default_outlier_rate")]
    pub outlier_rate: f64,
    /// Size of the long-tail filler vocabulary.
    #[serde(default = "default_pseudo_words")]
    pub pseudo_words: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl SynthConfig {
    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::Config(format!("n must be at least 10, got {}", self.n)));
        }
        for (what, r) in [
            ("hospital_rate", self.hospital_rate),
            ("thirty_day_rate", self.thirty_day_rate),
        ] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::Config(format!("{what} must lie in (0, 1), got {r}")));
            }
        }
        let schema = FeatureSchema::default_sepsis();
        for (name, &r) in &self.missingness {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("missingness for `{name}` must lie in [0, 1)")));
            }
            if !CONTINUOUS.iter().any(|c| c.name == name) || schema.index_of(name).is_none() {
                return Err(Error::Config(format!("missingness given for non-continuous `{name}`")));
            }
        }
        if !(0.0..1.0).contains(&self.default_missing_rate) || !(0.0..1.0).contains(&self.outlier_rate)
        {
            return Err(Error::Config("rates must lie in [0, 1)".into()));
        }
        if self.structured_weight < 0.0 || self.text_weight < 0.0 {
            return Err(Error::Config("signal weights must be non-negative".into()));
        }
        if self.note_length.0 == 0 || self.note_length.0 > self.note_length.1 {
            return Err(Error::Config("note_length must be a non-empty range".into()));
        }
        if self.risk_tokens.is_empty() && self.text_weight > 0.0 {
            return Err(Error::Config("text_weight > 0 requires risk tokens".into()));
        }
        Ok(())
    }

    fn missing_rate(&self, name: &str) -> f64 {
        self.missingness
            .get(name)
            .copied()
            .unwrap_or(self.default_missing_rate)
    }
}

/// Ground truth recorded alongside a synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    /// Standardized structured score (mean 0, variance 1).
    pub structured_score: Vec<f64>,
    /// Standardized note-token score (mean 0, variance 1).
    pub text_score: Vec<f64>,
    pub intercept_hospital: f64,
    pub intercept_30day: f64,
    /// True log-odds of hospital mortality per record.
    pub logit_hospital: Vec<f64>,
    pub logit_30day: Vec<f64>,
}

fn standardize(v: &mut [f64]) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    for x in v {
        *x = (*x - mean) / sd;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intercept whose empirical positive rate `mean(u < sigmoid(b + eta))` is
/// closest to `target`, found by bisection on the monotone rate curve.
fn calibrate_intercept(eta: &[f64], u: &[f64], target: f64) -> f64 {
    let rate = |b: f64| {
        eta.iter()
            .zip(u)
            .filter(|(e, u)| **u < sigmoid(b + **e))
            .count() as f64
            / eta.len() as f64
    };
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if (rate(lo) - target).abs() <= (rate(hi) - target).abs() {
        lo
    } else {
        hi
    }
}

fn pick(rng: &mut Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn pseudo_word(mut i: usize) -> String {
    const CONS: &[u8] = b"bdfgklmnprstvz";
    const VOW: &[u8] = b"aeiou";
    let mut s = String::new();
    for _ in 0..3 {
        let syl = i % (CONS.len() * VOW.len());
        i /= CONS.len() * VOW.len();
        s.push(CONS[syl / VOW.len()] as char);
        s.push(VOW[syl % VOW.len()] as char);
    }
    s.push_str(["x", "q", "w", "j"][i % 4]);
    s
}

struct FillerSampler {
    words: Vec<String>,
    cdf: Vec<f64>,
}

impl FillerSampler {
    fn new(pseudo: usize, exclude: &[String]) -> Self {
        let stop_words: Vec<&str> = STOPWORD_FILE.lines().filter(|l| !l.is_empty()).collect();
        let mut words = Vec::new();
        let mut clinical = CLINICAL_FILLER.iter();
        let mut stops = stop_words.iter();
        loop {
            let a = clinical.next();
            let b = stops.next();
            if a.is_none() && b.is_none() {
                break;
            }
            if let Some(w) = b {
                words.push(w.to_string());
            }
            if let Some(w) = a {
                words.push(w.to_string());
            }
        }
        words.extend((0..pseudo).map(pseudo_word));
        words.retain(|w| !exclude.contains(w));
        let mut acc = 0.0;
        let cdf = (0..words.len())
            .map(|r| {
                acc += 1.0 / (r as f64 + 8.0).powf(1.05);
                acc
            })
            .collect();
        Self { words, cdf }
    }

    fn sample(&self, rng: &mut Rng) -> &str {
        let total = *self.cdf.last().expect("non-empty filler vocabulary");
        let u = rng.random::<f64>() * total;
        let i = self.cdf.partition_point(|&c| c <= u).min(self.words.len() - 1);
        &self.words[i]
    }
}

/// Generate a cohort; see [`synth_cohort_with_truth`].
pub fn synth_cohort(config: &SynthConfig, seed: u64) -> Result<Cohort> {
    synth_cohort_with_truth(config, seed).map(|(c, _)| c)
}

pub fn synth_cohort_with_truth(config: &SynthConfig, seed: u64) -> Result<(Cohort, SynthTruth)> {
    config.validate()?;
    let schema = FeatureSchema::default_sepsis();
    let ranges = PlausibleRangeTable::default_table();
    let n = config.n;

    let mut latent_rng = rng::stream(seed, 1);
    let mut cat_rng = rng::stream(seed, 2);
    let mut note_rng = rng::stream(seed, 3);
    let mut miss_rng = rng::stream(seed, 4);
    let mut label_rng = rng::stream(seed, 5);
    let mut outlier_rng = rng::stream(seed, 6);

    let mut values: Vec<Vec<Option<FeatureValue>>> = vec![vec![None; schema.len()]; n];
    let mut structured_raw = vec![0.0; n];

    for (i, row) in values.iter_mut().enumerate() {
        let factors: [f64; 3] = [
            latent_rng.sample(StandardNormal),
            latent_rng.sample(StandardNormal),
            latent_rng.sample(StandardNormal),
        ];
        let mut score = 0.0;
        for spec in &CONTINUOUS {
            let common: f64 = spec.loadings.iter().zip(&factors).map(|(l, f)| l * f).sum();
            let loading_sq: f64 = spec.loadings.iter().map(|l| l * l).sum();
            let e: f64 = latent_rng.sample(StandardNormal);
            let z = common + (1.0 - loading_sq).max(0.0).sqrt() * e;
            score += spec.effect * z;
            let raw = match spec.marginal {
                Marginal::Normal => spec.mean + spec.sd * z,
                Marginal::LogNormal => {
                    let s2 = (1.0 + (spec.sd / spec.mean).powi(2)).ln();
                    (spec.mean.ln() - 0.5 * s2 + s2.sqrt() * z).exp()
                }
            };
            let (lo, hi) = ranges.get(spec.name).expect("range for every continuous feature");
            let idx = schema.index_of(spec.name).expect("continuous feature in schema");
            row[idx] = Some(FeatureValue::Number(raw.clamp(lo, hi)));
        }
        for &(name, p, sev, effect) in &BINARY {
            let logit = (p / (1.0 - p)).ln() + sev * factors[0];
            let on = cat_rng.random::<f64>() < sigmoid(logit);
            score += effect * f64::from(u8::from(on));
            let idx = schema.index_of(name).expect("binary feature in schema");
            row[idx] = Some(FeatureValue::Number(f64::from(u8::from(on))));
        }
        for (name, cats, probs) in [
            ("race", &RACE_CATEGORIES[..], &RACE_P[..]),
            ("marital_status", &MARITAL_CATEGORIES[..], &MARITAL_P[..]),
            ("insurance", &INSURANCE_CATEGORIES[..], &INSURANCE_P[..]),
            ("admission_type", &ADMISSION_CATEGORIES[..], &ADMISSION_P[..]),
        ] {
            let k = pick(&mut cat_rng, probs);
            if name == "admission_type" {
                score += ADMISSION_EFFECT[k];
            }
            let idx = schema.index_of(name).expect("categorical feature in schema");
            row[idx] = Some(FeatureValue::Category(cats[k].to_string()));
        }
        structured_raw[i] = score;
    }

    // Implausible values, then MCAR missingness.
    for row in values.iter_mut() {
        for spec in &CONTINUOUS {
            let idx = schema.index_of(spec.name).expect("continuous feature in schema");
            if outlier_rng.random::<f64>() < config.outlier_rate {
                let (_, hi) = ranges.get(spec.name).expect("range");
                row[idx] = Some(FeatureValue::Number(hi * 10.0 + 1.0));
            }
            if miss_rng.random::<f64>() < config.missing_rate(spec.name) {
                row[idx] = None;
            }
        }
    }

    // Notes.
    let mut exclude = config.risk_tokens.clone();
    exclude.extend(config.protective_tokens.iter().cloned());
    let filler = FillerSampler::new(config.pseudo_words, &exclude);
    let risk_dist = Poisson::new(config.token_rate.max(1e-9)).map_err(|e| Error::Config(e.to_string()))?;
    let mut text_raw = vec![0.0; n];
    let mut notes = Vec::with_capacity(n);
    for t in text_raw.iter_mut() {
        let mut tokens: Vec<String> = Vec::new();
        for (group, sign) in [(&config.risk_tokens, 1.0), (&config.protective_tokens, -1.0)] {
            for tok in group {
                let count = risk_dist.sample(&mut note_rng) as usize;
                *t += sign * count as f64;
                tokens.extend(std::iter::repeat_n(tok.clone(), count));
            }
        }
        let len = note_rng.random_range(config.note_length.0..=config.note_length.1);
        for _ in 0..len {
            if note_rng.random::<f64>() < 0.06 {
                tokens.push(format!("{}", note_rng.random_range(1..400)));
            } else {
                tokens.push(filler.sample(&mut note_rng).to_string());
            }
        }
        if note_rng.random::<f64>() < 0.5 {
            tokens.push(format!("[**First Name {}**]", note_rng.random_range(1..9999)));
        }
        if note_rng.random::<f64>() < 0.3 {
            tokens.push(format!("[**Hospital {}**]", note_rng.random_range(1..99)));
        }
        tokens.shuffle(&mut note_rng);
        let mut text = String::new();
        for (k, tok) in tokens.iter().enumerate() {
            if k > 0 {
                text.push(if k % 13 == 0 { '\n' } else { ' ' });
            }
            if k % 13 == 0 {
                let mut c = tok.chars();
                if let Some(f) = c.next() {
                    text.extend(f.to_uppercase());
                    text.push_str(c.as_str());
                }
            } else {
                text.push_str(tok);
            }
            if k % 13 == 12 {
                text.push('.');
            }
        }
        notes.push(text);
    }

    standardize(&mut structured_raw);
    standardize(&mut text_raw);
    let eta: Vec<f64> = structured_raw
        .iter()
        .zip(&text_raw)
        .map(|(s, t)| config.structured_weight * s + config.text_weight * t)
        .collect();
    let u: Vec<f64> = (0..n).map(|_| label_rng.random::<f64>()).collect();
    let b_h = calibrate_intercept(&eta, &u, config.hospital_rate);
    let b_30 = calibrate_intercept(&eta, &u, config.thirty_day_rate);

    let records = values
        .into_iter()
        .zip(notes)
        .enumerate()
        .map(|(i, (values, note_text))| PatientRecord {
            id: format!("P{:06}", i + 1),
            values,
            note_text,
            label_hospital: u[i] < sigmoid(b_h + eta[i]),
            label_30day: u[i] < sigmoid(b_30 + eta[i]),
        })
        .collect();
    let cohort = Cohort::new(schema, records)?;
    let truth = SynthTruth {
        logit_hospital: eta.iter().map(|e| e + b_h).collect(),
        logit_30day: eta.iter().map(|e| e + b_30).collect(),
        structured_score: structured_raw,
        text_score: text_raw,
        intercept_hospital: b_h,
        intercept_30day: b_30,
    };
    Ok((cohort, truth))
}

/// Name of the continuous feature with the largest ground-truth effect.
pub fn strongest_structured_feature() -> &'static str {
    CONTINUOUS
        .iter()
        .max_by(|a, b| a.effect.abs().total_cmp(&b.effect.abs()))
        .map(|c| c.name)
        .expect("non-empty table")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        assert!(SynthConfig::default().with_n(9).validate().is_err());
        let mut c = SynthConfig::default();
        c.hospital_rate = 0.0;
        assert!(c.validate().is_err());
        c.hospital_rate = 1.0;
        assert!(c.validate().is_err());
        let mut c = SynthConfig::default();
        c.missingness.insert("race".into(), 0.1);
        assert!(c.validate().is_err());
        assert!(synth_cohort(&SynthConfig::default().with_n(5), 1).is_err());
    }

    #[test]
    fn small_cohort_is_valid_and_deterministic() {
        let cfg = SynthConfig::default().with_n(200);
        let a = synth_cohort(&cfg, 11).unwrap();
        let b = synth_cohort(&cfg, 11).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let c = synth_cohort(&cfg, 12).unwrap();
        assert_ne!(a.to_jsonl(), c.to_jsonl());
        assert!(a.records.iter().all(|r| !r.note_text.trim().is_empty()));
        a.validate().unwrap();
    }

    #[test]
    fn thirty_day_deaths_include_hospital_deaths() {
        let c = synth_cohort(&SynthConfig::default().with_n(500), 3).unwrap();
        assert!(c
            .records
            .iter()
            .all(|r| !r.label_hospital || r.label_30day));
    }

    #[test]
    fn intercept_bisection_hits_target() {
        let eta: Vec<f64> = (0..1000).map(|i| (i as f64 / 100.0).sin()).collect();
        let u: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        let b = calibrate_intercept(&eta, &u, 0.2);
        let rate = eta
            .iter()
            .zip(&u)
            .filter(|(e, u)| **u < sigmoid(b + **e))
            .count() as f64
            / 1000.0;
        assert!((rate - 0.2).abs() <= 0.002);
    }

    #[test]
    fn strongest_feature_is_sofa() {
        assert_eq!(strongest_structured_feature(), "sofa");
    }
}
