use crate::cohort::{encode, filter_outliers, fit_encoder, Cohort, PlausibleRangeTable, StructuredEncoder};
use crate::error::Result;
use crate::impute::{apply_imputation, impute_fit_transform, ImputationModel, ImputeConfig, IncompleteMatrix};
use crate::matrix::{CsrMatrix, DenseMatrix, SparseVector};
use crate::neural::{token_ids, CnnData};
use crate::textfeat::{build_vocab, fuse, preprocess_note, tfidf_fit, StopWords, TfIdfModel};

use super::config::FeatureSet;

/// Analysis cohort after range filtering and dropping empty notes, with each
/// note tokenized once.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub cohort: Cohort,
    pub tokens: Vec<Vec<String>>,
}

impl Prepared {
    pub fn new(cohort: &Cohort, ranges: &PlausibleRangeTable, stopwords: &StopWords) -> Self {
        let (filtered, report) = filter_outliers(&cohort.without_empty_notes(), ranges);
        let removed: usize = report.values().sum();
        if removed > 0 {
            log::info!("range filter blanked {removed} implausible values");
        }
        let tokens = filtered
            .records
            .iter()
            .map(|r| preprocess_note(&r.note_text, stopwords))
            .collect();
        Self {
            cohort: filtered,
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.cohort.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cohort.is_empty()
    }
}

/// Featurized rows on one side of a fit/eval partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub structured: DenseMatrix,
    pub text: Vec<SparseVector>,
    pub token_ids: Vec<Vec<u32>>,
}

impl Block {
    pub fn len(&self) -> usize {
        self.text.len()
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }

    pub fn matrix(&self, fs: FeatureSet) -> Result<CsrMatrix> {
        let text_dim = self.text.first().map_or(0, SparseVector::dim);
        match fs {
            FeatureSet::Structured => Ok(CsrMatrix::from_dense(&self.structured)),
            FeatureSet::Notes => CsrMatrix::from_sparse_rows(text_dim, &self.text),
            FeatureSet::Combined => {
                let rows: Vec<SparseVector> = self
                    .text
                    .iter()
                    .enumerate()
                    .map(|(r, t)| fuse(self.structured.row(r), t))
                    .collect();
                CsrMatrix::from_sparse_rows(self.structured.cols() + text_dim, &rows)
            }
        }
    }

    /// CNN input; the structured block is empty for notes-only.
    pub fn sequences(&self, fs: FeatureSet) -> Result<CnnData> {
        let structured = if fs.uses_structured() {
            self.structured.clone()
        } else {
            DenseMatrix::zeros(self.len(), 0)
        };
        CnnData::new(self.token_ids.clone(), structured)
    }
}

/// Transformers fitted on the fit rows only, and both featurized blocks.
#[derive(Debug, Clone)]
pub struct FoldFeatures {
    pub imputation: ImputationModel,
    pub encoder: StructuredEncoder,
    pub tfidf: TfIdfModel,
    pub fit: Block,
    pub eval: Block,
}

impl FoldFeatures {
    /// Names of the columns of [`Block::matrix`] for `fs`.
    pub fn column_names(&self, fs: FeatureSet) -> Vec<String> {
        let mut names = Vec::new();
        if fs.uses_structured() {
            names.extend(self.encoder.column_names());
        }
        if fs.uses_notes() {
            names.extend(self.tfidf.vocab().tokens().iter().map(|t| format!("tok:{t}")));
        }
        names
    }

    pub fn structured_dim(&self, fs: FeatureSet) -> usize {
        if fs.uses_structured() {
            self.encoder.n_columns()
        } else {
            0
        }
    }
}

/// Fit imputation, encoder, vocabulary and tf-idf on `fit_rows` and
/// transform both `fit_rows` and `eval_rows`. Nothing from `eval_rows`
/// reaches a fitted transformer.
pub fn featurize(
    data: &Prepared,
    fit_rows: &[usize],
    eval_rows: &[usize],
    min_df: usize,
    impute_cycles: usize,
    seed: u64,
) -> Result<FoldFeatures> {
    let fit_cohort = data.cohort.select(fit_rows);
    let eval_cohort = data.cohort.select(eval_rows);

    let (_, fit_block) = fit_cohort.continuous_block();
    let (completed, imputation) = impute_fit_transform(
        &IncompleteMatrix::from_rows(&fit_block)?,
        &ImputeConfig {
            cycles: impute_cycles,
            seed,
            add_noise: true,
        },
    )?;
    let (_, eval_block) = eval_cohort.continuous_block();
    let eval_completed = apply_imputation(&imputation, &IncompleteMatrix::from_rows(&eval_block)?)?;
    let fit_cohort = fit_cohort.with_continuous_block(&completed)?;
    let eval_cohort = eval_cohort.with_continuous_block(&eval_completed)?;

    let encoder = fit_encoder(&fit_cohort)?;
    let fit_tokens: Vec<Vec<String>> = fit_rows.iter().map(|&i| data.tokens[i].clone()).collect();
    let tfidf = tfidf_fit(&build_vocab(&fit_tokens, min_df)?);

    let block = |cohort: &Cohort, rows: &[usize]| -> Result<Block> {
        Ok(Block {
            structured: encode(&encoder, cohort)?,
            text: rows.iter().map(|&i| tfidf.transform(&data.tokens[i])).collect(),
            token_ids: rows.iter().map(|&i| token_ids(&data.tokens[i], tfidf.vocab())).collect(),
        })
    };
    let fit = block(&fit_cohort, fit_rows)?;
    let eval = block(&eval_cohort, eval_rows)?;
    Ok(FoldFeatures {
        imputation,
        encoder,
        tfidf,
        fit,
        eval,
    })
}
