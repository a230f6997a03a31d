//! Clinical note featurization: PHI-mask removal, unigram tokenization,
//! document-frequency pruning and tf-idf weighting, plus fusion with the
//! encoded structured block.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::matrix::SparseVector;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Default minimum document frequency.
pub const DEFAULT_MIN_DF: usize = 10;

fn phi_mask() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)\[\*\*.*?\*\*\]").expect("static regex"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    /// The bundled 313-token list.
    pub fn default_list() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    /// One token per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .collect(),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn empty() -> Self {
        Self(HashSet::new())
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for StopWords {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// Strip `[** ... **]` masks, lowercase, split on non-alphanumerics and drop
/// pure-digit tokens and stop words.
pub fn preprocess_note(text: &str, stopwords: &StopWords) -> Vec<String> {
    let unmasked = phi_mask().replace_all(text, " ");
    let lower = unmasked.to_lowercase();
    lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .filter(|t| !t.chars().all(|c| c.is_ascii_digit()))
        .filter(|t| !stopwords.contains(t))
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    df: Vec<usize>,
    n_docs: usize,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    df: Vec<usize>,
    n_docs: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_parts(r.tokens, r.df, r.n_docs)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            df: v.df,
            n_docs: v.n_docs,
        }
    }
}

impl Vocabulary {
    fn from_parts(tokens: Vec<String>, df: Vec<usize>, n_docs: usize) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            tokens,
            index,
            df,
            n_docs,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn df(&self, token: &str) -> Option<usize> {
        self.index_of(token).map(|i| self.df[i])
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// `#N=<count>` header, then `token<TAB>df` per line.
    pub fn to_file_string(&self) -> String {
        let mut out = format!("#N={}\n", self.n_docs);
        for (t, df) in self.tokens.iter().zip(&self.df) {
            out.push_str(&format!("{t}\t{df}\n"));
        }
        out
    }

    pub fn parse_file_string(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let n_docs = match lines.next() {
            Some((_, h)) => h
                .strip_prefix("#N=")
                .and_then(|n| n.trim().parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: 1,
                    message: "expected header `#N=<count>`".into(),
                })?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty vocabulary file".into(),
                })
            }
        };
        let mut tokens = Vec::new();
        let mut df = Vec::new();
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            let (tok, count) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected `token<TAB>df`".into(),
            })?;
            let count = count.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("bad document frequency `{count}`"),
            })?;
            tokens.push(tok.to_string());
            df.push(count);
        }
        Ok(Self::from_parts(tokens, df, n_docs))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_file_string(&text)
    }
}

/// Count document frequencies, drop tokens below `min_df` and order the
/// survivors lexicographically.
pub fn build_vocab<S: AsRef<str>>(token_docs: &[Vec<S>], min_df: usize) -> Result<Vocabulary> {
    if token_docs.is_empty() {
        return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
    }
    if min_df == 0 {
        return Err(Error::invalid("min_df must be at least 1"));
    }
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    for doc in token_docs {
        let uniq: HashSet<&str> = doc.iter().map(AsRef::as_ref).collect();
        for t in uniq {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let (tokens, counts): (Vec<String>, Vec<usize>) = df
        .into_iter()
        .filter(|&(_, c)| c >= min_df)
        .map(|(t, c)| (t.to_string(), c))
        .unzip();
    Ok(Vocabulary::from_parts(tokens, counts, token_docs.len()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    vocab: Vocabulary,
    idf: Vec<f64>,
    normalize: bool,
}

/// Smoothed idf: `ln((1 + N) / (1 + df)) + 1`, always positive.
pub fn smoothed_idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

pub fn tfidf_fit(vocab: &Vocabulary) -> TfIdfModel {
    TfIdfModel::new(vocab.clone(), true)
}

pub fn tfidf_transform<S: AsRef<str>>(model: &TfIdfModel, tokens: &[S]) -> SparseVector {
    model.transform(tokens)
}

impl TfIdfModel {
    pub fn new(vocab: Vocabulary, normalize: bool) -> Self {
        let idf = vocab
            .df
            .iter()
            .map(|&df| smoothed_idf(vocab.n_docs, df))
            .collect();
        Self {
            vocab,
            idf,
            normalize,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn dim(&self) -> usize {
        self.vocab.len()
    }

    /// Raw term counts times idf, L2-normalized unless all zero. Tokens
    /// outside the vocabulary are ignored.
    pub fn transform<S: AsRef<str>>(&self, tokens: &[S]) -> SparseVector {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in tokens {
            if let Some(i) = self.vocab.index_of(t.as_ref()) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        let pairs = counts
            .into_iter()
            .map(|(i, tf)| (i, tf * self.idf[i]))
            .collect();
        let mut v = SparseVector::from_pairs(self.dim(), pairs).expect("indices come from the vocabulary");
        if self.normalize {
            let norm = v.norm();
            if norm > 0.0 {
                v.scale_in_place(1.0 / norm);
            }
        }
        v
    }
}

/// Concatenate a dense structured row (columns `0..d_s`) with a text vector
/// offset by `d_s`. Zero structured entries are not stored.
pub fn fuse(structured_row: &[f64], text_vec: &SparseVector) -> SparseVector {
    let ds = structured_row.len();
    let mut pairs: Vec<(usize, f64)> = structured_row
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, &v)| (i, v))
        .collect();
    pairs.extend(text_vec.iter().map(|(i, v)| (i + ds, v)));
    SparseVector::from_pairs(ds + text_vec.dim(), pairs).expect("disjoint blocks")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn preprocess_removes_phi_and_stopwords() {
        let sw: StopWords = ["by"].into_iter().collect();
        assert_eq!(
            preprocess_note("Pt seen by [**First Name 123**] today", &sw),
            toks(&["pt", "seen", "today"])
        );
        assert!(preprocess_note("", &sw).is_empty());
        let the: StopWords = ["the"].into_iter().collect();
        assert!(preprocess_note("THE the The", &the).is_empty());
        assert_eq!(
            preprocess_note("bp 120/80, hr 98.6 x2 [**Hospital\n1**]", &StopWords::empty()),
            toks(&["bp", "hr", "x2"])
        );
    }

    #[test]
    fn default_stop_list_has_313_entries() {
        assert_eq!(StopWords::default_list().len(), 313);
        assert_eq!(DEFAULT_STOPWORDS.lines().filter(|l| !l.is_empty()).count(), 313);
    }

    #[test]
    fn vocab_counts_and_pruning() {
        let docs = vec![toks(&["a", "b"]), toks(&["a", "a"]), toks(&["c"])];
        let v = build_vocab(&docs, 2).unwrap();
        assert_eq!(v.tokens(), &["a".to_string()]);
        assert_eq!(v.df("a"), Some(2));
        assert_eq!(v.n_docs(), 3);
        let all = build_vocab(&docs, 1).unwrap();
        assert_eq!(all.tokens(), &toks(&["a", "b", "c"])[..]);
        assert!(build_vocab::<String>(&[], 1).is_err());

        let nine: Vec<Vec<String>> = (0..20)
            .map(|i| if i < 9 { toks(&["rare", "x"]) } else { toks(&["x"]) })
            .collect();
        let v = build_vocab(&nine, DEFAULT_MIN_DF).unwrap();
        assert_eq!(v.index_of("rare"), None);
        assert_eq!(v.df("x"), Some(20));
    }

    #[test]
    fn tfidf_worked_example() {
        let sw = StopWords::empty();
        let docs: Vec<Vec<String>> = ["sepsis shock", "sepsis fever", "fever"]
            .iter()
            .map(|d| preprocess_note(d, &sw))
            .collect();
        let model = tfidf_fit(&build_vocab(&docs, 1).unwrap());
        assert_eq!(model.vocab().tokens(), &toks(&["fever", "sepsis", "shock"])[..]);
        let v = model.transform(&docs[0]).to_dense();
        assert_abs_diff_eq!(v[0], 0.0);
        assert_abs_diff_eq!(v[1], 0.6053, epsilon = 1e-4);
        assert_abs_diff_eq!(v[2], 0.7960, epsilon = 1e-4);

        let every = tfidf_fit(&build_vocab(&[toks(&["x"]), toks(&["x"])], 1).unwrap());
        assert_abs_diff_eq!(every.idf()[0], 1.0);

        let oov = model.transform(&toks(&["unknown"]));
        assert_eq!(oov.nnz(), 0);
        assert_eq!(oov.dim(), 3);
    }

    #[test]
    fn fuse_layout() {
        let text = SparseVector::from_pairs(1, vec![(0, 0.8)]).unwrap();
        let f = fuse(&[1.5, -0.5], &text);
        assert_eq!(f.iter().collect::<Vec<_>>(), vec![(0, 1.5), (1, -0.5), (2, 0.8)]);
        let text = SparseVector::from_pairs(100, vec![(3, 0.6), (7, 0.8)]).unwrap();
        let f = fuse(&[0.0; 58], &text);
        assert_eq!(f.dim(), 158);
        assert_eq!(f.iter().collect::<Vec<_>>(), vec![(61, 0.6), (65, 0.8)]);
        assert_eq!(f.slice(58, 158), text);
    }

    #[test]
    fn vocab_file_round_trip() {
        let docs = vec![toks(&["b", "a"]), toks(&["a"])];
        let v = build_vocab(&docs, 1).unwrap();
        let text = v.to_file_string();
        assert!(text.starts_with("#N=2\na\t2\nb\t1\n"));
        assert_eq!(Vocabulary::parse_file_string(&text).unwrap(), v);
        assert!(Vocabulary::parse_file_string("a\t1\n").is_err());
    }
}
