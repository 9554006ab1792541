use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

/// Smoothed inverse document frequencies:
/// `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfModel {
    idf: HashMap<String, f64>,
    document_count: usize,
}

impl TfIdfModel {
    /// Rebuilds a fitted model, e.g. from a checkpoint.
    pub fn from_parts(document_count: usize, idf: impl IntoIterator<Item = (String, f64)>) -> Self {
        TfIdfModel {
            idf: idf.into_iter().collect(),
            document_count,
        }
    }

    /// Known tokens and their idf, sorted by token.
    pub fn entries(&self) -> Vec<(&str, f64)> {
        let mut out: Vec<(&str, f64)> = self.idf.iter().map(|(t, &v)| (t.as_str(), v)).collect();
        out.sort_by(|a, b| a.0.cmp(b.0));
        out
    }

    pub fn document_count(&self) -> usize {
        self.document_count
    }

    /// Unseen tokens get `ln(1 + N) + 1`, the df = 0 value.
    pub fn idf(&self, token: &str) -> f64 {
        self.idf
            .get(token)
            .copied()
            .unwrap_or_else(|| (1.0 + self.document_count as f64).ln() + 1.0)
    }
}

pub fn fit_tfidf(corpus: &[Vec<String>]) -> Result<TfIdfModel> {
    if corpus.is_empty() {
        return Err(Error::data("cannot fit TF-IDF on an empty corpus"));
    }
    let mut df: HashMap<&str, usize> = HashMap::new();
    for doc in corpus {
        let unique: HashSet<&str> = doc.iter().map(String::as_str).collect();
        for t in unique {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = corpus.len() as f64;
    let idf = df
        .into_iter()
        .map(|(t, d)| (t.to_owned(), ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0))
        .collect();
    Ok(TfIdfModel {
        idf,
        document_count: corpus.len(),
    })
}

/// `tf(t) · idf(t)` for each token position, with `tf = count(t) / len(doc)`.
pub fn apply_tfidf(model: &TfIdfModel, tokens: &[String]) -> Vec<f64> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in tokens {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let len = tokens.len() as f64;
    tokens
        .iter()
        .map(|t| counts[t.as_str()] as f64 / len * model.idf(t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn doc(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn token_in_every_document() {
        let model = fit_tfidf(&[doc(&["a", "b"]), doc(&["a"])]).unwrap();
        assert!((model.idf("a") - 1.0).abs() < 1e-15);
        assert!((model.idf("b") - ((3.0f64 / 2.0).ln() + 1.0)).abs() < 1e-15);
        assert!((model.idf("never") - (3.0f64.ln() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn single_document_weight() {
        let d = doc(&["a", "b", "c", "d"]);
        let model = fit_tfidf(std::slice::from_ref(&d)).unwrap();
        let w = apply_tfidf(&model, &d);
        assert!((w[0] - 0.25).abs() < 1e-15);
        assert!(apply_tfidf(&model, &[]).is_empty());
    }

    #[test]
    fn empty_corpus() {
        assert!(fit_tfidf(&[]).is_err());
    }

    proptest! {
        #[test]
        fn weights_positive(corpus in prop::collection::vec(prop::collection::vec("[a-d]", 0..6), 1..6)) {
            let model = fit_tfidf(&corpus).unwrap();
            for d in &corpus {
                prop_assert!(apply_tfidf(&model, d).iter().all(|&w| w > 0.0));
            }
        }
    }
}
