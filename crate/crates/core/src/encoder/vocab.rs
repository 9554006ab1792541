use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_index: HashMap<String, usize>,
    index_to_token: Vec<String>,
    frequencies: Vec<u64>,
    max_features: Option<usize>,
}

impl Vocabulary {
    fn from_ranked(ranked: Vec<(String, u64)>, max_features: Option<usize>) -> Self {
        let mut index_to_token = vec![PAD_TOKEN.to_owned(), UNK_TOKEN.to_owned()];
        let mut frequencies = vec![0, 0];
        for (token, freq) in ranked {
            index_to_token.push(token);
            frequencies.push(freq);
        }
        let token_to_index = index_to_token.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary {
            token_to_index,
            index_to_token,
            frequencies,
            max_features,
        }
    }

    /// Total size including the reserved PAD and UNK entries.
    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 2
    }

    pub fn max_features(&self) -> Option<usize> {
        self.max_features
    }

    pub fn index(&self, token: &str) -> usize {
        self.token_to_index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied().filter(|&i| i > UNK)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.index_to_token.get(index).map(String::as_str)
    }

    pub fn frequency(&self, index: usize) -> u64 {
        self.frequencies.get(index).copied().unwrap_or(0)
    }

    /// `index<TAB>token<TAB>frequency` lines.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (i, (token, freq)) in self.index_to_token.iter().zip(&self.frequencies).enumerate() {
            let _ = writeln!(out, "{i}\t{token}\t{freq}");
        }
        out
    }

    pub fn parse_dump(text: &str, origin: &Path) -> Result<Self> {
        let mut ranked = Vec::new();
        for (number, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let line_no = number as u64 + 1;
            let fields: Vec<&str> = line.split('\t').collect();
            let [index, token, freq] = fields[..] else {
                return Err(Error::parse(origin, line_no, "expected index<TAB>token<TAB>frequency"));
            };
            let index: usize = index.parse().map_err(|_| Error::parse(origin, line_no, "bad index"))?;
            let freq: u64 = freq.parse().map_err(|_| Error::parse(origin, line_no, "bad frequency"))?;
            if index != number {
                return Err(Error::parse(origin, line_no, format!("index {index} out of sequence")));
            }
            let expected_reserved = [PAD_TOKEN, UNK_TOKEN].get(index);
            match expected_reserved {
                Some(&reserved) if token != reserved => {
                    return Err(Error::parse(origin, line_no, format!("index {index} must be {reserved}")))
                }
                Some(_) => {}
                None => ranked.push((token.to_owned(), freq)),
            }
        }
        if ranked.iter().any(|(t, _)| t == PAD_TOKEN || t == UNK_TOKEN) {
            return Err(Error::parse(origin, 0, "reserved token repeated"));
        }
        let vocab = Vocabulary::from_ranked(ranked, None);
        if vocab.token_to_index.len() != vocab.index_to_token.len() {
            return Err(Error::parse(origin, 0, "duplicate token in vocabulary dump"));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.dump()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_dump(&text, path)
    }

    /// SHA-256 of the index/token columns, hex encoded. Frequencies are not
    /// part of the identity.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (i, token) in self.index_to_token.iter().enumerate() {
            hasher.update(format!("{i}\t{token}\n").as_bytes());
        }
        hasher.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Ranks tokens by descending frequency, ties broken lexicographically, and
/// keeps the top `max_features` (all when `None`). PAD and UNK come first.
pub fn build_vocabulary(corpus: &[Vec<String>], max_features: Option<usize>) -> Result<Vocabulary> {
    if corpus.is_empty() {
        return Err(Error::data("cannot build a vocabulary from an empty corpus"));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for token in corpus.iter().flatten() {
        if token != PAD_TOKEN && token != UNK_TOKEN {
            *counts.entry(token.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().map(|(t, c)| (t.to_owned(), c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(max) = max_features {
        ranked.truncate(max);
    }
    Ok(Vocabulary::from_ranked(ranked, max_features))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Truncation {
    /// Keep the first `max_len` tokens.
    #[default]
    KeepHead,
    /// Keep the last `max_len` tokens.
    KeepTail,
}

impl Truncation {
    pub fn id(self) -> &'static str {
        match self {
            Truncation::KeepHead => "keep-head",
            Truncation::KeepTail => "keep-tail",
        }
    }
}

impl FromStr for Truncation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keep-head" => Ok(Truncation::KeepHead),
            "keep-tail" => Ok(Truncation::KeepTail),
            _ => Err(Error::config(format!("truncation must be keep-head or keep-tail, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    pub indices: Vec<usize>,
    pub true_length: usize,
    /// Optional per-position multipliers for the embedded vectors (TF-IDF).
    pub weights: Option<Vec<f64>>,
}

pub fn encode(tokens: &[String], vocab: &Vocabulary, max_len: usize) -> EncodedSequence {
    encode_with(tokens, vocab, max_len, Truncation::KeepHead)
}

/// Maps tokens to indices, truncating or padding (at the tail) to `max_len`.
pub fn encode_with(tokens: &[String], vocab: &Vocabulary, max_len: usize, truncation: Truncation) -> EncodedSequence {
    assert!(max_len >= 1, "max_len must be at least 1");
    let kept = match truncation {
        Truncation::KeepHead => &tokens[..tokens.len().min(max_len)],
        Truncation::KeepTail => &tokens[tokens.len().saturating_sub(max_len)..],
    };
    let mut indices: Vec<usize> = kept.iter().map(|t| vocab.index(t)).collect();
    let true_length = indices.len();
    indices.resize(max_len, PAD);
    EncodedSequence {
        indices,
        true_length,
        weights: None,
    }
}
