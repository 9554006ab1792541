use std::collections::HashSet;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::rng::Rng;
use crate::scalar::Scalar;

use super::vocab::{Vocabulary, PAD};

/// Half-width of the uniform initializer for rows without a pretrained vector.
pub const INIT_RANGE: f64 = 0.05;

/// One row per vocabulary index; row `PAD` is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable<T> {
    matrix: Tensor<T>,
}

impl<T: Scalar> EmbeddingTable<T> {
    pub fn random(vocab_size: usize, dim: usize, rng: &mut Rng) -> Self {
        let data = (0..vocab_size * dim)
            .map(|_| T::lit(rng.uniform(-INIT_RANGE, INIT_RANGE)))
            .collect();
        let mut table = EmbeddingTable {
            matrix: Tensor::from_vec(&[vocab_size, dim], data).expect("positive dimensions"),
        };
        table.zero_pad();
        table
    }

    pub fn from_matrix(matrix: Tensor<T>) -> Result<Self> {
        matrix.dims2()?;
        let mut table = EmbeddingTable { matrix };
        table.zero_pad();
        Ok(table)
    }

    fn zero_pad(&mut self) {
        self.matrix.row_mut(PAD).fill(T::zero());
    }

    pub fn vocab_size(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.matrix.shape()[1]
    }

    pub fn matrix(&self) -> &Tensor<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Tensor<T> {
        self.matrix
    }

    pub fn row(&self, index: usize) -> &[T] {
        self.matrix.row(index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingLoad {
    /// Vocabulary words (PAD/UNK excluded) that had a vector in the file.
    pub found: usize,
    pub vocab_words: usize,
    pub coverage: f64,
    pub duplicates: usize,
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let mut fields = line.split_whitespace();
    let count = fields.next()?.parse().ok()?;
    let dim = fields.next()?.parse().ok()?;
    fields.next().is_none().then_some((count, dim))
}

/// Reads textual word vectors (`word v1 … vdim` per line, optional
/// `<count> <dim>` header). Words missing from the file are initialized
/// uniformly in `[-INIT_RANGE, INIT_RANGE]` from `seed`.
pub fn load_embeddings<T: Scalar>(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    expected_dim: usize,
    seed: u64,
) -> Result<(EmbeddingTable<T>, EmbeddingLoad)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut table = EmbeddingTable::random(vocab.len(), expected_dim, &mut Rng::new(seed));
    let mut seen = HashSet::new();
    let mut duplicates = 0;
    let mut first = true;

    for (number, line) in text.lines().enumerate() {
        let line_no = number as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        if std::mem::take(&mut first) {
            if let Some((_, dim)) = parse_header(line) {
                if dim != expected_dim {
                    return Err(Error::parse(path, line_no, format!("file dimension {dim}, expected {expected_dim}")));
                }
                continue;
            }
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-empty line");
        let values: Vec<&str> = fields.collect();
        if values.len() != expected_dim {
            return Err(Error::parse(
                path,
                line_no,
                format!("vector for {word:?} has {} components, expected {expected_dim}", values.len()),
            ));
        }
        let vector = values
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| Error::parse(path, line_no, format!("malformed float {v:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if !seen.insert(word.to_owned()) {
            duplicates += 1;
            log::warn!("{}:{line_no}: duplicate vector for {word:?}, keeping the first", path.display());
            continue;
        }
        if let Some(index) = vocab.get(word) {
            for (dst, &v) in table.matrix.row_mut(index).iter_mut().zip(&vector) {
                *dst = T::lit(v);
            }
        }
    }

    let vocab_words = vocab.len() - 2;
    let found = (2..vocab.len())
        .filter(|&i| vocab.token(i).is_some_and(|t| seen.contains(t)))
        .count();
    table.zero_pad();
    let stats = EmbeddingLoad {
        found,
        vocab_words,
        coverage: if vocab_words == 0 { 0.0 } else { found as f64 / vocab_words as f64 },
        duplicates,
    };
    Ok((table, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::build_vocabulary;

    fn vocab() -> Vocabulary {
        build_vocabulary(&[vec!["سمح".into(), "زول".into()]], None).unwrap()
    }

    fn write(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vec.txt");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn copies_rows_and_initializes_the_rest() {
        let (_d, path) = write("2 2\nسمح 0.1 0.2\nother 1 1\n");
        let v = vocab();
        let (table, stats) = load_embeddings::<f64>(&path, &v, 2, 3).unwrap();
        assert_eq!(table.row(v.index("سمح")), &[0.1, 0.2]);
        assert!(table.row(v.index("زول")).iter().all(|x| x.abs() <= INIT_RANGE));
        assert_eq!(table.row(PAD), &[0.0, 0.0]);
        assert_eq!(stats.found, 1);
        assert!((stats.coverage - 0.5).abs() < 1e-12);
    }

    #[test]
    fn header_is_optional() {
        let (_d, path) = write("سمح 0.1 0.2\n");
        let (table, _) = load_embeddings::<f64>(&path, &vocab(), 2, 0).unwrap();
        assert_eq!(table.row(vocab().index("سمح")), &[0.1, 0.2]);
    }

    #[test]
    fn dimension_mismatch() {
        let (_d, path) = write("1 300\nسمح 0.1\n");
        assert!(load_embeddings::<f64>(&path, &vocab(), 128, 0).is_err());
        let (_d, path) = write("سمح 0.1 0.2 0.3\n");
        let err = load_embeddings::<f64>(&path, &vocab(), 2, 0).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    #[test]
    fn malformed_float() {
        let (_d, path) = write("سمح 0.1 abc\n");
        assert!(load_embeddings::<f64>(&path, &vocab(), 2, 0).unwrap_err().to_string().contains("abc"));
    }

    #[test]
    fn duplicate_keeps_first() {
        let (_d, path) = write("سمح 0.1 0.2\nسمح 0.9 0.9\n");
        let (table, stats) = load_embeddings::<f64>(&path, &vocab(), 2, 0).unwrap();
        assert_eq!(table.row(vocab().index("سمح")), &[0.1, 0.2]);
        assert_eq!(stats.duplicates, 1);
    }

    #[test]
    fn pad_row_zero_even_if_file_names_it() {
        let (_d, path) = write("<pad> 5 5\n");
        let (table, _) = load_embeddings::<f64>(&path, &vocab(), 2, 0).unwrap();
        assert_eq!(table.row(PAD), &[0.0, 0.0]);
    }
}
