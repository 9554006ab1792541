//! Turning token sequences into model inputs: vocabulary, fixed-length index
//! encoding, TF-IDF weights and pretrained embedding tables.

mod embeddings;
mod tfidf;
mod vocab;

pub use embeddings::{load_embeddings, EmbeddingLoad, EmbeddingTable, INIT_RANGE};
pub use tfidf::{apply_tfidf, fit_tfidf, TfIdfModel};
pub use vocab::{build_vocabulary, encode, encode_with, EncodedSequence, Truncation, Vocabulary, PAD, UNK};
