//! Corpus ingestion, normalization and vocabulary construction.

mod corpus;
mod vocab;

pub use corpus::{load_corpus, normalize_line, word_frequencies, Corpus, NormalizeOptions, Sentence};
pub use vocab::{build_vocabulary, WordId, Vocabulary, BOS, EOS, RESERVED, UNK};
