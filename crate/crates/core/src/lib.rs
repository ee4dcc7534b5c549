//! Text-side toolkit for conversational telephone ASR: n-gram language
//! models with modified Kneser-Ney smoothing, dev-set interpolation, entropy
//! pruning, joint-sequence G2P lexicon extension, dialect-word mapping and
//! WER/CER scoring.

pub mod dialect;
pub mod error;
pub mod g2p;
pub mod mixture;
pub mod ngram;
pub mod par;
pub mod pipeline;
pub mod prune;
pub mod score;
pub mod text;

pub use error::{Error, Result};
