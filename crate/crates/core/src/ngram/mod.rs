//! Back-off n-gram language models: counting, modified Kneser-Ney training,
//! ARPA interchange, perplexity and OOV evaluation.

mod arpa;
mod counts;
mod discount;
mod eval;
mod mkn;
mod model;

pub use arpa::{format_log10, read_arpa, read_arpa_str, write_arpa, write_arpa_string};
pub use counts::{count_ngrams, NGramCountTable};
pub use discount::{estimate_discounts, DiscountSet, Discounts};
pub use eval::{oov_rate, perplexity, score_positions, OovPolicy, PerplexityReport};
pub use mkn::train_mkn;
pub use model::{BackoffLM, ModelMeta, NGram, NGramEntry, LOG10_ZERO};

use crate::error::Result;
use crate::text::{Corpus, Vocabulary};
use std::sync::Arc;

/// Counts, estimates discounts and trains in one go.
pub fn train_corpus(corpus: &Corpus, order: usize, vocab: Arc<Vocabulary>) -> Result<BackoffLM> {
    let counts = count_ngrams(corpus, order, vocab)?;
    let discounts = estimate_discounts(&counts);
    let mut lm = train_mkn(&counts, &discounts);
    lm.meta.corpus_id = corpus.id.clone();
    Ok(lm)
}
