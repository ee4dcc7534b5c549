use std::collections::HashMap;
use std::sync::Arc;

use super::model::NGram;
use crate::error::{Error, Result};
use crate::par;
use crate::text::{Corpus, Vocabulary, WordId};

/// Exact k-gram counts (1 ≤ k ≤ order) over `<s>`/`</s>`-padded sentences,
/// plus distinct-left-context counts for every k < order.
///
/// The bare `<s>` unigram is never counted: it only conditions.
#[derive(Debug, Clone)]
pub struct NGramCountTable {
    order: usize,
    vocab: Arc<Vocabulary>,
    counts: Vec<HashMap<NGram, u64>>,
    continuation: Vec<HashMap<NGram, u64>>,
}

impl NGramCountTable {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn count(&self, gram: &[WordId]) -> u64 {
        self.counts
            .get(gram.len().wrapping_sub(1))
            .and_then(|m| m.get(gram))
            .copied()
            .unwrap_or(0)
    }

    /// Number of distinct words seen immediately before `gram`.
    pub fn continuation(&self, gram: &[WordId]) -> u64 {
        self.continuation
            .get(gram.len().wrapping_sub(1))
            .and_then(|m| m.get(gram))
            .copied()
            .unwrap_or(0)
    }

    /// The count Kneser-Ney estimates from: raw counts at the highest order
    /// and for n-grams starting with `<s>` (which have no left context),
    /// continuation counts otherwise.
    pub fn adjusted(&self, gram: &[WordId]) -> u64 {
        if gram.len() == self.order || gram[0] == self.vocab.bos() {
            self.count(gram)
        } else {
            self.continuation(gram)
        }
    }

    /// All counted k-grams, in no particular order.
    pub fn grams(&self, k: usize) -> impl Iterator<Item = (&NGram, u64)> {
        self.counts[k - 1].iter().map(|(g, &c)| (g, c))
    }

    /// Counted k-grams sorted by id sequence.
    pub fn sorted_grams(&self, k: usize) -> Vec<(&NGram, u64)> {
        let mut v: Vec<_> = self.grams(k).collect();
        v.sort_unstable_by(|a, b| a.0.cmp(b.0));
        v
    }

    pub fn len(&self, k: usize) -> usize {
        self.counts[k - 1].len()
    }
}

const COUNT_SHARD: usize = 2048;

/// Counts all k-grams up to `order`. Words outside `vocab` become `<unk>`.
///
/// Sentences are counted in shards whose tables are summed pointwise; left
/// contexts are derived from the merged table, so the result is independent
/// of sharding.
pub fn count_ngrams(corpus: &Corpus, order: usize, vocab: Arc<Vocabulary>) -> Result<NGramCountTable> {
    if order == 0 {
        return Err(Error::InvalidArgument("n-gram order must be at least 1".into()));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus(Some(corpus.id.clone())));
    }
    let shards = par::map_chunks(corpus.sentences(), COUNT_SHARD, |chunk| {
        let mut tables: Vec<HashMap<NGram, u64>> = vec![HashMap::new(); order];
        let mut padded: Vec<WordId> = Vec::new();
        for s in chunk {
            padded.clear();
            padded.push(vocab.bos());
            padded.extend(s.iter().map(|w| vocab.id_or_unk(w)));
            padded.push(vocab.eos());
            for start in 0..padded.len() {
                for k in 1..=order.min(padded.len() - start) {
                    let g = &padded[start..start + k];
                    if k == 1 && g[0] == vocab.bos() {
                        continue;
                    }
                    *tables[k - 1].entry(g.to_vec()).or_insert(0) += 1;
                }
            }
        }
        tables
    });
    let mut counts: Vec<HashMap<NGram, u64>> = vec![HashMap::new(); order];
    for shard in shards {
        for (k, table) in shard.into_iter().enumerate() {
            for (g, c) in table {
                *counts[k].entry(g).or_insert(0) += c;
            }
        }
    }
    let mut continuation: Vec<HashMap<NGram, u64>> = vec![HashMap::new(); order.saturating_sub(1)];
    for k in 1..order {
        for g in counts[k].keys() {
            *continuation[k - 1].entry(g[1..].to_vec()).or_insert(0) += 1;
        }
    }
    Ok(NGramCountTable {
        order,
        vocab,
        counts,
        continuation,
    })
}
