use std::collections::HashMap;
use std::sync::Arc;

use super::discount::DiscountSet;
use crate::text::{Vocabulary, WordId};

pub type NGram = Vec<WordId>;

/// log10 probability written for `<s>`, which is never predicted.
pub const LOG10_ZERO: f64 = -99.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NGramEntry {
    /// log10 p(w | h)
    pub log_prob: f64,
    /// log10 back-off weight of this n-gram used as a context.
    pub backoff: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelMeta {
    pub corpus_id: String,
    pub discounts: Option<DiscountSet>,
}

/// ARPA-style back-off model: for each order k, k-gram → (log10 p, log10 bow).
#[derive(Debug, Clone)]
pub struct BackoffLM {
    order: usize,
    vocab: Arc<Vocabulary>,
    grams: Vec<HashMap<NGram, NGramEntry>>,
    pub meta: ModelMeta,
}

impl BackoffLM {
    pub fn new(order: usize, vocab: Arc<Vocabulary>) -> Self {
        assert!(order >= 1, "order must be at least 1");
        BackoffLM {
            order,
            vocab,
            grams: vec![HashMap::new(); order],
            meta: ModelMeta::default(),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn insert(&mut self, gram: NGram, entry: NGramEntry) {
        assert!((1..=self.order).contains(&gram.len()));
        self.grams[gram.len() - 1].insert(gram, entry);
    }

    pub fn remove(&mut self, gram: &[WordId]) -> Option<NGramEntry> {
        self.grams[gram.len() - 1].remove(gram)
    }

    pub fn get(&self, gram: &[WordId]) -> Option<&NGramEntry> {
        self.grams.get(gram.len().wrapping_sub(1))?.get(gram)
    }

    pub fn get_mut(&mut self, gram: &[WordId]) -> Option<&mut NGramEntry> {
        self.grams.get_mut(gram.len().wrapping_sub(1))?.get_mut(gram)
    }

    pub fn contains(&self, gram: &[WordId]) -> bool {
        self.get(gram).is_some()
    }

    /// Number of stored k-grams.
    pub fn len(&self, k: usize) -> usize {
        self.grams[k - 1].len()
    }

    pub fn total_len(&self) -> usize {
        self.grams.iter().map(HashMap::len).sum()
    }

    pub fn grams(&self, k: usize) -> impl Iterator<Item = (&NGram, &NGramEntry)> {
        self.grams[k - 1].iter()
    }

    /// Stored k-grams sorted by id sequence.
    pub fn sorted_grams(&self, k: usize) -> Vec<(&NGram, &NGramEntry)> {
        let mut v: Vec<_> = self.grams[k - 1].iter().collect();
        v.sort_unstable_by(|a, b| a.0.cmp(b.0));
        v
    }

    /// log10 back-off weight of `context`; 0 when not stored.
    pub fn backoff(&self, context: &[WordId]) -> f64 {
        if context.is_empty() {
            return 0.0;
        }
        self.get(context).and_then(|e| e.backoff).unwrap_or(0.0)
    }

    /// log10 p(word | history) by the back-off recursion. Only the last
    /// `order - 1` history words are used. Returns `-inf` if `word` has no
    /// stored unigram.
    pub fn prob_ids(&self, word: WordId, history: &[WordId]) -> f64 {
        let h = &history[history.len().saturating_sub(self.order - 1)..];
        let mut key: Vec<WordId> = Vec::with_capacity(h.len() + 1);
        let mut acc = 0.0;
        for start in 0..=h.len() {
            let ctx = &h[start..];
            key.clear();
            key.extend_from_slice(ctx);
            key.push(word);
            if let Some(e) = self.grams[ctx.len()].get(&key) {
                return acc + e.log_prob;
            }
            acc += self.backoff(ctx);
        }
        f64::NEG_INFINITY
    }

    /// log10 p(word | history) over strings; unknown words map to `<unk>`.
    pub fn prob(&self, word: &str, history: &[&str]) -> f64 {
        let h: Vec<WordId> = history.iter().map(|w| self.vocab.id_or_unk(w)).collect();
        self.prob_ids(self.vocab.id_or_unk(word), &h)
    }

    /// Contexts whose conditional distribution is fully determined by stored
    /// entries: the empty context and every stored n-gram below the highest
    /// order that does not end in `</s>`.
    pub fn contexts(&self) -> Vec<NGram> {
        let mut out = vec![Vec::new()];
        for k in 1..self.order {
            out.extend(
                self.sorted_grams(k)
                    .into_iter()
                    .filter(|(g, _)| *g.last().unwrap() != self.vocab.eos())
                    .map(|(g, _)| g.clone()),
            );
        }
        out
    }

    /// Σ_w p(w | context) over every predictable word.
    pub fn context_mass(&self, context: &[WordId]) -> f64 {
        self.vocab
            .predictable()
            .map(|w| 10f64.powf(self.prob_ids(w, context)))
            .sum()
    }

    /// Largest |Σ_w p(w|h) − 1| over all stored contexts.
    pub fn max_normalization_error(&self) -> f64 {
        let ctxs = self.contexts();
        crate::par::map(&ctxs, |h| (self.context_mass(h) - 1.0).abs())
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Same stored n-grams and values within `tol` (absolute, log10).
    pub fn approx_eq(&self, other: &BackoffLM, tol: f64) -> bool {
        if self.order != other.order || self.vocab.words() != other.vocab.words() {
            return false;
        }
        (1..=self.order).all(|k| {
            self.len(k) == other.len(k)
                && self.grams(k).all(|(g, e)| match other.get(g) {
                    Some(o) => {
                        close(e.log_prob, o.log_prob, tol)
                            && match (e.backoff, o.backoff) {
                                (None, None) => true,
                                (Some(a), Some(b)) => close(a, b, tol),
                                (Some(a), None) | (None, Some(a)) => a.abs() <= tol,
                            }
                    }
                    None => false,
                })
        })
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(log_prob: f64, backoff: Option<f64>) -> NGramEntry {
        NGramEntry { log_prob, backoff }
    }

    /// vocab: <s>=0 </s>=1 <unk>=2 a=3 b=4
    fn toy() -> BackoffLM {
        let v = Arc::new(Vocabulary::from_words(["<s>", "</s>", "<unk>", "a", "b"]).unwrap());
        let mut lm = BackoffLM::new(2, v);
        lm.insert(vec![0], entry(LOG10_ZERO, Some(-0.3)));
        lm.insert(vec![1], entry(-0.6, None));
        lm.insert(vec![2], entry(-1.0, None));
        lm.insert(vec![3], entry(-0.5, Some(-0.2)));
        lm.insert(vec![4], entry(-0.7, Some(-0.1)));
        lm.insert(vec![3, 4], entry(-0.25, None));
        lm
    }

    #[test]
    fn stored_bigram_is_looked_up() {
        assert_eq!(toy().prob("b", &["a"]), -0.25);
    }

    #[test]
    fn unseen_bigram_backs_off() {
        assert!((toy().prob("a", &["a"]) - (-0.2 + -0.5)).abs() < 1e-15);
        // context without stored back-off weight contributes nothing
        assert_eq!(toy().prob("a", &["</s>"]), -0.5);
    }

    #[test]
    fn empty_history_is_unigram() {
        assert_eq!(toy().prob("b", &[]), -0.7);
        assert_eq!(toy().prob("zzz", &[]), -1.0);
    }

    #[test]
    fn long_history_truncated() {
        let lm = toy();
        assert_eq!(lm.prob("b", &["b", "b", "a"]), lm.prob("b", &["a"]));
    }
}
