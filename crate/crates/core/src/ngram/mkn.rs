use std::collections::HashMap;

use super::counts::NGramCountTable;
use super::discount::{DiscountSet, Discounts};
use super::model::{BackoffLM, NGramEntry, LOG10_ZERO};
use crate::par;
use crate::text::WordId;

#[derive(Debug, Default, Clone, Copy)]
struct ContextStats {
    total: u64,
    n1: u64,
    n2: u64,
    n3plus: u64,
}

impl ContextStats {
    fn add(&mut self, a: u64) {
        self.total += a;
        match a {
            0 => {}
            1 => self.n1 += 1,
            2 => self.n2 += 1,
            _ => self.n3plus += 1,
        }
    }

    /// Probability mass freed by discounting, as a fraction of the total.
    fn gamma(&self, d: &Discounts) -> f64 {
        (d.d1 * self.n1 as f64 + d.d2 * self.n2 as f64 + d.d3plus * self.n3plus as f64)
            / self.total as f64
    }
}

fn log10_clamped(p: f64) -> f64 {
    if p <= 0.0 {
        LOG10_ZERO
    } else {
        p.log10().min(0.0)
    }
}

/// Interpolated modified Kneser-Ney.
///
/// The lowest order interpolates with the uniform distribution over all
/// predictable words, so every vocabulary word (including `<unk>`) gets mass.
/// Stored probabilities already include the interpolated lower-order term,
/// and each context's back-off weight is its freed mass γ(h), so the back-off
/// recursion reproduces the interpolated estimate for unseen words.
pub fn train_mkn(counts: &NGramCountTable, discounts: &DiscountSet) -> BackoffLM {
    let vocab = counts.vocab().clone();
    let order = counts.order();
    let mut lm = BackoffLM::new(order, vocab.clone());
    lm.meta.discounts = Some(discounts.clone());

    let d = discounts.get(1);
    let mut stats = ContextStats::default();
    for (g, _) in counts.grams(1) {
        stats.add(counts.adjusted(g));
    }
    let gamma = stats.gamma(d);
    let uniform = 1.0 / (vocab.len() - 1) as f64;
    for w in vocab.predictable() {
        let a = counts.adjusted(&[w]);
        let p = (a as f64 - d.for_count(a)).max(0.0) / stats.total as f64 + gamma * uniform;
        lm.insert(
            vec![w],
            NGramEntry {
                log_prob: log10_clamped(p),
                backoff: None,
            },
        );
    }
    lm.insert(
        vec![vocab.bos()],
        NGramEntry {
            log_prob: LOG10_ZERO,
            backoff: None,
        },
    );

    for k in 2..=order {
        let d = discounts.get(k);
        let mut ctx_stats: HashMap<&[WordId], ContextStats> = HashMap::new();
        for (g, _) in counts.grams(k) {
            ctx_stats.entry(&g[..k - 1]).or_default().add(counts.adjusted(g));
        }
        let grams = counts.sorted_grams(k);
        let lower_model = &lm;
        let probs = par::map(&grams, |(g, _)| {
            let st = &ctx_stats[&g[..k - 1]];
            let a = counts.adjusted(g);
            let lower = 10f64.powf(lower_model.prob_ids(g[k - 1], &g[1..k - 1]));
            (a as f64 - d.for_count(a)).max(0.0) / st.total as f64 + st.gamma(d) * lower
        });
        for ((g, _), p) in grams.iter().zip(probs) {
            lm.insert(
                (*g).clone(),
                NGramEntry {
                    log_prob: log10_clamped(p),
                    backoff: None,
                },
            );
        }
        let mut ctxs: Vec<(&[WordId], ContextStats)> = ctx_stats.into_iter().collect();
        ctxs.sort_unstable_by(|a, b| a.0.cmp(b.0));
        for (h, st) in ctxs {
            let bow = log10_clamped(st.gamma(d)).max(LOG10_ZERO);
            if let Some(e) = lm.get_mut(h) {
                e.backoff = Some(bow);
            }
        }
    }
    lm
}
