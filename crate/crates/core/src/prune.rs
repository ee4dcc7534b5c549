//! Relative-entropy pruning of back-off models.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::mixture::recompute_backoffs;
use crate::ngram::{BackoffLM, NGram};
use crate::par;
use crate::text::WordId;

#[derive(Debug, Clone, PartialEq)]
pub struct PruneReport {
    pub theta: f64,
    /// Per order (index k-1): n-grams before pruning.
    pub before: Vec<usize>,
    pub removed: Vec<usize>,
}

impl PruneReport {
    pub fn after(&self) -> Vec<usize> {
        self.before.iter().zip(&self.removed).map(|(b, r)| b - r).collect()
    }

    pub fn total_before(&self) -> usize {
        self.before.iter().sum()
    }

    pub fn total_after(&self) -> usize {
        self.after().iter().sum()
    }
}

impl fmt::Display for PruneReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "theta\t{}", self.theta)?;
        writeln!(f, "order\tbefore\tremoved\tafter")?;
        for (k, (b, r)) in self.before.iter().zip(&self.removed).enumerate() {
            writeln!(f, "{}\t{b}\t{r}\t{}", k + 1, b - r)?;
        }
        let removed: usize = self.removed.iter().sum();
        writeln!(f, "total\t{}\t{removed}\t{}", self.total_before(), self.total_after())
    }
}

/// Probability of the history `h` by the chain rule; a leading `<s>` has
/// probability 1.
fn history_prob(lm: &BackoffLM, h: &[WordId]) -> f64 {
    let start = usize::from(h.first() == Some(&lm.vocab().bos()));
    pow10((start..h.len()).map(|j| lm.prob_ids(h[j], &h[..j])).sum())
}

fn pow10(x: f64) -> f64 {
    10f64.powf(x)
}

/// Relative-entropy increase from removing each listed extension of `h`,
/// each considered on its own against the current model.
fn removal_costs(lm: &BackoffLM, h: &[WordId], words: &[WordId]) -> Vec<f64> {
    let ph = history_prob(lm, h);
    let mut key = h.to_vec();
    let mut stored = Vec::with_capacity(words.len());
    let mut lower = Vec::with_capacity(words.len());
    for &w in words {
        key.push(w);
        stored.push(pow10(lm.get(&key).unwrap().log_prob));
        key.pop();
        lower.push(pow10(lm.prob_ids(w, &h[1..])));
    }
    // mass of words that back off, and their lower-order mass
    let num = (1.0 - stored.iter().sum::<f64>()).max(0.0);
    let den = (1.0 - lower.iter().sum::<f64>()).max(0.0);
    let bow = if den > 0.0 { num / den } else { 0.0 };
    stored
        .iter()
        .zip(&lower)
        .map(|(&p, &q)| {
            let bow_new = (num + p) / (den + q);
            let mut d = p * ((q * bow_new).ln() - p.ln());
            if num > 0.0 && bow > 0.0 {
                d += num * (bow_new.ln() - bow.ln());
            }
            (-ph * d).max(0.0)
        })
        .collect()
}

/// Removes every n-gram of order ≥ 2 whose removal raises the model's
/// relative entropy by less than `theta`, highest order first. An n-gram
/// that is the context of a retained higher-order n-gram is kept. Back-off
/// weights are recomputed after each order so the model stays normalized.
///
/// Negative (or NaN) `theta` leaves the model unchanged; `+inf` keeps only
/// unigrams.
pub fn prune_entropy(lm: &BackoffLM, theta: f64) -> (BackoffLM, PruneReport) {
    let order = lm.order();
    let mut report = PruneReport {
        theta,
        before: (1..=order).map(|k| lm.len(k)).collect(),
        removed: vec![0; order],
    };
    let mut model = lm.clone();
    if theta.is_nan() || theta < 0.0 {
        log::warn!("pruning threshold {theta} is negative; model left unchanged");
        return (model, report);
    }
    for k in (2..=order).rev() {
        let protected: HashSet<&[WordId]> = if k < order {
            model.grams(k + 1).map(|(g, _)| &g[..k]).collect()
        } else {
            HashSet::new()
        };
        let mut by_context: HashMap<&[WordId], Vec<WordId>> = HashMap::new();
        for (g, _) in model.grams(k) {
            by_context.entry(&g[..k - 1]).or_default().push(g[k - 1]);
        }
        let mut contexts: Vec<(&[WordId], Vec<WordId>)> = by_context.into_iter().collect();
        contexts.sort_unstable_by(|a, b| a.0.cmp(b.0));
        for (_, ws) in &mut contexts {
            ws.sort_unstable();
        }
        let current = &model;
        let doomed: Vec<Vec<NGram>> = par::map(&contexts, |(h, words)| {
            let costs = if theta.is_infinite() {
                vec![0.0; words.len()]
            } else {
                removal_costs(current, h, words)
            };
            words
                .iter()
                .zip(costs)
                .filter_map(|(&w, cost)| {
                    let mut g = h.to_vec();
                    g.push(w);
                    (cost < theta && !protected.contains(g.as_slice())).then_some(g)
                })
                .collect()
        });
        let doomed: Vec<NGram> = doomed.into_iter().flatten().collect();
        report.removed[k - 1] = doomed.len();
        for g in &doomed {
            model.remove(g);
        }
        recompute_backoffs(&mut model, k - 1);
    }
    // lower-order removals change the distributions higher contexts back off to
    for k in 2..order {
        recompute_backoffs(&mut model, k);
    }
    (model, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram::train_corpus;
    use crate::text::{build_vocabulary, Corpus};
    use std::sync::Arc;

    fn model() -> BackoffLM {
        let c = Corpus::from_lines(
            "c",
            ["a b c d", "a b c a", "b c d d a", "d c b a", "a a b b c c", "c d"],
        );
        let v = Arc::new(build_vocabulary(&[&c], 1, None).unwrap());
        train_corpus(&c, 3, v).unwrap()
    }

    #[test]
    fn negative_theta_is_a_no_op() {
        let lm = model();
        let (p, r) = prune_entropy(&lm, -1.0);
        assert!(p.approx_eq(&lm, 0.0));
        assert_eq!(r.removed, vec![0, 0, 0]);
    }

    #[test]
    fn zero_theta_removes_nothing() {
        let lm = model();
        let (p, r) = prune_entropy(&lm, 0.0);
        assert_eq!(r.removed, vec![0, 0, 0]);
        assert!(p.max_normalization_error() < 1e-9);
    }

    #[test]
    fn infinite_theta_keeps_unigrams() {
        let lm = model();
        let (p, r) = prune_entropy(&lm, f64::INFINITY);
        assert_eq!(p.len(2), 0);
        assert_eq!(p.len(3), 0);
        assert_eq!(p.len(1), lm.len(1));
        assert_eq!(r.after(), vec![lm.len(1), 0, 0]);
        assert!(p.max_normalization_error() < 1e-9);
    }

    #[test]
    fn report_table() {
        let r = PruneReport {
            theta: 0.5,
            before: vec![5, 4],
            removed: vec![0, 3],
        };
        assert_eq!(
            r.to_string(),
            "theta\t0.5\norder\tbefore\tremoved\tafter\n1\t5\t0\t5\n2\t4\t3\t1\ntotal\t9\t3\t6\n"
        );
    }
}
