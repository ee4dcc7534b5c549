//! Linear interpolation of language models that share one vocabulary.

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ngram::{score_positions, BackoffLM, NGram, NGramEntry, OovPolicy, PerplexityReport, LOG10_ZERO};
use crate::par;
use crate::text::{Corpus, WordId};

/// Mixture weights aligned with an ordered list of component ids.
#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationWeights {
    pub ids: Vec<String>,
    pub weights: Vec<f64>,
    /// log10 likelihood of the dev set under the final weights.
    pub dev_log_likelihood: f64,
    /// Dev log10 likelihood before the first update and after each iteration.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EmOptions {
    pub init: Option<Vec<f64>>,
    /// Stop once an iteration improves the dev log10 likelihood by less.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            init: None,
            tol: 1e-7,
            max_iter: 200,
        }
    }
}

/// Outcome of EM over a fixed probability matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EmResult {
    pub weights: Vec<f64>,
    pub history: Vec<f64>,
}

pub fn check_components(lms: &[&BackoffLM]) -> Result<()> {
    let first = lms
        .first()
        .ok_or_else(|| Error::InvalidArgument("no component language models".into()))?;
    for lm in &lms[1..] {
        if lm.vocab().words() != first.vocab().words() {
            return Err(Error::VocabularyMismatch);
        }
    }
    Ok(())
}

pub fn check_weights(weights: &[f64], n: usize, tol: f64) -> Result<()> {
    if weights.len() != n {
        return Err(Error::InvalidWeights(format!("{} weights for {n} models", weights.len())));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidWeights(format!("negative or non-finite weight in {weights:?}")));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::InvalidWeights(format!("weights sum to {sum}, not 1")));
    }
    Ok(())
}

/// Linear probabilities of every dev position under each component:
/// row t holds p_i(w_t | h_t). OOV words are scored as `<unk>`.
pub fn component_probs(lms: &[&BackoffLM], dev: &Corpus) -> Result<Vec<Vec<f64>>> {
    check_components(lms)?;
    if dev.is_empty() {
        return Err(Error::EmptyCorpus(Some(dev.id.clone())));
    }
    let vocab = lms[0].vocab();
    let rows = par::map(dev.sentences(), |s| {
        let mut ids: Vec<WordId> = vec![vocab.bos()];
        ids.extend(s.iter().map(|w| vocab.id_or_unk(w)));
        ids.push(vocab.eos());
        (1..ids.len())
            .map(|i| {
                lms.iter()
                    .map(|lm| 10f64.powf(lm.prob_ids(ids[i], &ids[..i])))
                    .collect::<Vec<f64>>()
            })
            .collect::<Vec<_>>()
    });
    Ok(rows.into_iter().flatten().collect())
}

const EM_BLOCK: usize = 1024;

/// One E-step: log10 likelihood under `weights` and summed posteriors.
fn e_step(probs: &[Vec<f64>], weights: &[f64]) -> Result<(f64, Vec<f64>)> {
    let blocks = par::map_chunks(probs, EM_BLOCK, |rows| {
        let mut ll = 0.0;
        let mut post = vec![0.0; weights.len()];
        for (t, row) in rows.iter().enumerate() {
            let mix: f64 = row.iter().zip(weights).map(|(p, l)| p * l).sum();
            if !(mix > 0.0) {
                return Err(t);
            }
            ll += mix.log10();
            for (acc, (p, l)) in post.iter_mut().zip(row.iter().zip(weights)) {
                *acc += l * p / mix;
            }
        }
        Ok((ll, post))
    });
    let mut ll = 0.0;
    let mut post = vec![0.0; weights.len()];
    for (b, block) in blocks.into_iter().enumerate() {
        let (l, p) = block.map_err(|t| Error::ZeroProbability {
            position: b * EM_BLOCK + t,
        })?;
        ll += l;
        for (acc, x) in post.iter_mut().zip(p) {
            *acc += x;
        }
    }
    Ok((ll, post))
}

/// EM re-estimation of mixture weights over a position × component matrix
/// of linear probabilities.
pub fn em_from_probs(probs: &[Vec<f64>], init: &[f64], tol: f64, max_iter: usize) -> Result<EmResult> {
    if probs.is_empty() {
        return Err(Error::InvalidArgument("no positions to estimate weights on".into()));
    }
    check_weights(init, probs[0].len(), 1e-9)?;
    let m = probs.len() as f64;
    let mut weights = init.to_vec();
    let (mut ll, mut post) = e_step(probs, &weights)?;
    let mut history = vec![ll];
    for _ in 0..max_iter {
        let mut next: Vec<f64> = post.iter().map(|p| p / m).collect();
        let s: f64 = next.iter().sum();
        next.iter_mut().for_each(|w| *w /= s);
        let (ll_next, post_next) = e_step(probs, &next)?;
        history.push(ll_next);
        let gain = ll_next - ll;
        weights = next;
        ll = ll_next;
        post = post_next;
        if gain < tol {
            break;
        }
    }
    Ok(EmResult { weights, history })
}

/// Estimates interpolation weights maximizing dev-set likelihood.
pub fn em_weights(lms: &[&BackoffLM], dev: &Corpus, opts: &EmOptions) -> Result<InterpolationWeights> {
    if lms.len() < 2 {
        return Err(Error::InvalidArgument("weight estimation needs at least two models".into()));
    }
    let probs = component_probs(lms, dev)?;
    let init = opts
        .init
        .clone()
        .unwrap_or_else(|| vec![1.0 / lms.len() as f64; lms.len()]);
    let res = em_from_probs(&probs, &init, opts.tol, opts.max_iter)?;
    Ok(InterpolationWeights {
        ids: lms.iter().map(|lm| lm.meta.corpus_id.clone()).collect(),
        dev_log_likelihood: *res.history.last().unwrap(),
        weights: res.weights,
        history: res.history,
    })
}

fn mixture_log10(lms: &[&BackoffLM], weights: &[f64], word: WordId, history: &[WordId]) -> f64 {
    if lms.len() == 1 {
        return lms[0].prob_ids(word, history);
    }
    let p: f64 = lms
        .iter()
        .zip(weights)
        .filter(|(_, &l)| l > 0.0)
        .map(|(lm, l)| l * 10f64.powf(lm.prob_ids(word, history)))
        .sum();
    p.log10()
}

/// Perplexity of the dynamic mixture Σ λ_i p_i(w|h).
pub fn perplexity_mixture(
    lms: &[&BackoffLM],
    weights: &[f64],
    corpus: &Corpus,
    policy: OovPolicy,
) -> Result<PerplexityReport> {
    check_components(lms)?;
    check_weights(weights, lms.len(), 1e-6)?;
    score_positions(corpus, lms[0].vocab(), policy, |w, h| mixture_log10(lms, weights, w, h))
}

/// Merges components into one back-off model.
///
/// Stores the union of all components' n-grams, each with the mixture
/// probability; back-off weights are recomputed per context so every
/// context normalizes.
pub fn interpolate_static(lms: &[&BackoffLM], weights: &[f64]) -> Result<BackoffLM> {
    check_components(lms)?;
    check_weights(weights, lms.len(), 1e-6)?;
    let order = lms[0].order();
    if let Some(lm) = lms.iter().find(|lm| lm.order() != order) {
        return Err(Error::OrderMismatch(order, lm.order()));
    }
    let vocab = lms[0].vocab().clone();
    let mut merged = BackoffLM::new(order, vocab.clone());
    merged.meta.corpus_id = lms
        .iter()
        .map(|lm| lm.meta.corpus_id.as_str())
        .collect::<Vec<_>>()
        .join("+");

    for k in 1..=order {
        let union: BTreeSet<&NGram> = lms.iter().flat_map(|lm| lm.grams(k).map(|(g, _)| g)).collect();
        let union: Vec<&NGram> = union.into_iter().collect();
        let probs = par::map(&union, |g| {
            if k == 1 && g[0] == vocab.bos() {
                LOG10_ZERO
            } else {
                mixture_log10(lms, weights, g[k - 1], &g[..k - 1]).min(0.0)
            }
        });
        for (g, p) in union.into_iter().zip(probs) {
            merged.insert(
                g.clone(),
                NGramEntry {
                    log_prob: p,
                    backoff: None,
                },
            );
        }
        if k >= 2 {
            recompute_backoffs(&mut merged, k - 1);
        }
    }
    Ok(merged)
}

/// Sets the back-off weight of every stored (k)-gram context from its stored
/// (k+1)-gram extensions so that the context normalizes:
/// bow(h) = (1 − Σ_stored p(w|h)) / (1 − Σ_stored p(w|h')).
///
/// Orders up to `k` must already be final.
pub(crate) fn recompute_backoffs(lm: &mut BackoffLM, k: usize) {
    use std::collections::HashMap;
    let eos = lm.vocab().eos();
    let mut ext: HashMap<&[WordId], Vec<WordId>> = HashMap::new();
    // sorted so the per-context sums below always add in the same order
    for (g, _) in lm.sorted_grams(k + 1) {
        ext.entry(&g[..k]).or_default().push(g[k]);
    }
    let contexts: Vec<&NGram> = lm.sorted_grams(k).into_iter().map(|(g, _)| g).collect();
    let model = &*lm;
    let bows: Vec<Option<f64>> = par::map(&contexts, |h| {
        if *h.last().unwrap() == eos {
            return None;
        }
        let words = ext.get(h.as_slice())?;
        let mut seen = 0.0;
        let mut lower = 0.0;
        let mut key = h.to_vec();
        for &w in words {
            key.push(w);
            seen += 10f64.powf(model.get(&key).unwrap().log_prob);
            key.pop();
            lower += 10f64.powf(model.prob_ids(w, &h[1..]));
        }
        let num = (1.0 - seen).max(0.0);
        let den = 1.0 - lower;
        if den <= 1e-15 {
            return Some(0.0);
        }
        Some(if num <= 0.0 { LOG10_ZERO } else { (num / den).log10().max(LOG10_ZERO) })
    });
    let updates: Vec<(NGram, Option<f64>)> = contexts.into_iter().cloned().zip(bows).collect();
    for (h, b) in updates {
        lm.get_mut(&h).unwrap().backoff = b;
    }
}

/// Largest |log10 p_static − log10 p_dynamic| over all predicted positions
/// of `corpus`. Zero on explicitly stored n-grams; positive values come from
/// backed-off lookups.
pub fn static_divergence(merged: &BackoffLM, lms: &[&BackoffLM], weights: &[f64], corpus: &Corpus) -> f64 {
    let vocab = merged.vocab();
    par::map(corpus.sentences(), |s| {
        let mut ids = vec![vocab.bos()];
        ids.extend(s.iter().map(|w| vocab.id_or_unk(w)));
        ids.push(vocab.eos());
        (1..ids.len())
            .map(|i| {
                (merged.prob_ids(ids[i], &ids[..i]) - mixture_log10(lms, weights, ids[i], &ids[..i])).abs()
            })
            .fold(0.0, f64::max)
    })
    .into_iter()
    .fold(0.0, f64::max)
}

/// `lm_id<TAB>lambda` lines.
pub fn weights_to_text(ids: &[String], weights: &[f64]) -> String {
    ids.iter().zip(weights).map(|(id, w)| format!("{id}\t{w}\n")).collect()
}

pub fn save_weights(path: &Path, ids: &[String], weights: &[f64]) -> Result<()> {
    std::fs::write(path, weights_to_text(ids, weights)).map_err(|e| Error::io(path, e))
}

/// Reads a weights file; weights must be non-negative and sum to 1 within 1e-6.
pub fn load_weights(path: &Path) -> Result<(Vec<String>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    let mut weights = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, w) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, no + 1, "expected lm_id<TAB>lambda"))?;
        let w: f64 = w
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, no + 1, format!("bad weight '{w}'")))?;
        ids.push(id.to_string());
        weights.push(w);
    }
    check_weights(&weights, ids.len(), 1e-6).map_err(|e| Error::parse(path, 0, e.to_string()))?;
    Ok((ids, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ngram::{perplexity, train_corpus};
    use crate::text::{build_vocabulary, Vocabulary};
    use std::sync::Arc;

    #[test]
    fn closed_form_two_component_case() {
        // maximizer of 4 ln(0.1 + 0.8λ) + ln(0.9 − 0.8λ) is λ = 7/8
        let mut probs = vec![vec![0.9, 0.1]; 4];
        probs.push(vec![0.1, 0.9]);
        let r = em_from_probs(&probs, &[0.5, 0.5], 1e-15, 100_000).unwrap();
        assert!((r.weights[0] - 0.875).abs() < 1e-4, "{:?}", r.weights);
        assert!((r.weights[1] - 0.125).abs() < 1e-4);
        for w in r.history.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn identical_components_are_a_fixed_point() {
        let probs: Vec<Vec<f64>> = (1..20).map(|i| vec![1.0 / i as f64; 3]).collect();
        let init = [0.2, 0.3, 0.5];
        let r = em_from_probs(&probs, &init, 1e-12, 50).unwrap();
        for (a, b) in r.weights.iter().zip(init) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_component_takes_all_weight() {
        let probs: Vec<Vec<f64>> = (0..50).map(|i| vec![0.3 + 0.01 * (i % 5) as f64, 0.2]).collect();
        let r = em_from_probs(&probs, &[0.5, 0.5], 1e-14, 100_000).unwrap();
        assert!(r.weights[0] > 1.0 - 1e-3, "{:?}", r.weights);
    }

    #[test]
    fn zero_mixture_probability_is_an_error() {
        let probs = vec![vec![0.5, 0.5], vec![0.0, 0.0]];
        assert!(matches!(
            em_from_probs(&probs, &[0.5, 0.5], 1e-9, 10),
            Err(Error::ZeroProbability { position: 1 })
        ));
    }

    #[test]
    fn rejects_bad_weights() {
        assert!(check_weights(&[0.5, 0.6], 2, 1e-9).is_err());
        assert!(check_weights(&[1.5, -0.5], 2, 1e-9).is_err());
        assert!(check_weights(&[1.0], 2, 1e-9).is_err());
    }

    fn two_models() -> (BackoffLM, BackoffLM, Corpus) {
        let a = Corpus::from_lines("a", ["x y z", "x x y", "z y x x"]);
        let b = Corpus::from_lines("b", ["y y z", "z z", "x z y"]);
        let dev = Corpus::from_lines("dev", ["x y z z", "y x"]);
        let v = Arc::new(build_vocabulary(&[&a, &b], 1, None).unwrap());
        let la = train_corpus(&a, 3, v.clone()).unwrap();
        let lb = train_corpus(&b, 3, v).unwrap();
        (la, lb, dev)
    }

    #[test]
    fn vocabulary_mismatch() {
        let (la, _, dev) = two_models();
        let c = Corpus::from_lines("c", ["q"]);
        let lc = train_corpus(&c, 3, Arc::new(Vocabulary::from_words(["q"]).unwrap())).unwrap();
        assert!(matches!(
            em_weights(&[&la, &lc], &dev, &EmOptions::default()),
            Err(Error::VocabularyMismatch)
        ));
    }

    #[test]
    fn single_model_mixture_equals_plain_perplexity() {
        let (la, _, dev) = two_models();
        let a = perplexity(&la, &dev, OovPolicy::Exclude).unwrap();
        let b = perplexity_mixture(&[&la], &[1.0], &dev, OovPolicy::Exclude).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn identical_models_any_weights() {
        let (la, _, dev) = two_models();
        let a = perplexity(&la, &dev, OovPolicy::Exclude).unwrap();
        let b = perplexity_mixture(&[&la, &la], &[0.3, 0.7], &dev, OovPolicy::Exclude).unwrap();
        assert!((a.ppl - b.ppl).abs() < 1e-9);
    }

    #[test]
    fn em_weights_beat_uniform() {
        let (la, lb, dev) = two_models();
        let w = em_weights(&[&la, &lb], &dev, &EmOptions::default()).unwrap();
        let em = perplexity_mixture(&[&la, &lb], &w.weights, &dev, OovPolicy::AsUnk).unwrap();
        let uni = perplexity_mixture(&[&la, &lb], &[0.5, 0.5], &dev, OovPolicy::AsUnk).unwrap();
        assert!(em.ppl <= uni.ppl + 1e-12);
    }

    #[test]
    fn static_merge_of_one_model_is_equivalent() {
        let (la, _, dev) = two_models();
        let m = interpolate_static(&[&la], &[1.0]).unwrap();
        assert!(m.approx_eq(&la, 1e-9));
        assert!(static_divergence(&m, &[&la], &[1.0], &dev) < 1e-9);
    }

    #[test]
    fn static_merge_normalizes_and_matches_on_stored() {
        let (la, lb, _) = two_models();
        let w = [0.3, 0.7];
        let m = interpolate_static(&[&la, &lb], &w).unwrap();
        assert!(m.max_normalization_error() < 1e-9);
        for k in 1..=3 {
            for (g, e) in m.grams(k) {
                if g == &[m.vocab().bos()] {
                    continue;
                }
                let dynamic = mixture_log10(&[&la, &lb], &w, g[k - 1], &g[..k - 1]);
                assert!((e.log_prob - dynamic).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn weights_file_round_trip() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let ids = vec!["news".to_string(), "med".to_string()];
        save_weights(f.path(), &ids, &[0.25, 0.75]).unwrap();
        assert_eq!(load_weights(f.path()).unwrap(), (ids, vec![0.25, 0.75]));
        std::fs::write(f.path(), "a\t0.5\nb\t0.6\n").unwrap();
        assert!(load_weights(f.path()).is_err());
    }
}
