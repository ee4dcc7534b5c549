mod common;

use std::collections::BTreeSet;
use std::sync::Arc;

use telelm::ngram::{perplexity, train_corpus, BackoffLM, NGram, OovPolicy};
use telelm::prune::prune_entropy;
use telelm::text::{build_vocabulary, Corpus};

fn random_model(seed: u64) -> (BackoffLM, Corpus) {
    let sents = common::random_sentences(seed, 40, 12, 9);
    let corpus = Corpus::from_lines("r", common::lines(&sents));
    let vocab = Arc::new(build_vocabulary(&[&corpus], 1, None).unwrap());
    (train_corpus(&corpus, 2 + (seed % 3) as usize, vocab).unwrap(), corpus)
}

fn retained(lm: &BackoffLM) -> BTreeSet<NGram> {
    (2..=lm.order()).flat_map(|k| lm.grams(k).map(|(g, _)| g.clone())).collect()
}

#[test]
fn retained_sets_nest_as_theta_grows() {
    for seed in 0..10 {
        let (lm, _) = random_model(seed);
        let thetas = [0.0, 1e-5, 1e-4, 1e-3, 0.1, 1.0, f64::INFINITY];
        let sets: Vec<_> = thetas.iter().map(|&t| retained(&prune_entropy(&lm, t).0)).collect();
        for w in sets.windows(2) {
            assert!(w[1].is_subset(&w[0]), "seed {seed}");
        }
    }
}

#[test]
fn pruned_models_normalize() {
    for seed in 0..10 {
        let (lm, _) = random_model(seed);
        for t in [1e-5, 1e-4, 1e-3, f64::INFINITY] {
            let (p, _) = prune_entropy(&lm, t);
            let err = p.max_normalization_error();
            assert!(err < 1e-9, "seed {seed} theta {t}: {err}");
        }
    }
}

#[test]
fn pruning_shrinks_and_raises_training_perplexity() {
    for seed in 0..10 {
        let (lm, corpus) = random_model(seed);
        let before = perplexity(&lm, &corpus, OovPolicy::Exclude).unwrap().ppl;
        let shrinking = [1e-6, 1e-5, 1e-4, 1e-3, 1e-2]
            .iter()
            .map(|&t| prune_entropy(&lm, t))
            .find(|(p, _)| p.total_len() < lm.total_len())
            .expect("some intermediate threshold removes n-grams");
        let after = perplexity(&shrinking.0, &corpus, OovPolicy::Exclude).unwrap().ppl;
        assert!(after >= before - 1e-9, "seed {seed}: {after} < {before}");
    }
}

/// Single-pass relative-entropy pruning is idempotent only at the boundary
/// thresholds: at intermediate thresholds removing siblings changes the
/// remaining n-grams' costs, and a second pass can prune further.
#[test]
fn pruning_twice_at_boundary_thresholds_removes_nothing() {
    for seed in 0..10 {
        let (lm, _) = random_model(seed);
        for t in [-1.0, 0.0, f64::INFINITY] {
            let (once, _) = prune_entropy(&lm, t);
            let (twice, r) = prune_entropy(&once, t);
            assert_eq!(r.removed.iter().sum::<usize>(), 0, "seed {seed} theta {t}");
            assert_eq!(retained(&once), retained(&twice));
        }
    }
}

#[test]
fn second_pass_only_shrinks() {
    for seed in 0..10 {
        let (lm, _) = random_model(seed);
        for t in [1e-5, 1e-4, 1e-3] {
            let (once, _) = prune_entropy(&lm, t);
            let (twice, _) = prune_entropy(&once, t);
            assert!(retained(&twice).is_subset(&retained(&once)));
            assert!(twice.max_normalization_error() < 1e-9);
        }
    }
}
