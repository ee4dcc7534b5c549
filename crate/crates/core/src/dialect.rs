//! Dialect-word normalization: candidate selection, token mapping and
//! before/after LM evaluation.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mixture::{em_weights, perplexity_mixture, EmOptions};
use crate::ngram::{perplexity, train_corpus, BackoffLM, OovPolicy, PerplexityReport};
use crate::par;
use crate::text::{build_vocabulary, word_frequencies, Corpus, Vocabulary};

/// Top `k` most frequent words of `corpus` absent from `exclude`, with
/// counts. Ties are broken alphabetically.
pub fn select_candidates(corpus: &Corpus, k: usize, exclude: &Vocabulary) -> Result<Vec<(String, usize)>> {
    if k == 0 {
        return Err(Error::InvalidArgument("candidate count k must be at least 1".into()));
    }
    Ok(word_frequencies(corpus)
        .into_iter()
        .filter(|(w, _)| !exclude.contains(w))
        .take(k)
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingEntry {
    pub target: String,
    pub note: Option<String>,
}

/// Dialect word → standard word. Keys are unique and never map to
/// themselves.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MappingTable {
    pairs: BTreeMap<String, MappingEntry>,
}

fn check_token(t: &str) -> Result<()> {
    if t.is_empty() || t.chars().any(char::is_whitespace) {
        return Err(Error::InvalidMapping(format!("{t:?} is not a single token")));
    }
    Ok(())
}

impl MappingTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, from: &str, to: &str, note: Option<String>) -> Result<()> {
        check_token(from)?;
        check_token(to)?;
        if from == to {
            return Err(Error::InvalidMapping(format!("'{from}' maps to itself")));
        }
        if self.pairs.contains_key(from) {
            return Err(Error::InvalidMapping(format!("'{from}' is mapped twice")));
        }
        self.pairs.insert(
            from.to_string(),
            MappingEntry {
                target: to.to_string(),
                note,
            },
        );
        Ok(())
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut t = MappingTable::new();
        for (a, b) in pairs {
            t.insert(a, b, None)?;
        }
        Ok(t)
    }

    pub fn get(&self, word: &str) -> Option<&str> {
        self.pairs.get(word).map(|e| e.target.as_str())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &MappingEntry)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Reads `dialect<TAB>standard[<TAB>note]`; `#` lines and blank lines
    /// are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut t = MappingTable::new();
        for (no, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut f = line.splitn(3, '\t');
            let (Some(from), Some(to)) = (f.next(), f.next()) else {
                return Err(Error::parse(path, no + 1, "expected dialect<TAB>standard[<TAB>note]"));
            };
            let note = f.next().map(str::trim).filter(|n| !n.is_empty()).map(str::to_string);
            t.insert(from.trim(), to.trim(), note)
                .map_err(|e| Error::parse(path, no + 1, e.to_string()))?;
        }
        Ok(t)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, e) in &self.pairs {
            out.push_str(k);
            out.push('\t');
            out.push_str(&e.target);
            if let Some(n) = &e.note {
                out.push('\t');
                out.push_str(n);
            }
            out.push('\n');
        }
        out
    }
}

/// Replaces every token found in `table` by its target, once: outputs are
/// never looked up again.
pub fn apply_mapping(corpus: &Corpus, table: &MappingTable) -> Corpus {
    if table.is_empty() {
        return corpus.clone();
    }
    let sentences = par::map(corpus.sentences(), |s| {
        s.map_tokens(|t| table.get(t).unwrap_or(t).to_string())
    });
    Corpus::new(corpus.id.clone(), sentences)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub order: usize,
    /// One LM per training corpus, mixed with dev-tuned weights; otherwise
    /// a single LM on the concatenation.
    pub interpolate: bool,
    /// Apply the mapping to the dev text before the "after" evaluation.
    pub map_eval_text: bool,
    pub oov: OovPolicy,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            order: 4,
            interpolate: true,
            map_eval_text: true,
            oov: OovPolicy::Exclude,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappedEval {
    pub before: PerplexityReport,
    pub after: PerplexityReport,
    /// Mixture weights when interpolating, in training-corpus order.
    pub before_weights: Option<Vec<f64>>,
    pub after_weights: Option<Vec<f64>>,
}

/// Trains and evaluates; returns the dev report and the weights (if mixed).
pub fn train_and_eval(train: &[Corpus], dev: &Corpus, cfg: &LmConfig) -> Result<(PerplexityReport, Option<Vec<f64>>)> {
    if train.is_empty() {
        return Err(Error::InvalidArgument("no training corpora".into()));
    }
    let refs: Vec<&Corpus> = train.iter().collect();
    let vocab = Arc::new(build_vocabulary(&refs, 1, None)?);
    if cfg.interpolate && train.len() > 1 {
        let lms: Vec<BackoffLM> = train
            .iter()
            .map(|c| train_corpus(c, cfg.order, vocab.clone()))
            .collect::<Result<_>>()?;
        let lm_refs: Vec<&BackoffLM> = lms.iter().collect();
        let w = em_weights(&lm_refs, dev, &EmOptions::default())?;
        let report = perplexity_mixture(&lm_refs, &w.weights, dev, cfg.oov)?;
        Ok((report, Some(w.weights)))
    } else {
        let all = Corpus::concat("train", &refs);
        let lm = train_corpus(&all, cfg.order, vocab)?;
        Ok((perplexity(&lm, dev, cfg.oov)?, None))
    }
}

/// Dev perplexity of LMs trained on the raw corpora versus on mapped ones.
pub fn mapped_lm_eval(train: &[Corpus], dev: &Corpus, table: &MappingTable, cfg: &LmConfig) -> Result<MappedEval> {
    let (before, before_weights) = train_and_eval(train, dev, cfg)?;
    let mapped: Vec<Corpus> = train.iter().map(|c| apply_mapping(c, table)).collect();
    let dev_after = if cfg.map_eval_text {
        apply_mapping(dev, table)
    } else {
        dev.clone()
    };
    let (after, after_weights) = train_and_eval(&mapped, &dev_after, cfg)?;
    Ok(MappedEval {
        before,
        after,
        before_weights,
        after_weights,
    })
}
