use std::fmt;
use std::str::FromStr;

use super::model::BackoffLM;
use crate::error::{Error, Result};
use crate::par;
use crate::text::{Corpus, Vocabulary, WordId};

/// How out-of-vocabulary words are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OovPolicy {
    /// OOV positions are counted but contribute no probability.
    #[default]
    Exclude,
    /// OOV words are scored as `<unk>`.
    AsUnk,
}

impl FromStr for OovPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exclude" => Ok(OovPolicy::Exclude),
            "as_unk" | "as-unk" => Ok(OovPolicy::AsUnk),
            _ => Err(Error::InvalidArgument(format!(
                "unknown OOV policy '{s}' (expected exclude or as_unk)"
            ))),
        }
    }
}

impl fmt::Display for OovPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OovPolicy::Exclude => "exclude",
            OovPolicy::AsUnk => "as_unk",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerplexityReport {
    pub log10_prob_sum: f64,
    pub scored_tokens: usize,
    pub oov_tokens: usize,
    pub sentences: usize,
    pub ppl: f64,
}

impl PerplexityReport {
    fn from_totals(log10_prob_sum: f64, scored_tokens: usize, oov_tokens: usize, sentences: usize) -> Result<Self> {
        if scored_tokens == 0 {
            return Err(Error::NothingScored(oov_tokens));
        }
        Ok(PerplexityReport {
            log10_prob_sum,
            scored_tokens,
            oov_tokens,
            sentences,
            ppl: 10f64.powf(-log10_prob_sum / scored_tokens as f64),
        })
    }
}

impl fmt::Display for PerplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sentences={} scored={} oov={} logprob={} ppl={}",
            self.sentences,
            self.scored_tokens,
            self.oov_tokens,
            super::format_log10(self.log10_prob_sum),
            super::format_log10(self.ppl)
        )
    }
}

/// Scores every predicted position of `corpus` (each word plus one `</s>`
/// per sentence) with `log10_prob(word, history)`, where history starts with
/// `<s>` and OOV words appear as `<unk>`.
///
/// Sentences are scored in parallel; sums are reduced in sentence order.
pub fn score_positions<F>(
    corpus: &Corpus,
    vocab: &Vocabulary,
    policy: OovPolicy,
    log10_prob: F,
) -> Result<PerplexityReport>
where
    F: Fn(WordId, &[WordId]) -> f64 + Sync + Send,
{
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus(Some(corpus.id.clone())));
    }
    let per_sentence = par::map(corpus.sentences(), |s| {
        let mut ids: Vec<WordId> = Vec::with_capacity(s.len() + 2);
        ids.push(vocab.bos());
        let mut oov_flags = Vec::with_capacity(s.len() + 1);
        for w in s.iter() {
            let id = vocab.get(w);
            oov_flags.push(id.is_none());
            ids.push(id.unwrap_or(vocab.unk()));
        }
        ids.push(vocab.eos());
        oov_flags.push(false);
        let mut sum = 0.0;
        let mut scored = 0;
        let mut oov = 0;
        for (i, &is_oov) in oov_flags.iter().enumerate() {
            if is_oov && policy == OovPolicy::Exclude {
                oov += 1;
                continue;
            }
            sum += log10_prob(ids[i + 1], &ids[..i + 1]);
            scored += 1;
        }
        (sum, scored, oov)
    });
    let sums: Vec<f64> = per_sentence.iter().map(|r| r.0).collect();
    let scored = per_sentence.iter().map(|r| r.1).sum();
    let oov = per_sentence.iter().map(|r| r.2).sum();
    PerplexityReport::from_totals(par::ordered_sum(&sums), scored, oov, corpus.len())
}

pub fn perplexity(lm: &BackoffLM, corpus: &Corpus, policy: OovPolicy) -> Result<PerplexityReport> {
    score_positions(corpus, lm.vocab(), policy, |w, h| lm.prob_ids(w, h))
}

/// Fraction of word tokens not in `vocab`; `</s>` is not counted.
pub fn oov_rate(vocab: &Vocabulary, corpus: &Corpus) -> Result<f64> {
    if corpus.token_count() == 0 {
        return Err(Error::EmptyCorpus(Some(corpus.id.clone())));
    }
    let oov = corpus
        .sentences()
        .iter()
        .flat_map(|s| s.iter())
        .filter(|w| !vocab.contains(w))
        .count();
    Ok(oov as f64 / corpus.token_count() as f64)
}

#[cfg(test)]
mod tests {
    use super::super::read_arpa_str;
    use super::*;
    use std::path::Path;

    /// Uniform over 7 words plus </s>.
    fn uniform8() -> BackoffLM {
        let mut text = String::from("\\data\\\nngram 1=9\n\n\\1-grams:\n-99\t<s>\n");
        let p = (1.0f64 / 8.0).log10();
        for w in ["a", "b", "c", "d", "e", "f", "g", "</s>"] {
            text.push_str(&format!("{p}\t{w}\n"));
        }
        text.push_str("\n\\end\\\n");
        read_arpa_str(&text, Path::new("u.arpa")).unwrap()
    }

    #[test]
    fn uniform_model_has_ppl_eight() {
        let lm = uniform8();
        let c = Corpus::from_lines("c", ["a b c", "g f e d a"]);
        let r = perplexity(&lm, &c, OovPolicy::Exclude).unwrap();
        assert!((r.ppl - 8.0).abs() < 1e-12, "{}", r.ppl);
        assert_eq!(r.scored_tokens, 10);
    }

    #[test]
    fn exclude_counts_oov() {
        let lm = uniform8();
        let c = Corpus::from_lines("c", ["a z"]);
        let r = perplexity(&lm, &c, OovPolicy::Exclude).unwrap();
        assert_eq!(r.scored_tokens, 2);
        assert_eq!(r.oov_tokens, 1);
        assert_eq!(r.sentences, 1);
    }

    #[test]
    fn all_oov_is_an_error() {
        let lm = uniform8();
        let c = Corpus::from_lines("c", ["z"]);
        // </s> is still scored
        assert!(perplexity(&lm, &c, OovPolicy::Exclude).is_ok());
        let empty = Corpus::from_lines("e", Vec::<&str>::new());
        assert!(perplexity(&lm, &empty, OovPolicy::Exclude).is_err());
        let r = PerplexityReport::from_totals(0.0, 0, 3, 1);
        assert!(matches!(r, Err(Error::NothingScored(3))));
    }

    #[test]
    fn oov_rates() {
        let v = Vocabulary::from_words(["a", "b"]).unwrap();
        let c = Corpus::from_lines("c", ["a b c c"]);
        assert_eq!(oov_rate(&v, &c).unwrap(), 0.5);
        let c = Corpus::from_lines("c", ["a b"]);
        assert_eq!(oov_rate(&v, &c).unwrap(), 0.0);
        let empty = Corpus::from_lines("e", Vec::<&str>::new());
        assert!(oov_rate(&v, &empty).is_err());
    }

    #[test]
    fn policy_parses() {
        assert_eq!("as_unk".parse::<OovPolicy>().unwrap(), OovPolicy::AsUnk);
        assert!("bogus".parse::<OovPolicy>().is_err());
    }
}
