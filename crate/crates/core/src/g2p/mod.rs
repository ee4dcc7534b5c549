//! Joint-sequence grapheme-to-phoneme conversion and lexicon tools.

mod lexicon;
mod train;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ngram::{read_arpa_str, train_corpus, write_arpa_string, BackoffLM};
use crate::par;
use crate::text::{Corpus, Sentence, Vocabulary, WordId};

pub use lexicon::{
    load_inventory, load_phoneme_mapping, merge_lexicons, save_inventory, Lexicon, MergePolicy, MergeReport,
    PhonemeInventory, PhonemeMapping, Pronunciation,
};
pub use train::TrainingSummary;

/// A paired letter segment and phoneme segment; at most one side is empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Graphone {
    pub letters: String,
    pub phonemes: Vec<String>,
}

impl fmt::Display for Graphone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.letters, self.phonemes.join("_"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct G2pOptions {
    /// n-gram order over graphones.
    pub order: usize,
    pub min_letters: usize,
    pub max_letters: usize,
    pub min_phonemes: usize,
    pub max_phonemes: usize,
    pub em_iters: usize,
    /// EM stops once an iteration gains less than this (log10 likelihood).
    pub tol: f64,
}

impl Default for G2pOptions {
    fn default() -> Self {
        G2pOptions {
            order: 3,
            min_letters: 0,
            max_letters: 2,
            min_phonemes: 0,
            max_phonemes: 2,
            em_iters: 30,
            tol: 1e-4,
        }
    }
}

impl G2pOptions {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.order == 0 {
            return bad("g2p order must be at least 1");
        }
        if self.max_letters == 0 || self.max_phonemes == 0 {
            return bad("graphone size limits must be at least 1");
        }
        if self.min_letters > self.max_letters || self.min_phonemes > self.max_phonemes {
            return bad("graphone minimum sizes exceed the maximum sizes");
        }
        Ok(())
    }
}

/// Graphone inventory plus a back-off n-gram over graphone sequences.
/// Graphone `i` is LM word `i`.
#[derive(Debug, Clone)]
pub struct G2pModel {
    options: G2pOptions,
    graphones: Vec<Graphone>,
    lm: BackoffLM,
    pub training: TrainingSummary,
    by_letters: HashMap<String, Vec<WordId>>,
}

/// Serialized form: the LM travels as ARPA text.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    options: G2pOptions,
    graphones: Vec<Graphone>,
    training: TrainingSummary,
    arpa: String,
}

fn symbol(i: usize) -> String {
    format!("g{i}")
}

/// Trains a joint-sequence model on every (word, pronunciation) pair.
pub fn train_g2p(lexicon: &Lexicon, options: &G2pOptions) -> Result<G2pModel> {
    options.validate()?;
    if lexicon.is_empty() {
        return Err(Error::InvalidArgument("cannot train G2P on an empty lexicon".into()));
    }
    let pairs: Vec<(Vec<char>, &Pronunciation, &str)> =
        lexicon.iter().map(|(w, p)| (w.chars().collect(), p, w)).collect();
    let usable = par::map(&pairs, |(w, p, _)| train::usable_graphones(w, p, options));

    let mut inventory = BTreeSet::new();
    let mut summary = TrainingSummary::default();
    let mut kept = Vec::new();
    for ((w, p, word), g) in pairs.iter().zip(usable) {
        match g {
            Some(g) => {
                inventory.extend(g);
                kept.push((w, *p));
            }
            None => {
                log::warn!("'{word}' /{}/ cannot be segmented within the graphone limits; skipped", p.join(" "));
                summary.skipped.push((word.to_string(), p.join(" ")));
            }
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidArgument(
            "no lexicon entry can be segmented within the graphone limits".into(),
        ));
    }
    summary.entries_used = kept.len();
    let graphones: Vec<Graphone> = inventory.into_iter().collect();
    let ids: HashMap<Graphone, u32> = graphones.iter().enumerate().map(|(i, g)| (g.clone(), i as u32)).collect();
    let lattices = par::map(&kept, |(w, p)| train::build_lattice(w, p, options, &ids));

    let (ml, history) = train::run_em(&lattices, graphones.len(), options);
    summary.log_likelihood = history;

    let sentences: Vec<Sentence> = par::map(&lattices, |l| {
        let seq = train::viterbi(l, &ml).unwrap_or_default();
        Sentence::new(seq.into_iter().map(|id| symbol(id as usize)))
    });
    let vocab = Arc::new(Vocabulary::from_words((0..graphones.len()).map(symbol))?);
    let mut lm = train_corpus(&Corpus::new("g2p", sentences), options.order, vocab)?;
    lm.meta.corpus_id = "g2p".into();
    Ok(G2pModel::assemble(*options, graphones, lm, summary))
}

/// Ranking key: higher score first, then the lexicographically smaller
/// pronunciation, then the smaller graphone sequence.
fn rank(a: &(f64, Pronunciation, Vec<WordId>), b: &(f64, Pronunciation, Vec<WordId>)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)).then_with(|| a.2.cmp(&b.2))
}

#[derive(Clone)]
struct Hyp {
    score: f64,
    seq: Vec<WordId>,
    pron: Pronunciation,
}

impl G2pModel {
    fn assemble(options: G2pOptions, graphones: Vec<Graphone>, lm: BackoffLM, training: TrainingSummary) -> Self {
        let mut by_letters: HashMap<String, Vec<WordId>> = HashMap::new();
        for (i, g) in graphones.iter().enumerate() {
            by_letters.entry(g.letters.clone()).or_default().push(i as WordId);
        }
        G2pModel {
            options,
            graphones,
            lm,
            training,
            by_letters,
        }
    }

    pub fn options(&self) -> &G2pOptions {
        &self.options
    }

    pub fn graphones(&self) -> &[Graphone] {
        &self.graphones
    }

    /// The graphone n-gram; word `i` is `graphones()[i]`.
    pub fn lm(&self) -> &BackoffLM {
        &self.lm
    }

    fn history<'a>(&self, seq: &'a [WordId], buf: &'a mut Vec<WordId>) -> &'a [WordId] {
        let keep = self.lm.order() - 1;
        if seq.len() >= keep {
            return &seq[seq.len() - keep..];
        }
        buf.clear();
        buf.push(self.lm.vocab().bos());
        buf.extend_from_slice(seq);
        buf
    }

    /// log10 probability of a complete graphone sequence, end marker included.
    pub fn sequence_log_prob(&self, seq: &[WordId]) -> f64 {
        let mut buf = Vec::new();
        let mut total = 0.0;
        for k in 0..seq.len() {
            total += self.lm.prob_ids(seq[k], self.history(&seq[..k], &mut buf));
        }
        total + self.lm.prob_ids(self.lm.vocab().eos(), self.history(seq, &mut buf))
    }

    fn extend(&self, h: &Hyp, id: WordId, buf: &mut Vec<WordId>) -> Option<Hyp> {
        let lp = self.lm.prob_ids(id, self.history(&h.seq, buf));
        if !lp.is_finite() {
            return None;
        }
        let mut seq = h.seq.clone();
        seq.push(id);
        let mut pron = h.pron.clone();
        pron.extend(self.graphones[id as usize].phonemes.iter().cloned());
        Some(Hyp {
            score: h.score + lp,
            seq,
            pron,
        })
    }

    /// Sorts best-first, keeps at most `per_state` hypotheses per LM
    /// context (they share every future extension), then cuts to `beam`.
    /// Hypotheses with no phonemes yet are kept apart: they are dropped if
    /// they finish that way, so they must not shadow the others.
    fn prune(&self, hyps: &mut Vec<Hyp>, beam: usize, per_state: usize) {
        hyps.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.pron.cmp(&b.pron))
                .then_with(|| a.seq.cmp(&b.seq))
        });
        let keep = self.lm.order() - 1;
        let mut seen: HashMap<(&[WordId], bool), usize> = HashMap::new();
        let mut retain = Vec::with_capacity(hyps.len());
        for h in hyps.iter() {
            // short sequences carry <s> in their history; their shorter
            // slices never collide with full-length contexts
            let ctx = &h.seq[h.seq.len().saturating_sub(keep)..];
            let n = seen.entry((ctx, h.pron.is_empty())).or_default();
            *n += 1;
            retain.push(*n <= per_state);
        }
        let mut it = retain.into_iter();
        hyps.retain(|_| it.next().unwrap_or(false));
        hyps.truncate(beam);
    }

    /// Ranked pronunciations for `word` with their log10 joint scores.
    ///
    /// Hypotheses are grouped by letters consumed. At each position the
    /// stack is recombined (at most `n_best` per graphone context) and cut
    /// to `beam`, then extended once by letterless graphones (pruned the
    /// same way) before moving on. With an unbounded beam the top result is
    /// the best-scoring segmentation.
    pub fn apply(&self, word: &str, beam: usize, n_best: usize) -> Result<Vec<(Pronunciation, f64)>> {
        if word.is_empty() {
            return Err(Error::InvalidArgument("cannot transcribe an empty word".into()));
        }
        if beam == 0 || n_best == 0 {
            return Err(Error::InvalidArgument("beam and n-best must be at least 1".into()));
        }
        let letters: Vec<char> = word.chars().collect();
        let known: BTreeSet<char> = self.graphones.iter().flat_map(|g| g.letters.chars()).collect();
        let unseen: BTreeSet<char> = letters.iter().copied().filter(|c| !known.contains(c)).collect();
        if !unseen.is_empty() {
            return Err(Error::UnseenLetters {
                word: word.to_string(),
                letters: unseen.into_iter().map(String::from).collect::<Vec<_>>().join(" "),
            });
        }
        let n = letters.len();
        let inserts = self.by_letters.get("").map(Vec::as_slice).unwrap_or(&[]);
        let mut stacks: Vec<Vec<Hyp>> = vec![Vec::new(); n + 1];
        stacks[0].push(Hyp {
            score: 0.0,
            seq: Vec::new(),
            pron: Vec::new(),
        });
        let mut done: Vec<(f64, Pronunciation, Vec<WordId>)> = Vec::new();
        let mut buf = Vec::new();
        for i in 0..=n {
            let mut a = std::mem::take(&mut stacks[i]);
            self.prune(&mut a, beam, n_best);
            let mut b: Vec<Hyp> = a
                .iter()
                .flat_map(|h| inserts.iter().map(move |&id| (h, id)))
                .filter_map(|(h, id)| self.extend(h, id, &mut buf))
                .collect();
            self.prune(&mut b, beam, n_best);
            for h in a.iter().chain(b.iter()) {
                if i == n {
                    let end = self.lm.prob_ids(self.lm.vocab().eos(), self.history(&h.seq, &mut buf));
                    if end.is_finite() && !h.pron.is_empty() {
                        done.push((h.score + end, h.pron.clone(), h.seq.clone()));
                    }
                    continue;
                }
                for gl in 1..=self.options.max_letters.min(n - i) {
                    let seg: String = letters[i..i + gl].iter().collect();
                    for &id in self.by_letters.get(&seg).map(Vec::as_slice).unwrap_or(&[]) {
                        if let Some(next) = self.extend(h, id, &mut buf) {
                            stacks[i + gl].push(next);
                        }
                    }
                }
            }
        }
        done.sort_by(rank);
        let mut seen = BTreeSet::new();
        let out: Vec<(Pronunciation, f64)> = done
            .into_iter()
            .filter(|(_, p, _)| seen.insert(p.clone()))
            .take(n_best.min(beam))
            .map(|(s, p, _)| (p, s))
            .collect();
        if out.is_empty() {
            return Err(Error::NoPronunciation(word.to_string()));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile {
            options: self.options,
            graphones: self.graphones.clone(),
            training: self.training.clone(),
            arpa: write_arpa_string(&self.lm),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::InvalidArgument(format!("serializing G2P model: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile =
            serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        file.options.validate()?;
        let lm = read_arpa_str(&file.arpa, path)?;
        for (i, _) in file.graphones.iter().enumerate() {
            if lm.vocab().get(&symbol(i)) != Some(i as WordId) {
                return Err(Error::parse(path, 0, format!("graphone {i} is missing from the embedded model")));
            }
        }
        Ok(G2pModel::assemble(file.options, file.graphones, lm, file.training))
    }
}

/// Convenience wrapper around [`G2pModel::apply`].
pub fn apply_g2p(model: &G2pModel, word: &str, beam: usize, n_best: usize) -> Result<Vec<(Pronunciation, f64)>> {
    model.apply(word, beam, n_best)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtendReport {
    pub requested: usize,
    pub already_present: usize,
    /// Words that gained pronunciations, with their G2P scores.
    pub added: Vec<(String, Vec<(Pronunciation, f64)>)>,
    pub failed: Vec<(String, String)>,
}

impl fmt::Display for ExtendReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "requested\t{}", self.requested)?;
        writeln!(f, "already_present\t{}", self.already_present)?;
        writeln!(f, "added\t{}", self.added.len())?;
        writeln!(f, "failed\t{}", self.failed.len())?;
        for (w, e) in &self.failed {
            writeln!(f, "failed\t{w}\t{e}")?;
        }
        Ok(())
    }
}

/// Adds the top `n_best` G2P pronunciations for every word not yet in
/// `lexicon`. Failing words are reported and skipped.
pub fn extend_lexicon(
    lexicon: &Lexicon,
    words: &[String],
    model: &G2pModel,
    beam: usize,
    n_best: usize,
) -> (Lexicon, ExtendReport) {
    let unique: BTreeSet<&str> = words.iter().map(String::as_str).collect();
    let missing: Vec<&str> = unique.iter().copied().filter(|w| !lexicon.contains(w)).collect();
    let mut report = ExtendReport {
        requested: unique.len(),
        already_present: unique.len() - missing.len(),
        ..Default::default()
    };
    let results = par::map(&missing, |w| model.apply(w, beam, n_best));
    let mut out = lexicon.clone();
    for (w, res) in missing.into_iter().zip(results) {
        let prons = match res {
            Ok(p) => p,
            Err(e) => {
                report.failed.push((w.to_string(), e.to_string()));
                continue;
            }
        };
        let mut ok = true;
        for (p, _) in &prons {
            if let Err(e) = out.insert(w.to_string(), p.clone()) {
                report.failed.push((w.to_string(), e.to_string()));
                ok = false;
                break;
            }
        }
        if ok {
            report.added.push((w.to_string(), prons));
        }
    }
    if !report.failed.is_empty() {
        log::warn!("{} of {} words could not be transcribed", report.failed.len(), report.requested);
    }
    (out, report)
}
