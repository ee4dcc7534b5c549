//! Edit-distance alignment and WER / CER scoring.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditOp {
    Match,
    Substitute,
    Delete,
    Insert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub matches: usize,
    pub ref_len: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    /// Error rate in percent. With an empty reference any error counts as
    /// an infinite rate.
    pub fn rate(&self) -> f64 {
        match (self.errors(), self.ref_len) {
            (0, _) => 0.0,
            (_, 0) => f64::INFINITY,
            (e, n) => 100.0 * e as f64 / n as f64,
        }
    }

    fn add(&mut self, o: &EditCounts) {
        self.substitutions += o.substitutions;
        self.deletions += o.deletions;
        self.insertions += o.insertions;
        self.matches += o.matches;
        self.ref_len += o.ref_len;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditAlignment {
    pub counts: EditCounts,
    /// Operations in reference order.
    pub ops: Vec<EditOp>,
}

impl EditAlignment {
    /// Rebuilds the hypothesis from the reference by replaying the operations.
    pub fn replay<T: Clone>(&self, reference: &[T], hypothesis: &[T]) -> Option<Vec<T>> {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        for op in &self.ops {
            match op {
                EditOp::Match => {
                    out.push(reference.get(i)?.clone());
                    i += 1;
                    j += 1;
                }
                EditOp::Substitute => {
                    reference.get(i)?;
                    out.push(hypothesis.get(j)?.clone());
                    i += 1;
                    j += 1;
                }
                EditOp::Delete => {
                    reference.get(i)?;
                    i += 1;
                }
                EditOp::Insert => {
                    out.push(hypothesis.get(j)?.clone());
                    j += 1;
                }
            }
        }
        (i == reference.len() && j == hypothesis.len()).then_some(out)
    }
}

/// Minimal unit-cost Levenshtein alignment. Backtrace prefers
/// match > substitution > deletion > insertion.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditAlignment {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i * w + j] = diag.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }
    let mut ops = Vec::with_capacity(n.max(m));
    let mut counts = EditCounts {
        ref_len: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let cur = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            let diag = d[(i - 1) * w + j - 1];
            if same && cur == diag {
                ops.push(EditOp::Match);
                counts.matches += 1;
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && cur == diag + 1 {
                ops.push(EditOp::Substitute);
                counts.substitutions += 1;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && cur == d[(i - 1) * w + j] + 1 {
            ops.push(EditOp::Delete);
            counts.deletions += 1;
            i -= 1;
        } else {
            ops.push(EditOp::Insert);
            counts.insertions += 1;
            j -= 1;
        }
    }
    ops.reverse();
    EditAlignment { counts, ops }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Word,
    Char,
}

impl Level {
    fn name(self) -> &'static str {
        match self {
            Level::Word => "WER",
            Level::Char => "CER",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceScore {
    pub id: String,
    pub counts: EditCounts,
    /// The hypothesis file had no line for this utterance.
    pub missing_hyp: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub level: Level,
    /// Sorted by utterance id.
    pub utterances: Vec<UtteranceScore>,
    pub total: EditCounts,
}

impl ScoreReport {
    /// Aggregate rate (ΣS+ΣD+ΣI)/ΣN in percent.
    pub fn rate(&self) -> f64 {
        self.total.rate()
    }

    pub fn missing_hyps(&self) -> Vec<&str> {
        self.utterances
            .iter()
            .filter(|u| u.missing_hyp)
            .map(|u| u.id.as_str())
            .collect()
    }
}

pub type Transcripts = Vec<(String, Vec<String>)>;

fn index(items: &Transcripts) -> Result<BTreeMap<&str, &[String]>> {
    let mut map = BTreeMap::new();
    for (id, toks) in items {
        if map.insert(id.as_str(), toks.as_slice()).is_some() {
            return Err(Error::DuplicateId(id.clone()));
        }
    }
    Ok(map)
}

fn score(refs: &Transcripts, hyps: &Transcripts, level: Level) -> Result<ScoreReport> {
    let refs = index(refs)?;
    let hyps = index(hyps)?;
    if let Some(id) = hyps.keys().find(|id| !refs.contains_key(*id)) {
        return Err(Error::MissingReference(id.to_string()));
    }
    let pairs: Vec<(&str, &[String], Option<&[String]>)> = refs
        .iter()
        .map(|(id, r)| (*id, *r, hyps.get(id).copied()))
        .collect();
    let utterances = par::map(&pairs, |(id, r, h)| {
        let h = h.unwrap_or(&[]);
        let counts = match level {
            Level::Word => align(r, h).counts,
            Level::Char => {
                let rc: Vec<char> = r.iter().flat_map(|t| t.chars()).collect();
                let hc: Vec<char> = h.iter().flat_map(|t| t.chars()).collect();
                align(&rc, &hc).counts
            }
        };
        UtteranceScore {
            id: id.to_string(),
            counts,
            missing_hyp: !hyps.contains_key(id),
        }
    });
    let mut total = EditCounts::default();
    for u in &utterances {
        total.add(&u.counts);
    }
    Ok(ScoreReport {
        level,
        utterances,
        total,
    })
}

/// Word error rate over utterances; a reference without hypothesis is
/// scored against an empty hypothesis.
pub fn wer(refs: &Transcripts, hyps: &Transcripts) -> Result<ScoreReport> {
    score(refs, hyps, Level::Word)
}

/// Character error rate: each utterance is flattened to characters with
/// inter-token spaces removed.
pub fn cer(refs: &Transcripts, hyps: &Transcripts) -> Result<ScoreReport> {
    score(refs, hyps, Level::Char)
}

/// Relative reduction from `base` to `improved`, in percent.
pub fn relative_reduction(base: f64, improved: f64) -> Result<f64> {
    if !(base > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "relative reduction needs a positive base rate, got {base}"
        )));
    }
    Ok(100.0 * (base - improved) / base)
}

/// Reads `utt_id<TAB>token token ...` lines.
pub fn read_transcripts(path: &Path) -> Result<Transcripts> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (id, rest) = line.split_once('\t').unwrap_or((line, ""));
        let id = id.trim();
        if id.is_empty() {
            return Err(Error::parse(path, no + 1, "missing utterance id"));
        }
        if !seen.insert(id.to_string()) {
            return Err(Error::parse(path, no + 1, format!("duplicate utterance id '{id}'")));
        }
        out.push((id.to_string(), rest.split_whitespace().map(str::to_string).collect()));
    }
    Ok(out)
}

/// Human-readable table with per-utterance and aggregate counts.
pub fn render_table(reports: &[&ScoreReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let name = r.level.name();
        let _ = writeln!(out, "{name}");
        let _ = writeln!(
            out,
            "{:<20} {:>6} {:>6} {:>6} {:>6} {:>8}",
            "id", "S", "D", "I", "N", name
        );
        let row = |out: &mut String, id: &str, c: &EditCounts| {
            let _ = writeln!(
                out,
                "{:<20} {:>6} {:>6} {:>6} {:>6} {:>7.2}%",
                id, c.substitutions, c.deletions, c.insertions, c.ref_len, c.rate()
            );
        };
        for u in &r.utterances {
            let id = if u.missing_hyp {
                format!("{} (no hyp)", u.id)
            } else {
                u.id.clone()
            };
            row(&mut out, &id, &u.counts);
        }
        row(&mut out, "TOTAL", &r.total);
        out.push('\n');
    }
    out
}

/// Machine-readable counterpart: `level id S D I H N rate` per row.
pub fn render_tsv(reports: &[&ScoreReport]) -> String {
    let mut out = String::from("level\tid\tS\tD\tI\tH\tN\trate\n");
    for r in reports {
        let name = r.level.name();
        let rows = r
            .utterances
            .iter()
            .map(|u| (u.id.as_str(), &u.counts))
            .chain(std::iter::once(("TOTAL", &r.total)));
        for (id, c) in rows {
            let _ = writeln!(
                out,
                "{name}\t{id}\t{}\t{}\t{}\t{}\t{}\t{}",
                c.substitutions,
                c.deletions,
                c.insertions,
                c.matches,
                c.ref_len,
                c.rate()
            );
        }
    }
    out
}
