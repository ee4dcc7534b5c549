use std::collections::HashMap;
use std::path::Path;

use super::corpus::{rank_counts, Corpus};
use crate::error::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";
pub const RESERVED: [&str; 3] = [BOS, EOS, UNK];

/// Dense word index.
pub type WordId = u32;

/// Closed word set with a dense index; the reserved markers always occupy
/// indices 0 (`<s>`), 1 (`</s>`) and 2 (`<unk>`) unless the vocabulary was
/// read from a file that orders them differently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, WordId>,
    bos: WordId,
    eos: WordId,
    unk: WordId,
}

impl Vocabulary {
    /// Builds a vocabulary from words in index order. Reserved markers missing
    /// from `words` are appended; duplicates are rejected.
    pub fn from_words<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
            bos: 0,
            eos: 0,
            unk: 0,
        };
        for w in words {
            let w = w.into();
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!("invalid vocabulary word {w:?}")));
            }
            if v.index.contains_key(&w) {
                return Err(Error::InvalidArgument(format!("duplicate vocabulary word {w:?}")));
            }
            v.push(w);
        }
        for r in RESERVED {
            if !v.index.contains_key(r) {
                v.push(r.to_string());
            }
        }
        v.bos = v.index[BOS];
        v.eos = v.index[EOS];
        v.unk = v.index[UNK];
        Ok(v)
    }

    fn push(&mut self, w: String) {
        self.index.insert(w.clone(), self.words.len() as WordId);
        self.words.push(w);
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn bos(&self) -> WordId {
        self.bos
    }

    pub fn eos(&self) -> WordId {
        self.eos
    }

    pub fn unk(&self) -> WordId {
        self.unk
    }

    pub fn get(&self, word: &str) -> Option<WordId> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// Maps a word to its id, `<unk>` for unknown words.
    pub fn id_or_unk(&self, word: &str) -> WordId {
        self.get(word).unwrap_or(self.unk)
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id as usize]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn is_reserved(&self, id: WordId) -> bool {
        id == self.bos || id == self.eos || id == self.unk
    }

    /// Ids of every word that can be predicted (all but `<s>`).
    pub fn predictable(&self) -> impl Iterator<Item = WordId> + '_ {
        (0..self.words.len() as WordId).filter(move |&i| i != self.bos)
    }

    /// One word per line in index order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.words {
            out.push_str(w);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let words: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
        Vocabulary::from_words(words.iter().map(|w| w.to_string()))
            .map_err(|e| Error::parse(path, 0, e.to_string()))
    }
}

/// Builds a vocabulary over `corpora`: every word whose summed count reaches
/// `min_count`, ordered by descending count then lexicographically, truncated
/// so the whole vocabulary (reserved markers included) fits `max_size`.
pub fn build_vocabulary(
    corpora: &[&Corpus],
    min_count: usize,
    max_size: Option<usize>,
) -> Result<Vocabulary> {
    if corpora.is_empty() {
        return Err(Error::InvalidArgument("build_vocabulary needs at least one corpus".into()));
    }
    if min_count == 0 {
        return Err(Error::InvalidArgument("min_count must be at least 1".into()));
    }
    if let Some(m) = max_size {
        if m < RESERVED.len() {
            return Err(Error::InvalidArgument(format!(
                "max_size {m} leaves no room for the {} reserved markers",
                RESERVED.len()
            )));
        }
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for c in corpora {
        for s in c.sentences() {
            for t in s.iter() {
                *counts.entry(t).or_default() += 1;
            }
        }
    }
    let ranked = rank_counts(
        counts
            .into_iter()
            .filter(|(w, n)| *n >= min_count && !RESERVED.contains(w))
            .map(|(w, n)| (w.to_string(), n)),
    );
    let room = max_size.map_or(usize::MAX, |m| m - RESERVED.len());
    Vocabulary::from_words(
        RESERVED
            .iter()
            .map(|r| r.to_string())
            .chain(ranked.into_iter().take(room).map(|(w, _)| w)),
    )
}
