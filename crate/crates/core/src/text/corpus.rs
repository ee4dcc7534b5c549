use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;
use unicode_properties::{GeneralCategoryGroup, UnicodeGeneralCategory};

use super::vocab::RESERVED;
use crate::error::{Error, Result};
use crate::par;

/// One whitespace-tokenized sentence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Sentence(Vec<String>);

impl Sentence {
    /// Builds a sentence from tokens, dropping empty tokens and splitting on
    /// whitespace so the token invariants hold.
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Sentence(
            tokens
                .into_iter()
                .flat_map(|t| {
                    t.as_ref()
                        .split_whitespace()
                        .map(str::to_string)
                        .collect::<Vec<_>>()
                })
                .collect(),
        )
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    pub(crate) fn map_tokens(&self, f: impl Fn(&str) -> String) -> Sentence {
        Sentence(self.0.iter().map(|t| f(t)).collect())
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub id: String,
    sentences: Vec<Sentence>,
    token_count: usize,
}

impl Corpus {
    /// Empty sentences are dropped.
    pub fn new(id: impl Into<String>, sentences: Vec<Sentence>) -> Self {
        let sentences: Vec<Sentence> = sentences.into_iter().filter(|s| !s.is_empty()).collect();
        let token_count = sentences.iter().map(Sentence::len).sum();
        Corpus {
            id: id.into(),
            sentences,
            token_count,
        }
    }

    /// Splits each string on whitespace; handy for tests and small inputs.
    pub fn from_lines<I, S>(id: impl Into<String>, lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Corpus::new(
            id,
            lines
                .into_iter()
                .map(|l| Sentence::new(l.as_ref().split_whitespace()))
                .collect(),
        )
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn token_count(&self) -> usize {
        self.token_count
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Concatenates corpora into one, in order.
    pub fn concat(id: impl Into<String>, corpora: &[&Corpus]) -> Corpus {
        Corpus::new(
            id,
            corpora
                .iter()
                .flat_map(|c| c.sentences.iter().cloned())
                .collect(),
        )
    }

    /// Writes one sentence per line, tokens separated by single spaces.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        for s in &self.sentences {
            writeln!(out, "{s}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NormalizeOptions {
    pub lowercase: bool,
    pub strip_punct: bool,
}

/// Normalizes one line into tokens: NFC composition, optional lowercasing,
/// optional punctuation stripping, whitespace collapse.
///
/// Tokens equal to `<s>`, `</s>` or `<unk>` are dropped; those markers are
/// reserved for the toolkit.
pub fn normalize_line(line: &str, opts: NormalizeOptions) -> Vec<String> {
    let mut text: String = line.nfc().collect();
    if opts.lowercase {
        // lowercasing can yield decomposed sequences
        text = text.to_lowercase().nfc().collect();
    }
    if opts.strip_punct {
        text = text
            .chars()
            .filter(|c| c.general_category_group() != GeneralCategoryGroup::Punctuation)
            .collect();
    }
    text.split_whitespace()
        .filter(|t| !RESERVED.contains(t))
        .map(str::to_string)
        .collect()
}

const SHARD_LINES: usize = 8192;

/// Loads a corpus file: UTF-8, one sentence per line.
///
/// Lines are normalized in parallel shards and merged in file order, so the
/// result is identical to sequential loading.
pub fn load_corpus(path: &Path, opts: NormalizeOptions) -> Result<Corpus> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let raw: Vec<&[u8]> = bytes.split(|&b| b == b'\n').collect();
    let shards = par::map_chunks(&raw, SHARD_LINES, |chunk| {
        chunk
            .iter()
            .map(|line| std::str::from_utf8(line).map(|s| normalize_line(s, opts)))
            .collect::<Vec<_>>()
    });
    let mut sentences = Vec::with_capacity(raw.len());
    for (lineno, res) in shards.into_iter().flatten().enumerate() {
        match res {
            Ok(tokens) => sentences.push(Sentence(tokens)),
            Err(_) => {
                return Err(Error::InvalidUtf8 {
                    path: path.to_path_buf(),
                    line: lineno + 1,
                })
            }
        }
    }
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Corpus::new(id, sentences))
}

/// Word counts, descending by count with lexicographic tie-break.
pub fn word_frequencies(corpus: &Corpus) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in corpus.sentences() {
        for t in s.iter() {
            *counts.entry(t).or_default() += 1;
        }
    }
    rank_counts(counts.into_iter().map(|(w, c)| (w.to_string(), c)))
}

pub(crate) fn rank_counts(counts: impl Iterator<Item = (String, usize)>) -> Vec<(String, usize)> {
    let mut ranked: Vec<(String, usize)> = counts.collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_tmp(content: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content).unwrap();
        f
    }

    #[test]
    fn lowercases_and_drops_empty_lines() {
        let f = write_tmp("Hallo Welt\n\n".as_bytes());
        let c = load_corpus(
            f.path(),
            NormalizeOptions {
                lowercase: true,
                strip_punct: false,
            },
        )
        .unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.sentences()[0].tokens(), ["hallo", "welt"]);
        assert_eq!(c.token_count(), 2);
    }

    #[test]
    fn empty_file() {
        let f = write_tmp(b"");
        let c = load_corpus(f.path(), NormalizeOptions::default()).unwrap();
        assert_eq!(c.len(), 0);
        assert_eq!(c.token_count(), 0);
    }

    #[test]
    fn collapses_whitespace() {
        let f = write_tmp(b"a  b\tc\n");
        let c = load_corpus(f.path(), NormalizeOptions::default()).unwrap();
        assert_eq!(c.sentences()[0].tokens(), ["a", "b", "c"]);
    }

    #[test]
    fn invalid_utf8_reports_line() {
        let f = write_tmp(b"ok\nfine\n\xff\xfe\n");
        let err = load_corpus(f.path(), NormalizeOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InvalidUtf8 { line: 3, .. }), "{err}");
    }

    #[test]
    fn missing_file() {
        let err = load_corpus(Path::new("/nonexistent/x.txt"), NormalizeOptions::default());
        assert!(matches!(err, Err(Error::Io { .. })));
    }

    #[test]
    fn composes_and_strips_punctuation() {
        let opts = NormalizeOptions {
            lowercase: false,
            strip_punct: true,
        };
        // e + combining acute composes to a single code point
        assert_eq!(normalize_line("cafe\u{301}, ok!", opts), ["caf\u{e9}", "ok"]);
        assert_eq!(normalize_line("-- . --", opts), Vec::<String>::new());
        // hyphens survive without the flag
        assert_eq!(normalize_line("covid-19", NormalizeOptions::default()), ["covid-19"]);
    }

    #[test]
    fn reserved_markers_dropped() {
        assert_eq!(normalize_line("<s> a </s> <unk>", NormalizeOptions::default()), ["a"]);
    }

    #[test]
    fn frequencies() {
        let c = Corpus::from_lines("c", ["x y x"]);
        assert_eq!(word_frequencies(&c), [("x".into(), 2), ("y".into(), 1)]);
        assert!(word_frequencies(&Corpus::from_lines("e", Vec::<&str>::new())).is_empty());
        let c = Corpus::from_lines("c", ["b a"]);
        assert_eq!(word_frequencies(&c), [("a".into(), 1), ("b".into(), 1)]);
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(lines in proptest::collection::vec("[a-zA-Z\u{c0}-\u{17f} .,!?-]{0,20}", 0..10),
                                       lowercase: bool, strip_punct: bool) {
            let opts = NormalizeOptions { lowercase, strip_punct };
            let f = write_tmp(lines.join("\n").as_bytes());
            let first = load_corpus(f.path(), opts).unwrap();
            let mut dumped = Vec::new();
            first.write_to(&mut dumped).unwrap();
            let g = write_tmp(&dumped);
            let mut second = load_corpus(g.path(), opts).unwrap();
            second.id = first.id.clone();
            prop_assert_eq!(first, second);
        }

        #[test]
        fn frequencies_sum_to_token_count(lines in proptest::collection::vec("[abc ]{0,12}", 0..8)) {
            let c = Corpus::from_lines("p", &lines);
            let total: usize = word_frequencies(&c).iter().map(|(_, n)| n).sum();
            prop_assert_eq!(total, c.token_count());
        }
    }
}
