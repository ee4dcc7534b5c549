//! ARPA back-off format.
//!
//! ```text
//! \data\
//! ngram 1=COUNT
//! ...
//!
//! \1-grams:
//! LOGPROB<TAB>w1[<TAB>LOGBACKOFF]
//! ...
//!
//! \end\
//! ```
//!
//! Values are log10 with 7 significant digits. Back-off weights are omitted
//! for the highest order and for n-grams ending in `</s>`.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use super::model::{BackoffLM, NGram, NGramEntry};
use crate::error::{Error, Result};
use crate::text::{Vocabulary, WordId};

/// Formats `v` with 7 significant digits in plain decimal notation.
///
/// The output re-parses to a value that formats to the same string.
pub fn format_log10(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    if !v.is_finite() {
        return if v < 0.0 { "-inf".into() } else { "inf".into() };
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (6 - exp).max(0) as usize;
    let s = format!("{v:.decimals$}");
    // rounding may carry into a new leading digit, e.g. 9.9999996 -> 10.000000
    let rounded: f64 = s.parse().unwrap();
    if decimals > 0 && rounded.abs() >= 10f64.powi(exp + 1) {
        let d = decimals - 1;
        return format!("{v:.d$}");
    }
    s
}

pub fn write_arpa_string(lm: &BackoffLM) -> String {
    let vocab = lm.vocab();
    let mut out = String::new();
    out.push_str("\\data\\\n");
    for k in 1..=lm.order() {
        let _ = writeln!(out, "ngram {k}={}", lm.len(k));
    }
    for k in 1..=lm.order() {
        let _ = write!(out, "\n\\{k}-grams:\n");
        for (g, e) in lm.sorted_grams(k) {
            out.push_str(&format_log10(e.log_prob));
            out.push('\t');
            for (i, &w) in g.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                out.push_str(vocab.word(w));
            }
            let writes_backoff = k < lm.order() && *g.last().unwrap() != vocab.eos();
            if let (true, Some(b)) = (writes_backoff, e.backoff) {
                out.push('\t');
                out.push_str(&format_log10(b));
            }
            out.push('\n');
        }
    }
    out.push_str("\n\\end\\\n");
    out
}

pub fn write_arpa(lm: &BackoffLM, path: &Path) -> Result<()> {
    std::fs::write(path, write_arpa_string(lm)).map_err(|e| Error::io(path, e))
}

pub fn read_arpa(path: &Path) -> Result<BackoffLM> {
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(text).map_err(|e| {
        let line = e.as_bytes()[..e.utf8_error().valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1;
        Error::InvalidUtf8 {
            path: path.to_path_buf(),
            line,
        }
    })?;
    read_arpa_str(&text, path)
}

/// Parses ARPA text; `origin` is only used in error messages.
///
/// The vocabulary is taken from the unigram section in file order, with any
/// missing reserved markers appended.
pub fn read_arpa_str(text: &str, origin: &Path) -> Result<BackoffLM> {
    let err = |line: usize, msg: String| Error::parse(origin, line, msg);
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));

    // anything before \data\ is ignored
    let mut found = false;
    for (_, l) in lines.by_ref() {
        if l.trim() == "\\data\\" {
            found = true;
            break;
        }
    }
    if !found {
        return Err(err(0, "missing \\data\\ header".into()));
    }

    let mut declared: Vec<usize> = Vec::new();
    let mut pending: Option<(usize, &str)> = None;
    for (no, l) in lines.by_ref() {
        let t = l.trim();
        if t.is_empty() {
            if declared.is_empty() {
                continue;
            }
            break;
        }
        if let Some(rest) = t.strip_prefix("ngram ") {
            let (k, n) = rest
                .split_once('=')
                .ok_or_else(|| err(no, format!("malformed count line '{t}'")))?;
            let k: usize = k.trim().parse().map_err(|_| err(no, format!("bad order in '{t}'")))?;
            let n: usize = n.trim().parse().map_err(|_| err(no, format!("bad count in '{t}'")))?;
            if k != declared.len() + 1 {
                return Err(err(no, format!("expected 'ngram {}=', found order {k}", declared.len() + 1)));
            }
            declared.push(n);
        } else {
            pending = Some((no, l));
            break;
        }
    }
    if declared.is_empty() {
        return Err(err(0, "no 'ngram k=COUNT' lines in header".into()));
    }
    let order = declared.len();

    let mut sections: Vec<Vec<(usize, &str)>> = vec![Vec::new(); order];
    let mut current: Option<usize> = None;
    let mut ended = false;
    for (no, l) in pending.into_iter().chain(lines) {
        let t = l.trim();
        if t.is_empty() {
            continue;
        }
        if t == "\\end\\" {
            ended = true;
            break;
        }
        if t.starts_with('\\') {
            let k: usize = t
                .strip_prefix('\\')
                .and_then(|s| s.strip_suffix("-grams:"))
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err(no, format!("malformed section header '{t}'")))?;
            let expected = current.map_or(1, |c| c + 2);
            if k != expected || k > order {
                return Err(err(no, format!("unexpected section '{t}', expected \\{expected}-grams:")));
            }
            current = Some(k - 1);
            continue;
        }
        match current {
            Some(c) => sections[c].push((no, l)),
            None => return Err(err(no, format!("n-gram line outside any section: '{t}'"))),
        }
    }
    if !ended {
        return Err(err(0, "missing \\end\\ marker".into()));
    }
    for (k, (sec, &n)) in sections.iter().zip(&declared).enumerate() {
        if sec.len() != n {
            let line = sec.last().map_or(0, |s| s.0);
            return Err(err(
                line,
                format!("header declares ngram {}={n} but section has {} entries", k + 1, sec.len()),
            ));
        }
    }

    let mut parsed: Vec<Vec<(usize, Vec<&str>, NGramEntry)>> = Vec::with_capacity(order);
    for (k, sec) in sections.iter().enumerate() {
        let k = k + 1;
        let mut entries = Vec::with_capacity(sec.len());
        for &(no, l) in sec {
            let fields: Vec<&str> = l.split_whitespace().collect();
            if fields.len() != k + 1 && fields.len() != k + 2 {
                return Err(err(no, format!("expected {k} words and 1-2 values, got '{l}'")));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>().map_err(|_| err(no, format!("bad number '{s}'")))
            };
            let entry = NGramEntry {
                log_prob: num(fields[0])?,
                backoff: fields.get(k + 1).map(|s| num(s)).transpose()?,
            };
            entries.push((no, fields[1..=k].to_vec(), entry));
        }
        parsed.push(entries);
    }

    let vocab = Vocabulary::from_words(parsed[0].iter().map(|(_, w, _)| w[0].to_string()))
        .map_err(|e| err(parsed[0].first().map_or(0, |p| p.0), e.to_string()))?;
    let vocab = Arc::new(vocab);
    let mut lm = BackoffLM::new(order, vocab.clone());
    for entries in parsed {
        for (no, words, entry) in entries {
            let gram: NGram = words
                .iter()
                .map(|w| {
                    vocab
                        .get(w)
                        .ok_or_else(|| err(no, format!("word '{w}' has no unigram entry")))
                })
                .collect::<Result<Vec<WordId>>>()?;
            if lm.contains(&gram) {
                return Err(err(no, format!("duplicate n-gram '{}'", words.join(" "))));
            }
            lm.insert(gram, entry);
        }
    }
    Ok(lm)
}
