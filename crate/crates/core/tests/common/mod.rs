#![allow(dead_code)]

pub mod g2p_oracle;
pub mod mkn_oracle;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Random corpus with `n_sent` sentences over a `vocab_size`-word alphabet
/// "w0".."wN", Zipf-ish so count-of-counts are non-degenerate.
pub fn random_sentences(seed: u64, n_sent: usize, vocab_size: usize, max_len: usize) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_sent)
        .map(|_| {
            let len = rng.gen_range(1..=max_len);
            (0..len)
                .map(|_| {
                    let r: f64 = rng.gen();
                    let idx = ((r * r) * vocab_size as f64) as usize;
                    format!("w{}", idx.min(vocab_size - 1))
                })
                .collect()
        })
        .collect()
}

pub fn lines(sentences: &[Vec<String>]) -> Vec<String> {
    sentences.iter().map(|s| s.join(" ")).collect()
}

/// Random lexicon over letters a..c: each letter has a fixed spelling rule
/// (0-2 phonemes) with occasional noise, so graphone alignments vary.
pub fn random_lexicon(seed: u64, n_words: usize) -> Vec<(String, Vec<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phones = ["P", "Q", "R", "S"];
    let rules: Vec<Vec<&str>> = (0..3)
        .map(|_| {
            let n = rng.gen_range(0..=2);
            (0..n).map(|_| phones[rng.gen_range(0..phones.len())]).collect()
        })
        .collect();
    let mut out = Vec::new();
    for _ in 0..n_words {
        let len = rng.gen_range(1..=4);
        let word: String = (0..len).map(|_| (b'a' + rng.gen_range(0..3u8)) as char).collect();
        let mut pron: Vec<String> = Vec::new();
        for c in word.bytes() {
            if rng.gen_bool(0.1) {
                pron.push(phones[rng.gen_range(0..phones.len())].to_string());
            } else {
                pron.extend(rules[(c - b'a') as usize].iter().map(|s| s.to_string()));
            }
        }
        if pron.is_empty() {
            pron.push("P".into());
        }
        out.push((word, pron));
    }
    out
}

/// Synthetic dialect setup: a "standard" corpus and a "dialect" corpus
/// drawn from the same distribution, except that in the dialect corpus the
/// `n_renamed` most frequent words are replaced by renamed duplicates
/// ("w3" -> "d3"). The dev set uses standard words only. Returns
/// (standard lines, dialect lines, dev lines, dialect->standard pairs).
pub fn synthetic_dialect(seed: u64, n_renamed: usize) -> (Vec<String>, Vec<String>, Vec<String>, Vec<(String, String)>) {
    let standard = lines(&random_sentences(seed, 300, 30, 10));
    let dialect_src = lines(&random_sentences(seed + 1, 300, 30, 10));
    let dev = lines(&random_sentences(seed + 2, 60, 30, 10));
    let renamed: Vec<(String, String)> = (0..n_renamed).map(|k| (format!("d{k}"), format!("w{k}"))).collect();
    let dialect = dialect_src
        .iter()
        .map(|l| {
            l.split(' ')
                .map(|t| match renamed.iter().find(|(_, w)| w == t) {
                    Some((d, _)) => d.as_str(),
                    None => t,
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    (standard, dialect, dev, renamed)
}
