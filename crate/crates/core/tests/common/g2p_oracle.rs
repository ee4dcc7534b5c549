//! Exhaustive search over every graphone sequence spelling a word.

use telelm::g2p::G2pModel;

/// Best (pronunciation, log10 score) over all segmentations; ties go to the
/// lexicographically smaller pronunciation.
pub fn best_pronunciation(model: &G2pModel, word: &str) -> Option<(Vec<String>, f64)> {
    let letters: Vec<char> = word.chars().collect();
    let spelled: Vec<Vec<char>> = model.graphones().iter().map(|g| g.letters.chars().collect()).collect();
    let mut best: Option<(Vec<String>, f64)> = None;
    let mut seq = Vec::new();
    search(model, &spelled, &letters, 0, false, &mut seq, &mut best);
    best
}

fn search(
    model: &G2pModel,
    spelled: &[Vec<char>],
    letters: &[char],
    i: usize,
    after_insert: bool,
    seq: &mut Vec<usize>,
    best: &mut Option<(Vec<String>, f64)>,
) {
    if i == letters.len() {
        let pron: Vec<String> = seq
            .iter()
            .flat_map(|&g| model.graphones()[g].phonemes.iter().cloned())
            .collect();
        if !pron.is_empty() {
            let score = score(model, seq);
            let better = match best {
                None => true,
                Some((bp, bs)) => score > *bs || (score == *bs && pron < *bp),
            };
            if score.is_finite() && better {
                *best = Some((pron, score));
            }
        }
    }
    for (g, sp) in spelled.iter().enumerate() {
        let n = sp.len();
        if n == 0 && after_insert {
            continue;
        }
        if i + n <= letters.len() && sp[..] == letters[i..i + n] {
            seq.push(g);
            search(model, spelled, letters, i + n, n == 0, seq, best);
            seq.pop();
        }
    }
}

/// Chain-rule log10 probability with the full history passed every time.
pub fn score(model: &G2pModel, seq: &[usize]) -> f64 {
    let lm = model.lm();
    let words: Vec<String> = seq.iter().map(|g| format!("g{g}")).collect();
    let mut hist: Vec<&str> = vec!["<s>"];
    let mut total = 0.0;
    for w in &words {
        total += lm.prob(w, &hist);
        hist.push(w);
    }
    total + lm.prob("</s>", &hist)
}

/// All words of length 1..=max_len over `alphabet`.
pub fn all_words(alphabet: &[char], max_len: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut layer = vec![String::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|p| alphabet.iter().map(move |c| format!("{p}{c}")))
            .collect();
        out.extend(layer.iter().cloned());
    }
    out
}
