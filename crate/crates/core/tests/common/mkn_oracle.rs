//! Brute-force interpolated modified Kneser-Ney, written straight from the
//! textbook definitions over padded token strings. Shares no code with the
//! library's trainer.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use telelm::ngram::{BackoffLM, LOG10_ZERO};

pub struct MknOracle {
    pub order: usize,
    /// Predictable words: the vocabulary minus `<s>`.
    pub predictable: Vec<String>,
    pub all_words: Vec<String>,
    raw: BTreeMap<Vec<String>, u64>,
    pub discounts: Vec<[f64; 3]>,
    cache: std::cell::RefCell<HashMap<(usize, String, Vec<String>), f64>>,
}

pub fn discounts_from_coc(n: [u64; 4]) -> [f64; 3] {
    if n.contains(&0) {
        return [0.5; 3];
    }
    let [n1, n2, n3, n4] = n.map(|x| x as f64);
    let y = n1 / (n1 + 2.0 * n2);
    let d = [
        1.0 - 2.0 * y * n2 / n1,
        2.0 - 3.0 * y * n3 / n2,
        3.0 - 4.0 * y * n4 / n3,
    ];
    if d.iter().any(|&x| x <= 0.0) {
        [0.5; 3]
    } else {
        d
    }
}

impl MknOracle {
    /// `vocab` lists every vocabulary word including the reserved markers.
    pub fn new(sentences: &[Vec<String>], vocab: &[String], order: usize) -> Self {
        let known: BTreeSet<&String> = vocab.iter().collect();
        let mut raw = BTreeMap::new();
        for s in sentences {
            let mut padded = vec!["<s>".to_string()];
            for w in s {
                padded.push(if known.contains(w) { w.clone() } else { "<unk>".to_string() });
            }
            padded.push("</s>".to_string());
            for start in 0..padded.len() {
                for len in 1..=order {
                    if start + len > padded.len() {
                        break;
                    }
                    let g = padded[start..start + len].to_vec();
                    if g == ["<s>"] {
                        continue;
                    }
                    *raw.entry(g).or_insert(0u64) += 1;
                }
            }
        }
        let predictable: Vec<String> = vocab.iter().filter(|w| *w != "<s>").cloned().collect();
        let mut o = MknOracle {
            order,
            predictable,
            all_words: vocab.to_vec(),
            raw,
            discounts: Vec::new(),
            cache: Default::default(),
        };
        for k in 1..=order {
            let mut coc = [0u64; 4];
            let grams: Vec<Vec<String>> = o.raw.keys().filter(|g| g.len() == k).cloned().collect();
            for g in grams {
                let a = o.adjusted(&g);
                if (1..=4).contains(&a) {
                    coc[a as usize - 1] += 1;
                }
            }
            o.discounts.push(discounts_from_coc(coc));
        }
        o
    }

    pub fn with_discounts(mut self, discounts: Vec<[f64; 3]>) -> Self {
        self.discounts = discounts;
        self.cache.borrow_mut().clear();
        self
    }

    pub fn count(&self, g: &[String]) -> u64 {
        self.raw.get(g).copied().unwrap_or(0)
    }

    pub fn ngrams(&self, k: usize) -> Vec<Vec<String>> {
        self.raw.keys().filter(|g| g.len() == k).cloned().collect()
    }

    /// Distinct left neighbours of `g`.
    fn continuation(&self, g: &[String]) -> u64 {
        self.all_words
            .iter()
            .filter(|v| {
                let mut ext = vec![(*v).clone()];
                ext.extend_from_slice(g);
                self.count(&ext) > 0
            })
            .count() as u64
    }

    pub fn adjusted(&self, g: &[String]) -> u64 {
        if g.len() == self.order || g[0] == "<s>" {
            self.count(g)
        } else {
            self.continuation(g)
        }
    }

    fn discount(&self, k: usize, a: u64) -> f64 {
        let d = self.discounts[k - 1];
        match a {
            0 => 0.0,
            1 => d[0],
            2 => d[1],
            _ => d[2],
        }
    }

    /// (total, gamma) for context `h` at level `h.len() + 1`.
    pub fn context_stats(&self, h: &[String]) -> (f64, f64) {
        let k = h.len() + 1;
        let mut total = 0.0;
        let mut mass = 0.0;
        for x in &self.predictable {
            let mut g = h.to_vec();
            g.push(x.clone());
            let a = self.adjusted(&g);
            total += a as f64;
            mass += self.discount(k, a);
        }
        if total == 0.0 {
            (0.0, 1.0)
        } else {
            (total, mass / total)
        }
    }

    /// Interpolated probability of `w` after history `h` (|h| < order).
    pub fn prob(&self, w: &str, h: &[String]) -> f64 {
        let key = (h.len(), w.to_string(), h.to_vec());
        if let Some(&p) = self.cache.borrow().get(&key) {
            return p;
        }
        let lower = if h.is_empty() {
            1.0 / self.predictable.len() as f64
        } else {
            self.prob(w, &h[1..])
        };
        let (total, gamma) = self.context_stats(h);
        let p = if total == 0.0 {
            lower
        } else {
            let mut g = h.to_vec();
            g.push(w.to_string());
            let a = self.adjusted(&g);
            let k = g.len();
            ((a as f64 - self.discount(k, a)).max(0.0)) / total + gamma * lower
        };
        self.cache.borrow_mut().insert(key, p);
        p
    }
}

/// Compares every stored probability and back-off weight with the oracle.
pub fn max_oracle_error(lm: &BackoffLM, oracle: &MknOracle) -> f64 {
    let v = lm.vocab();
    let mut worst: f64 = 0.0;
    for k in 1..=lm.order() {
        let expected: Vec<Vec<String>> = if k == 1 {
            oracle.all_words.iter().map(|w| vec![w.clone()]).collect()
        } else {
            oracle.ngrams(k)
        };
        assert_eq!(lm.len(k), expected.len(), "stored {k}-gram count");
        for g in expected {
            let ids: Vec<_> = g.iter().map(|w| v.get(w).unwrap()).collect();
            let e = lm.get(&ids).unwrap_or_else(|| panic!("missing {g:?}"));
            let w = g.last().unwrap();
            if w == "<s>" {
                assert_eq!(e.log_prob, LOG10_ZERO);
            } else {
                let p = oracle.prob(w, &g[..k - 1]);
                worst = worst.max((e.log_prob - p.log10()).abs());
            }
            if k < lm.order() && w != "</s>" && oracle.count(&g) > 0 {
                let (_, gamma) = oracle.context_stats(&g);
                let b = e.backoff.expect("context without back-off weight");
                worst = worst.max((b - gamma.log10()).abs());
            }
        }
    }
    worst
}
