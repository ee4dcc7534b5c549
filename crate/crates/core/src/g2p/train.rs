//! Graphone inventory and EM over latent segmentations.
//!
//! EM runs on a maximum-likelihood graphone m-gram so every iteration is a
//! proper EM step; the returned model is a smoothed back-off LM trained on
//! the Viterbi segmentations under the final EM estimate.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{G2pOptions, Graphone};
use crate::par;

/// Symbol ids used during EM: graphone ids, plus the two sentinels.
pub(super) const START: u32 = u32::MAX;
pub(super) const END: u32 = u32::MAX - 1;

type History = Vec<u32>;
type State = (History, bool);

/// One (spelling, pronunciation) pair with all segmentation edges.
pub(super) struct Lattice {
    width: usize,
    /// Per grid position (i * width + j): (target position, empty-letters?, graphone id).
    edges: Vec<Vec<(usize, bool, u32)>>,
    last: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    /// log10 training likelihood of each EM estimate, starting with the
    /// uniform initialization.
    pub log_likelihood: Vec<f64>,
    pub entries_used: usize,
    /// Entries no segmentation within the size limits can explain.
    pub skipped: Vec<(String, String)>,
}

fn sizes(opts: &G2pOptions) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for gl in opts.min_letters..=opts.max_letters {
        for pl in opts.min_phonemes..=opts.max_phonemes {
            if gl + pl > 0 {
                out.push((gl, pl));
            }
        }
    }
    out
}

fn graphone(letters: &[char], phones: &[String]) -> Graphone {
    Graphone {
        letters: letters.iter().collect(),
        phonemes: phones.to_vec(),
    }
}

/// Graphones on some complete segmentation path of (word, pron), or None
/// when the pair cannot be segmented. States are (i, j, last-had-no-letters).
pub(super) fn usable_graphones(word: &[char], pron: &[String], opts: &G2pOptions) -> Option<BTreeSet<Graphone>> {
    let (n, p) = (word.len(), pron.len());
    let w = p + 1;
    let idx = |i: usize, j: usize, f: bool| ((i * w + j) << 1) | usize::from(f);
    let sz = sizes(opts);
    let mut fwd = vec![false; (n + 1) * w * 2];
    fwd[idx(0, 0, false)] = true;
    for s in 0..=(n + p) {
        for i in s.saturating_sub(p)..=s.min(n) {
            let j = s - i;
            for f in [false, true] {
                if !fwd[idx(i, j, f)] {
                    continue;
                }
                for &(gl, pl) in &sz {
                    if (gl == 0 && f) || i + gl > n || j + pl > p {
                        continue;
                    }
                    fwd[idx(i + gl, j + pl, gl == 0)] = true;
                }
            }
        }
    }
    let mut bwd = vec![false; (n + 1) * w * 2];
    bwd[idx(n, p, false)] = true;
    bwd[idx(n, p, true)] = true;
    for s in (0..(n + p)).rev() {
        for i in s.saturating_sub(p)..=s.min(n) {
            let j = s - i;
            for f in [false, true] {
                bwd[idx(i, j, f)] = sz.iter().any(|&(gl, pl)| {
                    !(gl == 0 && f) && i + gl <= n && j + pl <= p && bwd[idx(i + gl, j + pl, gl == 0)]
                });
            }
        }
    }
    if !bwd[idx(0, 0, false)] {
        return None;
    }
    let mut out = BTreeSet::new();
    for i in 0..=n {
        for j in 0..=p {
            for f in [false, true] {
                if !fwd[idx(i, j, f)] {
                    continue;
                }
                for &(gl, pl) in &sz {
                    if (gl == 0 && f) || i + gl > n || j + pl > p || !bwd[idx(i + gl, j + pl, gl == 0)] {
                        continue;
                    }
                    out.insert(graphone(&word[i..i + gl], &pron[j..j + pl]));
                }
            }
        }
    }
    Some(out)
}

pub(super) fn build_lattice(
    word: &[char],
    pron: &[String],
    opts: &G2pOptions,
    ids: &HashMap<Graphone, u32>,
) -> Lattice {
    let (n, p) = (word.len(), pron.len());
    let width = p + 1;
    let sz = sizes(opts);
    let mut edges = vec![Vec::new(); (n + 1) * width];
    for i in 0..=n {
        for j in 0..=p {
            for &(gl, pl) in &sz {
                if i + gl > n || j + pl > p {
                    continue;
                }
                if let Some(&id) = ids.get(&graphone(&word[i..i + gl], &pron[j..j + pl])) {
                    edges[i * width + j].push(((i + gl) * width + j + pl, gl == 0, id));
                }
            }
        }
    }
    Lattice {
        width,
        edges,
        last: n * width + p,
    }
}

impl Lattice {
    /// Grid positions in an order where every edge goes forward.
    fn order(&self) -> Vec<usize> {
        let rows = self.last / self.width + 1;
        let mut pos: Vec<usize> = (0..rows * self.width).collect();
        pos.sort_by_key(|&x| (x / self.width + x % self.width, x));
        pos
    }
}

/// Maximum-likelihood m-gram over graphone ids; `None` table = uniform.
/// The table may be of a lower order than the lattice states track, in
/// which case lookups use the history suffix.
pub(super) struct MlModel {
    order: usize,
    table_order: usize,
    uniform: f64,
    table: Option<HashMap<History, HashMap<u32, f64>>>,
}

impl MlModel {
    pub(super) fn uniform(order: usize, n_graphones: usize) -> Self {
        MlModel {
            order,
            table_order: order,
            uniform: 1.0 / (n_graphones + 1) as f64,
            table: None,
        }
    }

    fn p(&self, hist: &[u32], sym: u32) -> f64 {
        match &self.table {
            None => self.uniform,
            Some(t) => {
                let h = &hist[hist.len() - (self.table_order - 1).min(hist.len())..];
                t.get(h).and_then(|m| m.get(&sym)).copied().unwrap_or(0.0)
            }
        }
    }

    fn start(&self) -> History {
        if self.order > 1 {
            vec![START]
        } else {
            Vec::new()
        }
    }

    fn push(&self, hist: &[u32], sym: u32) -> History {
        let mut h = hist.to_vec();
        h.push(sym);
        let keep = self.order - 1;
        h.split_off(h.len() - keep.min(h.len()))
    }

    fn from_counts(order: usize, counts: &BTreeMap<(History, u32), f64>) -> Self {
        let mut totals: BTreeMap<&History, f64> = BTreeMap::new();
        for ((h, _), c) in counts {
            *totals.entry(h).or_default() += c;
        }
        let mut table: HashMap<History, HashMap<u32, f64>> = HashMap::new();
        for ((h, s), c) in counts {
            table.entry(h.clone()).or_default().insert(*s, c / totals[h]);
        }
        MlModel {
            order,
            table_order: order,
            uniform: 0.0,
            table: Some(table),
        }
    }

    /// Same distribution, with lattice states tracking a longer history.
    fn widen(self, order: usize) -> Self {
        MlModel { order, ..self }
    }
}

type Counts = BTreeMap<(History, u32), f64>;

/// Forward-backward over one lattice: (log10 likelihood, expected counts).
fn expectations(lat: &Lattice, model: &MlModel) -> (f64, Counts) {
    let order = lat.order();
    let mut alpha: Vec<BTreeMap<State, f64>> = vec![BTreeMap::new(); lat.edges.len()];
    alpha[0].insert((model.start(), false), 1.0);
    for &pos in &order {
        let states: Vec<(State, f64)> = alpha[pos].iter().map(|(s, a)| (s.clone(), *a)).collect();
        for ((hist, flag), a) in states {
            for &(to, ins, id) in &lat.edges[pos] {
                if ins && flag {
                    continue;
                }
                let p = model.p(&hist, id);
                if p > 0.0 {
                    *alpha[to].entry((model.push(&hist, id), ins)).or_default() += a * p;
                }
            }
        }
    }
    let z: f64 = alpha[lat.last]
        .iter()
        .map(|((h, _), a)| a * model.p(h, END))
        .sum();
    let mut counts = Counts::new();
    if !(z > 0.0) {
        return (f64::NEG_INFINITY, counts);
    }
    let mut beta: Vec<BTreeMap<State, f64>> = vec![BTreeMap::new(); lat.edges.len()];
    for &pos in order.iter().rev() {
        let mut b_here = BTreeMap::new();
        for ((hist, flag), a) in &alpha[pos] {
            let mut b = 0.0;
            if pos == lat.last {
                let pe = model.p(hist, END);
                b += pe;
                *counts.entry((hist.clone(), END)).or_default() += a * pe / z;
            }
            for &(to, ins, id) in &lat.edges[pos] {
                if ins && *flag {
                    continue;
                }
                let p = model.p(hist, id);
                if p == 0.0 {
                    continue;
                }
                let bt = beta[to].get(&(model.push(hist, id), ins)).copied().unwrap_or(0.0);
                if bt > 0.0 {
                    b += p * bt;
                    *counts.entry((hist.clone(), id)).or_default() += a * p * bt / z;
                }
            }
            b_here.insert((hist.clone(), *flag), b);
        }
        beta[pos] = b_here;
    }
    (z.log10(), counts)
}

/// Total log10 likelihood and merged expected counts, reduced in entry order.
pub(super) fn e_step(lattices: &[Lattice], model: &MlModel) -> (f64, Counts) {
    let per_entry = par::map(lattices, |l| expectations(l, model));
    let lls: Vec<f64> = per_entry.iter().map(|(ll, _)| *ll).collect();
    let mut total = Counts::new();
    for (_, c) in per_entry {
        for (k, v) in c {
            *total.entry(k).or_default() += v;
        }
    }
    (par::ordered_sum(&lls), total)
}

/// Runs EM and returns the final estimate with its likelihood history.
///
/// Orders are ramped up: EM runs to convergence at order 1, and each
/// estimate seeds the next order unchanged (same likelihood), which keeps
/// higher orders from drifting into shifted alignments they can overfit.
pub(super) fn run_em(lattices: &[Lattice], n_graphones: usize, opts: &G2pOptions) -> (MlModel, Vec<f64>) {
    let start_order = if opts.em_iters == 0 { opts.order } else { 1 };
    let mut model = MlModel::uniform(start_order, n_graphones);
    let (mut ll, mut counts) = e_step(lattices, &model);
    let mut history = vec![ll];
    for order in start_order..=opts.order {
        if order > model.order {
            model = model.widen(order);
            (ll, counts) = e_step(lattices, &model);
        }
        for it in 0..opts.em_iters {
            let next = MlModel::from_counts(order, &counts);
            let (next_ll, next_counts) = e_step(lattices, &next);
            log::debug!("g2p EM order {order} iteration {}: log10 likelihood {next_ll:.6}", it + 1);
            model = next;
            history.push(next_ll);
            let gain = next_ll - ll;
            ll = next_ll;
            counts = next_counts;
            if gain < opts.tol {
                break;
            }
        }
    }
    if model.order < opts.order {
        model = model.widen(opts.order);
    }
    (model, history)
}

/// Most probable graphone sequence through a lattice.
pub(super) fn viterbi(lat: &Lattice, model: &MlModel) -> Option<Vec<u32>> {
    type Back = Option<(usize, State, u32)>;
    let mut best: Vec<BTreeMap<State, (f64, Back)>> = vec![BTreeMap::new(); lat.edges.len()];
    best[0].insert((model.start(), false), (1.0, None));
    for pos in lat.order() {
        let states: Vec<(State, f64)> = best[pos].iter().map(|(s, (v, _))| (s.clone(), *v)).collect();
        for (state, v) in states {
            for &(to, ins, id) in &lat.edges[pos] {
                if ins && state.1 {
                    continue;
                }
                let p = model.p(&state.0, id);
                if p == 0.0 {
                    continue;
                }
                let cand = v * p;
                let slot = best[to].entry((model.push(&state.0, id), ins)).or_insert((0.0, None));
                if cand > slot.0 {
                    *slot = (cand, Some((pos, state.clone(), id)));
                }
            }
        }
    }
    let mut end: Option<(f64, State)> = None;
    for (s, (v, _)) in &best[lat.last] {
        let score = v * model.p(&s.0, END);
        if score > 0.0 && end.as_ref().is_none_or(|(b, _)| score > *b) {
            end = Some((score, s.clone()));
        }
    }
    let (_, mut state) = end?;
    let mut pos = lat.last;
    let mut seq = Vec::new();
    while let Some((prev, prev_state, id)) = best[pos][&state].1.clone() {
        seq.push(id);
        pos = prev;
        state = prev_state;
    }
    seq.reverse();
    Some(seq)
}
