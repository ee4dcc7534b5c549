//! Pronunciation lexica: loading, saving and merging.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

pub type Pronunciation = Vec<String>;
pub type PhonemeInventory = BTreeSet<String>;

/// Words mapped to a deduplicated, sorted set of non-empty pronunciations.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lexicon {
    entries: BTreeMap<String, BTreeSet<Pronunciation>>,
    inventory: PhonemeInventory,
}

impl Lexicon {
    /// An empty lexicon over a declared inventory.
    pub fn with_inventory(inventory: PhonemeInventory) -> Self {
        Lexicon {
            entries: BTreeMap::new(),
            inventory,
        }
    }

    /// Builds a lexicon whose inventory is every phoneme used.
    pub fn from_entries<I, W, P, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (W, P)>,
        W: Into<String>,
        P: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut lex = Lexicon::default();
        for (w, p) in entries {
            let p: Pronunciation = p.into_iter().map(Into::into).collect();
            lex.inventory.extend(p.iter().cloned());
            lex.insert(w.into(), p)?;
        }
        Ok(lex)
    }

    /// Adds one pronunciation; duplicates collapse.
    pub fn insert(&mut self, word: String, pron: Pronunciation) -> Result<bool> {
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!("invalid lexicon word {word:?}")));
        }
        if pron.is_empty() {
            return Err(Error::InvalidArgument(format!("empty pronunciation for '{word}'")));
        }
        if let Some(p) = pron.iter().find(|p| !self.inventory.contains(*p)) {
            return Err(Error::InventoryMismatch(format!(
                "phoneme '{p}' of '{word}' is not in the inventory"
            )));
        }
        Ok(self.entries.entry(word).or_default().insert(pron))
    }

    pub fn get(&self, word: &str) -> Option<&BTreeSet<Pronunciation>> {
        self.entries.get(word)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.contains_key(word)
    }

    pub fn inventory(&self) -> &PhonemeInventory {
        &self.inventory
    }

    /// Number of words.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pronunciation_count(&self) -> usize {
        self.entries.values().map(BTreeSet::len).sum()
    }

    /// (word, pronunciation) pairs in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Pronunciation)> {
        self.entries
            .iter()
            .flat_map(|(w, ps)| ps.iter().map(move |p| (w.as_str(), p)))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Reads `word<TAB>ph1 ph2 ...` lines. Without an inventory, the
    /// inventory is whatever the file uses.
    pub fn load(path: &Path, inventory: Option<PhonemeInventory>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let declared = inventory.is_some();
        let mut lex = Lexicon::with_inventory(inventory.unwrap_or_default());
        for (no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let Some((word, pron)) = line.split_once('\t') else {
                return Err(Error::parse(path, no + 1, "expected word<TAB>pronunciation"));
            };
            let pron: Pronunciation = pron.split_whitespace().map(str::to_string).collect();
            if !declared {
                lex.inventory.extend(pron.iter().cloned());
            }
            lex.insert(word.trim().to_string(), pron)
                .map_err(|e| Error::parse(path, no + 1, e.to_string()))?;
        }
        Ok(lex)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (w, p) in self.iter() {
            out.push_str(w);
            out.push('\t');
            out.push_str(&p.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// One symbol per line.
pub fn load_inventory(path: &Path) -> Result<PhonemeInventory> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut inv = PhonemeInventory::new();
    for (no, line) in text.lines().enumerate() {
        let sym = line.trim();
        if sym.is_empty() {
            continue;
        }
        if sym.contains(char::is_whitespace) {
            return Err(Error::parse(path, no + 1, "phoneme symbols cannot contain whitespace"));
        }
        inv.insert(sym.to_string());
    }
    Ok(inv)
}

pub fn save_inventory(inv: &PhonemeInventory, path: &Path) -> Result<()> {
    let text: String = inv.iter().map(|s| format!("{s}\n")).collect();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Phoneme renaming applied to an addon lexicon before merging.
pub type PhonemeMapping = BTreeMap<String, String>;

/// Reads `from<TAB>to` lines; `#` starts a comment line.
pub fn load_phoneme_mapping(path: &Path) -> Result<PhonemeMapping> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut map = PhonemeMapping::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let mut f = line.split_whitespace();
        let (Some(a), Some(b), None) = (f.next(), f.next(), f.next()) else {
            return Err(Error::parse(path, no + 1, "expected from<TAB>to"));
        };
        if map.insert(a.to_string(), b.to_string()).is_some() {
            return Err(Error::parse(path, no + 1, format!("phoneme '{a}' mapped twice")));
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergePolicy {
    Union,
    AddonWins,
    BaseWins,
}

impl FromStr for MergePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "union" => Ok(MergePolicy::Union),
            "addon_wins" | "addon-wins" => Ok(MergePolicy::AddonWins),
            "base_wins" | "base-wins" => Ok(MergePolicy::BaseWins),
            _ => Err(Error::InvalidArgument(format!(
                "unknown merge policy '{s}' (union, addon_wins, base_wins)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeReport {
    pub base_words: usize,
    pub addon_words: usize,
    pub shared_words: usize,
    pub output_words: usize,
    pub output_pronunciations: usize,
}

impl fmt::Display for MergeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "base_words\t{}", self.base_words)?;
        writeln!(f, "addon_words\t{}", self.addon_words)?;
        writeln!(f, "shared_words\t{}", self.shared_words)?;
        writeln!(f, "output_words\t{}", self.output_words)?;
        writeln!(f, "output_pronunciations\t{}", self.output_pronunciations)
    }
}

/// Merges `addon` into `base`. The addon's inventory must fit inside the
/// base inventory, after `mapping` (if any) renames addon phonemes.
pub fn merge_lexicons(
    base: &Lexicon,
    addon: &Lexicon,
    policy: MergePolicy,
    mapping: Option<&PhonemeMapping>,
) -> Result<(Lexicon, MergeReport)> {
    let addon = match mapping {
        Some(m) => map_phonemes(addon, m, base.inventory())?,
        None => addon.clone(),
    };
    let foreign: Vec<&str> = addon
        .inventory
        .difference(&base.inventory)
        .map(String::as_str)
        .collect();
    if !foreign.is_empty() {
        return Err(Error::InventoryMismatch(format!(
            "addon phonemes missing from the base inventory: {}",
            foreign.join(" ")
        )));
    }
    let mut out = base.clone();
    let mut shared = 0;
    for (w, prons) in &addon.entries {
        match out.entries.get_mut(w) {
            None => {
                out.entries.insert(w.clone(), prons.clone());
            }
            Some(existing) => {
                shared += 1;
                match policy {
                    MergePolicy::Union => existing.extend(prons.iter().cloned()),
                    MergePolicy::AddonWins => *existing = prons.clone(),
                    MergePolicy::BaseWins => {}
                }
            }
        }
    }
    let report = MergeReport {
        base_words: base.len(),
        addon_words: addon.len(),
        shared_words: shared,
        output_words: out.len(),
        output_pronunciations: out.pronunciation_count(),
    };
    Ok((out, report))
}

fn map_phonemes(lex: &Lexicon, mapping: &PhonemeMapping, target: &PhonemeInventory) -> Result<Lexicon> {
    if let Some((a, b)) = mapping.iter().find(|(_, b)| !target.contains(*b)) {
        return Err(Error::InvalidMapping(format!(
            "'{a}' maps to '{b}', which is not in the base inventory"
        )));
    }
    let rename = |p: &String| mapping.get(p).unwrap_or(p).clone();
    let inventory = lex.inventory.iter().map(rename).collect();
    let mut out = Lexicon::with_inventory(inventory);
    for (w, p) in lex.iter() {
        out.insert(w.to_string(), p.iter().map(rename).collect())?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(entries: &[(&str, &str)]) -> Lexicon {
        Lexicon::from_entries(entries.iter().map(|(w, p)| (*w, p.split_whitespace()))).unwrap()
    }

    #[test]
    fn duplicates_collapse_and_empty_rejected() {
        let l = lex(&[("a", "x y"), ("a", "x y"), ("a", "y")]);
        assert_eq!(l.len(), 1);
        assert_eq!(l.pronunciation_count(), 2);
        assert!(Lexicon::from_entries([("a", Vec::<String>::new())]).is_err());
    }

    #[test]
    fn file_round_trip_and_inventory_check() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("lex.txt");
        std::fs::write(&p, "b\tb\na\ta x\na\ta\n").unwrap();
        let l = Lexicon::load(&p, None).unwrap();
        assert_eq!(l.to_text(), "a\ta\na\ta x\nb\tb\n");
        l.save(&p).unwrap();
        assert_eq!(Lexicon::load(&p, None).unwrap(), l);

        let inv: PhonemeInventory = ["a", "b"].iter().map(|s| s.to_string()).collect();
        assert!(matches!(Lexicon::load(&p, Some(inv)), Err(Error::Parse { line: 2, .. })));
        std::fs::write(&p, "a\n").unwrap();
        assert!(Lexicon::load(&p, None).is_err());
        std::fs::write(&p, "a\t \n").unwrap();
        assert!(Lexicon::load(&p, None).is_err());
    }

    #[test]
    fn merge_policies() {
        let base = lex(&[("w", "a b"), ("x", "a")]);
        let addon = lex(&[("w", "b a"), ("y", "b")]);
        let (u, r) = merge_lexicons(&base, &addon, MergePolicy::Union, None).unwrap();
        assert_eq!(u.get("w").unwrap().len(), 2);
        assert_eq!((r.shared_words, r.output_words, r.output_pronunciations), (1, 3, 4));
        let (a, _) = merge_lexicons(&base, &addon, MergePolicy::AddonWins, None).unwrap();
        assert_eq!(a.get("w").unwrap().iter().next().unwrap(), &["b", "a"]);
        let (b, _) = merge_lexicons(&base, &addon, MergePolicy::BaseWins, None).unwrap();
        assert_eq!(b.get("w").unwrap().iter().next().unwrap(), &["a", "b"]);
        assert!(b.contains("y"));
    }

    #[test]
    fn disjoint_merge_is_plain_union() {
        let a = lex(&[("p", "a")]);
        let b = lex(&[("q", "a")]);
        for pol in [MergePolicy::Union, MergePolicy::AddonWins, MergePolicy::BaseWins] {
            let (m, _) = merge_lexicons(&a, &b, pol, None).unwrap();
            assert_eq!(m.to_text(), "p\ta\nq\ta\n");
        }
    }

    #[test]
    fn inventory_mismatch_needs_mapping() {
        let base = lex(&[("w", "a b")]);
        let addon = lex(&[("v", "A")]);
        assert!(matches!(
            merge_lexicons(&base, &addon, MergePolicy::Union, None),
            Err(Error::InventoryMismatch(_))
        ));
        let m: PhonemeMapping = [("A".to_string(), "a".to_string())].into();
        let (out, _) = merge_lexicons(&base, &addon, MergePolicy::Union, Some(&m)).unwrap();
        assert_eq!(out.get("v").unwrap().iter().next().unwrap(), &["a"]);
        let bad: PhonemeMapping = [("A".to_string(), "z".to_string())].into();
        assert!(matches!(
            merge_lexicons(&base, &addon, MergePolicy::Union, Some(&bad)),
            Err(Error::InvalidMapping(_))
        ));
    }
}
