//! Flat `key = value` pipeline configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::g2p::{G2pOptions, MergePolicy};
use crate::ngram::OovPolicy;
use crate::text::NormalizeOptions;

/// Keys other than `corpus.<id>`, with their defaults ("" = unset).
const KEYS: &[(&str, &str)] = &[
    ("language", "und"),
    ("output_dir", ""),
    ("dev", ""),
    ("test", ""),
    ("order", "4"),
    ("vocab_min_count", "1"),
    ("vocab_max_size", ""),
    ("lowercase", "true"),
    ("strip_punct", "true"),
    ("prune_theta", ""),
    ("oov_policy", "exclude"),
    ("em_tol", "1e-7"),
    ("em_max_iter", "200"),
    ("seed", "0"),
    ("seed_lexicon", ""),
    ("phoneme_inventory", ""),
    ("addon_lexicon", ""),
    ("phoneme_mapping", ""),
    ("lexicon_words", ""),
    ("merge_policy", "union"),
    ("g2p_order", "3"),
    ("g2p_max_letters", "2"),
    ("g2p_max_phonemes", "2"),
    ("g2p_min_letters", "0"),
    ("g2p_min_phonemes", "0"),
    ("g2p_em_iters", "30"),
    ("g2p_beam", "16"),
    ("g2p_nbest", "1"),
    ("dialect_mapping", ""),
    ("dialect_interpolate", "true"),
    ("map_eval_text", "true"),
    ("hyp", ""),
    ("ref", ""),
];

#[derive(Debug, Clone, PartialEq)]
pub struct LexiconSettings {
    pub seed_lexicon: Option<PathBuf>,
    pub inventory: Option<PathBuf>,
    pub addon: Option<PathBuf>,
    pub phoneme_mapping: Option<PathBuf>,
    /// Words to cover; defaults to the corpus vocabulary.
    pub words: Option<PathBuf>,
    pub policy: MergePolicy,
    pub g2p: G2pOptions,
    pub beam: usize,
    pub n_best: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialectSettings {
    pub mapping: Option<PathBuf>,
    pub interpolate: bool,
    pub map_eval_text: bool,
    pub hyp: Option<PathBuf>,
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub language: String,
    pub output_dir: PathBuf,
    /// (id, path), sorted by id.
    pub corpora: Vec<(String, PathBuf)>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub order: usize,
    pub vocab_min_count: usize,
    pub vocab_max_size: Option<usize>,
    pub normalize: NormalizeOptions,
    pub prune_theta: Option<f64>,
    pub oov: OovPolicy,
    pub em_tol: f64,
    pub em_max_iter: usize,
    pub seed: u64,
    pub lexicon: LexiconSettings,
    pub dialect: DialectSettings,
    /// Effective settings as written (paths unresolved), defaults included.
    pub settings: BTreeMap<String, String>,
}

fn origin(path: Option<&Path>) -> PathBuf {
    path.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("<config>"))
}

/// Parses `key = value` lines (`#` comments) into a raw map.
pub fn parse_settings(text: &str, path: Option<&Path>) -> Result<BTreeMap<String, String>> {
    let mut raw = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::parse(origin(path), no + 1, "expected key = value"));
        };
        let (k, v) = (k.trim(), v.trim());
        check_key(k).map_err(|e| Error::parse(origin(path), no + 1, e.to_string()))?;
        if raw.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::parse(origin(path), no + 1, format!("'{k}' set twice")));
        }
    }
    Ok(raw)
}

fn check_key(k: &str) -> Result<()> {
    if let Some(id) = k.strip_prefix("corpus.") {
        if id.is_empty() || id.contains(|c: char| c.is_whitespace() || c == '/' || c == '\\') {
            return Err(Error::InvalidArgument(format!("invalid corpus id in '{k}'")));
        }
        return Ok(());
    }
    if KEYS.iter().any(|(name, _)| *name == k) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("unknown setting '{k}'")))
    }
}

fn value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::InvalidArgument(format!("bad value for {key}: '{v}'")))
}

impl PipelineConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, Some(path), base, overrides)
    }

    /// Relative paths resolve against `base`. Overrides are `key=value`
    /// strings applied after the file.
    pub fn from_text(text: &str, path: Option<&Path>, base: &Path, overrides: &[String]) -> Result<Self> {
        let mut raw = parse_settings(text, path)?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("override '{o}' is not key=value")))?;
            check_key(k.trim())?;
            raw.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut settings: BTreeMap<String, String> =
            KEYS.iter().map(|(k, d)| (k.to_string(), d.to_string())).collect();
        settings.extend(raw);
        Self::from_settings(settings, base)
    }

    fn from_settings(s: BTreeMap<String, String>, base: &Path) -> Result<Self> {
        let get = |k: &str| s.get(k).map(String::as_str).unwrap_or("");
        let path = |k: &str| -> Option<PathBuf> {
            let v = get(k);
            (!v.is_empty()).then(|| base.join(v))
        };
        let num = |k: &str| -> Result<usize> { value(k, get(k)) };
        let flag = |k: &str| -> Result<bool> { value(k, get(k)) };
        let opt_num = |k: &str| -> Result<Option<usize>> {
            let v = get(k);
            if v.is_empty() {
                Ok(None)
            } else {
                value(k, v).map(Some)
            }
        };

        let corpora: Vec<(String, PathBuf)> = s
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("corpus.").map(|id| (id.to_string(), base.join(v))))
            .collect();
        let output_dir = path("output_dir").ok_or_else(|| Error::InvalidArgument("output_dir is required".into()))?;
        let prune_theta = match get("prune_theta") {
            "" => None,
            v => Some(value::<f64>("prune_theta", v)?),
        };
        let cfg = PipelineConfig {
            language: get("language").to_string(),
            output_dir,
            corpora,
            dev: path("dev"),
            test: path("test"),
            order: num("order")?,
            vocab_min_count: num("vocab_min_count")?,
            vocab_max_size: opt_num("vocab_max_size")?,
            normalize: NormalizeOptions {
                lowercase: flag("lowercase")?,
                strip_punct: flag("strip_punct")?,
            },
            prune_theta,
            oov: get("oov_policy").parse()?,
            em_tol: value("em_tol", get("em_tol"))?,
            em_max_iter: num("em_max_iter")?,
            seed: value("seed", get("seed"))?,
            lexicon: LexiconSettings {
                seed_lexicon: path("seed_lexicon"),
                inventory: path("phoneme_inventory"),
                addon: path("addon_lexicon"),
                phoneme_mapping: path("phoneme_mapping"),
                words: path("lexicon_words"),
                policy: get("merge_policy").parse()?,
                g2p: G2pOptions {
                    order: num("g2p_order")?,
                    min_letters: num("g2p_min_letters")?,
                    max_letters: num("g2p_max_letters")?,
                    min_phonemes: num("g2p_min_phonemes")?,
                    max_phonemes: num("g2p_max_phonemes")?,
                    em_iters: num("g2p_em_iters")?,
                    ..G2pOptions::default()
                },
                beam: num("g2p_beam")?,
                n_best: num("g2p_nbest")?,
            },
            dialect: DialectSettings {
                mapping: path("dialect_mapping"),
                interpolate: flag("dialect_interpolate")?,
                map_eval_text: flag("map_eval_text")?,
                hyp: path("hyp"),
                reference: path("ref"),
            },
            settings: s.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every input file with its setting name, in settings order.
    pub fn inputs(&self) -> Vec<(String, PathBuf)> {
        let mut out: Vec<(String, PathBuf)> = self
            .corpora
            .iter()
            .map(|(id, p)| (format!("corpus.{id}"), p.clone()))
            .collect();
        let singles = [
            ("dev", &self.dev),
            ("test", &self.test),
            ("seed_lexicon", &self.lexicon.seed_lexicon),
            ("phoneme_inventory", &self.lexicon.inventory),
            ("addon_lexicon", &self.lexicon.addon),
            ("phoneme_mapping", &self.lexicon.phoneme_mapping),
            ("lexicon_words", &self.lexicon.words),
            ("dialect_mapping", &self.dialect.mapping),
            ("hyp", &self.dialect.hyp),
            ("ref", &self.dialect.reference),
        ];
        out.extend(singles.into_iter().filter_map(|(k, p)| p.clone().map(|p| (k.to_string(), p))));
        out
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.order == 0 {
            return bad("order must be at least 1".into());
        }
        if self.corpora.is_empty() {
            return bad("at least one corpus.<id> = path entry is required".into());
        }
        if self.corpora.len() > 1 && self.dev.is_none() {
            return bad("dev is required to estimate weights for several corpora".into());
        }
        if self.vocab_min_count == 0 {
            return bad("vocab_min_count must be at least 1".into());
        }
        if self.lexicon.beam == 0 || self.lexicon.n_best == 0 {
            return bad("g2p_beam and g2p_nbest must be at least 1".into());
        }
        if self.dialect.hyp.is_some() != self.dialect.reference.is_some() {
            return bad("hyp and ref must be given together".into());
        }
        let mut seen = BTreeMap::new();
        for (name, p) in self.inputs() {
            if let Some(other) = seen.insert(p.clone(), name.clone()) {
                return bad(format!("{other} and {name} refer to the same file {}", p.display()));
            }
            if !p.is_file() {
                return bad(format!("{name}: {} is not a readable file", p.display()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn files(dir: &Path, names: &[&str]) {
        for n in names {
            std::fs::write(dir.join(n), "a b\n").unwrap();
        }
    }

    #[test]
    fn parse_with_defaults_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        files(dir.path(), &["a.txt", "b.txt", "dev.txt"]);
        let text = "# demo\nlanguage = xx\noutput_dir = out\ncorpus.b = b.txt\ncorpus.a = a.txt\ndev = dev.txt\n";
        let cfg = PipelineConfig::from_text(text, None, dir.path(), &["order=3".into(), "prune_theta = 1e-6".into()]).unwrap();
        assert_eq!(cfg.order, 3);
        assert_eq!(cfg.prune_theta, Some(1e-6));
        assert_eq!(cfg.corpora[0].0, "a");
        assert_eq!(cfg.output_dir, dir.path().join("out"));
        assert_eq!(cfg.settings["corpus.a"], "a.txt");
        assert_eq!(cfg.settings["vocab_min_count"], "1");
        assert_eq!(cfg.lexicon.g2p.max_letters, 2);
    }

    #[test]
    fn invalid_configs() {
        let dir = tempfile::tempdir().unwrap();
        files(dir.path(), &["a.txt", "b.txt"]);
        let base = "output_dir = out\ncorpus.a = a.txt\n";
        let load = |extra: &str| PipelineConfig::from_text(&format!("{base}{extra}"), None, dir.path(), &[]);
        assert!(load("").is_ok());
        assert!(load("order = 0\n").is_err());
        assert!(load("bogus = 1\n").is_err());
        assert!(load("order = 2\norder = 3\n").is_err());
        assert!(load("corpus.b = b.txt\n").is_err(), "two corpora need dev");
        assert!(load("dev = a.txt\n").is_err(), "paths must be distinct");
        assert!(load("dev = missing.txt\n").is_err());
        assert!(load("oov_policy = maybe\n").is_err());
        assert!(load("no equals sign\n").is_err());
        assert!(PipelineConfig::from_text("corpus.a = a.txt\n", None, dir.path(), &[]).is_err());
    }
}
