//! End-to-end workflows over a configuration: LM building, lexicon
//! extension and dialect mapping. Every run writes a manifest recording
//! settings, input hashes and artifact hashes.

mod config;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dialect::{apply_mapping, mapped_lm_eval, LmConfig, MappingTable};
use crate::error::{Error, Result};
use crate::g2p::{extend_lexicon, load_inventory, load_phoneme_mapping, merge_lexicons, train_g2p, Lexicon};
use crate::mixture::{em_weights, interpolate_static, perplexity_mixture, weights_to_text, EmOptions};
use crate::ngram::{oov_rate, perplexity, train_corpus, write_arpa_string, BackoffLM, PerplexityReport};
use crate::prune::prune_entropy;
use crate::score::{read_transcripts, render_table, render_tsv, wer, Transcripts};
use crate::text::{build_vocabulary, load_corpus, normalize_line, Corpus, Vocabulary};

pub use config::{parse_settings, DialectSettings, LexiconSettings, PipelineConfig};

pub const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".telelm.lock";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Workflow {
    Lm,
    Lexicon,
    Dialect,
}

impl FromStr for Workflow {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lm" => Ok(Workflow::Lm),
            "lexicon" => Ok(Workflow::Lexicon),
            "dialect" => Ok(Workflow::Dialect),
            _ => Err(Error::InvalidArgument(format!("unknown workflow '{s}' (lm, lexicon, dialect)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the output directory.
    pub path: String,
    pub stage: String,
    pub sha256: String,
    pub bytes: u64,
    /// Every input that influenced the artifact, with its hash.
    pub inputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub language: String,
    pub seed: u64,
    /// Effective settings, `output_dir` excepted.
    pub settings: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, InputRecord>,
    pub artifacts: Vec<ArtifactRecord>,
    /// "complete", or "failed" with the artifacts written so far.
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Exclusive ownership of an output directory for one run.
struct Lock(PathBuf);

impl Lock {
    fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Lock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path)),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

struct Run<'a> {
    cfg: &'a PipelineConfig,
    hashes: BTreeMap<String, String>,
    artifacts: Vec<ArtifactRecord>,
    corpora: Vec<Corpus>,
    dev: Option<Corpus>,
    test: Option<Corpus>,
    vocab: Option<Arc<Vocabulary>>,
}

impl<'a> Run<'a> {
    fn corpus_inputs(&self) -> Vec<String> {
        self.cfg.corpora.iter().map(|(id, _)| format!("corpus.{id}")).collect()
    }

    fn write(&mut self, rel: &str, stage: &str, inputs: &[String], bytes: &[u8]) -> Result<()> {
        let path = self.cfg.output_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        let inputs = inputs
            .iter()
            .filter_map(|n| self.hashes.get(n).map(|h| (n.clone(), h.clone())))
            .collect();
        self.artifacts.push(ArtifactRecord {
            path: rel.to_string(),
            stage: stage.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
            inputs,
        });
        log::info!("[{stage}] wrote {}", path.display());
        Ok(())
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        log::info!("stage {name}");
        f(self).map_err(|e| e.in_stage(name))
    }

    fn load_text(&mut self) -> Result<()> {
        if !self.corpora.is_empty() {
            return Ok(());
        }
        let norm = self.cfg.normalize;
        for (id, path) in &self.cfg.corpora {
            let mut c = load_corpus(path, norm)?;
            if c.is_empty() {
                return Err(Error::EmptyCorpus(Some(id.clone())));
            }
            c.id = id.clone();
            self.corpora.push(c);
        }
        self.dev = self.cfg.dev.as_deref().map(|p| load_corpus(p, norm)).transpose()?;
        self.test = self.cfg.test.as_deref().map(|p| load_corpus(p, norm)).transpose()?;
        Ok(())
    }

    fn vocabulary(&mut self) -> Result<Arc<Vocabulary>> {
        if let Some(v) = &self.vocab {
            return Ok(v.clone());
        }
        self.load_text()?;
        let refs: Vec<&Corpus> = self.corpora.iter().collect();
        let v = Arc::new(build_vocabulary(&refs, self.cfg.vocab_min_count, self.cfg.vocab_max_size)?);
        self.vocab = Some(v.clone());
        Ok(v)
    }

    fn lm_workflow(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let corpus_in = self.corpus_inputs();
        let mut with_dev = corpus_in.clone();
        with_dev.push("dev".into());

        self.stage("normalize", |r| r.load_text())?;
        let vocab = self.stage("vocab", |r| {
            let v = r.vocabulary()?;
            r.write("vocab.txt", "vocab", &corpus_in, v.to_text().as_bytes())?;
            Ok(v)
        })?;
        let lms: Vec<BackoffLM> = self.stage("train", |r| {
            let mut lms = Vec::new();
            for c in &r.corpora {
                let mut lm = train_corpus(c, cfg.order, vocab.clone())?;
                lm.meta.corpus_id = c.id.clone();
                lms.push(lm);
            }
            for lm in &lms {
                let rel = format!("lm/{}.arpa", lm.meta.corpus_id);
                r.write(&rel, "train", &corpus_in, write_arpa_string(lm).as_bytes())?;
            }
            Ok(lms)
        })?;
        let lm_refs: Vec<&BackoffLM> = lms.iter().collect();
        let ids: Vec<String> = lms.iter().map(|lm| lm.meta.corpus_id.clone()).collect();

        let (weights, em_history) = self.stage("weights", |r| {
            let (w, hist) = if lms.len() == 1 {
                (vec![1.0], Vec::new())
            } else {
                let dev = r.dev.as_ref().expect("validated: dev present");
                let opts = EmOptions {
                    init: None,
                    tol: cfg.em_tol,
                    max_iter: cfg.em_max_iter,
                };
                let w = em_weights(&lm_refs, dev, &opts)?;
                (w.weights, w.history)
            };
            r.write("weights.tsv", "weights", &with_dev, weights_to_text(&ids, &w).as_bytes())?;
            Ok((w, hist))
        })?;

        let combined = self.stage("combine", |r| {
            let lm = if lms.len() == 1 {
                lms[0].clone()
            } else {
                interpolate_static(&lm_refs, &weights)?
            };
            r.write("combined.arpa", "combine", &with_dev, write_arpa_string(&lm).as_bytes())?;
            Ok(lm)
        })?;

        let pruned = match cfg.prune_theta {
            None => None,
            Some(theta) => Some(self.stage("prune", |r| {
                let (lm, report) = prune_entropy(&combined, theta);
                r.write("pruned.arpa", "prune", &with_dev, write_arpa_string(&lm).as_bytes())?;
                r.write("prune_report.tsv", "prune", &with_dev, report.to_string().as_bytes())?;
                Ok(lm)
            })?),
        };

        self.stage("evaluate", |r| {
            let (dev, test) = (r.dev.clone(), r.test.clone());
            let mut sets: Vec<(&str, &Corpus)> = Vec::new();
            let mut eval_in = with_dev.clone();
            if let Some(d) = &dev {
                sets.push(("dev", d));
            }
            if let Some(t) = &test {
                sets.push(("test", t));
                eval_in.push("test".into());
            }
            let mut models: Vec<(String, &BackoffLM)> =
                lms.iter().map(|lm| (format!("lm.{}", lm.meta.corpus_id), lm)).collect();
            models.push(("combined".into(), &combined));
            if let Some(p) = &pruned {
                models.push(("pruned".into(), p));
            }
            let mut report = String::from("model\tngrams\tset\tsentences\tscored\toov\tlog10prob\tppl\n");
            let mut row = |name: &str, ngrams: String, set: &str, rep: &PerplexityReport| {
                let _ = writeln!(
                    report,
                    "{name}\t{ngrams}\t{set}\t{}\t{}\t{}\t{}\t{}",
                    rep.sentences, rep.scored_tokens, rep.oov_tokens, rep.log10_prob_sum, rep.ppl
                );
            };
            for (set, corpus) in &sets {
                for (name, lm) in &models {
                    row(name, lm.total_len().to_string(), set, &perplexity(lm, corpus, cfg.oov)?);
                }
                if lm_refs.len() > 1 {
                    row("mixture", "-".into(), set, &perplexity_mixture(&lm_refs, &weights, corpus, cfg.oov)?);
                }
            }
            if !em_history.is_empty() {
                let hist: Vec<String> = em_history.iter().map(f64::to_string).collect();
                let _ = writeln!(report, "# em_dev_log10_likelihood\t{}", hist.join("\t"));
            }
            r.write("report.tsv", "evaluate", &eval_in, report.as_bytes())?;

            let mut oov = String::from("set\ttokens\toov_rate\n");
            for (set, corpus) in &sets {
                let _ = writeln!(oov, "{set}\t{}\t{}", corpus.token_count(), oov_rate(&vocab, corpus)?);
            }
            r.write("oov.tsv", "evaluate", &eval_in, oov.as_bytes())
        })
    }

    fn lexicon_workflow(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let ls = &cfg.lexicon;
        let seed_path = ls
            .seed_lexicon
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("seed_lexicon is not set".into()))
            .map_err(|e| e.in_stage("lexicon-load"))?;
        let mut seed_in = vec!["seed_lexicon".to_string(), "phoneme_inventory".to_string()];
        let (seed, addon, mapping) = self.stage("lexicon-load", |_| {
            let inventory = ls.inventory.as_deref().map(load_inventory).transpose()?;
            let seed = Lexicon::load(seed_path, inventory)?;
            let addon = ls.addon.as_deref().map(|p| Lexicon::load(p, None)).transpose()?;
            let mapping = ls.phoneme_mapping.as_deref().map(load_phoneme_mapping).transpose()?;
            Ok((seed, addon, mapping))
        })?;

        let model = self.stage("g2p-train", |r| {
            let m = train_g2p(&seed, &ls.g2p)?;
            r.write("lexicon/g2p.json", "g2p-train", &seed_in, (m.to_json()? + "\n").as_bytes())?;
            Ok(m)
        })?;

        let mut words_in = seed_in.clone();
        let (extended, ext_report) = self.stage("lexicon-extend", |r| {
            let words: Vec<String> = match &ls.words {
                Some(p) => {
                    words_in.push("lexicon_words".into());
                    let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    text.lines().flat_map(|l| normalize_line(l, cfg.normalize)).collect()
                }
                None => {
                    words_in.extend(r.corpus_inputs());
                    let v = r.vocabulary()?;
                    v.words().iter().enumerate().filter(|(i, _)| !v.is_reserved(*i as u32)).map(|(_, w)| w.clone()).collect()
                }
            };
            let (lex, report) = extend_lexicon(&seed, &words, &model, ls.beam, ls.n_best);
            r.write("lexicon/extended.txt", "lexicon-extend", &words_in, lex.to_text().as_bytes())?;
            Ok((lex, report))
        })?;

        seed_in = words_in;
        seed_in.extend(["addon_lexicon".to_string(), "phoneme_mapping".to_string()]);
        self.stage("lexicon-merge", |r| {
            let (final_lex, merge_report) = match &addon {
                Some(a) => {
                    let (l, rep) = merge_lexicons(&extended, a, ls.policy, mapping.as_ref())?;
                    (l, Some(rep))
                }
                None => (extended.clone(), None),
            };
            r.write("lexicon/final.txt", "lexicon-merge", &seed_in, final_lex.to_text().as_bytes())?;
            let mut report = String::new();
            let _ = writeln!(report, "seed_words\t{}", seed.len());
            let _ = writeln!(report, "g2p_entries_used\t{}", model.training.entries_used);
            let _ = writeln!(report, "g2p_entries_skipped\t{}", model.training.skipped.len());
            report.push_str(&ext_report.to_string());
            if let Some(m) = merge_report {
                report.push_str(&m.to_string());
            }
            let _ = writeln!(report, "final_words\t{}", final_lex.len());
            // G2P output is never authoritative for loanwords; flag all of it
            for (w, prons) in &ext_report.added {
                for (p, score) in prons {
                    let _ = writeln!(report, "provisional\t{w}\t{}\t{score}", p.join(" "));
                }
            }
            r.write("lexicon/report.txt", "lexicon-merge", &seed_in, report.as_bytes())
        })
    }

    fn dialect_workflow(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let ds = &cfg.dialect;
        let mut inputs = self.corpus_inputs();
        inputs.extend(["dev".to_string(), "dialect_mapping".to_string()]);
        let table = self.stage("dialect-load", |r| {
            r.load_text()?;
            if r.dev.is_none() {
                return Err(Error::InvalidArgument("the dialect workflow needs a dev set".into()));
            }
            let p = ds
                .mapping
                .as_deref()
                .ok_or_else(|| Error::InvalidArgument("dialect_mapping is not set".into()))?;
            MappingTable::load(p)
        })?;
        self.stage("dialect-eval", |r| {
            let lm_cfg = LmConfig {
                order: cfg.order,
                interpolate: ds.interpolate,
                map_eval_text: ds.map_eval_text,
                oov: cfg.oov,
            };
            let dev = r.dev.clone().expect("checked above");
            let res = mapped_lm_eval(&r.corpora, &dev, &table, &lm_cfg)?;
            for c in r.corpora.clone() {
                let mut text = Vec::new();
                apply_mapping(&c, &table).write_to(&mut text).map_err(|e| Error::io("<memory>", e))?;
                r.write(&format!("dialect/mapped/{}.txt", c.id), "dialect-eval", &inputs, &text)?;
            }
            let mut out = String::from("when\tsentences\tscored\toov\tlog10prob\tppl\tweights\n");
            for (when, rep, w) in [("before", &res.before, &res.before_weights), ("after", &res.after, &res.after_weights)] {
                let w = w
                    .as_ref()
                    .map(|w| w.iter().map(f64::to_string).collect::<Vec<_>>().join(","))
                    .unwrap_or_else(|| "-".into());
                let _ = writeln!(
                    out,
                    "{when}\t{}\t{}\t{}\t{}\t{}\t{w}",
                    rep.sentences, rep.scored_tokens, rep.oov_tokens, rep.log10_prob_sum, rep.ppl
                );
            }
            r.write("dialect/report.tsv", "dialect-eval", &inputs, out.as_bytes())
        })?;
        if let (Some(hyp), Some(reference)) = (&ds.hyp, &ds.reference) {
            let mut score_in = vec!["hyp".to_string(), "ref".to_string(), "dialect_mapping".to_string()];
            score_in.sort();
            self.stage("dialect-score", |r| {
                let hyps = read_transcripts(hyp)?;
                let refs = read_transcripts(reference)?;
                let mapped: Transcripts = refs
                    .iter()
                    .map(|(id, toks)| {
                        (id.clone(), toks.iter().map(|t| table.get(t).unwrap_or(t).to_string()).collect())
                    })
                    .collect();
                let original = wer(&refs, &hyps)?;
                let against_mapped = wer(&mapped, &hyps)?;
                r.write("dialect/wer_original.tsv", "dialect-score", &score_in, render_tsv(&[&original]).as_bytes())?;
                r.write("dialect/wer_mapped.tsv", "dialect-score", &score_in, render_tsv(&[&against_mapped]).as_bytes())?;
                let text = format!(
                    "original references\n{}mapped references\n{}",
                    render_table(&[&original]),
                    render_table(&[&against_mapped])
                );
                r.write("dialect/wer.txt", "dialect-score", &score_in, text.as_bytes())
            })?;
        }
        Ok(())
    }
}

/// Runs the LM workflow, plus the lexicon workflow when a seed lexicon is
/// configured and the dialect workflow when a mapping is; `only` restricts
/// the run to one workflow. The output directory is locked for the run and
/// a manifest is written even when a stage fails.
pub fn run_pipeline(cfg: &PipelineConfig, only: Option<Workflow>) -> Result<Manifest> {
    let _lock = Lock::acquire(&cfg.output_dir)?;
    let mut run = Run {
        cfg,
        hashes: BTreeMap::new(),
        artifacts: Vec::new(),
        corpora: Vec::new(),
        dev: None,
        test: None,
        vocab: None,
    };
    let mut inputs = BTreeMap::new();
    let mut result = run.stage("inputs", |r| {
        for (name, path) in cfg.inputs() {
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let sha = sha256_hex(&bytes);
            r.hashes.insert(name.clone(), sha.clone());
            inputs.insert(
                name.clone(),
                InputRecord {
                    path: cfg.settings.get(&name).cloned().unwrap_or_default(),
                    sha256: sha,
                },
            );
        }
        Ok(())
    });
    let workflows: Vec<Workflow> = match only {
        Some(w) => vec![w],
        None => {
            let mut w = vec![Workflow::Lm];
            if cfg.lexicon.seed_lexicon.is_some() {
                w.push(Workflow::Lexicon);
            }
            if cfg.dialect.mapping.is_some() {
                w.push(Workflow::Dialect);
            }
            w
        }
    };
    for w in workflows {
        if result.is_err() {
            break;
        }
        result = match w {
            Workflow::Lm => run.lm_workflow(),
            Workflow::Lexicon => run.lexicon_workflow(),
            Workflow::Dialect => run.dialect_workflow(),
        };
    }
    let (status, failed_stage, error) = match &result {
        Ok(()) => ("complete", None, None),
        Err(e) => {
            let stage = match e {
                Error::Stage { stage, .. } => Some(stage.clone()),
                _ => None,
            };
            ("failed", stage, Some(e.to_string()))
        }
    };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        language: cfg.language.clone(),
        seed: cfg.seed,
        // where the run lands does not change what it computes
        settings: cfg.settings.iter().filter(|(k, _)| *k != "output_dir").map(|(k, v)| (k.clone(), v.clone())).collect(),
        inputs,
        artifacts: run.artifacts,
        status: status.to_string(),
        failed_stage,
        error,
    };
    let path = cfg.output_dir.join(MANIFEST);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    let written = std::fs::write(&path, json).map_err(|e| Error::io(&path, e));
    result?;
    written?;
    Ok(manifest)
}
