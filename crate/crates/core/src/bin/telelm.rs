use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use telelm::dialect::{apply_mapping, mapped_lm_eval, select_candidates, LmConfig, MappingTable};
use telelm::g2p::{
    extend_lexicon, load_inventory, load_phoneme_mapping, merge_lexicons, train_g2p, G2pModel, G2pOptions, Lexicon,
    MergePolicy,
};
use telelm::mixture::{em_weights, interpolate_static, load_weights, perplexity_mixture, save_weights, EmOptions};
use telelm::ngram::{count_ngrams, oov_rate, perplexity, read_arpa, train_corpus, write_arpa, BackoffLM, OovPolicy};
use telelm::pipeline::{run_pipeline, PipelineConfig, Workflow};
use telelm::prune::prune_entropy;
use telelm::score::{cer, read_transcripts, render_table, render_tsv, wer};
use telelm::text::{build_vocabulary, load_corpus, normalize_line, word_frequencies, Corpus, NormalizeOptions, Vocabulary};
use telelm::Error;

#[derive(Parser)]
#[command(name = "telelm", version, about = "Language models, lexica and scoring for conversational ASR")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus inspection
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// Single n-gram language models
    #[command(subcommand)]
    Lm(LmCmd),
    /// Linear interpolation of several models
    #[command(subcommand)]
    Mix(MixCmd),
    /// Relative-entropy pruning
    Prune(PruneArgs),
    /// Grapheme-to-phoneme models
    #[command(subcommand)]
    G2p(G2pCmd),
    /// Pronunciation lexica
    #[command(subcommand)]
    Lexicon(LexiconCmd),
    /// Dialect-word mapping
    #[command(subcommand)]
    Dialect(DialectCmd),
    /// WER / CER scoring
    #[command(subcommand)]
    Score(ScoreCmd),
    /// Configured end-to-end runs
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Args, Clone, Copy)]
struct NormArgs {
    /// Keep letter case
    #[arg(long)]
    keep_case: bool,
    /// Keep punctuation
    #[arg(long)]
    keep_punct: bool,
}

impl NormArgs {
    fn options(self) -> NormalizeOptions {
        NormalizeOptions {
            lowercase: !self.keep_case,
            strip_punct: !self.keep_punct,
        }
    }
}

#[derive(Args)]
struct VocabArgs {
    /// Use this vocabulary (one word per line) instead of building one
    #[arg(long, conflicts_with_all = ["min_count", "max_size"])]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    min_count: usize,
    /// Maximum vocabulary size, reserved markers included
    #[arg(long)]
    max_size: Option<usize>,
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Sentence, token and type counts plus the most frequent words
    Stats {
        input: PathBuf,
        #[arg(long, default_value_t = 20)]
        top: usize,
        #[command(flatten)]
        norm: NormArgs,
    },
}

#[derive(Subcommand)]
enum LmCmd {
    /// Write n-gram counts as `ngram<TAB>count<TAB>continuation`
    Count {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        vocab: VocabArgs,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Train a modified Kneser-Ney model and write it as ARPA
    Train {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 4)]
        order: usize,
        #[arg(long)]
        output: PathBuf,
        /// Also write the vocabulary used
        #[arg(long)]
        vocab_out: Option<PathBuf>,
        #[command(flatten)]
        vocab: VocabArgs,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Perplexity of a model on a text
    Ppl {
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        text: PathBuf,
        #[arg(long, default_value = "exclude")]
        oov: OovPolicy,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// OOV rate of a text against a model's or a file's vocabulary
    Oov {
        #[arg(long, required_unless_present = "vocab")]
        lm: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        text: PathBuf,
        #[command(flatten)]
        norm: NormArgs,
    },
}

#[derive(Subcommand)]
enum MixCmd {
    /// Estimate interpolation weights on a dev set
    Em {
        #[arg(long = "lm", required = true, num_args = 1..)]
        lms: Vec<PathBuf>,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 1e-7)]
        tol: f64,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Merge models into one back-off model
    Merge {
        #[arg(long = "lm", required = true, num_args = 1..)]
        lms: Vec<PathBuf>,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Perplexity of the dynamic mixture
    Ppl {
        #[arg(long = "lm", required = true, num_args = 1..)]
        lms: Vec<PathBuf>,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        text: PathBuf,
        #[arg(long, default_value = "exclude")]
        oov: OovPolicy,
        #[command(flatten)]
        norm: NormArgs,
    },
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    lm: PathBuf,
    #[arg(long)]
    theta: f64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Subcommand)]
enum G2pCmd {
    /// Train a joint-sequence model on a lexicon
    Train {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        inventory: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 3)]
        order: usize,
        #[arg(long, default_value_t = 2)]
        max_letters: usize,
        #[arg(long, default_value_t = 2)]
        max_phonemes: usize,
        #[arg(long, default_value_t = 0)]
        min_letters: usize,
        #[arg(long, default_value_t = 0)]
        min_phonemes: usize,
        #[arg(long, default_value_t = 30)]
        em_iters: usize,
    },
    /// Print `word<TAB>pronunciation<TAB>log10 score` lines
    Apply {
        #[arg(long)]
        model: PathBuf,
        /// Words, one per line
        #[arg(long, required_unless_present = "word")]
        words: Option<PathBuf>,
        #[arg(long)]
        word: Vec<String>,
        #[arg(long, default_value_t = 16)]
        beam: usize,
        #[arg(long, default_value_t = 1)]
        nbest: usize,
    },
}

#[derive(Subcommand)]
enum LexiconCmd {
    /// Add G2P pronunciations for words missing from a lexicon
    Extend {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        inventory: Option<PathBuf>,
        #[arg(long)]
        model: PathBuf,
        /// Words, one per line (normalized like corpus text)
        #[arg(long)]
        words: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 16)]
        beam: usize,
        #[arg(long, default_value_t = 1)]
        nbest: usize,
    },
    /// Merge an addon lexicon into a base lexicon
    Merge {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        inventory: Option<PathBuf>,
        #[arg(long)]
        addon: PathBuf,
        #[arg(long, default_value = "union")]
        policy: MergePolicy,
        /// Addon-to-base phoneme renaming, `from<TAB>to` lines
        #[arg(long)]
        mapping: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum DialectCmd {
    /// Frequent words of a dialect corpus absent from a reference vocabulary
    Candidates {
        #[arg(long)]
        corpus: PathBuf,
        /// Vocabulary file, one word per line
        #[arg(long)]
        exclude_vocab: PathBuf,
        #[arg(short, default_value_t = 200)]
        k: usize,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Rewrite a corpus through a mapping table
    Apply {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        norm: NormArgs,
    },
    /// Dev perplexity before and after mapping the training text
    Eval {
        #[arg(long = "train", required = true, num_args = 1..)]
        train: Vec<PathBuf>,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        mapping: PathBuf,
        #[arg(long, default_value_t = 4)]
        order: usize,
        /// Train one model on the pooled text instead of mixing per-corpus models
        #[arg(long)]
        no_interpolate: bool,
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        map_eval_text: bool,
        #[arg(long, default_value = "exclude")]
        oov: OovPolicy,
        #[command(flatten)]
        norm: NormArgs,
    },
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    hyp: PathBuf,
    /// Also write the machine-readable report here
    #[arg(long)]
    tsv: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ScoreCmd {
    Wer(ScoreArgs),
    Cer(ScoreArgs),
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Run the workflows a config enables
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override a setting, `key=value`
        #[arg(long = "set")]
        overrides: Vec<String>,
        /// Run only one workflow: lm, lexicon or dialect
        #[arg(long)]
        only: Option<Workflow>,
    },
}

type CliResult = anyhow::Result<()>;

fn load_vocab(args: &VocabArgs, corpus: &Corpus) -> telelm::Result<Arc<Vocabulary>> {
    Ok(Arc::new(match &args.vocab {
        Some(p) => Vocabulary::load(p)?,
        None => build_vocabulary(&[corpus], args.min_count, args.max_size)?,
    }))
}

fn load_lms(paths: &[PathBuf]) -> telelm::Result<Vec<BackoffLM>> {
    paths
        .iter()
        .map(|p| {
            let mut lm = read_arpa(p)?;
            lm.meta.corpus_id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(lm)
        })
        .collect()
}

fn read_words(path: &Path) -> telelm::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(text.lines().flat_map(|l| normalize_line(l, NormalizeOptions::default())).collect())
}

fn corpus_cmd(cmd: CorpusCmd) -> CliResult {
    let CorpusCmd::Stats { input, top, norm } = cmd;
    let c = load_corpus(&input, norm.options())?;
    let freq = word_frequencies(&c);
    let mut out = std::io::stdout().lock();
    writeln!(out, "sentences\t{}", c.len())?;
    writeln!(out, "tokens\t{}", c.token_count())?;
    writeln!(out, "types\t{}", freq.len())?;
    for (w, n) in freq.iter().take(top) {
        writeln!(out, "{w}\t{n}")?;
    }
    Ok(())
}

fn lm_cmd(cmd: LmCmd) -> CliResult {
    match cmd {
        LmCmd::Count { corpus, order, output, vocab, norm } => {
            let c = load_corpus(&corpus, norm.options())?;
            let v = load_vocab(&vocab, &c)?;
            let table = count_ngrams(&c, order, v.clone())?;
            let mut out = String::new();
            for k in 1..=order {
                for (g, n) in table.sorted_grams(k) {
                    let words: Vec<&str> = g.iter().map(|&id| v.word(id)).collect();
                    out.push_str(&format!("{}\t{n}\t{}\n", words.join(" "), table.continuation(g)));
                }
            }
            std::fs::write(&output, out).with_context(|| format!("writing {}", output.display()))?;
        }
        LmCmd::Train { corpus, order, output, vocab_out, vocab, norm } => {
            let c = load_corpus(&corpus, norm.options())?;
            let v = load_vocab(&vocab, &c)?;
            let lm = train_corpus(&c, order, v.clone())?;
            write_arpa(&lm, &output)?;
            if let Some(p) = vocab_out {
                v.save(&p)?;
            }
            let sizes: Vec<String> = (1..=order).map(|k| format!("{k}-grams={}", lm.len(k))).collect();
            eprintln!("wrote {} ({})", output.display(), sizes.join(" "));
        }
        LmCmd::Ppl { lm, text, oov, norm } => {
            let lm = read_arpa(&lm)?;
            let c = load_corpus(&text, norm.options())?;
            println!("{}", perplexity(&lm, &c, oov)?);
        }
        LmCmd::Oov { lm, vocab, text, norm } => {
            let v = match (vocab, lm) {
                (Some(p), _) => Vocabulary::load(&p)?,
                (None, Some(p)) => read_arpa(&p)?.vocab().as_ref().clone(),
                (None, None) => unreachable!("clap requires one of them"),
            };
            let c = load_corpus(&text, norm.options())?;
            println!("tokens={} oov_rate={}", c.token_count(), oov_rate(&v, &c)?);
        }
    }
    Ok(())
}

fn mix_cmd(cmd: MixCmd) -> CliResult {
    match cmd {
        MixCmd::Em { lms, dev, output, tol, max_iter, norm } => {
            let lms = load_lms(&lms)?;
            let refs: Vec<&BackoffLM> = lms.iter().collect();
            let dev = load_corpus(&dev, norm.options())?;
            let w = em_weights(&refs, &dev, &EmOptions { init: None, tol, max_iter })?;
            save_weights(&output, &w.ids, &w.weights)?;
            eprintln!("{} iterations, dev log10 likelihood {}", w.history.len() - 1, w.dev_log_likelihood);
        }
        MixCmd::Merge { lms, weights, output } => {
            let lms = load_lms(&lms)?;
            let refs: Vec<&BackoffLM> = lms.iter().collect();
            let (_, w) = load_weights(&weights)?;
            write_arpa(&interpolate_static(&refs, &w)?, &output)?;
        }
        MixCmd::Ppl { lms, weights, text, oov, norm } => {
            let lms = load_lms(&lms)?;
            let refs: Vec<&BackoffLM> = lms.iter().collect();
            let (_, w) = load_weights(&weights)?;
            let c = load_corpus(&text, norm.options())?;
            println!("{}", perplexity_mixture(&refs, &w, &c, oov)?);
        }
    }
    Ok(())
}

fn prune_cmd(args: PruneArgs) -> CliResult {
    let lm = read_arpa(&args.lm)?;
    let (pruned, report) = prune_entropy(&lm, args.theta);
    write_arpa(&pruned, &args.output)?;
    print!("{report}");
    Ok(())
}

fn g2p_cmd(cmd: G2pCmd) -> CliResult {
    match cmd {
        G2pCmd::Train { lexicon, inventory, output, order, max_letters, max_phonemes, min_letters, min_phonemes, em_iters } => {
            let inv = inventory.as_deref().map(load_inventory).transpose()?;
            let lex = Lexicon::load(&lexicon, inv)?;
            let opts = G2pOptions { order, max_letters, max_phonemes, min_letters, min_phonemes, em_iters, ..Default::default() };
            let model = train_g2p(&lex, &opts)?;
            model.save(&output)?;
            let t = &model.training;
            eprintln!(
                "{} graphones, {} entries used, {} skipped, final log10 likelihood {}",
                model.graphones().len(),
                t.entries_used,
                t.skipped.len(),
                t.log_likelihood.last().copied().unwrap_or(f64::NAN)
            );
        }
        G2pCmd::Apply { model, words, word, beam, nbest } => {
            let model = G2pModel::load(&model)?;
            let mut list = word;
            if let Some(p) = words {
                list.extend(read_words(&p)?);
            }
            let mut out = std::io::stdout().lock();
            let mut failed = 0;
            for w in &list {
                match model.apply(w, beam, nbest) {
                    Ok(prons) => {
                        for (p, s) in prons {
                            writeln!(out, "{w}\t{}\t{s}", p.join(" "))?;
                        }
                    }
                    Err(e) => {
                        failed += 1;
                        log::warn!("{e}");
                    }
                }
            }
            if failed > 0 {
                anyhow::bail!("{failed} of {} words could not be transcribed", list.len());
            }
        }
    }
    Ok(())
}

fn lexicon_cmd(cmd: LexiconCmd) -> CliResult {
    match cmd {
        LexiconCmd::Extend { lexicon, inventory, model, words, output, beam, nbest } => {
            let inv = inventory.as_deref().map(load_inventory).transpose()?;
            let lex = Lexicon::load(&lexicon, inv)?;
            let model = G2pModel::load(&model)?;
            let (out, report) = extend_lexicon(&lex, &read_words(&words)?, &model, beam, nbest);
            out.save(&output)?;
            print!("{report}");
        }
        LexiconCmd::Merge { base, inventory, addon, policy, mapping, output } => {
            let inv = inventory.as_deref().map(load_inventory).transpose()?;
            let base = Lexicon::load(&base, inv)?;
            let addon = Lexicon::load(&addon, None)?;
            let mapping = mapping.as_deref().map(load_phoneme_mapping).transpose()?;
            let (out, report) = merge_lexicons(&base, &addon, policy, mapping.as_ref())?;
            out.save(&output)?;
            print!("{report}");
        }
    }
    Ok(())
}

fn dialect_cmd(cmd: DialectCmd) -> CliResult {
    match cmd {
        DialectCmd::Candidates { corpus, exclude_vocab, k, norm } => {
            let c = load_corpus(&corpus, norm.options())?;
            let v = Vocabulary::load(&exclude_vocab)?;
            for (w, n) in select_candidates(&c, k, &v)? {
                println!("{w}\t{n}");
            }
        }
        DialectCmd::Apply { corpus, mapping, output, norm } => {
            let c = load_corpus(&corpus, norm.options())?;
            let t = MappingTable::load(&mapping)?;
            apply_mapping(&c, &t).save(&output)?;
        }
        DialectCmd::Eval { train, dev, mapping, order, no_interpolate, map_eval_text, oov, norm } => {
            let corpora: Vec<Corpus> = train.iter().map(|p| load_corpus(p, norm.options())).collect::<telelm::Result<_>>()?;
            let dev = load_corpus(&dev, norm.options())?;
            let t = MappingTable::load(&mapping)?;
            let cfg = LmConfig { order, interpolate: !no_interpolate, map_eval_text, oov };
            let r = mapped_lm_eval(&corpora, &dev, &t, &cfg)?;
            println!("before\t{}", r.before);
            println!("after\t{}", r.after);
        }
    }
    Ok(())
}

fn score_cmd(cmd: ScoreCmd) -> CliResult {
    let (args, char_level) = match cmd {
        ScoreCmd::Wer(a) => (a, false),
        ScoreCmd::Cer(a) => (a, true),
    };
    let refs = read_transcripts(&args.reference)?;
    let hyps = read_transcripts(&args.hyp)?;
    let report = if char_level { cer(&refs, &hyps)? } else { wer(&refs, &hyps)? };
    for id in report.missing_hyps() {
        log::warn!("no hypothesis for '{id}'; scored as all deletions");
    }
    print!("{}", render_table(&[&report]));
    if let Some(p) = args.tsv {
        std::fs::write(&p, render_tsv(&[&report])).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn pipeline_cmd(cmd: PipelineCmd) -> CliResult {
    let PipelineCmd::Run { config, overrides, only } = cmd;
    let cfg = PipelineConfig::load(&config, &overrides).map_err(|e| e.in_stage("config"))?;
    let manifest = run_pipeline(&cfg, only)?;
    for a in &manifest.artifacts {
        println!("{}\t{}\t{}", a.stage, a.path, a.sha256);
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, result) = match cli.command {
        Command::Corpus(c) => ("corpus", corpus_cmd(c)),
        Command::Lm(c) => ("lm", lm_cmd(c)),
        Command::Mix(c) => ("mix", mix_cmd(c)),
        Command::Prune(a) => ("prune", prune_cmd(a)),
        Command::G2p(c) => ("g2p", g2p_cmd(c)),
        Command::Lexicon(c) => ("lexicon", lexicon_cmd(c)),
        Command::Dialect(c) => ("dialect", dialect_cmd(c)),
        Command::Score(c) => ("score", score_cmd(c)),
        Command::Pipeline(c) => ("pipeline", pipeline_cmd(c)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already spell out their cause; only add links
            // the message does not contain yet
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            // pipeline errors already carry their stage
            if e.downcast_ref::<Error>().is_some_and(|e| matches!(e, Error::Stage { .. })) {
                eprintln!("error: {msg}");
            } else {
                eprintln!("error: [{name}] {msg}");
            }
            ExitCode::FAILURE
        }
    }
}
