use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic").join(name)
}

fn telelm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_telelm")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = telelm(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn train_mix_prune_round() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    let vocab = d("vocab.txt");
    ok(&["lm", "train", "--corpus", s(&fixture("news.txt")), "--order", "3", "--output", s(&d("news.arpa")), "--vocab-out", s(&vocab)]);
    ok(&["lm", "train", "--corpus", s(&fixture("medical.txt")), "--order", "3", "--vocab", s(&vocab), "--output", s(&d("medical.arpa"))]);
    let ppl = ok(&["lm", "ppl", "--lm", s(&d("news.arpa")), "--text", s(&fixture("dev.txt"))]);
    assert!(ppl.contains("ppl"), "{ppl}");
    ok(&["mix", "em", "--lm", s(&d("news.arpa")), s(&d("medical.arpa")), "--dev", s(&fixture("dev.txt")), "--output", s(&d("w.tsv"))]);
    let w = fs::read_to_string(d("w.tsv")).unwrap();
    assert!(w.starts_with("news\t"), "{w}");
    ok(&["mix", "merge", "--lm", s(&d("news.arpa")), s(&d("medical.arpa")), "--weights", s(&d("w.tsv")), "--output", s(&d("mix.arpa"))]);
    let report = ok(&["prune", "--lm", s(&d("mix.arpa")), "--theta", "1e-5", "--output", s(&d("pruned.arpa"))]);
    assert!(report.contains("total"), "{report}");
    let counts = d("counts.tsv");
    ok(&["lm", "count", "--corpus", s(&fixture("news.txt")), "--order", "2", "--output", s(&counts)]);
    assert!(fs::read_to_string(&counts).unwrap().lines().all(|l| l.split('\t').count() == 3));
}

#[test]
fn scoring_from_the_command_line() {
    let table = ok(&["score", "wer", "--ref", s(&fixture("ref.tsv")), "--hyp", s(&fixture("hyp.tsv"))]);
    assert!(table.contains("TOTAL"));
    let same = ok(&["score", "cer", "--ref", s(&fixture("ref.tsv")), "--hyp", s(&fixture("ref.tsv"))]);
    assert!(same.lines().any(|l| l.starts_with("TOTAL") && l.ends_with("0.00%")), "{same}");
}

#[test]
fn g2p_and_lexicon_commands() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("g2p.json");
    ok(&["g2p", "train", "--lexicon", s(&fixture("seed_lexicon.txt")), "--inventory", s(&fixture("phonemes.txt")), "--output", s(&model)]);
    let prons = ok(&["g2p", "apply", "--model", s(&model), "--word", "pamara", "--nbest", "2"]);
    assert!(prons.lines().count() >= 1 && prons.starts_with("pamara\t"), "{prons}");
    let merged = dir.path().join("merged.txt");
    let report = ok(&[
        "lexicon", "merge", "--base", s(&fixture("seed_lexicon.txt")), "--inventory", s(&fixture("phonemes.txt")),
        "--addon", s(&fixture("medical_addon.txt")), "--output", s(&merged),
    ]);
    assert!(report.contains("output_words"), "{report}");
}

#[test]
fn dialect_commands() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("mapped.txt");
    ok(&["dialect", "apply", "--corpus", s(&fixture("chat.txt")), "--mapping", s(&fixture("dialect_map.tsv")), "--output", s(&out)]);
    assert!(!fs::read_to_string(&out).unwrap().contains("yxorana"));
    let eval = ok(&[
        "dialect", "eval", "--train", s(&fixture("news.txt")), s(&fixture("chat.txt")), "--dev", s(&fixture("dev.txt")),
        "--mapping", s(&fixture("dialect_map.tsv")), "--order", "3",
    ]);
    assert!(eval.contains("before") && eval.contains("after"), "{eval}");
}

#[test]
fn failures_exit_nonzero_with_the_stage_name() {
    let out = telelm(&["lm", "ppl", "--lm", "/nonexistent/model.arpa", "--text", s(&fixture("dev.txt"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[lm]") && err.contains("/nonexistent/model.arpa"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "word\tNOPE\n").unwrap();
    let out = telelm(&[
        "pipeline", "run", "--config", s(&fixture("pipeline.conf")), "--set", &format!("output_dir={}", dir.path().join("out").display()),
        "--set", &format!("seed_lexicon={}", bad.display()), "--only", "lexicon",
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("stage 'lexicon-load' failed"), "{err}");

    let out = telelm(&["pipeline", "run", "--config", s(&fixture("pipeline.conf")), "--set", "no_such_key=1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("config"));
}
