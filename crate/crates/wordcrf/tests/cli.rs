use std::path::Path;
use std::process::{Command, Output};

use wordcrf::dataset::{format_params, read_manifest, VocabTag};
use wordcrf_core::synth::RenderParams;

fn wordcrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wordcrf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(args: &[&str]) -> i32 {
    wordcrf(args).status.code().expect("exit code")
}

fn ok(args: &[&str]) -> String {
    let out = wordcrf(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["--version"]), 0);
    assert_eq!(code(&["eval", "--help"]), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&["gen-data", "--no-such-flag"]), 1);
    assert_eq!(code(&["frobnicate"]), 1);
    assert_eq!(
        code(&["gen-data", "--out", "/tmp/unused", "--split", "1.5"]),
        1
    );
    assert_eq!(
        code(&[
            "train-joint",
            "--data",
            "d",
            "--char-model",
            "c.gnet",
            "--out",
            "j.gnet"
        ]),
        1
    );
    assert_eq!(code(&["eval", "--data", "d"]), 1);
}

#[test]
fn missing_inputs_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let nowhere = dir.path().join("missing");
    let image = dir.path().join("x.pgm");
    assert_eq!(
        code(&["decode", "--model", s(&nowhere), "--image", s(&image)]),
        2
    );
    assert_eq!(
        code(&[
            "build-vocab",
            "--corpus",
            s(&nowhere),
            "--out",
            s(&dir.path().join("v"))
        ]),
        2
    );
}

#[test]
fn selftest_passes() {
    let out = ok(&["selftest"]);
    assert!(out.lines().all(|l| l.starts_with("PASS")), "{out}");
}

/// Clean renders of four words are memorised within a few epochs, after
/// which every decoding mode must read them back.
#[test]
fn tiny_pipeline_reads_its_words_back() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = d.join("words.txt");
    std::fs::write(&corpus, "camel\nhorse\nzebra\ntiger\n").unwrap();
    let params = d.join("clean.txt");
    std::fs::write(&params, format_params(&RenderParams::clean())).unwrap();
    let data = d.join("data");
    let vocab = d.join("vocab.txt");
    let char_model = d.join("char.gnet");
    let ngram_model = d.join("ngram.gnet");

    ok(&[
        "gen-data",
        "--corpus",
        s(&corpus),
        "--render-params",
        s(&params),
        "--out",
        s(&data),
        "--count",
        "200",
        "--test-count",
        "8",
        "--split",
        "0",
    ]);
    ok(&[
        "build-vocab",
        "--corpus",
        s(&corpus),
        "--out",
        s(&vocab),
        "--order",
        "2",
        "--min-count",
        "1",
    ]);
    let net = ["--convs", "8x5", "--fc-width", "64", "--dropout", "0"];
    let mut args = vec![
        "train-char",
        "--data",
        s(&data),
        "--vocab",
        s(&vocab),
        "--out",
        s(&char_model),
        "--epochs",
        "20",
        "--lr",
        "0.05",
    ];
    args.extend(net);
    ok(&args);
    ok(&[
        "train-ngram",
        "--data",
        s(&data),
        "--char-model",
        s(&char_model),
        "--out",
        s(&ngram_model),
        "--epochs",
        "10",
        "--lr",
        "0.02",
    ]);

    let manifest = read_manifest(&data).unwrap();
    let lexicon = d.join("lexicon.txt");
    std::fs::write(&lexicon, "horse\ntiger\n").unwrap();
    for r in manifest
        .records
        .iter()
        .filter(|r| r.vocab_tag == VocabTag::InVocab)
        .take(8)
    {
        let image = data.join(&r.path);
        let out = ok(&["decode", "--model", s(&ngram_model), "--image", s(&image)]);
        let (word, score) = out.trim_end().split_once('\t').unwrap();
        assert_eq!(word, r.label.to_string());
        assert!(score.parse::<f64>().unwrap().is_finite());

        let out = ok(&[
            "decode",
            "--model",
            s(&ngram_model),
            "--image",
            s(&image),
            "--lexicon",
            s(&lexicon),
        ]);
        let word = out.split('\t').next().unwrap();
        assert!(word == "horse" || word == "tiger", "{word}");
        if ["horse", "tiger"].contains(&r.label.to_string().as_str()) {
            assert_eq!(word, r.label.to_string());
        }
    }

    let report = d.join("report");
    ok(&[
        "eval",
        "--model",
        s(&ngram_model),
        "--data",
        s(&data),
        "--out",
        s(&report),
        "--lexicon-size",
        "4",
    ]);
    let rows = std::fs::read_to_string(report.join("report.tsv")).unwrap();
    assert!(rows.lines().any(|l| l.contains("JOINT+lexicon4")), "{rows}");
}
