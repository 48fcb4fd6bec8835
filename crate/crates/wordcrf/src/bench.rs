//! Accuracy and F-score benchmarks over rendered test sets.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::IndexedRandom;
use rayon::prelude::*;

use wordcrf_core::lexicon::{encode_bag_dense, NGramVocab, Word};
use wordcrf_core::metrics::{accuracy, max_fscore, FScore};
use wordcrf_core::net::{forward, log_softmax_rows, normalize_image, sigmoid, Mode, NetParams};
use wordcrf_core::rng::{derive_seed, rng_from_seed};
use wordcrf_core::structured::{
    beam_decode, char_decode, lexicon_decode, LinearWeights, ScoreTables,
};
use wordcrf_core::synth::GrayImage;

use crate::dataset::{load_images, Manifest, Split, VocabTag};
use crate::Error;

const STREAM_LEXICON: u64 = 0x4c45_5849;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Per-position argmax of the CHAR head.
    Char,
    /// Beam search over the full joint score.
    Joint,
    /// Best joint path score among a per-sample lexicon of this size.
    JointLexicon(usize),
}

impl Condition {
    pub fn tag(&self) -> String {
        match self {
            Condition::Char => "CHAR".into(),
            Condition::Joint => "JOINT".into(),
            Condition::JointLexicon(n) => format!("JOINT+lexicon{n}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub conditions: Vec<Condition>,
    pub beam_width: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            conditions: vec![
                Condition::Char,
                Condition::Joint,
                Condition::JointLexicon(50),
            ],
            beam_width: 10,
            seed: 1,
        }
    }
}

pub struct EvalModel<'a> {
    pub name: String,
    pub params: &'a NetParams<f32>,
    pub vocab: &'a NGramVocab,
    /// Scale factors applied to every score table before decoding.
    pub linear: Option<&'a LinearWeights>,
}

/// Test samples of one vocabulary tag, with the label pool distractors are
/// drawn from.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub name: String,
    pub paths: Vec<String>,
    pub images: Vec<GrayImage>,
    pub labels: Vec<Word>,
    pub lexicon_pool: Vec<Word>,
}

/// Splits the test records of a manifest by vocabulary tag, loading their
/// images. Distractors come from every label in the manifest.
pub fn eval_sets(manifest: &Manifest, name: &str) -> Result<Vec<EvalSet>, Error> {
    let pool: Vec<Word> = manifest
        .records
        .iter()
        .map(|r| r.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let tags: BTreeSet<VocabTag> = manifest
        .records
        .iter()
        .filter(|r| r.split == Split::Test)
        .map(|r| r.vocab_tag)
        .collect();
    if tags.is_empty() {
        return Err(Error::Config(format!(
            "dataset `{name}` has no test records"
        )));
    }
    tags.into_iter()
        .map(|tag| {
            let records: Vec<_> = manifest
                .records
                .iter()
                .filter(|r| r.split == Split::Test && r.vocab_tag == tag)
                .cloned()
                .collect();
            Ok(EvalSet {
                name: format!("{name}:{tag}"),
                paths: records.iter().map(|r| r.path.clone()).collect(),
                images: load_images(manifest, &records)?,
                labels: records.into_iter().map(|r| r.label).collect(),
                lexicon_pool: pool.clone(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub path: String,
    pub gt: Word,
    pub prediction: Word,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub dataset: String,
    pub condition: String,
    pub n: usize,
    pub accuracy: f64,
    pub fscore: Option<FScore>,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `key = value` pairs echoed as `#` lines.
    pub header: Vec<(String, String)>,
    pub rows: Vec<ReportRow>,
    /// `(model, dataset)` pairs where lexicon-constrained accuracy fell below
    /// unconstrained joint accuracy.
    pub lexicon_violations: Vec<(String, String)>,
}

/// `gt` plus up to `size - 1` distinct distractors from `pool`.
pub fn sample_lexicon(gt: &Word, pool: &[Word], size: usize, seed: u64) -> Vec<Word> {
    let others: Vec<&Word> = pool.iter().filter(|w| *w != gt).collect();
    let mut rng = rng_from_seed(seed);
    let mut lex = vec![gt.clone()];
    lex.extend(
        others
            .choose_multiple(&mut rng, size.saturating_sub(1))
            .map(|w| (*w).clone()),
    );
    lex
}

struct SampleOutcome {
    per_condition: Vec<(Word, f64)>,
    ngram_probs: Vec<f64>,
    bag: Vec<bool>,
}

fn evaluate_sample(
    model: &EvalModel<'_>,
    set: &EvalSet,
    i: usize,
    cfg: &BenchConfig,
) -> Result<SampleOutcome, Error> {
    let params = model.params;
    let input = normalize_image(&set.images[i].pixels);
    let acts = forward(params, &input, Mode::Eval)?;
    let mut tables =
        ScoreTables::from_logits(&acts.char_logits, &acts.ngram_logits, params.config.max_len)?;
    if let Some(w) = model.linear {
        tables = w.apply(&tables)?;
    }
    let logp = log_softmax_rows(&acts.char_logits);
    let mut per_condition = Vec::with_capacity(cfg.conditions.len());
    for cond in &cfg.conditions {
        per_condition.push(match *cond {
            Condition::Char => {
                let w = char_decode(&tables);
                let score = (0..params.config.max_len)
                    .map(|p| logp[p * 37 + w.padded_class(p) as usize] as f64)
                    .sum();
                (w, score)
            }
            Condition::Joint => beam_decode(&tables, model.vocab, cfg.beam_width, None)?,
            Condition::JointLexicon(size) => {
                let seed = derive_seed(cfg.seed, STREAM_LEXICON, i as u64);
                let lex = sample_lexicon(&set.labels[i], &set.lexicon_pool, size, seed);
                lexicon_decode(&tables, model.vocab, &lex)?
            }
        });
    }
    Ok(SampleOutcome {
        per_condition,
        ngram_probs: acts
            .ngram_logits
            .iter()
            .map(|&z| sigmoid(z as f64))
            .collect(),
        bag: encode_bag_dense(&set.labels[i], model.vocab)
            .into_iter()
            .map(|b| b != 0)
            .collect(),
    })
}

/// Decodes every sample of every set under every condition with every model.
pub fn run_benchmark(
    models: &[EvalModel<'_>],
    sets: &[EvalSet],
    cfg: &BenchConfig,
) -> Result<EvalReport, Error> {
    let mut header = vec![
        ("seed".to_string(), cfg.seed.to_string()),
        ("beam_width".to_string(), cfg.beam_width.to_string()),
        (
            "conditions".to_string(),
            cfg.conditions
                .iter()
                .map(Condition::tag)
                .collect::<Vec<_>>()
                .join(","),
        ),
    ];
    for m in models {
        header.push((
            format!("model.{}", m.name),
            format!(
                "{} parameters, |G| = {}",
                m.params.num_params(),
                m.vocab.len()
            ),
        ));
    }
    let mut rows = Vec::new();
    let mut lexicon_violations = Vec::new();
    for model in models {
        for set in sets {
            if set.images.is_empty() {
                continue;
            }
            let outcomes: Vec<SampleOutcome> = (0..set.images.len())
                .into_par_iter()
                .map(|i| evaluate_sample(model, set, i, cfg))
                .collect::<Result<_, _>>()?;
            let probs: Vec<Vec<f64>> = outcomes.iter().map(|o| o.ngram_probs.clone()).collect();
            let bags: Vec<Vec<bool>> = outcomes.iter().map(|o| o.bag.clone()).collect();
            let fscore = max_fscore(&probs, &bags).ok();
            let mut joint_acc = None;
            for (c, cond) in cfg.conditions.iter().enumerate() {
                let predictions: Vec<Prediction> = outcomes
                    .iter()
                    .enumerate()
                    .map(|(i, o)| Prediction {
                        path: set.paths[i].clone(),
                        gt: set.labels[i].clone(),
                        prediction: o.per_condition[c].0.clone(),
                        score: o.per_condition[c].1,
                    })
                    .collect();
                let preds: Vec<Word> = predictions.iter().map(|p| p.prediction.clone()).collect();
                let acc = accuracy(&preds, &set.labels)?;
                match cond {
                    Condition::Joint => joint_acc = Some(acc),
                    Condition::JointLexicon(_) => {
                        if joint_acc.is_some_and(|j| acc < j) {
                            lexicon_violations.push((model.name.clone(), set.name.clone()));
                        }
                    }
                    Condition::Char => {}
                }
                rows.push(ReportRow {
                    model: model.name.clone(),
                    dataset: set.name.clone(),
                    condition: cond.tag(),
                    n: set.images.len(),
                    accuracy: acc,
                    fscore: (*cond == Condition::Joint).then_some(fscore).flatten(),
                    predictions,
                });
            }
        }
    }
    Ok(EvalReport {
        header,
        rows,
        lexicon_violations,
    })
}

/// Maximum F-score of the NGRAM head over `images`.
pub fn ngram_fscore(
    params: &NetParams<f32>,
    vocab: &NGramVocab,
    images: &[GrayImage],
    labels: &[Word],
) -> Result<FScore, Error> {
    let pairs: Vec<(Vec<f64>, Vec<bool>)> = images
        .par_iter()
        .zip(labels.par_iter())
        .map(|(img, label)| {
            let acts = forward(params, &normalize_image(&img.pixels), Mode::Eval)?;
            Ok((
                acts.ngram_logits
                    .iter()
                    .map(|&z| sigmoid(z as f64))
                    .collect(),
                encode_bag_dense(label, vocab)
                    .into_iter()
                    .map(|b| b != 0)
                    .collect(),
            ))
        })
        .collect::<Result<_, Error>>()?;
    let (probs, bags): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(max_fscore(&probs, &bags)?)
}

pub fn format_report(report: &EvalReport) -> String {
    let mut out = String::new();
    for (k, v) in &report.header {
        let _ = writeln!(out, "# {k} = {v}");
    }
    let _ = writeln!(
        out,
        "# lexicon_check = {}",
        if report.lexicon_violations.is_empty() {
            "ok"
        } else {
            "violated"
        }
    );
    for r in &report.rows {
        let (f, t) = match &r.fscore {
            Some(fs) => (format!("{:.6}", fs.f), format!("{:.6}", fs.threshold)),
            None => ("-".into(), "-".into()),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}\t{f}\t{t}",
            r.model, r.dataset, r.condition, r.n, r.accuracy
        );
    }
    out
}

pub fn format_dump(row: &ReportRow) -> String {
    let mut out = String::new();
    for p in &row.predictions {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", p.path, p.gt, p.prediction, p.score);
    }
    out
}

/// Writes `report.tsv` and one `dump-<model>-<dataset>-<condition>.tsv` per
/// row into `dir`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let path = dir.join("report.tsv");
    std::fs::write(&path, format_report(report)).map_err(Error::io(&path))?;
    for r in &report.rows {
        let clean = |s: &str| s.replace([':', '/', '+'], "_");
        let name = format!(
            "dump-{}-{}-{}.tsv",
            clean(&r.model),
            clean(&r.dataset),
            clean(&r.condition)
        );
        let p = dir.join(name);
        std::fs::write(&p, format_dump(r)).map_err(Error::io(&p))?;
    }
    Ok(())
}
