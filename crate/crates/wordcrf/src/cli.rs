//! The `wordcrf` command line: one binary, one subcommand per pipeline step.
//!
//! Every subcommand reads an optional `--config` file of `key = value`
//! lines; flags override the file. The resolved configuration and all
//! derived seeds are logged to stderr before any work starts.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use wordcrf_core::lexicon::{build_vocab, Corpus, NGramVocab, Word, DEFAULT_MAX_LEN};
use wordcrf_core::net::{forward, normalize_image, ConvSpec, Mode, NetConfig, NetParams, SgdHyper};
use wordcrf_core::rng::derive_seed;
use wordcrf_core::structured::{
    beam_decode, fit_linear_weights, lexicon_decode, LinearFitConfig, LinearWeights, ScoreTables,
    Sharing, StructHyper,
};
use wordcrf_core::synth::{
    pseudo_corpus, split_vocab, GrayImage, RenderParams, WordSource, IMAGE_H, IMAGE_W,
};

use crate::bench::{
    eval_sets, format_report, ngram_fscore, run_benchmark, write_report, BenchConfig, Condition,
    EvalModel,
};
use crate::config::RunConfig;
use crate::dataset::{
    gen_dataset, load_images, parse_params, read_manifest, DatasetPart, Manifest, Split, VocabTag,
};
use crate::files::{
    read_corpus, read_linear, read_vocab, read_words, write_linear, write_vocab, write_words,
};
use crate::model::{load_model, save_model};
use crate::pgm::read_pgm;
use crate::selftest::{run_all, Scale};
use crate::train::{prepare_examples, train, Stage, TrainConfig};
use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

const STREAM_SPLIT: u64 = 0x5350_4c54;
const STREAM_INIT: u64 = 0x494e_4954;
const STREAM_TRAIN: u64 = 0x5452_4e53;
const STREAM_EVAL: u64 = 0x4556_414c;

/// Defaults of the desk recipe. Any of them can be overridden.
pub mod defaults {
    pub const SEED: u64 = 1;
    pub const PSEUDO_WORDS: usize = 2000;
    pub const CORPUS_SEED: u64 = 7;
    pub const COUNT: usize = 50_000;
    pub const TEST_COUNT: usize = 1000;
    pub const SPLIT: f64 = 0.5;
    pub const ORDER: usize = 4;
    pub const MIN_COUNT: u64 = 5;
    pub const CONVS: &str = "8x5,16x3";
    pub const FC_WIDTH: usize = 256;
    pub const DROPOUT: f32 = 0.25;
    pub const BATCH_SIZE: usize = 32;
    pub const MOMENTUM: f32 = 0.9;
    pub const WEIGHT_DECAY: f32 = 5e-4;
    pub const CHAR_EPOCHS: usize = 6;
    pub const CHAR_LR: f32 = 0.1;
    pub const NGRAM_EPOCHS: usize = 2;
    pub const NGRAM_LR: f32 = 0.05;
    pub const NGRAM_CHAR_WEIGHT: f32 = 1.0;
    pub const JOINT_EPOCHS: usize = 2;
    pub const JOINT_LR: f32 = 0.001;
    pub const LEXICON_SIZE: usize = 50;
    pub const LINEAR_EXAMPLES: usize = 1000;
    pub const LINEAR_EPOCHS: usize = 50;
    pub const LINEAR_STEP: f64 = 0.05;
}

#[derive(Parser, Debug)]
#[command(
    name = "wordcrf",
    version,
    about = "Joint character and N-gram CRF word recognition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic word-image dataset.
    GenData(GenDataArgs),
    /// Count N-grams in a word list and write the vocabulary.
    BuildVocab(BuildVocabArgs),
    /// Train the CHAR head and the shared trunk from scratch.
    TrainChar(TrainCharArgs),
    /// Train the NGRAM head starting from a CHAR checkpoint.
    TrainNgram(TrainNgramArgs),
    /// Fine-tune both heads with the structured loss.
    TrainJoint(TrainJointArgs),
    /// Fit linear scale factors on frozen score tables.
    FitLinear(FitLinearArgs),
    /// Recognize one image and print `word<TAB>score`.
    Decode(DecodeArgs),
    /// Benchmark models on datasets and print the report.
    Eval(EvalArgs),
    /// Print the maximum F-score of the NGRAM head and its threshold.
    Fscore(FscoreArgs),
    /// Run the oracle and gradient checks.
    Selftest(SelftestArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct CorpusArgs {
    /// Word list, one word per line (default: generated pseudo-language).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Size of the generated corpus.
    #[arg(long)]
    pseudo_words: Option<usize>,
    /// Seed of the generated corpus.
    #[arg(long)]
    corpus_seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
struct NetArgs {
    /// Conv stages as `filters x kernel`, e.g. `8x5,16x3`.
    #[arg(long)]
    convs: Option<String>,
    /// Width of the fully connected trunk.
    #[arg(long)]
    fc_width: Option<usize>,
    /// Dropout probability on the trunk.
    #[arg(long)]
    dropout: Option<f32>,
    /// Maximum word length.
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct SgdArgs {
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Initial learning rate, halved every quarter of the run.
    #[arg(long)]
    lr: Option<f32>,
    /// SGD momentum.
    #[arg(long)]
    momentum: Option<f32>,
    /// L2 weight decay.
    #[arg(long)]
    weight_decay: Option<f32>,
}

#[derive(Args, Debug, Default)]
struct StructArgs {
    /// Hinge margin.
    #[arg(long)]
    margin: Option<f64>,
    /// Beam width for the competitor search during training.
    #[arg(long)]
    beam_train: Option<usize>,
    /// Beam width for decoding.
    #[arg(long)]
    beam_test: Option<usize>,
    /// Ridge penalty on the unary scale factors.
    #[arg(long)]
    lambda_alpha: Option<f64>,
    /// Ridge penalty on the edge scale factors.
    #[arg(long)]
    lambda_beta: Option<f64>,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Training images.
    #[arg(long)]
    count: Option<usize>,
    /// Test images per test part.
    #[arg(long)]
    test_count: Option<usize>,
    /// Train fraction of a disjoint vocabulary split (0 = shared vocabulary).
    #[arg(long)]
    split: Option<f64>,
    /// Also render a random-string test part up to this length (0 = none).
    #[arg(long)]
    random_max_len: Option<usize>,
    /// Render parameter file of `key = low high` lines.
    #[arg(long)]
    render_params: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BuildVocabArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Output vocabulary file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Maximum N-gram order.
    #[arg(long)]
    order: Option<usize>,
    /// Minimum occurrence count for an N-gram to be modelled.
    #[arg(long)]
    min_count: Option<u64>,
}

#[derive(Args, Debug)]
struct TrainCharArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// N-gram vocabulary file.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Model to continue from instead of a fresh initialization.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Output model file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    sgd: SgdArgs,
}

#[derive(Args, Debug)]
struct TrainNgramArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// CHAR checkpoint to start from.
    #[arg(long)]
    char_model: Option<PathBuf>,
    /// Output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Weight of the CHAR loss kept during this stage.
    #[arg(long)]
    ngram_char_weight: Option<f32>,
    #[command(flatten)]
    sgd: SgdArgs,
}

#[derive(Args, Debug)]
struct TrainJointArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Pre-trained CHAR checkpoint.
    #[arg(long)]
    char_model: Option<PathBuf>,
    /// Pre-trained NGRAM checkpoint.
    #[arg(long)]
    ngram_model: Option<PathBuf>,
    /// Output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Keep convolution weights fixed.
    #[arg(long)]
    freeze_convs: Option<bool>,
    #[command(flatten)]
    sgd: SgdArgs,
    #[command(flatten)]
    structure: StructArgs,
}

#[derive(Args, Debug)]
struct FitLinearArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Output weight file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// none, per-position, per-order or all.
    #[arg(long)]
    sharing: Option<String>,
    /// Training images used for the fit.
    #[arg(long)]
    count: Option<usize>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Base step size.
    #[arg(long)]
    step: Option<f64>,
    #[command(flatten)]
    structure: StructArgs,
}

#[derive(Args, Debug)]
struct DecodeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// 32x100 PGM image.
    #[arg(long)]
    image: PathBuf,
    /// Restrict the answer to this word list.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Linear weight file.
    #[arg(long)]
    linear: Option<PathBuf>,
    /// Beam width for decoding.
    #[arg(long)]
    beam_test: Option<usize>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Model file; repeat for several.
    #[arg(long)]
    model: Vec<PathBuf>,
    /// Dataset directory; repeat for several.
    #[arg(long)]
    data: Vec<PathBuf>,
    /// Report directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-sample lexicon size (0 = skip the lexicon condition).
    #[arg(long)]
    lexicon_size: Option<usize>,
    /// Beam width for decoding.
    #[arg(long)]
    beam_test: Option<usize>,
    /// Linear scale factors from `fit-linear`.
    #[arg(long)]
    linear: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FscoreArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SelftestArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Run at acceptance scale instead of the quick scale.
    #[arg(long)]
    full: bool,
}

/// How a failed run ends.
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

/// Wraps a configuration error as a usage error.
fn usage<T>(r: Result<T, Error>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Usage(e.to_string()))
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `wordcrf <subcommand> --help` for the valid flags");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::GenData(a) => cmd_gen_data(a),
        Command::BuildVocab(a) => cmd_build_vocab(a),
        Command::TrainChar(a) => cmd_train_char(a),
        Command::TrainNgram(a) => cmd_train_ngram(a),
        Command::TrainJoint(a) => cmd_train_joint(a),
        Command::FitLinear(a) => cmd_fit_linear(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Fscore(a) => cmd_fscore(a),
        Command::Selftest(a) => cmd_selftest(a),
    }
}

trait ConfigValue {
    fn config_text(&self) -> String;
}

macro_rules! display_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn config_text(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

display_value!(u64, usize, f32, f64, bool, String);

impl ConfigValue for PathBuf {
    fn config_text(&self) -> String {
        self.display().to_string()
    }
}

/// Copies each named flag into the config under the key of the same name.
macro_rules! flags {
    ($cfg:expr, $args:expr; $($field:ident),* $(,)?) => {
        $( $cfg.set_flag(stringify!($field), $args.$field.as_ref().map(ConfigValue::config_text)); )*
    };
}

/// Loads the config file, if any, and applies the common flags.
fn base_config(common: &CommonArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(p) => usage(RunConfig::load(p))?,
        None => RunConfig::default(),
    };
    flags!(cfg, common; seed, workers);
    Ok(cfg)
}

fn apply_corpus(cfg: &mut RunConfig, a: &CorpusArgs) {
    flags!(cfg, a; corpus, pseudo_words, corpus_seed);
}

fn apply_net(cfg: &mut RunConfig, a: &NetArgs) {
    flags!(cfg, a; convs, fc_width, dropout, max_len);
}

fn apply_sgd(cfg: &mut RunConfig, a: &SgdArgs) {
    flags!(cfg, a; epochs, batch_size, lr, momentum, weight_decay);
}

fn apply_struct(cfg: &mut RunConfig, a: &StructArgs) {
    flags!(cfg, a; margin, beam_train, beam_test, lambda_alpha, lambda_beta);
}

fn path_key(cfg: &RunConfig, key: &str) -> Result<PathBuf, Failure> {
    usage(cfg.require::<String>(key)).map(PathBuf::from)
}

fn opt_path_key(cfg: &RunConfig, key: &str) -> Option<PathBuf> {
    cfg.raw(key).map(PathBuf::from)
}

/// Logs the resolved configuration and derived seeds to stderr.
fn log_config(command: &str, cfg: &RunConfig, seeds: &[(&str, u64)]) {
    eprintln!("# wordcrf {command}");
    for line in cfg.render().lines() {
        eprintln!("# {line}");
    }
    for (name, s) in seeds {
        eprintln!("# seed.{name} = {s}");
    }
}

fn require_file(path: &Path) -> Result<(), Error> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{} does not exist or is not a file",
            path.display()
        )))
    }
}

fn require_dir(path: &Path) -> Result<(), Error> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{} does not exist or is not a directory",
            path.display()
        )))
    }
}

/// Creates the parent directory of an output file.
fn prepare_output(path: &Path) -> Result<(), Error> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p).map_err(Error::io(p)),
        _ => Ok(()),
    }
}

/// Runs `f` on a pool of `workers` threads, or the global pool for 0.
fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> Result<R, Error> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

fn load_corpus(cfg: &mut RunConfig) -> Result<Corpus, Failure> {
    match opt_path_key(cfg, "corpus") {
        Some(p) => {
            require_file(&p)?;
            Ok(read_corpus(&p)?)
        }
        None => {
            let n = usage(cfg.get_or("pseudo_words", defaults::PSEUDO_WORDS))?;
            let s = usage(cfg.get_or("corpus_seed", defaults::CORPUS_SEED))?;
            Ok(pseudo_corpus(s, n))
        }
    }
}

fn parse_convs(text: &str) -> Result<Vec<ConvSpec>, Error> {
    text.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (f, k) = t
                .trim()
                .split_once('x')
                .ok_or_else(|| Error::Config(format!("conv stage `{t}` must look like 8x5")))?;
            Ok(ConvSpec {
                filters: f
                    .parse()
                    .map_err(|_| Error::Config(format!("bad filter count in `{t}`")))?,
                kernel: k
                    .parse()
                    .map_err(|_| Error::Config(format!("bad kernel size in `{t}`")))?,
            })
        })
        .collect()
}

fn sgd_config(
    cfg: &mut RunConfig,
    epochs: usize,
    lr: f32,
    seed: u64,
    freeze_convs: bool,
) -> Result<TrainConfig, Failure> {
    Ok(TrainConfig {
        epochs: usage(cfg.get_or("epochs", epochs))?,
        batch_size: usage(cfg.get_or("batch_size", defaults::BATCH_SIZE))?,
        sgd: SgdHyper {
            lr: usage(cfg.get_or("lr", lr))?,
            momentum: usage(cfg.get_or("momentum", defaults::MOMENTUM))?,
            weight_decay: usage(cfg.get_or("weight_decay", defaults::WEIGHT_DECAY))?,
        },
        freeze_convs,
        seed,
    })
}

fn struct_hyper(cfg: &mut RunConfig) -> Result<StructHyper, Failure> {
    let d = StructHyper::default();
    Ok(StructHyper {
        margin: usage(cfg.get_or("margin", d.margin))?,
        beam_train: usage(cfg.get_or("beam_train", d.beam_train))?,
        beam_test: usage(cfg.get_or("beam_test", d.beam_test))?,
        lambda_alpha: usage(cfg.get_or("lambda_alpha", d.lambda_alpha))?,
        lambda_beta: usage(cfg.get_or("lambda_beta", d.lambda_beta))?,
    })
}

/// Images and labels of one split of a dataset directory.
fn load_split(data: &Path, split: Split) -> Result<(Manifest, Vec<GrayImage>, Vec<Word>), Error> {
    require_dir(data)?;
    let manifest = read_manifest(data)?;
    let records: Vec<_> = manifest
        .records
        .iter()
        .filter(|r| r.split == split)
        .cloned()
        .collect();
    if records.is_empty() {
        return Err(Error::Config(format!(
            "{} has no {split} records",
            data.display()
        )));
    }
    let images = load_images(&manifest, &records)?;
    let labels = records.into_iter().map(|r| r.label).collect();
    Ok((manifest, images, labels))
}

fn log_epoch(stage: &str) -> impl FnMut(&crate::train::EpochStats) {
    let stage = stage.to_string();
    move |s| {
        eprintln!(
            "{stage} epoch {} lr {} loss {:.6} skipped {}",
            s.epoch, s.lr, s.mean_loss, s.skipped
        )
    }
}

fn cmd_gen_data(a: GenDataArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common)?;
    apply_corpus(&mut cfg, &a.corpus);
    flags!(cfg, a; out, count, test_count, split, random_max_len, render_params);
    let out = path_key(&cfg, "out")?;
    let seed = usage(cfg.get_or("seed", defaults::SEED))?;
    let workers = usage(cfg.get_or("workers", 0usize))?;
    let count = usage(cfg.get_or("count", defaults::COUNT))?;
    let test_count = usage(cfg.get_or("test_count", defaults::TEST_COUNT))?;
    let split = usage(cfg.get_or("split", defaults::SPLIT))?;
    let random_max_len = usage(cfg.get_or("random_max_len", 0usize))?;
    if !(0.0..1.0).contains(&split) {
        return Err(Failure::Usage(format!(
            "split must lie in [0, 1), got {split}"
        )));
    }
    if random_max_len > DEFAULT_MAX_LEN {
        return Err(Failure::Usage(format!(
            "random_max_len must be at most {DEFAULT_MAX_LEN}"
        )));
    }
    let params = match opt_path_key(&cfg, "render_params") {
        Some(p) => {
            require_file(&p)?;
            let text = std::fs::read_to_string(&p).map_err(Error::io(&p))?;
            parse_params(&text, &p)?
        }
        None => RenderParams::default(),
    };
    let corpus = load_corpus(&mut cfg)?;
    let split_seed = derive_seed(seed, STREAM_SPLIT, 0);
    log_config("gen-data", &cfg, &[("split", split_seed)]);

    let (train_words, test_words) = if split > 0.0 {
        split_vocab(corpus.words(), split, split_seed).map_err(Error::from)?
    } else {
        (corpus.words().to_vec(), Vec::new())
    };
    if train_words.is_empty() || (split > 0.0 && test_words.is_empty()) {
        return Err(Error::Config("the split leaves one side without words".into()).into());
    }
    let mut parts = vec![
        DatasetPart {
            source: WordSource::Words(&train_words),
            count,
            split: Split::Train,
            vocab_tag: VocabTag::InVocab,
        },
        DatasetPart {
            source: WordSource::Words(&train_words),
            count: test_count,
            split: Split::Test,
            vocab_tag: VocabTag::InVocab,
        },
    ];
    if split > 0.0 {
        parts.push(DatasetPart {
            source: WordSource::Words(&test_words),
            count: test_count,
            split: Split::Test,
            vocab_tag: VocabTag::OutOfVocab,
        });
    }
    if random_max_len > 0 {
        parts.push(DatasetPart {
            source: WordSource::Random {
                max_len: random_max_len,
            },
            count: test_count,
            split: Split::Test,
            vocab_tag: VocabTag::Random,
        });
    }
    let manifest = with_workers(workers, || gen_dataset(&parts, &params, &out, seed))??;
    write_words(&out.join("words-train.txt"), &train_words)?;
    if split > 0.0 {
        write_words(&out.join("words-test.txt"), &test_words)?;
    }
    eprintln!(
        "wrote {} records to {} ({} training words, {} held-out words)",
        manifest.records.len(),
        out.display(),
        train_words.len(),
        test_words.len()
    );
    Ok(())
}

fn cmd_build_vocab(a: BuildVocabArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common)?;
    apply_corpus(&mut cfg, &a.corpus);
    flags!(cfg, a; out, order, min_count);
    let out = path_key(&cfg, "out")?;
    let order = usage(cfg.get_or("order", defaults::ORDER))?;
    let min_count = usage(cfg.get_or("min_count", defaults::MIN_COUNT))?;
    let corpus = load_corpus(&mut cfg)?;
    log_config("build-vocab", &cfg, &[]);
    let vocab = build_vocab(&corpus, order, min_count).map_err(Error::from)?;
    prepare_output(&out)?;
    write_vocab(&out, &vocab)?;
    eprintln!(
        "{} N-grams from {} words, per order {:?}",
        vocab.len(),
        corpus.len(),
        vocab.order_histogram()
    );
    Ok(())
}

fn cmd_train_char(a: TrainCharArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common)?;
    flags!(cfg, a; data, vocab, init, out);
    apply_net(&mut cfg, &a.net);
    apply_sgd(&mut cfg, &a.sgd);
    let data = path_key(&cfg, "data")?;
    let out = path_key(&cfg, "out")?;
    let seed = usage(cfg.get_or("seed", defaults::SEED))?;
    let workers = usage(cfg.get_or("workers", 0usize))?;
    let init = opt_path_key(&cfg, "init");
    let vocab_path = if init.is_none() {
        Some(path_key(&cfg, "vocab")?)
    } else {
        opt_path_key(&cfg, "vocab")
    };
    let convs = usage(cfg.get_or("convs", defaults::CONVS.to_string()))?;
    let fc_width = usage(cfg.get_or("fc_width", defaults::FC_WIDTH))?;
    let dropout = usage(cfg.get_or("dropout", defaults::DROPOUT))?;
    let max_len = usage(cfg.get_or("max_len", DEFAULT_MAX_LEN))?;
    let convs = usage(parse_convs(&convs))?;
    let init_seed = derive_seed(seed, STREAM_INIT, 0);
    let train_seed = derive_seed(seed, STREAM_TRAIN, 0);
    let tc = sgd_config(
        &mut cfg,
        defaults::CHAR_EPOCHS,
        defaults::CHAR_LR,
        train_seed,
        false,
    )?;
    log_config(
        "train-char",
        &cfg,
        &[("init", init_seed), ("train", train_seed)],
    );

    require_dir(&data)?;
    for p in init.iter().chain(vocab_path.iter()) {
        require_file(p)?;
    }
    prepare_output(&out)?;
    let (mut params, vocab) = match &init {
        Some(p) => {
            let (params, vocab) = load_model(p)?;
            if let Some(vp) = &vocab_path {
                if read_vocab(vp)? != vocab {
                    return Err(Error::ShapeMismatch(format!(
                        "{} differs from the vocabulary in {}",
                        vp.display(),
                        p.display()
                    ))
                    .into());
                }
            }
            (params, vocab)
        }
        None => {
            let vocab = read_vocab(vocab_path.as_deref().expect("required above"))?;
            let net = NetConfig {
                input_h: IMAGE_H,
                input_w: IMAGE_W,
                convs,
                fc_width,
                max_len,
                vocab_size: vocab.len(),
                dropout,
            };
            (
                NetParams::init(&net, init_seed).map_err(Error::from)?,
                vocab,
            )
        }
    };
    with_workers(workers, || -> Result<(), Error> {
        let (_, images, labels) = load_split(&data, Split::Train)?;
        let examples = prepare_examples(&images, &labels, &vocab);
        train(
            &mut params,
            &examples,
            &vocab,
            Stage::Char,
            &tc,
            log_epoch("char"),
        )?;
        Ok(())
    })??;
    save_model(&out, &params, &vocab)?;
    Ok(())
}

fn cmd_train_ngram(a: TrainNgramArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common)?;
    flags!(cfg, a; data, char_model, out, ngram_char_weight);
    apply_sgd(&mut cfg, &a.sgd);
    let data = path_key(&cfg, "data")?;
    let out = path_key(&cfg, "out")?;
    let char_model = path_key(&cfg, "char_model")?;
    let seed = usage(cfg.get_or("seed", defaults::SEED))?;
    let workers = usage(cfg.get_or("workers", 0usize))?;
    let char_weight = usage(cfg.get_or("ngram_char_weight", defaults::NGRAM_CHAR_WEIGHT))?;
    let train_seed = derive_seed(seed, STREAM_TRAIN, 1);
    let tc = sgd_config(
        &mut cfg,
        defaults::NGRAM_EPOCHS,
        defaults::NGRAM_LR,
        train_seed,
        false,
    )?;
    log_config("train-ngram", &cfg, &[("train", train_seed)]);

    require_dir(&data)?;
    require_file(&char_model)?;
    prepare_output(&out)?;
    let (mut params, vocab) = load_model(&char_model)?;
    with_workers(workers, || -> Result<(), Error> {
        let (_, images, labels) = load_split(&data, Split::Train)?;
        let examples = prepare_examples(&images, &labels, &vocab);
        train(
            &mut params,
            &examples,
            &vocab,
            Stage::NGram { char_weight },
            &tc,
            log_epoch("ngram"),
        )?;
        Ok(())
    })??;
    save_model(&out, &params, &vocab)?;
    Ok(())
}

fn cmd_train_joint(a: TrainJointArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common)?;
    flags!(cfg, a; data, char_model, ngram_model, out, freeze_convs);
    apply_sgd(&mut cfg, &a.sgd);
    apply_struct(&mut cfg, &a.structure);
    let data = path_key(&cfg, "data")?;
    let out = path_key(&cfg, "out")?;
    let (char_model, ngram_model) = match (opt_path_key(&cfg, "char_model"), opt_path_key(&cfg, "ngram_model")) {
        (Some(c), Some(n)) => (c, n),
        _ => {
            return Err(Failure::Usage(
                "train-joint starts from pre-trained CHAR and NGRAM checkpoints: set both char_model and ngram_model".into(),
            ))
        }
    };
    let seed = usage(cfg.get_or("seed", defaults::SEED))?;
    let workers = usage(cfg.get_or("workers", 0usize))?;
    let freeze = usage(cfg.get_or("freeze_convs", true))?;
    let hyper = struct_hyper(&mut cfg)?;
    let train_seed = derive_seed(seed, STREAM_TRAIN, 2);
    let tc = sgd_config(
        &mut cfg,
        defaults::JOINT_EPOCHS,
        defaults::JOINT_LR,
        train_seed,
        freeze,
    )?;
    log_config("train-joint", &cfg, &[("train", train_seed)]);

    require_dir(&data)?;
    require_file(&char_model)?;
    require_file(&ngram_model)?;
    prepare_output(&out)?;
    let (char_params, char_vocab) = load_model(&char_model)?;
    let (mut params, vocab) = load_model(&ngram_model)?;
    if char_params.config != params.config || char_vocab != vocab {
        return Err(Error::ShapeMismatch(format!(
            "{} and {} do not share a network shape and vocabulary",
            char_model.display(),
            ngram_model.display()
        ))
        .into());
    }
    with_workers(workers, || -> Result<(), Error> {
        let (_, images, labels) = load_split(&data, Split::Train)?;
        let examples = prepare_examples(&images, &labels, &vocab);
        train(
            &mut params,
            &examples,
            &vocab,
            Stage::Joint(hyper),
            &tc,
            log_epoch("joint"),
        )?;
        Ok(())
    })??;
    save_model(&out, &params, &vocab)?;
    Ok(())
}

/// Score tables of the network on one image.
fn tables_for(params: &NetParams<f32>, image: &GrayImage) -> Result<ScoreTables, Error> {
    let acts = forward(params, &normalize_image(&image.pixels), Mode::Eval)?;
    Ok(ScoreTables::from_logits(
        &acts.char_logits,
        &acts.ngram_logits,
        params.config.max_len,
    )?)
}

fn cmd_fit_linear(a: FitLinearArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common)?;
    flags!(cfg, a; data, model, out, sharing, count, epochs, step);
    apply_struct(&mut cfg, &a.structure);
    let data = path_key(&cfg, "data")?;
    let model = path_key(&cfg, "model")?;
    let out = path_key(&cfg, "out")?;
    let workers = usage(cfg.get_or("workers", 0usize))?;
    let sharing_name = usage(cfg.get_or("sharing", Sharing::PerOrder.name().to_string()))?;
    let sharing = Sharing::parse(&sharing_name)
        .ok_or_else(|| Failure::Usage(format!("unknown sharing `{sharing_name}`")))?;
    let count = usage(cfg.get_or("count", defaults::LINEAR_EXAMPLES))?;
    let fit_cfg = LinearFitConfig {
        epochs: usage(cfg.get_or("epochs", defaults::LINEAR_EPOCHS))?,
        step: usage(cfg.get_or("step", defaults::LINEAR_STEP))?,
    };
    let hyper = struct_hyper(&mut cfg)?;
    log_config("fit-linear", &cfg, &[]);

    require_dir(&data)?;
    require_file(&model)?;
    prepare_output(&out)?;
    let (params, vocab) = load_model(&model)?;
    let fit = with_workers(workers, || -> Result<_, Error> {
        use rayon::prelude::*;
        let (_, images, labels) = load_split(&data, Split::Train)?;
        let n = count.min(images.len());
        let examples: Vec<(ScoreTables, Word)> = images[..n]
            .par_iter()
            .zip(labels[..n].par_iter())
            .map(|(img, gt)| Ok((tables_for(&params, img)?, gt.clone())))
            .collect::<Result<_, Error>>()?;
        Ok(fit_linear_weights(
            &examples, &vocab, sharing, &hyper, &fit_cfg,
        )?)
    })??;
    write_linear(&out, &fit.weights)?;
    eprintln!(
        "objective {:.6} (hinge {:.6}) after {} iterates, {} skipped",
        fit.objective,
        fit.hinge,
        fit.history.len(),
        fit.skipped
    );
    Ok(())
}

fn read_linear_for(cfg: &RunConfig, vocab: &NGramVocab) -> Result<Option<LinearWeights>, Error> {
    match opt_path_key(cfg, "linear") {
        Some(p) => {
            require_file(&p)?;
            Ok(Some(read_linear(&p, vocab)?))
        }
        None => Ok(None),
    }
}

fn cmd_decode(a: DecodeArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common)?;
    flags!(cfg, a; model, linear, beam_test);
    let model = path_key(&cfg, "model")?;
    let beam = usage(cfg.get_or("beam_test", StructHyper::default().beam_test))?;
    log_config("decode", &cfg, &[]);

    require_file(&model)?;
    require_file(&a.image)?;
    if let Some(l) = &a.lexicon {
        require_file(l)?;
    }
    let (params, vocab) = load_model(&model)?;
    let linear = read_linear_for(&cfg, &vocab)?;
    let image = read_pgm(&a.image)?;
    if (image.width, image.height) != (IMAGE_W, IMAGE_H) {
        return Err(Error::ShapeMismatch(format!(
            "{} is {}x{}, expected {IMAGE_W}x{IMAGE_H}",
            a.image.display(),
            image.width,
            image.height
        ))
        .into());
    }
    let mut tables = tables_for(&params, &image)?;
    if let Some(w) = &linear {
        tables = w.apply(&tables).map_err(Error::from)?;
    }
    let (word, score) = match &a.lexicon {
        Some(l) => {
            let lexicon = read_words(l, params.config.max_len)?;
            lexicon_decode(&tables, &vocab, &lexicon).map_err(Error::from)?
        }
        None => beam_decode(&tables, &vocab, beam, None).map_err(Error::from)?,
    };
    println!("{word}\t{score}");
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common)?;
    let join = |v: &[PathBuf]| {
        (!v.is_empty()).then(|| {
            v.iter()
                .map(|p| p.display().to_string())
                .collect::<Vec<_>>()
                .join(",")
        })
    };
    cfg.set_flag("model", join(&a.model));
    cfg.set_flag("data", join(&a.data));
    flags!(cfg, a; out, lexicon_size, beam_test, linear);
    let list = |key: &str| -> Result<Vec<PathBuf>, Failure> {
        let v: Vec<PathBuf> = cfg
            .raw(key)
            .unwrap_or("")
            .split(',')
            .filter(|s| !s.is_empty())
            .map(PathBuf::from)
            .collect();
        if v.is_empty() {
            Err(Failure::Usage(format!("`{key}` is required")))
        } else {
            Ok(v)
        }
    };
    let models = list("model")?;
    let datas = list("data")?;
    let seed = usage(cfg.get_or("seed", defaults::SEED))?;
    let workers = usage(cfg.get_or("workers", 0usize))?;
    let lexicon_size = usage(cfg.get_or("lexicon_size", defaults::LEXICON_SIZE))?;
    let beam = usage(cfg.get_or("beam_test", StructHyper::default().beam_test))?;
    let out = opt_path_key(&cfg, "out");
    let eval_seed = derive_seed(seed, STREAM_EVAL, 0);
    log_config("eval", &cfg, &[("lexicon", eval_seed)]);

    for m in &models {
        require_file(m)?;
    }
    for d in &datas {
        require_dir(d)?;
    }
    let loaded: Vec<(String, NetParams<f32>, NGramVocab)> = models
        .iter()
        .map(|p| {
            let (params, vocab) = load_model(p)?;
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into());
            Ok((name, params, vocab))
        })
        .collect::<Result<_, Error>>()?;
    let linear = match loaded.as_slice() {
        [(_, _, vocab)] => read_linear_for(&cfg, vocab)?,
        _ if cfg.raw("linear").is_some() => {
            return Err(Failure::Usage(
                "linear weights apply to a single model".into(),
            ))
        }
        _ => None,
    };
    let mut conditions = vec![Condition::Char, Condition::Joint];
    if lexicon_size > 0 {
        conditions.push(Condition::JointLexicon(lexicon_size));
    }
    let bench_cfg = BenchConfig {
        conditions,
        beam_width: beam,
        seed: eval_seed,
    };
    let report = with_workers(workers, || -> Result<_, Error> {
        let mut sets = Vec::new();
        for d in &datas {
            let manifest = read_manifest(d)?;
            let name = d
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| d.display().to_string());
            sets.extend(eval_sets(&manifest, &name)?);
        }
        let eval_models: Vec<EvalModel<'_>> = loaded
            .iter()
            .map(|(name, params, vocab)| EvalModel {
                name: name.clone(),
                params,
                vocab,
                linear: linear.as_ref(),
            })
            .collect();
        let mut report = run_benchmark(&eval_models, &sets, &bench_cfg)?;
        for d in &datas {
            report.header.push(("data".into(), d.display().to_string()));
        }
        Ok(report)
    })??;
    if let Some(dir) = &out {
        write_report(dir, &report)?;
    }
    print!("{}", format_report(&report));
    if !report.lexicon_violations.is_empty() {
        let pairs: Vec<String> = report
            .lexicon_violations
            .iter()
            .map(|(m, d)| format!("{m} on {d}"))
            .collect();
        return Err(Error::Config(format!(
            "lexicon-constrained accuracy fell below unconstrained accuracy for {}",
            pairs.join(", ")
        ))
        .into());
    }
    Ok(())
}

fn cmd_fscore(a: FscoreArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common)?;
    flags!(cfg, a; model, data);
    let model = path_key(&cfg, "model")?;
    let data = path_key(&cfg, "data")?;
    let workers = usage(cfg.get_or("workers", 0usize))?;
    log_config("fscore", &cfg, &[]);

    require_file(&model)?;
    let (params, vocab) = load_model(&model)?;
    let fs = with_workers(workers, || -> Result<_, Error> {
        let (_, images, labels) = load_split(&data, Split::Test)?;
        ngram_fscore(&params, &vocab, &images, &labels)
    })??;
    println!("{}\t{}", fs.f, fs.threshold);
    Ok(())
}

fn cmd_selftest(a: SelftestArgs) -> Result<(), Failure> {
    let mut cfg = base_config(&a.common)?;
    let seed = usage(cfg.get_or("seed", defaults::SEED))?;
    let workers = usage(cfg.get_or("workers", 0usize))?;
    log_config("selftest", &cfg, &[]);
    let scale = if a.full {
        Scale::full()
    } else {
        Scale::quick()
    };
    let checks = with_workers(workers, || run_all(scale, seed))?;
    let mut failed = 0;
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        failed += !c.passed as usize;
    }
    if failed > 0 {
        return Err(Error::Config(format!("{failed} of {} checks failed", checks.len())).into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_specs_parse() {
        let c = parse_convs("8x5, 16x3").unwrap();
        assert_eq!(
            c,
            vec![
                ConvSpec {
                    filters: 8,
                    kernel: 5
                },
                ConvSpec {
                    filters: 16,
                    kernel: 3
                }
            ]
        );
        assert!(parse_convs("8").is_err());
        assert!(parse_convs("ax3").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run(["wordcrf", "decode", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["wordcrf"]), EXIT_USAGE);
        assert_eq!(run(["wordcrf", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["wordcrf", "--help"]), EXIT_OK);
    }
}
