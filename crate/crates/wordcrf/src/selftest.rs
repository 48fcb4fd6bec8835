//! Oracle and gradient checks on random instances.
//!
//! Each check compares a fast routine against a slow independent one
//! (enumeration, finite differences, closed forms). The `selftest`
//! subcommand runs them at [`Scale::quick`]; the acceptance suite runs them
//! at [`Scale::full`].

use std::collections::BTreeSet;

use rand::Rng;

use wordcrf_core::lexicon::{
    collision_count, encode_word, ngrams_of, Gram, NGramVocab, Word, NULL_CLASS, NUM_CLASSES,
    NUM_SYMBOLS,
};
use wordcrf_core::net::{
    backward, char_loss, forward, ngram_loss, ConvSpec, Mode, NetConfig, NetParams, Real,
};
use wordcrf_core::rng::{derive_seed, rng_from_seed, Rng as SeededRng};
use wordcrf_core::structured::{
    beam_decode, exact_decode, fit_linear_weights, lexicon_decode, path_score, structured_loss,
    LinearFitConfig, ScoreTables, Sharing, StructHyper,
};
use wordcrf_core::synth::pseudo_corpus;
use wordcrf_core::{build_vocab, encode_bag};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Check {
            name,
            passed,
            detail,
        }
    }
}

/// Instance counts for the randomized checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scale {
    pub decoder_tables: usize,
    pub beam_tables: usize,
    pub loss_tables: usize,
    pub lexicon_samples: usize,
    pub corpus_words: usize,
}

impl Scale {
    pub fn quick() -> Self {
        Scale {
            decoder_tables: 60,
            beam_tables: 12,
            loss_tables: 4,
            lexicon_samples: 40,
            corpus_words: 2000,
        }
    }

    pub fn full() -> Self {
        Scale {
            decoder_tables: 500,
            beam_tables: 200,
            loss_tables: 20,
            lexicon_samples: 500,
            corpus_words: 2000,
        }
    }
}

/// Words over `symbols` of length `1..=max_len`.
pub fn enumerate_words(symbols: &[u8], max_len: usize) -> Vec<Word> {
    let mut out = Vec::new();
    let mut layer: Vec<Vec<u8>> = vec![Vec::new()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|p| {
                symbols.iter().map(move |&s| {
                    let mut q = p.clone();
                    q.push(s);
                    q
                })
            })
            .collect();
        out.extend(
            layer
                .iter()
                .map(|c| Word::from_classes(c.clone()).expect("valid classes")),
        );
    }
    out
}

/// Highest-scoring word of `candidates`, the smaller word on ties.
pub fn brute_force_best(
    candidates: &[Word],
    tables: &ScoreTables,
    vocab: &NGramVocab,
) -> Option<(Word, f64)> {
    let mut best: Option<(Word, f64)> = None;
    for w in candidates {
        let s = path_score(w, tables, vocab);
        let better = match &best {
            None => true,
            Some((bw, bs)) => s > *bs || (s == *bs && w < bw),
        };
        if better {
            best = Some((w.clone(), s));
        }
    }
    best
}

/// Every gram over `symbols` up to `order`, each kept with probability
/// `keep`; never empty.
fn random_vocab(rng: &mut SeededRng, symbols: &[u8], order: usize, keep: f64) -> NGramVocab {
    let mut grams = BTreeSet::new();
    let mut layer: Vec<Vec<u8>> = vec![Vec::new()];
    for _ in 0..order {
        layer = layer
            .iter()
            .flat_map(|p| {
                symbols.iter().map(move |&s| {
                    let mut q = p.clone();
                    q.push(s);
                    q
                })
            })
            .collect();
        for g in &layer {
            if rng.random_bool(keep) {
                grams.insert(Gram::new(g).expect("short gram"));
            }
        }
    }
    if grams.is_empty() {
        grams.insert(Gram::new(&symbols[..1]).expect("unigram"));
    }
    let entries: Vec<Gram> = grams.into_iter().collect();
    let n = entries.len();
    NGramVocab::from_parts(order, entries, vec![1; n], vec![1.0; n]).expect("valid vocabulary")
}

/// Uniform unary and edge scores. Symbols outside `symbols` get a large
/// negative unary score, which keeps them off every optimal path.
fn random_tables(
    rng: &mut SeededRng,
    max_len: usize,
    vocab: &NGramVocab,
    symbols: &[u8],
    spread: f64,
) -> ScoreTables {
    let mut unary = vec![0.0; max_len * NUM_CLASSES];
    for i in 0..max_len {
        for c in 0..NUM_CLASSES as u8 {
            unary[i * NUM_CLASSES + c as usize] = if c == NULL_CLASS || symbols.contains(&c) {
                rng.random_range(-spread..spread)
            } else {
                -1e3
            };
        }
    }
    let edge = (0..vocab.len())
        .map(|_| rng.random_range(-spread..spread))
        .collect();
    ScoreTables::new(max_len, unary, edge).expect("finite tables")
}

fn random_symbols(rng: &mut SeededRng, count: usize) -> Vec<u8> {
    let mut all: Vec<u8> = (0..NUM_SYMBOLS as u8).collect();
    for i in 0..count {
        let j = rng.random_range(i..all.len());
        all.swap(i, j);
    }
    all.truncate(count);
    all.sort_unstable();
    all
}

/// The exact decoder against enumeration of every word over at most four
/// symbols, up to length 5 and order 3.
pub fn decoder_oracle(tables: usize, seed: u64) -> Check {
    let mut worst = 0.0f64;
    for t in 0..tables {
        let mut rng = rng_from_seed(derive_seed(seed, 1, t as u64));
        let alphabet = rng.random_range(1..=4);
        let symbols = random_symbols(&mut rng, alphabet);
        let max_len = rng.random_range(1..=5);
        let order = rng.random_range(1..=3);
        let vocab = random_vocab(&mut rng, &symbols, order, 0.6);
        let tab = random_tables(&mut rng, max_len, &vocab, &symbols, 2.0);
        let (bw, bs) = brute_force_best(&enumerate_words(&symbols, max_len), &tab, &vocab)
            .expect("candidates");
        let (w, s) = match exact_decode(&tab, &vocab) {
            Ok(r) => r,
            Err(e) => return Check::new("decoder-oracle", false, format!("table {t}: {e}")),
        };
        if w != bw || (s - bs).abs() > 1e-6 {
            return Check::new(
                "decoder-oracle",
                false,
                format!("table {t}: exact {w} ({s}) vs enumeration {bw} ({bs})"),
            );
        }
        worst = worst.max((s - bs).abs());
    }
    Check::new(
        "decoder-oracle",
        true,
        format!("{tables} tables, max score gap {worst:.2e}"),
    )
}

/// Beam search over the full alphabet at order 2: scores never drop as the
/// beam widens and a beam wide enough for every state reproduces the exact
/// decoder.
pub fn beam_convergence(tables: usize, seed: u64) -> Check {
    let full = NUM_CLASSES * NUM_SYMBOLS + 1;
    let widths = [1, 2, 5, 10, full];
    let symbols: Vec<u8> = (0..NUM_SYMBOLS as u8).collect();
    for t in 0..tables {
        let mut rng = rng_from_seed(derive_seed(seed, 2, t as u64));
        let max_len = rng.random_range(1..=8);
        let vocab = random_vocab(&mut rng, &symbols, 2, 0.3);
        let tab = random_tables(&mut rng, max_len, &vocab, &symbols, 2.0);
        let (ew, es) = match exact_decode(&tab, &vocab) {
            Ok(r) => r,
            Err(e) => return Check::new("beam-convergence", false, format!("table {t}: {e}")),
        };
        let mut prev = f64::NEG_INFINITY;
        for &width in &widths {
            let (w, s) = match beam_decode(&tab, &vocab, width, None) {
                Ok(r) => r,
                Err(e) => {
                    return Check::new(
                        "beam-convergence",
                        false,
                        format!("table {t} width {width}: {e}"),
                    )
                }
            };
            if s < prev - 1e-9 {
                return Check::new(
                    "beam-convergence",
                    false,
                    format!("table {t}: width {width} scores {s}, narrower beam {prev}"),
                );
            }
            prev = s;
            if width == full && (w != ew || (s - es).abs() > 1e-9) {
                return Check::new(
                    "beam-convergence",
                    false,
                    format!("table {t}: beam {w} ({s}) vs exact {ew} ({es})"),
                );
            }
        }
    }
    Check::new(
        "beam-convergence",
        true,
        format!("{tables} tables, widths {widths:?}"),
    )
}

/// Error of `analytic` against `numeric`, relative to the larger magnitude
/// but never to less than `floor`.
fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central differences of a scalar function of a vector.
fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut x = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + h;
            let up = f(&x);
            x[i] = orig - h;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// CHAR and NGRAM losses in 64-bit arithmetic against central differences.
pub fn head_loss_gradients(seed: u64) -> Check {
    let mut rng = rng_from_seed(derive_seed(seed, 3, 0));
    let max_len = 4;
    let logits: Vec<f64> = (0..max_len * NUM_CLASSES)
        .map(|_| rng.random_range(-3.0..3.0))
        .collect();
    let gt = encode_word("ab7", max_len).expect("valid word");
    let (_, g) = char_loss(&logits, &gt);
    let num = numeric_gradient(&logits, 1e-6, |x| char_loss(x, &gt).0);
    let char_err = g
        .iter()
        .zip(&num)
        .map(|(&a, &n)| rel_err(a, n, 1e-6))
        .fold(0.0, f64::max);

    let n = 40;
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
    let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..3.0)).collect();
    let bag: Vec<u32> = (0..n as u32).filter(|_| rng.random_bool(0.3)).collect();
    let (_, g) = ngram_loss(&z, &bag, &weights);
    let num = numeric_gradient(&z, 1e-6, |x| ngram_loss(x, &bag, &weights).0);
    let ngram_err = g
        .iter()
        .zip(&num)
        .map(|(&a, &n)| rel_err(a, n, 1e-6))
        .fold(0.0, f64::max);
    let passed = char_err < 1e-4 && ngram_err < 1e-4;
    Check::new(
        "head-loss-gradients",
        passed,
        format!("max relative error CHAR {char_err:.2e}, NGRAM {ngram_err:.2e}"),
    )
}

fn mini_config(vocab_size: usize) -> NetConfig {
    NetConfig {
        input_h: 8,
        input_w: 12,
        convs: vec![
            ConvSpec {
                filters: 3,
                kernel: 3,
            },
            ConvSpec {
                filters: 4,
                kernel: 3,
            },
        ],
        fc_width: 10,
        max_len: 3,
        vocab_size,
        dropout: 0.0,
    }
}

fn net_loss<T: Real>(
    params: &NetParams<T>,
    input: &[T],
    gt: &Word,
    bag: &[u32],
    weights: &[f64],
) -> (T, Vec<T>, Vec<T>) {
    let acts = forward(params, input, Mode::Eval).expect("valid shapes");
    let (lc, dc) = char_loss(&acts.char_logits, gt);
    let (ln, dn) = ngram_loss(&acts.ngram_logits, bag, weights);
    (lc + ln, dc, dn)
}

/// Backpropagation through a miniature network in 32-bit arithmetic
/// against 64-bit central differences of the summed CHAR and NGRAM losses.
pub fn network_gradients(seed: u64) -> Check {
    let vocab_size = 7;
    let cfg = mini_config(vocab_size);
    let params = NetParams::<f32>::init(&cfg, derive_seed(seed, 4, 0)).expect("valid config");
    let mut rng = rng_from_seed(derive_seed(seed, 4, 1));
    let input: Vec<f32> = (0..cfg.input_len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    let gt = encode_word("q2", cfg.max_len).expect("valid word");
    let bag = vec![1, 4];
    let weights: Vec<f64> = (0..vocab_size)
        .map(|_| rng.random_range(0.5..2.0))
        .collect();

    let (_, dc, dn) = net_loss(&params, &input, &gt, &bag, &weights);
    let acts = forward(&params, &input, Mode::Eval).expect("valid shapes");
    let grads = backward(&params, &acts, Some(&dc), Some(&dn), false).expect("fresh activations");
    let analytic: Vec<f64> = grads
        .tensors()
        .iter()
        .flat_map(|t| t.data.iter().map(|&v| v as f64))
        .collect();

    let base = params.cast::<f64>();
    let input64: Vec<f64> = input.iter().map(|&v| v as f64).collect();
    let flat: Vec<f64> = base
        .tensors()
        .iter()
        .flat_map(|t| t.data.to_vec())
        .collect();
    let mut probe = base.clone();
    let numeric = numeric_gradient(&flat, 1e-6, |x| {
        let mut k = 0;
        probe.for_each_mut(|_, data| {
            data.copy_from_slice(&x[k..k + data.len()]);
            k += data.len();
        });
        net_loss(&probe, &input64, &gt, &bag, &weights).0
    });
    let worst = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &n)| rel_err(a, n, 1e-3))
        .fold(0.0, f64::max);
    Check::new(
        "network-gradients",
        worst < 1e-3,
        format!("{} parameters, max relative error {worst:.2e}", flat.len()),
    )
}

/// The structured hinge subgradient against central differences, skipping
/// coordinates where the competitor changes within the step.
pub fn structured_gradients(tables: usize, seed: u64) -> Check {
    let symbols: Vec<u8> = (0..NUM_SYMBOLS as u8).collect();
    let hyper = StructHyper::default();
    let h = 1e-4;
    let (mut worst, mut checked, mut kinks) = (0.0f64, 0usize, 0usize);
    for t in 0..tables {
        let mut rng = rng_from_seed(derive_seed(seed, 5, t as u64));
        let max_len = rng.random_range(2..=5);
        let vocab = random_vocab(&mut rng, &symbols[..6], 3, 0.5);
        let tab = random_tables(&mut rng, max_len, &vocab, &symbols[..6], 1.0);
        let gt_len = rng.random_range(1..=max_len);
        let gt = Word::from_classes((0..gt_len).map(|_| rng.random_range(0..6u8)).collect())
            .expect("valid word");
        let base = match structured_loss(&tab, &vocab, &gt, &hyper) {
            Ok(l) => l,
            Err(e) => return Check::new("structured-gradients", false, format!("table {t}: {e}")),
        };
        if base.loss <= 0.0 {
            continue;
        }
        let n_unary = tab.unary_table().len();
        let flat: Vec<f64> = tab
            .unary_table()
            .iter()
            .chain(tab.edge_table())
            .copied()
            .collect();
        let analytic: Vec<f64> = base.d_unary.iter().chain(&base.d_edge).copied().collect();
        let eval = |x: &[f64]| {
            let t2 = ScoreTables::new(max_len, x[..n_unary].to_vec(), x[n_unary..].to_vec())
                .expect("finite");
            structured_loss(&t2, &vocab, &gt, &hyper).expect("decodable")
        };
        let mut x = flat.clone();
        for i in 0..x.len() {
            let orig = x[i];
            x[i] = orig + h;
            let up = eval(&x);
            x[i] = orig - h;
            let down = eval(&x);
            x[i] = orig;
            let smooth = up.competitor == base.competitor
                && down.competitor == base.competitor
                && up.loss > 0.0
                && down.loss > 0.0;
            if !smooth {
                kinks += 1;
                continue;
            }
            let numeric = (up.loss - down.loss) / (2.0 * h);
            worst = worst.max(rel_err(analytic[i], numeric, 1.0));
            checked += 1;
        }
    }
    Check::new(
        "structured-gradients",
        checked > 0 && worst < 1e-6,
        format!("{checked} coordinates, {kinks} skipped at kinks, max error {worst:.2e}"),
    )
}

/// The fourteen grams of "spires" up to order 3, and the share of corpus
/// words whose bag encoding collides with another word's.
pub fn encoding_fidelity(corpus_words: usize, order: usize, min_count: u64, seed: u64) -> Check {
    let spires = encode_word("spires", 23).expect("valid word");
    let got: Vec<String> = ngrams_of(&spires, 3).iter().map(|g| g.to_text()).collect();
    let mut want: Vec<String> = [
        "s", "p", "i", "r", "e", "sp", "pi", "ir", "re", "es", "spi", "pir", "ire", "res",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let mut got_sorted = got.clone();
    got_sorted.sort();
    want.sort();
    if got_sorted != want || got.len() != 14 {
        return Check::new("encoding-fidelity", false, format!("spires grams {got:?}"));
    }
    let corpus = pseudo_corpus(seed, corpus_words);
    let vocab = match build_vocab(&corpus, order, min_count) {
        Ok(v) => v,
        Err(e) => return Check::new("encoding-fidelity", false, e.to_string()),
    };
    let distinct: Vec<Word> = corpus
        .words()
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let collisions = collision_count(&distinct, &vocab);
    let rate = collisions as f64 / distinct.len() as f64;
    let nonempty = distinct.iter().all(|w| !encode_bag(w, &vocab).is_empty());
    Check::new(
        "encoding-fidelity",
        rate < 0.005 && nonempty,
        format!(
            "{} words, |G| = {}, {collisions} colliding pairs, rate {:.3}%",
            distinct.len(),
            vocab.len(),
            rate * 100.0
        ),
    )
}

/// Lexicon decoding against the best path score over the lexicon.
pub fn lexicon_oracle(samples: usize, lexicon_size: usize, seed: u64) -> Check {
    let corpus = pseudo_corpus(seed, 2000);
    let vocab = build_vocab(&corpus, 4, 5).expect("non-empty corpus");
    let symbols: Vec<u8> = (0..NUM_SYMBOLS as u8).collect();
    let words = corpus.words();
    for t in 0..samples {
        let mut rng = rng_from_seed(derive_seed(seed, 6, t as u64));
        let tab = random_tables(&mut rng, 23, &vocab, &symbols, 2.0);
        let lexicon: Vec<Word> = (0..lexicon_size)
            .map(|_| words[rng.random_range(0..words.len())].clone())
            .collect();
        let got = match lexicon_decode(&tab, &vocab, &lexicon) {
            Ok(r) => r,
            Err(e) => return Check::new("lexicon-oracle", false, format!("sample {t}: {e}")),
        };
        let want = brute_force_best(&lexicon, &tab, &vocab).expect("non-empty lexicon");
        if got.0 != want.0 || got.1 != want.1 {
            return Check::new(
                "lexicon-oracle",
                false,
                format!(
                    "sample {t}: {} ({}) vs {} ({})",
                    got.0, got.1, want.0, want.1
                ),
            );
        }
    }
    Check::new(
        "lexicon-oracle",
        true,
        format!("{samples} samples, lexicons of {lexicon_size}"),
    )
}

/// Score tables where the ground truth wins every position by a small
/// unary margin while edge scores are noise.
fn separable_set(seed: u64, count: usize) -> (Vec<(ScoreTables, Word)>, NGramVocab) {
    let mut rng = rng_from_seed(derive_seed(seed, 7, 0));
    let symbols: Vec<u8> = (0..NUM_SYMBOLS as u8).collect();
    let vocab = random_vocab(&mut rng, &symbols[..5], 2, 0.5);
    let max_len = 4;
    let set = (0..count)
        .map(|_| {
            let len = rng.random_range(1..=max_len);
            let gt = Word::from_classes((0..len).map(|_| rng.random_range(0..5u8)).collect())
                .expect("valid word");
            let mut unary: Vec<f64> = (0..max_len * NUM_CLASSES)
                .map(|_| rng.random_range(-0.1..0.1))
                .collect();
            for i in 0..max_len {
                unary[i * NUM_CLASSES + gt.padded_class(i) as usize] = 0.4;
            }
            let edge = (0..vocab.len())
                .map(|_| rng.random_range(-0.05..0.05))
                .collect();
            (ScoreTables::new(max_len, unary, edge).expect("finite"), gt)
        })
        .collect();
    (set, vocab)
}

/// The linear-weight learner drives the hinge to zero on a separable set and
/// shrinks every weight under a heavy ridge penalty.
pub fn linear_learner(seed: u64) -> Check {
    let (set, vocab) = separable_set(seed, 40);
    let hyper = StructHyper::default();
    let config = LinearFitConfig {
        epochs: 1500,
        step: 4.0,
    };
    let mut lines = Vec::new();
    let mut passed = true;
    for sharing in Sharing::ALL {
        let fit = match fit_linear_weights(&set, &vocab, sharing, &hyper, &config) {
            Ok(f) => f,
            Err(e) => return Check::new("linear-learner", false, e.to_string()),
        };
        let start = fit.history.first().copied().unwrap_or(0.0);
        passed &= start > 0.0 && fit.hinge == 0.0;
        lines.push(format!(
            "{} hinge {:.3} -> {:.3}",
            sharing.name(),
            start,
            fit.hinge
        ));
    }
    let heavy = StructHyper {
        lambda_alpha: 1e4,
        lambda_beta: 1e4,
        ..hyper
    };
    for sharing in Sharing::ALL {
        let fit = match fit_linear_weights(
            &set,
            &vocab,
            sharing,
            &heavy,
            &LinearFitConfig {
                epochs: 20,
                ..config
            },
        ) {
            Ok(f) => f,
            Err(e) => return Check::new("linear-learner", false, e.to_string()),
        };
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (a, b) = (norm(fit.weights.alpha()), norm(fit.weights.beta()));
        passed &= a < 1e-2 && b < 1e-2;
        lines.push(format!(
            "{} heavy ridge |alpha| {a:.1e} |beta| {b:.1e}",
            sharing.name()
        ));
    }
    Check::new("linear-learner", passed, lines.join("; "))
}

/// Every check at the given scale.
pub fn run_all(scale: Scale, seed: u64) -> Vec<Check> {
    vec![
        decoder_oracle(scale.decoder_tables, seed),
        beam_convergence(scale.beam_tables, seed),
        head_loss_gradients(seed),
        network_gradients(seed),
        structured_gradients(scale.loss_tables, seed),
        encoding_fidelity(scale.corpus_words, 4, 5, seed),
        lexicon_oracle(scale.lexicon_samples, 50, seed),
        linear_learner(seed),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_words(&[0, 1, 2], 3).len(), 3 + 9 + 27);
        assert_eq!(enumerate_words(&[5], 4).len(), 4);
    }

    #[test]
    fn quick_suite_passes() {
        for c in run_all(Scale::quick(), 1) {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
