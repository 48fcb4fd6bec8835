mod common;

use common::{small_instance, vocab_of, word, Instance};
use proptest::prelude::*;

use wordcrf_core::lexicon::{NGramVocab, Word, NULL_CLASS, NUM_CLASSES};
use wordcrf_core::structured::{
    beam_decode, fit_linear_weights, path_score, structured_loss, LinearFitConfig, LinearWeights,
    ScoreTables, Sharing, StructHyper,
};

fn hinge(
    tables: &ScoreTables,
    vocab: &NGramVocab,
    gt: &Word,
    hyper: &StructHyper,
) -> (f64, Option<Word>) {
    let l = structured_loss(tables, vocab, gt, hyper).unwrap();
    (l.loss, l.competitor)
}

#[test]
fn two_letter_example_routes_the_subgradient() {
    let vocab = vocab_of(&["a", "b"], 1);
    let (a, b) = (10, 11);
    let mut unary = vec![0.0; 2 * NUM_CLASSES];
    unary[a] = 5.0;
    unary[NUM_CLASSES + a] = 1.0;
    unary[NUM_CLASSES + b] = 1.5;
    unary[NUM_CLASSES + NULL_CLASS as usize] = -5.0;
    let tables = ScoreTables::new(2, unary, vec![0.0, 0.0]).unwrap();
    let gt = word("aa");
    let l = structured_loss(&tables, &vocab, &gt, &StructHyper::default()).unwrap();

    assert_eq!(l.competitor, Some(word("ab")));
    assert_eq!(l.loss, 1.0 + 6.5 - 6.0);
    assert_eq!(l.d_edge, vec![-1.0, 1.0]);
    let mut expected = vec![0.0; 2 * NUM_CLASSES];
    expected[NUM_CLASSES + b] = 1.0;
    expected[NUM_CLASSES + a] = -1.0;
    assert_eq!(l.d_unary, expected);
}

#[test]
fn dominant_truth_gives_zero_loss_and_gradient() {
    let vocab = vocab_of(&["a", "b", "ab"], 2);
    let mut unary = vec![0.0; 4 * NUM_CLASSES];
    unary[10] = 4.0;
    unary[NUM_CLASSES + 11] = 4.0;
    unary[2 * NUM_CLASSES + NULL_CLASS as usize] = 4.0;
    unary[3 * NUM_CLASSES + NULL_CLASS as usize] = 4.0;
    let tables = ScoreTables::new(4, unary, vec![0.0; 3]).unwrap();
    let l = structured_loss(&tables, &vocab, &word("ab"), &StructHyper::default()).unwrap();
    assert_eq!(l.loss, 0.0);
    assert!(l.d_unary.iter().chain(&l.d_edge).all(|&v| v == 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn loss_is_margin_plus_score_gap(inst in small_instance(4, 5, 3), pick in any::<prop::sample::Index>()) {
        let words = inst.words();
        let gt = &words[pick.index(words.len())];
        let hyper = StructHyper::default();
        let l = structured_loss(&inst.tables, &inst.vocab, gt, &hyper).unwrap();
        let rival = l.competitor.clone().expect("a rival exists");
        prop_assert_ne!(&rival, gt);
        let (beam_rival, _) = beam_decode(&inst.tables, &inst.vocab, hyper.beam_train, Some(gt)).unwrap();
        prop_assert_eq!(&rival, &beam_rival);
        let z = hyper.margin + path_score(&rival, &inst.tables, &inst.vocab) - path_score(gt, &inst.tables, &inst.vocab);
        prop_assert!((l.loss - z.max(0.0)).abs() < 1e-9);
        // every unary row moves one unit up and one unit down, or not at all
        for row in l.d_unary.chunks(NUM_CLASSES) {
            prop_assert_eq!(row.iter().sum::<f64>(), 0.0);
            prop_assert!(row.iter().all(|v| [-1.0, 0.0, 1.0].contains(v)));
        }
    }

    /// Away from kinks the loss is linear in every table entry, so central
    /// differences reproduce the subgradient to rounding error.
    #[test]
    fn subgradient_matches_finite_differences(inst in small_instance(4, 5, 3), pick in any::<prop::sample::Index>()) {
        let words = inst.words();
        let gt = &words[pick.index(words.len())];
        check_finite_differences(&inst, gt)?;
    }
}

fn check_finite_differences(inst: &Instance, gt: &Word) -> Result<(), TestCaseError> {
    let hyper = StructHyper::default();
    let base = structured_loss(&inst.tables, &inst.vocab, gt, &hyper).unwrap();
    if base.loss <= 0.0 {
        return Ok(());
    }
    let h = 1e-4;
    let n_unary = inst.tables.unary_table().len();
    for k in 0..n_unary + inst.tables.edge_table().len() {
        let probe = |delta: f64| {
            let mut t = inst.tables.clone();
            if k < n_unary {
                t.unary_table_mut()[k] += delta;
            } else {
                t.edge_table_mut()[k - n_unary] += delta;
            }
            hinge(&t, &inst.vocab, gt, &hyper)
        };
        let (up, w_up) = probe(h);
        let (down, w_down) = probe(-h);
        if w_up != base.competitor || w_down != base.competitor || up <= 0.0 || down <= 0.0 {
            continue;
        }
        let fd = (up - down) / (2.0 * h);
        let analytic = if k < n_unary {
            base.d_unary[k]
        } else {
            base.d_edge[k - n_unary]
        };
        let err = (fd - analytic).abs() / analytic.abs().max(1.0);
        prop_assert!(err < 1e-6, "entry {}: fd {} analytic {}", k, fd, analytic);
    }
    Ok(())
}

#[test]
fn all_shared_weights_have_two_parameters() {
    let vocab = vocab_of(&["a", "b", "ab", "abc"], 3);
    let w = LinearWeights::ones(Sharing::All, 23, &vocab);
    assert_eq!(w.alpha().len() + w.beta().len(), 2);
    let w = LinearWeights::ones(Sharing::PerOrder, 23, &vocab);
    assert_eq!((w.alpha().len(), w.beta().len()), (23, 3));
    let w = LinearWeights::ones(Sharing::PerPosition, 23, &vocab);
    assert_eq!((w.alpha().len(), w.beta().len()), (23, 4));
    let w = LinearWeights::ones(Sharing::None, 23, &vocab);
    assert_eq!((w.alpha().len(), w.beta().len()), (23 * NUM_CLASSES, 4));
}

/// Tables where the truth wins once unaries outweigh a misleading edge:
/// the learner has to raise alpha relative to beta.
fn separable_example() -> (NGramVocab, ScoreTables, Word) {
    let vocab = vocab_of(&["a", "b"], 1);
    let (a, b) = (10, 11);
    let mut unary = vec![0.0; 2 * NUM_CLASSES];
    unary[a] = 2.0;
    unary[NUM_CLASSES + a] = 2.0;
    unary[NUM_CLASSES + b] = 1.0;
    unary[NUM_CLASSES + NULL_CLASS as usize] = -1.0;
    for c in 0..NUM_CLASSES {
        if c != a && c != b && c != NULL_CLASS as usize {
            unary[c] = -3.0;
            unary[NUM_CLASSES + c] = -3.0;
        }
    }
    unary[NULL_CLASS as usize] = -3.0;
    let tables = ScoreTables::new(2, unary, vec![0.0, 1.5]).unwrap();
    (vocab, tables, word("aa"))
}

#[test]
fn single_separable_example_reaches_zero_hinge() {
    let (vocab, tables, gt) = separable_example();
    let hyper = StructHyper::default();
    let start = structured_loss(&tables, &vocab, &gt, &hyper).unwrap();
    assert!(start.loss > 0.0);
    let examples = vec![(tables, gt)];
    for sharing in [
        Sharing::All,
        Sharing::PerOrder,
        Sharing::PerPosition,
        Sharing::None,
    ] {
        let cfg = LinearFitConfig {
            epochs: 500,
            step: 1.0,
        };
        let fit = fit_linear_weights(&examples, &vocab, sharing, &hyper, &cfg).unwrap();
        assert_eq!(fit.hinge, 0.0, "{sharing:?}");
        assert!(fit.objective <= fit.history[0]);
    }
}

#[test]
fn heavy_ridge_drives_weights_to_zero() {
    let (vocab, tables, gt) = separable_example();
    let hyper = StructHyper {
        lambda_alpha: 1e5,
        lambda_beta: 1e5,
        ..StructHyper::default()
    };
    let cfg = LinearFitConfig {
        epochs: 30,
        step: 1.0,
    };
    let fit =
        fit_linear_weights(&[(tables, gt)], &vocab, Sharing::PerPosition, &hyper, &cfg).unwrap();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(
        norm(fit.weights.alpha()) < 1e-2,
        "{:?}",
        fit.weights.alpha()
    );
    assert!(norm(fit.weights.beta()) < 1e-2, "{:?}", fit.weights.beta());
}

#[test]
fn best_objective_never_exceeds_the_start() {
    let (vocab, tables, gt) = separable_example();
    let hyper = StructHyper {
        lambda_alpha: 0.1,
        lambda_beta: 0.1,
        ..StructHyper::default()
    };
    let fit = fit_linear_weights(
        &[(tables, gt)],
        &vocab,
        Sharing::All,
        &hyper,
        &LinearFitConfig::default(),
    )
    .unwrap();
    let min = fit.history.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(fit.objective, min);
    assert!(fit.objective <= fit.history[0]);
}
