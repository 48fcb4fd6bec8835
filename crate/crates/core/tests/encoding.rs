mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use wordcrf_core::lexicon::{
    build_vocab, collision_count, encode_bag, encode_word, ngrams_of, Corpus, Gram, LexiconError,
    Word,
};
use wordcrf_core::synth::{
    plan_samples, pseudo_corpus, random_string, render_word, split_vocab, RenderParams, WordSource,
    IMAGE_H, IMAGE_W,
};

fn w(text: &str) -> Word {
    encode_word(text, 23).unwrap()
}

fn texts(set: &BTreeSet<Gram>) -> BTreeSet<String> {
    set.iter().map(|g| g.to_text()).collect()
}

fn word_strategy() -> impl Strategy<Value = Word> {
    "[a-z0-9]{1,12}".prop_map(|s| w(&s))
}

#[test]
fn spires_has_fourteen_trigrams() {
    let expected: BTreeSet<String> = [
        "s", "p", "i", "r", "e", "sp", "pi", "ir", "re", "es", "spi", "pir", "ire", "res",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    assert_eq!(texts(&ngrams_of(&w("spires"), 3)), expected);
}

#[test]
fn ingestion_examples() {
    assert_eq!(w("Camel").classes(), &[12, 10, 22, 14, 21]);
    assert_eq!(w("7").classes(), &[7]);
    assert_eq!(w("x!y").classes(), &[33, 34]);
    assert!(matches!(
        encode_word("!!", 23),
        Err(LexiconError::EmptyWord)
    ));
    assert!(matches!(
        encode_word("abcd", 3),
        Err(LexiconError::TooLong { .. })
    ));
}

#[test]
fn vocab_counts_occurrences_per_position() {
    let corpus = Corpus::new(vec![w("ab"), w("ab"), w("ba")], "t").unwrap();
    let vocab = build_vocab(&corpus, 2, 2).unwrap();
    let entries: Vec<String> = vocab.entries().iter().map(|g| g.to_text()).collect();
    assert_eq!(entries, ["a", "b", "ab"]);
    assert_eq!(vocab.counts(), &[3, 3, 2]);
}

#[test]
fn colliding_pair_is_counted_once() {
    let corpus = Corpus::new(vec![w("ab"), w("aab")], "t").unwrap();
    let vocab = common::vocab_of(&["a", "b", "ab"], 2);
    assert_eq!(collision_count(corpus.words(), &vocab), 1);
    let vocab = common::vocab_of(&["a", "b"], 1);
    assert_eq!(collision_count(&[w("a"), w("b")], &vocab), 0);
}

#[test]
fn desk_corpus_covers_every_unigram() {
    let corpus = pseudo_corpus(7, 2000);
    let vocab = build_vocab(&corpus, 4, 2).unwrap();
    assert_eq!(vocab.order_histogram()[0], 36);
    let mean_bits = corpus
        .words()
        .iter()
        .map(|x| encode_bag(x, &vocab).len())
        .sum::<usize>() as f64
        / 2000.0;
    assert!(
        (10.0..40.0).contains(&mean_bits),
        "mean bag size {mean_bits}"
    );
    let full = build_vocab(&corpus, 4, 1).unwrap();
    let rate = collision_count(corpus.words(), &full) as f64 / corpus.len() as f64;
    assert!(rate < 0.005, "collision rate {rate}");
}

proptest! {
    #[test]
    fn grams_are_short_substrings(word in word_strategy(), order in 1usize..6) {
        let text = word.to_text();
        let grams = ngrams_of(&word, order);
        let bound: usize = (1..=order.min(word.len())).map(|n| word.len() - n + 1).sum();
        prop_assert!(grams.len() <= bound);
        for g in &grams {
            prop_assert!(g.len() <= order);
            prop_assert!(text.contains(&g.to_text()));
        }
    }

    #[test]
    fn gram_sets_grow_with_order(word in word_strategy(), order in 1usize..6) {
        prop_assert!(ngrams_of(&word, order).is_subset(&ngrams_of(&word, order + 1)));
    }

    #[test]
    fn bag_bits_are_substring_membership(
        words in prop::collection::vec(word_strategy(), 1..20),
        probe in word_strategy(),
        min_count in 1u64..3,
    ) {
        let corpus = Corpus::new(words, "p").unwrap();
        let Ok(vocab) = build_vocab(&corpus, 3, min_count) else { return Ok(()) };
        let bag: BTreeSet<u32> = encode_bag(&probe, &vocab).into_iter().collect();
        let text = probe.to_text();
        for (i, g) in vocab.entries().iter().enumerate() {
            prop_assert_eq!(bag.contains(&(i as u32)), text.contains(&g.to_text()));
        }
    }

    #[test]
    fn vocab_building_is_deterministic(words in prop::collection::vec(word_strategy(), 1..30)) {
        let corpus = Corpus::new(words, "p").unwrap();
        let a = build_vocab(&corpus, 4, 1).unwrap();
        let b = build_vocab(&corpus, 4, 1).unwrap();
        prop_assert_eq!(a.entries(), b.entries());
        prop_assert_eq!(a.weights(), b.weights());
        prop_assert!(a.weights().iter().all(|&x| (0.01..=100.0).contains(&x)));
        let mut sorted = a.entries().to_vec();
        sorted.sort();
        prop_assert_eq!(sorted.as_slice(), a.entries());
    }

    /// Words with pairwise different gram sets never collide, checked
    /// against brute-force pairwise comparison.
    #[test]
    fn collisions_match_pairwise_comparison(words in prop::collection::btree_set("[a-z0-9]{1,8}".prop_map(|s| w(&s)), 1..60)) {
        let words: Vec<Word> = words.into_iter().collect();
        let corpus = Corpus::new(words.clone(), "p").unwrap();
        let vocab = build_vocab(&corpus, 2, 2).unwrap_or_else(|_| build_vocab(&corpus, 2, 1).unwrap());
        let mut pairs = 0;
        for i in 0..words.len() {
            for j in i + 1..words.len() {
                pairs += (encode_bag(&words[i], &vocab) == encode_bag(&words[j], &vocab)) as u64;
            }
        }
        prop_assert_eq!(collision_count(&words, &vocab), pairs);
        let full = build_vocab(&corpus, 8, 1).unwrap();
        prop_assert_eq!(collision_count(&words, &full), 0);
    }

    #[test]
    fn renders_are_canvas_sized_and_reproducible(word in word_strategy(), seed in any::<u64>()) {
        let params = RenderParams::default();
        let a = render_word(&word, &params, seed);
        prop_assert_eq!((a.width, a.height, a.pixels.len()), (IMAGE_W, IMAGE_H, IMAGE_W * IMAGE_H));
        prop_assert_eq!(a, render_word(&word, &params, seed));
    }

    #[test]
    fn random_strings_respect_the_length_bound(seed in any::<u64>(), max_len in 1usize..24) {
        let s = random_string(seed, max_len).unwrap();
        prop_assert!(!s.is_empty() && s.len() <= max_len);
        prop_assert_eq!(s, random_string(seed, max_len).unwrap());
    }

    #[test]
    fn vocabulary_splits_are_disjoint(seed in any::<u64>(), fraction in 0.05f64..0.95) {
        let corpus = pseudo_corpus(3, 300);
        let (train, test) = split_vocab(corpus.words(), fraction, seed).unwrap();
        prop_assert_eq!(train.len() + test.len(), 300);
        let seen: BTreeSet<&Word> = train.iter().collect();
        prop_assert!(test.iter().all(|t| !seen.contains(t)));
    }
}

#[test]
fn fifty_thousand_draws_cover_the_corpus() {
    let corpus = pseudo_corpus(7, 2000);
    let plan = plan_samples(WordSource::Words(corpus.words()), 50_000, 1).unwrap();
    let seen: BTreeSet<&Word> = plan.iter().map(|p| &p.word).collect();
    // expected misses are 2000 * exp(-25), far below one
    assert_eq!(seen.len(), 2000);
}
