//! Core of a joint character / N-gram CRF word recognizer.
//!
//! A word image is scored by a small convolutional network with two heads:
//! position-dependent character logits (the unary terms) and
//! position-independent N-gram logits (the edge terms). Words are decoded by
//! maximizing the summed path score, and the whole network can be trained
//! end to end through a structured hinge loss.
//!
//! This crate is `no_std` (it needs `alloc`) and does no I/O. File formats,
//! datasets on disk, the training loops and the command line tool live in the
//! `wordcrf` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod lexicon;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod structured;
pub mod synth;

pub use lexicon::{
    build_vocab, collision_count, encode_bag, encode_word, ngrams_of, Alphabet, Corpus, Gram,
    LexiconError, NGramVocab, Word, DEFAULT_MAX_LEN, NULL_CLASS, NUM_CLASSES, NUM_SYMBOLS,
};
