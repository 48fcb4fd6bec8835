//! Synthetic word images.
//!
//! A word is laid out as a row of bitmap glyphs, warped by a random scale,
//! shear and offset while being stretched over the fixed 32x100 canvas, then
//! shaded with random background/ink levels and Gaussian noise. Every output
//! is a pure function of the word, the parameters and a seed.

mod atlas;
mod corpus;

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

pub use atlas::{Atlas, GLYPH_H, GLYPH_W};
pub use corpus::pseudo_corpus;

use crate::lexicon::{Word, NUM_SYMBOLS};
use crate::rng::{derive_seed, rng_from_seed, Rng};

pub const IMAGE_H: usize = 32;
pub const IMAGE_W: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("range `{0}` is not well ordered")]
    BadRange(&'static str),
    #[error("train fraction must lie strictly between 0 and 1")]
    BadFraction,
    #[error("maximum length must be at least 1")]
    BadMaxLen,
    #[error("word source is empty")]
    EmptySource,
}

/// An 8-bit grayscale image stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Option<Self> {
        (pixels.len() == width * height).then_some(GrayImage {
            width,
            height,
            pixels,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// Distortion ranges; every field is an inclusive `(low, high)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderParams {
    pub atlas: Atlas,
    /// Fraction of the canvas spanned by the glyph row, drawn per axis.
    pub scale: (f32, f32),
    /// Horizontal shear (tangent of the slant angle).
    pub shear: (f32, f32),
    pub offset_x: (f32, f32),
    pub offset_y: (f32, f32),
    pub noise_sigma: (f32, f32),
    /// Ink/background separation as a fraction of the available range.
    pub contrast: (f32, f32),
    /// Shift added to every pixel before noise.
    pub brightness: (f32, f32),
    pub background: (f32, f32),
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            atlas: Atlas::Regular,
            scale: (0.85, 0.97),
            shear: (-0.15, 0.15),
            offset_x: (-2.0, 2.0),
            offset_y: (-1.5, 1.5),
            noise_sigma: (0.0, 8.0),
            contrast: (0.7, 1.0),
            brightness: (-10.0, 10.0),
            background: (0.0, 255.0),
        }
    }
}

impl RenderParams {
    /// No jitter and no noise: black glyphs stretched over a white canvas.
    pub fn clean() -> Self {
        RenderParams {
            atlas: Atlas::Regular,
            scale: (1.0, 1.0),
            shear: (0.0, 0.0),
            offset_x: (0.0, 0.0),
            offset_y: (0.0, 0.0),
            noise_sigma: (0.0, 0.0),
            contrast: (1.0, 1.0),
            brightness: (0.0, 0.0),
            background: (255.0, 255.0),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let ranges = [
            ("scale", self.scale),
            ("shear", self.shear),
            ("offset_x", self.offset_x),
            ("offset_y", self.offset_y),
            ("noise_sigma", self.noise_sigma),
            ("contrast", self.contrast),
            ("brightness", self.brightness),
            ("background", self.background),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(SynthError::BadRange(name));
            }
        }
        let positive = [
            ("scale", self.scale.0 > 0.0),
            ("noise_sigma", self.noise_sigma.0 >= 0.0),
            ("contrast", self.contrast.0 >= 0.0 && self.contrast.1 <= 1.0),
            (
                "background",
                self.background.0 >= 0.0 && self.background.1 <= 255.0,
            ),
        ];
        for (name, ok) in positive {
            if !ok {
                return Err(SynthError::BadRange(name));
            }
        }
        Ok(())
    }
}

fn draw(rng: &mut Rng, (lo, hi): (f32, f32)) -> f32 {
    let u: f32 = rng.random();
    lo + (hi - lo) * u
}

/// Renders `word` onto a 32x100 canvas.
pub fn render_word(word: &Word, params: &RenderParams, seed: u64) -> GrayImage {
    let mut rng = rng_from_seed(seed);
    let atlas = params.atlas;
    let advance = atlas.advance();
    let src_w = (word.len() * advance - 1) as f32;
    let src_h = GLYPH_H as f32;

    // Draw order is part of the determinism contract.
    let box_w = draw(&mut rng, params.scale) * IMAGE_W as f32;
    let box_h = draw(&mut rng, params.scale) * IMAGE_H as f32;
    let shear = draw(&mut rng, params.shear);
    let left = (IMAGE_W as f32 - box_w) / 2.0 + draw(&mut rng, params.offset_x);
    let top = (IMAGE_H as f32 - box_h) / 2.0 + draw(&mut rng, params.offset_y);
    let sigma = draw(&mut rng, params.noise_sigma);
    let contrast = draw(&mut rng, params.contrast);
    let brightness = draw(&mut rng, params.brightness);
    let background = draw(&mut rng, params.background);

    let ink = if background >= 128.0 {
        background - contrast * background
    } else {
        background + contrast * (255.0 - background)
    };
    let (bg_level, ink_level) = (background + brightness, ink + brightness);
    let center_y = top + box_h / 2.0;
    let classes = word.classes();

    let noise = Normal::new(0.0f32, sigma.max(0.0))
        .ok()
        .filter(|_| sigma > 0.0);
    let mut pixels = Vec::with_capacity(IMAGE_W * IMAGE_H);
    for v in 0..IMAGE_H {
        let py = v as f32 + 0.5;
        let sy = (py - top) / box_h * src_h;
        let slant = shear * (py - center_y);
        for u in 0..IMAGE_W {
            let px = u as f32 + 0.5 - slant;
            let sx = (px - left) / box_w * src_w;
            let inked = if sx >= 0.0 && sy >= 0.0 && sx < src_w && sy < src_h {
                let (col, row) = (sx as usize, sy as usize);
                atlas.ink(classes[col / advance], col % advance, row)
            } else {
                false
            };
            let mut level = if inked { ink_level } else { bg_level };
            if let Some(n) = &noise {
                level += n.sample(&mut rng);
            }
            pixels.push(libm::roundf(level.clamp(0.0, 255.0)) as u8);
        }
    }
    GrayImage {
        width: IMAGE_W,
        height: IMAGE_H,
        pixels,
    }
}

/// A random alphanumeric string: uniform length in `1..=max_len`, then
/// uniform symbols.
pub fn random_string(seed: u64, max_len: usize) -> Result<Word, SynthError> {
    if max_len == 0 {
        return Err(SynthError::BadMaxLen);
    }
    let mut rng = rng_from_seed(seed);
    Ok(random_string_with(&mut rng, max_len))
}

fn random_string_with(rng: &mut Rng, max_len: usize) -> Word {
    let len = rng.random_range(1..=max_len);
    let classes = (0..len)
        .map(|_| rng.random_range(0..NUM_SYMBOLS as u8))
        .collect();
    Word::from_classes(classes).expect("symbols are in range")
}

/// Shuffles the distinct words of `words` and splits them at
/// `round(n * train_fraction)`.
pub fn split_vocab(
    words: &[Word],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<Word>, Vec<Word>), SynthError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SynthError::BadFraction);
    }
    let mut seen = alloc::collections::BTreeSet::new();
    let mut unique: Vec<Word> = words
        .iter()
        .filter(|w| seen.insert((*w).clone()))
        .cloned()
        .collect();
    let mut rng = rng_from_seed(seed);
    unique.shuffle(&mut rng);
    let cut = libm::round(unique.len() as f64 * train_fraction) as usize;
    let test = unique.split_off(cut.min(unique.len()));
    Ok((unique, test))
}

/// Where dataset labels come from.
#[derive(Debug, Clone, Copy)]
pub enum WordSource<'a> {
    /// Uniform sampling with replacement from a word list.
    Words(&'a [Word]),
    /// Fresh random strings of length `1..=max_len`.
    Random { max_len: usize },
}

/// One planned dataset sample: its label and its private render seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedSample {
    pub word: Word,
    pub seed: u64,
}

const STREAM_WORDS: u64 = 0x574f_5244;
const STREAM_RENDER: u64 = 0x5245_4e44;

/// Picks `count` labels and per-sample render seeds, all derived from `seed`.
pub fn plan_samples(
    source: WordSource<'_>,
    count: usize,
    seed: u64,
) -> Result<Vec<PlannedSample>, SynthError> {
    let mut rng = rng_from_seed(derive_seed(seed, STREAM_WORDS, 0));
    let mut plan = Vec::with_capacity(count);
    for i in 0..count {
        let word = match source {
            WordSource::Words(words) => {
                if words.is_empty() {
                    return Err(SynthError::EmptySource);
                }
                words[rng.random_range(0..words.len())].clone()
            }
            WordSource::Random { max_len } => {
                if max_len == 0 {
                    return Err(SynthError::BadMaxLen);
                }
                random_string_with(&mut rng, max_len)
            }
        };
        plan.push(PlannedSample {
            word,
            seed: derive_seed(seed, STREAM_RENDER, i as u64),
        });
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::encode_word;
    use alloc::collections::BTreeSet;

    fn w(s: &str) -> Word {
        encode_word(s, 23).unwrap()
    }

    #[test]
    fn render_is_deterministic() {
        let p = RenderParams::default();
        let a = render_word(&w("camel"), &p, 42);
        let b = render_word(&w("camel"), &p, 42);
        assert_eq!(a, b);
        assert_eq!((a.width, a.height, a.pixels.len()), (100, 32, 3200));
    }

    #[test]
    fn clean_render_has_two_levels() {
        let img = render_word(&w("a"), &RenderParams::clean(), 0);
        let levels: BTreeSet<u8> = img.pixels.iter().copied().collect();
        assert_eq!(levels.into_iter().collect::<Vec<_>>(), vec![0, 255]);
        // the glyph is stretched over the whole canvas: 'a' has ink in its
        // bottom-right column, which maps onto the rightmost canvas column
        assert_eq!(img.get(99, 31), 0);
        assert_eq!(img.get(0, 0), 255);
    }

    #[test]
    fn different_seeds_differ() {
        let p = RenderParams::default();
        let word = w("spires");
        for s in 0..100u64 {
            let a = render_word(&word, &p, 2 * s);
            let b = render_word(&word, &p, 2 * s + 1);
            let diff = a
                .pixels
                .iter()
                .zip(&b.pixels)
                .filter(|(x, y)| x != y)
                .count();
            assert!(diff * 100 >= a.pixels.len(), "seed pair {s}: {diff}");
        }
    }

    #[test]
    fn every_length_renders() {
        let p = RenderParams::default();
        for len in 1..=23 {
            let word = Word::from_classes((0..len).map(|i| (i % 36) as u8).collect()).unwrap();
            let img = render_word(&word, &p, len as u64);
            assert_eq!(img.pixels.len(), IMAGE_W * IMAGE_H);
        }
    }

    #[test]
    fn params_validation() {
        assert!(RenderParams::default().validate().is_ok());
        assert!(RenderParams::clean().validate().is_ok());
        let p = RenderParams {
            shear: (0.3, -0.3),
            ..RenderParams::default()
        };
        assert_eq!(p.validate(), Err(SynthError::BadRange("shear")));
        let p = RenderParams {
            scale: (0.0, 1.0),
            ..RenderParams::default()
        };
        assert_eq!(p.validate(), Err(SynthError::BadRange("scale")));
    }

    #[test]
    fn random_string_is_reproducible() {
        assert_eq!(random_string(9, 10).unwrap(), random_string(9, 10).unwrap());
        assert_eq!(random_string(9, 0), Err(SynthError::BadMaxLen));
    }

    #[test]
    fn random_string_distribution() {
        let mut lengths = [0usize; 11];
        let mut symbols = [0usize; 36];
        for s in 0..10_000 {
            let word = random_string(s, 10).unwrap();
            lengths[word.len()] += 1;
            for &c in word.classes() {
                symbols[c as usize] += 1;
            }
        }
        for &n in &lengths[1..] {
            assert!((800..=1200).contains(&n), "length count {n}");
        }
        let total: usize = symbols.iter().sum();
        let expected = total as f64 / 36.0;
        for &n in &symbols {
            assert!(
                (n as f64 - expected).abs() <= 0.15 * expected,
                "{n} vs {expected}"
            );
        }
    }

    #[test]
    fn split_examples() {
        let words: Vec<Word> = (0..100u64).map(|s| random_string(s, 12).unwrap()).collect();
        let unique: BTreeSet<_> = words.iter().cloned().collect();
        let (train, test) = split_vocab(&words, 0.5, 3).unwrap();
        assert_eq!(train.len() + test.len(), unique.len());
        let a: BTreeSet<_> = train.iter().cloned().collect();
        let b: BTreeSet<_> = test.iter().cloned().collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(split_vocab(&words, 0.5, 3).unwrap(), (train, test));
        assert_eq!(split_vocab(&words, 1.0, 3), Err(SynthError::BadFraction));
    }

    #[test]
    fn split_2000_words() {
        let corpus = pseudo_corpus(5, 2000);
        let (train, test) = split_vocab(corpus.words(), 0.8, 1).unwrap();
        assert_eq!((train.len(), test.len()), (1600, 400));
        let mut all: Vec<Word> = train.iter().chain(&test).cloned().collect();
        all.sort();
        let mut expected = corpus.words().to_vec();
        expected.sort();
        assert_eq!(all, expected);
    }

    #[test]
    fn plan_is_deterministic_and_uses_source() {
        let words = vec![w("ab"), w("cd")];
        let a = plan_samples(WordSource::Words(&words), 50, 7).unwrap();
        assert_eq!(a, plan_samples(WordSource::Words(&words), 50, 7).unwrap());
        assert!(a.iter().all(|s| words.contains(&s.word)));
        let seeds: BTreeSet<u64> = a.iter().map(|s| s.seed).collect();
        assert_eq!(seeds.len(), 50);
        // a prefix of a longer plan is the shorter plan
        let b = plan_samples(WordSource::Words(&words), 20, 7).unwrap();
        assert_eq!(&a[..20], &b[..]);
        let r = plan_samples(WordSource::Random { max_len: 10 }, 20, 7).unwrap();
        assert!(r.iter().all(|s| (1..=10).contains(&s.word.len())));
        assert_eq!(
            plan_samples(WordSource::Words(&[]), 1, 0),
            Err(SynthError::EmptySource)
        );
    }
}
