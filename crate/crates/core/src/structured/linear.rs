use alloc::vec;
use alloc::vec::Vec;

use super::{structured_loss, DecodeError, ScoreTables, StructHyper};
use crate::lexicon::{NGramVocab, Word, NUM_CLASSES};

/// How many free scale factors the linear CRF has.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sharing {
    /// One `alpha` per position and class, one `beta` per vocabulary entry.
    None,
    /// One `alpha` per position shared by its classes, one `beta` per entry.
    PerPosition,
    /// One `alpha` per position, one `beta` per N-gram order.
    PerOrder,
    /// A single `alpha` and a single `beta`.
    All,
}

impl Sharing {
    pub const ALL: [Sharing; 4] = [
        Sharing::None,
        Sharing::PerPosition,
        Sharing::PerOrder,
        Sharing::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Sharing::None => "none",
            Sharing::PerPosition => "per-position",
            Sharing::PerOrder => "per-order",
            Sharing::All => "all",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s)
    }
}

/// Scale factors applied to fixed unary and edge scores:
/// `f'[i][c] = alpha * f[i][c]` and `g'[s] = beta * g[s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearWeights {
    sharing: Sharing,
    max_len: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Vocabulary entry to `beta` slot.
    beta_slot: Vec<u32>,
}

impl LinearWeights {
    /// All weights one, which leaves scores unchanged.
    pub fn ones(sharing: Sharing, max_len: usize, vocab: &NGramVocab) -> Self {
        let (na, nb) = Self::sizes(sharing, max_len, vocab);
        Self::from_parts(sharing, max_len, vocab, vec![1.0; na], vec![1.0; nb])
            .expect("sizes agree")
    }

    pub fn from_parts(
        sharing: Sharing,
        max_len: usize,
        vocab: &NGramVocab,
        alpha: Vec<f64>,
        beta: Vec<f64>,
    ) -> Result<Self, DecodeError> {
        let (na, nb) = Self::sizes(sharing, max_len, vocab);
        if alpha.len() != na || beta.len() != nb {
            return Err(DecodeError::ShapeMismatch(
                "weight count does not match the sharing mode",
            ));
        }
        let beta_slot = vocab
            .entries()
            .iter()
            .enumerate()
            .map(|(s, g)| match sharing {
                Sharing::None | Sharing::PerPosition => s as u32,
                Sharing::PerOrder => (g.len() - 1) as u32,
                Sharing::All => 0,
            })
            .collect();
        Ok(LinearWeights {
            sharing,
            max_len,
            alpha,
            beta,
            beta_slot,
        })
    }

    fn sizes(sharing: Sharing, max_len: usize, vocab: &NGramVocab) -> (usize, usize) {
        match sharing {
            Sharing::None => (max_len * NUM_CLASSES, vocab.len()),
            Sharing::PerPosition => (max_len, vocab.len()),
            Sharing::PerOrder => (max_len, vocab.order()),
            Sharing::All => (1, 1),
        }
    }

    pub fn sharing(&self) -> Sharing {
        self.sharing
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    fn alpha_slot(&self, flat: usize) -> usize {
        match self.sharing {
            Sharing::None => flat,
            Sharing::PerPosition | Sharing::PerOrder => flat / NUM_CLASSES,
            Sharing::All => 0,
        }
    }

    /// Scaled copy of `tables`.
    pub fn apply(&self, tables: &ScoreTables) -> Result<ScoreTables, DecodeError> {
        if tables.max_len() != self.max_len || tables.edge_table().len() != self.beta_slot.len() {
            return Err(DecodeError::ShapeMismatch(
                "tables do not match the weights",
            ));
        }
        let mut out = tables.clone();
        for (k, v) in out.unary_table_mut().iter_mut().enumerate() {
            *v *= self.alpha[self.alpha_slot(k)];
        }
        for (s, v) in out.edge_table_mut().iter_mut().enumerate() {
            *v *= self.beta[self.beta_slot[s] as usize];
        }
        Ok(out)
    }

    fn regularizer(&self, hyper: &StructHyper) -> f64 {
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        0.5 * (hyper.lambda_alpha * sq(&self.alpha) + hyper.lambda_beta * sq(&self.beta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFitConfig {
    pub epochs: usize,
    /// Initial step size; epoch `t` uses `step / sqrt(1 + t)`.
    pub step: f64,
}

impl Default for LinearFitConfig {
    fn default() -> Self {
        LinearFitConfig {
            epochs: 50,
            step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    /// The iterate with the lowest objective seen.
    pub weights: LinearWeights,
    pub objective: f64,
    /// Mean hinge loss of `weights`, without the penalty.
    pub hinge: f64,
    /// Objective at each iterate, starting with the all-ones weights. Ends
    /// early once the iterate stops moving.
    pub history: Vec<f64>,
    pub skipped: usize,
}

/// Mean hinge loss over `examples` plus the ridge penalty, and its
/// subgradient with respect to `alpha` and `beta`.
fn objective(
    weights: &LinearWeights,
    examples: &[(ScoreTables, Word)],
    vocab: &NGramVocab,
    hyper: &StructHyper,
) -> Result<Objective, DecodeError> {
    let mut ga = vec![0.0; weights.alpha.len()];
    let mut gb = vec![0.0; weights.beta.len()];
    let mut total = 0.0;
    let mut skipped = 0;
    for (tables, gt) in examples {
        let scaled = weights.apply(tables)?;
        let l = structured_loss(&scaled, vocab, gt, hyper)?;
        skipped += l.skipped as usize;
        if l.loss <= 0.0 {
            continue;
        }
        total += l.loss;
        for (k, (&d, &f)) in l.d_unary.iter().zip(tables.unary_table()).enumerate() {
            if d != 0.0 {
                ga[weights.alpha_slot(k)] += d * f;
            }
        }
        for (s, (&d, &g)) in l.d_edge.iter().zip(tables.edge_table()).enumerate() {
            if d != 0.0 {
                gb[weights.beta_slot[s] as usize] += d * g;
            }
        }
    }
    let m = examples.len() as f64;
    ga.iter_mut().chain(gb.iter_mut()).for_each(|v| *v /= m);
    Ok(Objective {
        hinge: total / m,
        penalty: weights.regularizer(hyper),
        ga,
        gb,
        skipped,
    })
}

struct Objective {
    hinge: f64,
    penalty: f64,
    ga: Vec<f64>,
    gb: Vec<f64>,
    skipped: usize,
}

/// Fits the scale factors of a linear CRF on fixed score tables by
/// full-batch proximal subgradient descent, starting from all ones.
///
/// Each step moves against the hinge subgradient and then applies the
/// closed-form proximal map of the ridge penalty, `w / (1 + eta * lambda)`.
pub fn fit_linear_weights(
    examples: &[(ScoreTables, Word)],
    vocab: &NGramVocab,
    sharing: Sharing,
    hyper: &StructHyper,
    config: &LinearFitConfig,
) -> Result<LinearFit, DecodeError> {
    let first = examples.first().ok_or(DecodeError::NoExamples)?;
    let mut weights = LinearWeights::ones(sharing, first.0.max_len(), vocab);
    let mut best = weights.clone();
    let mut best_obj = f64::INFINITY;
    let mut best_hinge = 0.0;
    let mut best_skipped = 0;
    let mut history = Vec::with_capacity(config.epochs + 1);
    for t in 0..=config.epochs {
        let Objective {
            hinge,
            penalty,
            ga,
            gb,
            skipped,
        } = objective(&weights, examples, vocab, hyper)?;
        let obj = hinge + penalty;
        history.push(obj);
        if obj < best_obj {
            best_obj = obj;
            best_hinge = hinge;
            best = weights.clone();
            best_skipped = skipped;
        }
        // a zero subgradient without a penalty leaves the weights fixed
        let stationary = hyper.lambda_alpha == 0.0
            && hyper.lambda_beta == 0.0
            && ga.iter().chain(&gb).all(|&g| g == 0.0);
        if t == config.epochs || stationary {
            break;
        }
        let eta = config.step / libm::sqrt(1.0 + t as f64);
        for (w, g) in weights.alpha.iter_mut().zip(&ga) {
            *w = (*w - eta * g) / (1.0 + eta * hyper.lambda_alpha);
        }
        for (w, g) in weights.beta.iter_mut().zip(&gb) {
            *w = (*w - eta * g) / (1.0 + eta * hyper.lambda_beta);
        }
    }
    Ok(LinearFit {
        weights: best,
        objective: best_obj,
        hinge: best_hinge,
        history,
        skipped: best_skipped,
    })
}
