//! Text word lists, vocabulary files and binary score tables.

use std::fmt::Write as _;
use std::path::Path;

use wordcrf_core::lexicon::{encode_word, Corpus, Gram, NGramVocab, Word, DEFAULT_MAX_LEN};
use wordcrf_core::structured::{LinearWeights, ScoreTables, Sharing};

use crate::Error;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.into(),
        line,
        msg: msg.into(),
    }
}

fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path).map_err(Error::io(path))
}

/// One word per line; blank lines are skipped and every other line must
/// encode to a valid word (case folded, non-alphanumerics dropped).
pub fn read_words(path: &Path, max_len: usize) -> Result<Vec<Word>, Error> {
    let text = read_text(path)?;
    let mut words = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let w = encode_word(line, max_len).map_err(|e| parse_err(path, n + 1, e.to_string()))?;
        words.push(w);
    }
    Ok(words)
}

pub fn write_words(path: &Path, words: &[Word]) -> Result<(), Error> {
    let mut out = String::new();
    for w in words {
        out.push_str(&w.to_text());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(Error::io(path))
}

pub fn read_corpus(path: &Path) -> Result<Corpus, Error> {
    let words = read_words(path, DEFAULT_MAX_LEN)?;
    Ok(Corpus::new(words, path.display().to_string())?)
}

const VOCAB_MAGIC: &str = "NGRAMVOCAB";
const VOCAB_VERSION: u32 = 1;

pub fn format_vocab(vocab: &NGramVocab) -> String {
    let mut out = format!(
        "{VOCAB_MAGIC} {VOCAB_VERSION} {} {}\n",
        vocab.order(),
        vocab.len()
    );
    for ((g, c), w) in vocab
        .entries()
        .iter()
        .zip(vocab.counts())
        .zip(vocab.weights())
    {
        // shortest round-trip float formatting keeps weights bit-exact
        writeln!(out, "{g}\t{c}\t{w}").expect("write to string");
    }
    out
}

pub fn parse_vocab(text: &str, path: &Path) -> Result<NGramVocab, Error> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [magic, version, order, size] = fields[..] else {
        return Err(parse_err(
            path,
            1,
            "header must be `NGRAMVOCAB 1 <order> <size>`",
        ));
    };
    if magic != VOCAB_MAGIC {
        return Err(parse_err(path, 1, "not a vocabulary file"));
    }
    let num = |s: &str, what: &str| -> Result<usize, Error> {
        s.parse()
            .map_err(|_| parse_err(path, 1, format!("bad {what}")))
    };
    if num(version, "version")? != VOCAB_VERSION as usize {
        return Err(parse_err(path, 1, format!("unsupported version {version}")));
    }
    let order = num(order, "order")?;
    let size = num(size, "size")?;
    let mut entries = Vec::with_capacity(size);
    let mut counts = Vec::with_capacity(size);
    let mut weights = Vec::with_capacity(size);
    for (n, line) in lines.enumerate() {
        let lineno = n + 2;
        let mut parts = line.split('\t');
        let (Some(g), Some(c), Some(w), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(parse_err(
                path,
                lineno,
                "expected `ngram<TAB>count<TAB>weight`",
            ));
        };
        entries.push(
            Gram::parse(g).ok_or_else(|| parse_err(path, lineno, format!("bad N-gram `{g}`")))?,
        );
        counts.push(
            c.parse()
                .map_err(|_| parse_err(path, lineno, "bad count"))?,
        );
        weights.push(
            w.parse()
                .map_err(|_| parse_err(path, lineno, "bad weight"))?,
        );
    }
    if entries.len() != size {
        return Err(parse_err(
            path,
            0,
            format!("header promises {size} entries, found {}", entries.len()),
        ));
    }
    NGramVocab::from_parts(order, entries, counts, weights)
        .map_err(|e| parse_err(path, 0, e.to_string()))
}

pub fn write_vocab(path: &Path, vocab: &NGramVocab) -> Result<(), Error> {
    std::fs::write(path, format_vocab(vocab)).map_err(Error::io(path))
}

pub fn read_vocab(path: &Path) -> Result<NGramVocab, Error> {
    parse_vocab(&read_text(path)?, path)
}

const SCORES_MAGIC: &[u8; 4] = b"GSCR";

/// `GSCR`, `max_len` and vocabulary size as little-endian u32, then the unary
/// table row-major and the edge table as little-endian f32.
pub fn encode_scores(tables: &ScoreTables) -> Vec<u8> {
    let mut out = SCORES_MAGIC.to_vec();
    out.extend((tables.max_len() as u32).to_le_bytes());
    out.extend((tables.edge_table().len() as u32).to_le_bytes());
    for &v in tables.unary_table().iter().chain(tables.edge_table()) {
        out.extend((v as f32).to_le_bytes());
    }
    out
}

pub fn decode_scores(bytes: &[u8]) -> Result<ScoreTables, Error> {
    if bytes.len() < 12 {
        return Err(if bytes.starts_with(SCORES_MAGIC) || bytes.len() < 4 {
            Error::TruncatedFile
        } else {
            Error::BadMagic
        });
    }
    if &bytes[..4] != SCORES_MAGIC {
        return Err(Error::BadMagic);
    }
    let word =
        |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (max_len, vocab) = (word(4), word(8));
    let n = max_len * wordcrf_core::lexicon::NUM_CLASSES + vocab;
    let body = &bytes[12..];
    if body.len() < 4 * n {
        return Err(Error::TruncatedFile);
    }
    if body.len() > 4 * n {
        return Err(Error::ShapeMismatch(
            "trailing bytes after score tables".into(),
        ));
    }
    let vals: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    let (f, g) = vals.split_at(n - vocab);
    Ok(ScoreTables::new(max_len, f.to_vec(), g.to_vec())?)
}

pub fn write_scores(path: &Path, tables: &ScoreTables) -> Result<(), Error> {
    std::fs::write(path, encode_scores(tables)).map_err(Error::io(path))
}

pub fn read_scores(path: &Path) -> Result<ScoreTables, Error> {
    decode_scores(&std::fs::read(path).map_err(Error::io(path))?)
}

const LINEAR_MAGIC: &str = "LINEARW";
const LINEAR_VERSION: u32 = 1;

/// Header `LINEARW 1 <sharing> <max_len>`, then an `alpha` line and a `beta`
/// line of space-separated values.
pub fn format_linear(weights: &LinearWeights) -> String {
    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
    format!(
        "{LINEAR_MAGIC} {LINEAR_VERSION} {} {}\nalpha {}\nbeta {}\n",
        weights.sharing().name(),
        weights.max_len(),
        join(weights.alpha()),
        join(weights.beta())
    )
}

pub fn parse_linear(text: &str, path: &Path, vocab: &NGramVocab) -> Result<LinearWeights, Error> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
    let (sharing, max_len) = match header[..] {
        [LINEAR_MAGIC, v, sharing, max_len] if v == LINEAR_VERSION.to_string() => (
            Sharing::parse(sharing)
                .ok_or_else(|| parse_err(path, 1, format!("unknown sharing `{sharing}`")))?,
            max_len
                .parse::<usize>()
                .map_err(|_| parse_err(path, 1, "bad max_len"))?,
        ),
        _ => {
            return Err(parse_err(
                path,
                1,
                format!("header must be `{LINEAR_MAGIC} {LINEAR_VERSION} <sharing> <max_len>`"),
            ))
        }
    };
    let mut row = |n: usize, key: &str| -> Result<Vec<f64>, Error> {
        let line = lines.next().unwrap_or("");
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(parse_err(path, n, format!("expected `{key}` line")));
        }
        it.map(|t| {
            t.parse()
                .map_err(|_| parse_err(path, n, format!("bad number `{t}`")))
        })
        .collect()
    };
    let alpha = row(2, "alpha")?;
    let beta = row(3, "beta")?;
    LinearWeights::from_parts(sharing, max_len, vocab, alpha, beta)
        .map_err(|e| Error::ShapeMismatch(format!("{}: {e}", path.display())))
}

pub fn write_linear(path: &Path, weights: &LinearWeights) -> Result<(), Error> {
    std::fs::write(path, format_linear(weights)).map_err(Error::io(path))
}

pub fn read_linear(path: &Path, vocab: &NGramVocab) -> Result<LinearWeights, Error> {
    parse_linear(&read_text(path)?, path, vocab)
}
