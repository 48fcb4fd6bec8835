//! Files, datasets, training and evaluation around `wordcrf-core`.

use std::path::PathBuf;

use thiserror::Error;

pub mod bench;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod files;
pub mod model;
pub mod pgm;
pub mod selftest;
pub mod train;

pub use wordcrf_core as core;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("file ends early")]
    TruncatedFile,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Lexicon(#[from] wordcrf_core::LexiconError),
    #[error(transparent)]
    Net(#[from] wordcrf_core::net::NetError),
    #[error(transparent)]
    Decode(#[from] wordcrf_core::structured::DecodeError),
    #[error(transparent)]
    Joint(#[from] wordcrf_core::structured::JointError),
    #[error(transparent)]
    Synth(#[from] wordcrf_core::synth::SynthError),
    #[error(transparent)]
    Metrics(#[from] wordcrf_core::metrics::MetricsError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}
