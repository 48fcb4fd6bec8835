//! `key = value` run configuration with `#` comments.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::Error;

/// Every key a configuration file may set.
pub const KEYS: &[(&str, &str)] = &[
    ("corpus", "word list, one word per line"),
    (
        "pseudo_words",
        "size of the generated pseudo-language corpus when no corpus is given",
    ),
    ("corpus_seed", "seed of the generated corpus"),
    ("data", "dataset directory"),
    ("vocab", "N-gram vocabulary file"),
    ("model", "model file to read"),
    ("init", "model file to start training from"),
    ("char_model", "pre-trained CHAR checkpoint"),
    ("ngram_model", "pre-trained NGRAM checkpoint"),
    (
        "linear",
        "linear weight file applied to score tables before decoding",
    ),
    ("out", "output path"),
    ("render_params", "render parameter file (key = low high)"),
    ("seed", "master seed"),
    ("count", "training images to render"),
    ("test_count", "test images to render per test part"),
    (
        "split",
        "train fraction of a disjoint vocabulary split (0 disables)",
    ),
    (
        "random_max_len",
        "render random strings up to this length instead of words",
    ),
    ("order", "maximum N-gram order"),
    (
        "min_count",
        "minimum N-gram occurrences to enter the vocabulary",
    ),
    ("max_len", "maximum word length"),
    (
        "convs",
        "conv stages as filters x kernel, comma separated, e.g. 8x5,16x3",
    ),
    ("fc_width", "width of the dense trunk"),
    ("dropout", "dropout probability on the trunk"),
    ("epochs", "training epochs"),
    ("batch_size", "minibatch size"),
    ("lr", "base learning rate"),
    ("momentum", "SGD momentum"),
    ("weight_decay", "L2 weight decay"),
    (
        "ngram_char_weight",
        "weight of the CHAR loss while training the NGRAM head",
    ),
    (
        "freeze_convs",
        "keep convolution weights fixed (true/false)",
    ),
    ("margin", "structured hinge margin"),
    ("beam_train", "beam width while training"),
    ("beam_test", "beam width while decoding"),
    ("lambda_alpha", "ridge weight on unary scale factors"),
    ("lambda_beta", "ridge weight on edge scale factors"),
    (
        "sharing",
        "linear weight sharing: none, per-position, per-order, all",
    ),
    ("step", "initial step size of the linear weight fit"),
    (
        "lexicon_size",
        "per-sample lexicon size for constrained evaluation (0 disables)",
    ),
    ("workers", "worker threads (0 = all cores)"),
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, Error> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let err = |msg: String| Error::Parse {
                path: path.into(),
                line: n + 1,
                msg,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err("expected `key = value`".into()))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.iter().any(|(known, _)| *known == k) {
                return Err(err(format!("unknown key `{k}`")));
            }
            if values.insert(k.to_string(), v.to_string()).is_some() {
                return Err(err(format!("`{k}` set twice")));
            }
        }
        Ok(RunConfig { values })
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        Self::parse(&text, path)
    }

    /// Sets `key` when `value` is present, overriding the file.
    pub fn set_flag<T: Display>(&mut self, key: &str, value: Option<T>) {
        debug_assert!(
            KEYS.iter().any(|(k, _)| *k == key),
            "undocumented key {key}"
        );
        if let Some(v) = value {
            self.values.insert(key.to_string(), v.to_string());
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, Error> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
            })
            .transpose()
    }

    pub fn get_or<T>(&mut self, key: &str, default: T) -> Result<T, Error>
    where
        T: FromStr + Display,
    {
        match self.get(key)? {
            Some(v) => Ok(v),
            None => {
                self.values.insert(key.to_string(), default.to_string());
                Ok(default)
            }
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T, Error> {
        self.get(key)?
            .ok_or_else(|| Error::Config(format!("`{key}` is required")))
    }

    /// Resolved values, one `key = value` per line.
    pub fn render(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_rejects_unknown_keys() {
        let c = RunConfig::parse("# run\nepochs = 3  # short\n\nlr=0.5\n", Path::new("c")).unwrap();
        assert_eq!(c.get::<usize>("epochs").unwrap(), Some(3));
        assert_eq!(c.get::<f32>("lr").unwrap(), Some(0.5));
        let e = RunConfig::parse("epochs = 3\nfoo = 1\n", Path::new("c")).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        assert!(RunConfig::parse("epochs 3\n", Path::new("c")).is_err());
        assert!(RunConfig::parse("lr = 1\nlr = 2\n", Path::new("c")).is_err());
    }

    #[test]
    fn flags_win() {
        let mut c = RunConfig::parse("epochs = 3\n", Path::new("c")).unwrap();
        c.set_flag("epochs", Some(7));
        c.set_flag::<usize>("lr", None);
        assert_eq!(c.require::<usize>("epochs").unwrap(), 7);
        assert_eq!(c.get_or("lr", 0.25f32).unwrap(), 0.25);
        assert_eq!(c.render(), "epochs = 7\nlr = 0.25\n");
        assert!(c.get::<usize>("lr").is_err());
    }
}
