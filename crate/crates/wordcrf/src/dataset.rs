//! Rendered datasets: `manifest.tsv`, a `params.txt` sidecar and one PGM per
//! sample under `img/`.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use wordcrf_core::lexicon::{encode_word, Word, DEFAULT_MAX_LEN};
use wordcrf_core::rng::derive_seed;
use wordcrf_core::synth::{plan_samples, render_word, Atlas, GrayImage, RenderParams, WordSource};

use crate::pgm::{encode_pgm, read_pgm};
use crate::Error;

pub const MANIFEST: &str = "manifest.tsv";
pub const PARAMS_FILE: &str = "params.txt";
const MAGIC: &str = "GNETDATA";
const VERSION: u32 = 1;
const STREAM_PART: u64 = 0x5041_5254;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VocabTag {
    InVocab,
    OutOfVocab,
    Random,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(format!("unknown split `{s}`")),
        }
    }
}

impl fmt::Display for VocabTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VocabTag::InVocab => "in-vocab",
            VocabTag::OutOfVocab => "out-of-vocab",
            VocabTag::Random => "random",
        })
    }
}

impl FromStr for VocabTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "in-vocab" => Ok(VocabTag::InVocab),
            "out-of-vocab" => Ok(VocabTag::OutOfVocab),
            "random" => Ok(VocabTag::Random),
            _ => Err(format!("unknown vocab tag `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    /// Relative to the dataset root.
    pub path: String,
    pub label: Word,
    pub split: Split,
    pub vocab_tag: VocabTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub root: PathBuf,
    pub seed: u64,
    pub params: RenderParams,
    pub records: Vec<Record>,
}

/// One block of samples drawn from a single word source.
#[derive(Debug, Clone, Copy)]
pub struct DatasetPart<'a> {
    pub source: WordSource<'a>,
    pub count: usize,
    pub split: Split,
    pub vocab_tag: VocabTag,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub image: GrayImage,
    pub label: Word,
    pub split: Split,
    pub vocab_tag: VocabTag,
}

/// Renders every part in memory. Part `k` draws its words and render seeds
/// from its own stream of `seed`.
pub fn render_parts(
    parts: &[DatasetPart<'_>],
    params: &RenderParams,
    seed: u64,
) -> Result<Vec<Sample>, Error> {
    params.validate()?;
    let mut planned = Vec::new();
    for (k, part) in parts.iter().enumerate() {
        let plan = plan_samples(
            part.source,
            part.count,
            derive_seed(seed, STREAM_PART, k as u64),
        )?;
        planned.extend(plan.into_iter().map(|p| (p, part.split, part.vocab_tag)));
    }
    Ok(planned
        .into_par_iter()
        .map(|(p, split, vocab_tag)| Sample {
            image: render_word(&p.word, params, p.seed),
            label: p.word,
            split,
            vocab_tag,
        })
        .collect())
}

pub fn format_params(params: &RenderParams) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "atlas = {}", params.atlas.id());
    let ranges = [
        ("scale", params.scale),
        ("shear", params.shear),
        ("offset_x", params.offset_x),
        ("offset_y", params.offset_y),
        ("noise_sigma", params.noise_sigma),
        ("contrast", params.contrast),
        ("brightness", params.brightness),
        ("background", params.background),
    ];
    for (k, (lo, hi)) in ranges {
        let _ = writeln!(out, "{k} = {lo} {hi}");
    }
    out
}

pub fn parse_params(text: &str, path: &Path) -> Result<RenderParams, Error> {
    let mut p = RenderParams::default();
    for (n, line) in text.lines().enumerate() {
        let err = |msg: String| Error::Parse {
            path: path.into(),
            line: n + 1,
            msg,
        };
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| err("expected `key = value`".into()))?;
        if key == "atlas" {
            p.atlas = value
                .parse()
                .ok()
                .and_then(Atlas::from_id)
                .ok_or_else(|| err(format!("unknown atlas `{value}`")))?;
            continue;
        }
        let mut it = value.split_whitespace().map(str::parse::<f32>);
        let range = match (it.next(), it.next(), it.next()) {
            (Some(Ok(lo)), Some(Ok(hi)), None) => (lo, hi),
            _ => return Err(err(format!("`{key}` needs two numbers"))),
        };
        let slot = match key {
            "scale" => &mut p.scale,
            "shear" => &mut p.shear,
            "offset_x" => &mut p.offset_x,
            "offset_y" => &mut p.offset_y,
            "noise_sigma" => &mut p.noise_sigma,
            "contrast" => &mut p.contrast,
            "brightness" => &mut p.brightness,
            "background" => &mut p.background,
            _ => return Err(err(format!("unknown key `{key}`"))),
        };
        *slot = range;
    }
    p.validate()?;
    Ok(p)
}

pub fn format_manifest(m: &Manifest) -> String {
    let mut out = format!("{MAGIC} {VERSION} {} {}\n", m.records.len(), m.seed);
    for r in &m.records {
        let _ = writeln!(out, "{}\t{}\t{}\t{}", r.path, r.label, r.split, r.vocab_tag);
    }
    out
}

/// Renders and writes a dataset under `out`, which is created if needed.
pub fn gen_dataset(
    parts: &[DatasetPart<'_>],
    params: &RenderParams,
    out: &Path,
    seed: u64,
) -> Result<Manifest, Error> {
    let samples = render_parts(parts, params, seed)?;
    let img_dir = out.join("img");
    std::fs::create_dir_all(&img_dir).map_err(Error::io(&img_dir))?;
    let records: Vec<Record> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let rel = format!("img/{i:06}.pgm");
            let path = out.join(&rel);
            std::fs::write(&path, encode_pgm(&s.image)).map_err(Error::io(&path))?;
            Ok(Record {
                path: rel,
                label: s.label.clone(),
                split: s.split,
                vocab_tag: s.vocab_tag,
            })
        })
        .collect::<Result<_, Error>>()?;
    let manifest = Manifest {
        root: out.to_path_buf(),
        seed,
        params: params.clone(),
        records,
    };
    let p = out.join(PARAMS_FILE);
    std::fs::write(&p, format_params(params)).map_err(Error::io(&p))?;
    let m = out.join(MANIFEST);
    std::fs::write(&m, format_manifest(&manifest)).map_err(Error::io(&m))?;
    Ok(manifest)
}

/// Reads `manifest.tsv` (and `params.txt` when present) from a dataset
/// directory or directly from a manifest path.
pub fn read_manifest(path: &Path) -> Result<Manifest, Error> {
    let (root, file) = if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST))
    } else {
        (
            path.parent().unwrap_or(Path::new(".")).to_path_buf(),
            path.to_path_buf(),
        )
    };
    let text = std::fs::read_to_string(&file).map_err(Error::io(&file))?;
    let err = |line: usize, msg: String| Error::Parse {
        path: file.clone(),
        line,
        msg,
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split_whitespace().collect();
    let (count, seed) = match header[..] {
        [MAGIC, v, c, s] if v == VERSION.to_string() => (
            c.parse::<usize>().map_err(|_| err(1, "bad count".into()))?,
            s.parse::<u64>().map_err(|_| err(1, "bad seed".into()))?,
        ),
        _ => {
            return Err(err(
                1,
                format!("header must be `{MAGIC} {VERSION} <count> <seed>`"),
            ))
        }
    };
    let mut records = Vec::with_capacity(count);
    let mut seen = std::collections::HashSet::new();
    for (n, line) in lines.enumerate() {
        let lineno = n + 2;
        let cols: Vec<&str> = line.split('\t').collect();
        let [p, label, split, tag] = cols[..] else {
            return Err(err(lineno, "expected 4 tab-separated columns".into()));
        };
        if !seen.insert(p) {
            return Err(err(lineno, format!("duplicate path `{p}`")));
        }
        records.push(Record {
            path: p.to_string(),
            label: encode_word(label, DEFAULT_MAX_LEN).map_err(|e| err(lineno, e.to_string()))?,
            split: split.parse().map_err(|e| err(lineno, e))?,
            vocab_tag: tag.parse().map_err(|e| err(lineno, e))?,
        });
    }
    if records.len() != count {
        return Err(err(
            1,
            format!("header promises {count} records, found {}", records.len()),
        ));
    }
    let params_path = root.join(PARAMS_FILE);
    let params = if params_path.exists() {
        let t = std::fs::read_to_string(&params_path).map_err(Error::io(&params_path))?;
        parse_params(&t, &params_path)?
    } else {
        RenderParams::default()
    };
    Ok(Manifest {
        root,
        seed,
        params,
        records,
    })
}

/// Loads every image of `records`, checking each against the canvas size.
pub fn load_images(manifest: &Manifest, records: &[Record]) -> Result<Vec<GrayImage>, Error> {
    records
        .par_iter()
        .map(|r| {
            let path = manifest.root.join(&r.path);
            let img = read_pgm(&path)?;
            if (img.width, img.height)
                != (wordcrf_core::synth::IMAGE_W, wordcrf_core::synth::IMAGE_H)
            {
                return Err(Error::ShapeMismatch(format!(
                    "{} is {}x{}",
                    path.display(),
                    img.width,
                    img.height
                )));
            }
            Ok(img)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_text_round_trip() {
        let p = RenderParams {
            atlas: Atlas::Bold,
            shear: (-0.125, 0.3),
            ..RenderParams::default()
        };
        let back = parse_params(&format_params(&p), Path::new("p")).unwrap();
        assert_eq!(back, p);
        assert!(parse_params("blur = 1 2\n", Path::new("p")).is_err());
        assert!(parse_params("scale = 2 1\n", Path::new("p")).is_err());
    }

    #[test]
    fn tags_parse_back() {
        for t in [VocabTag::InVocab, VocabTag::OutOfVocab, VocabTag::Random] {
            assert_eq!(t.to_string().parse::<VocabTag>(), Ok(t));
        }
        for s in [Split::Train, Split::Test] {
            assert_eq!(s.to_string().parse::<Split>(), Ok(s));
        }
    }
}
