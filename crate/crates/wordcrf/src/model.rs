//! The `GNET` model file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "GNET" u32 version
//! config: u32 input_h, input_w, conv count, (filters, kernel) per conv,
//!         fc_width, max_len, vocab_size; f32 dropout
//! vocab:  u32 order, u32 entries, per entry u8 length + ASCII text,
//!         u64 count, f64 weight
//! tensors: u32 count, per tensor u32 name length + name, u32 rank,
//!          u32 dims, f32 data row-major
//! ```

use std::path::Path;

use wordcrf_core::lexicon::{Gram, NGramVocab};
use wordcrf_core::net::{ConvSpec, NetConfig, NetParams};

use crate::Error;

const MAGIC: &[u8; 4] = b"GNET";
pub const FORMAT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) {
        self.0.extend((v as u32).to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], Error> {
        let end = self.pos.checked_add(n).ok_or(Error::TruncatedFile)?;
        let s = self.buf.get(self.pos..end).ok_or(Error::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], Error> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
    fn u32(&mut self) -> Result<usize, Error> {
        Ok(u32::from_le_bytes(self.array()?) as usize)
    }
}

pub fn encode_model(params: &NetParams<f32>, vocab: &NGramVocab) -> Result<Vec<u8>, Error> {
    let c = &params.config;
    if vocab.len() != c.vocab_size {
        return Err(Error::ShapeMismatch(format!(
            "vocabulary has {} entries, the network expects {}",
            vocab.len(),
            c.vocab_size
        )));
    }
    let mut w = Writer(MAGIC.to_vec());
    w.u32(FORMAT_VERSION as usize);
    w.u32(c.input_h);
    w.u32(c.input_w);
    w.u32(c.convs.len());
    for s in &c.convs {
        w.u32(s.filters);
        w.u32(s.kernel);
    }
    w.u32(c.fc_width);
    w.u32(c.max_len);
    w.u32(c.vocab_size);
    w.bytes(&c.dropout.to_le_bytes());

    w.u32(vocab.order());
    w.u32(vocab.len());
    for ((g, &count), &weight) in vocab
        .entries()
        .iter()
        .zip(vocab.counts())
        .zip(vocab.weights())
    {
        let text = g.to_text();
        w.bytes(&[text.len() as u8]);
        w.bytes(text.as_bytes());
        w.bytes(&count.to_le_bytes());
        w.bytes(&weight.to_le_bytes());
    }

    let tensors = params.tensors();
    w.u32(tensors.len());
    for t in tensors {
        w.u32(t.name.len());
        w.bytes(t.name.as_bytes());
        w.u32(t.shape.len());
        for &d in &t.shape {
            w.u32(d);
        }
        for &v in t.data {
            w.bytes(&v.to_le_bytes());
        }
    }
    Ok(w.0)
}

pub fn decode_model(bytes: &[u8]) -> Result<(NetParams<f32>, NGramVocab), Error> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if bytes.len() >= 4 && &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    r.take(4)?;
    let version = r.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let input_h = r.u32()?;
    let input_w = r.u32()?;
    let n_convs = r.u32()?;
    let mut convs = Vec::new();
    for _ in 0..n_convs {
        convs.push(ConvSpec {
            filters: r.u32()?,
            kernel: r.u32()?,
        });
    }
    let config = NetConfig {
        input_h,
        input_w,
        convs,
        fc_width: r.u32()?,
        max_len: r.u32()?,
        vocab_size: r.u32()?,
        dropout: f32::from_le_bytes(r.array()?),
    };

    let order = r.u32()?;
    let n = r.u32()?;
    if n != config.vocab_size {
        return Err(Error::ShapeMismatch(format!(
            "vocabulary block has {n} entries, the NGRAM head {}",
            config.vocab_size
        )));
    }
    let (mut entries, mut counts, mut weights) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..n {
        let len = r.take(1)?[0] as usize;
        let text = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::ShapeMismatch("N-gram text".into()))?;
        entries.push(
            Gram::parse(text)
                .ok_or_else(|| Error::ShapeMismatch(format!("bad N-gram `{text}`")))?,
        );
        counts.push(u64::from_le_bytes(r.array()?));
        weights.push(f64::from_le_bytes(r.array()?));
    }
    let vocab = NGramVocab::from_parts(order, entries, counts, weights)?;

    let mut params = NetParams::<f32>::zeros(&config)?;
    let expected: Vec<(String, Vec<usize>)> = params
        .tensors()
        .into_iter()
        .map(|t| (t.name, t.shape))
        .collect();
    let count = r.u32()?;
    if count != expected.len() {
        return Err(Error::ShapeMismatch(format!(
            "{count} tensors stored, {} expected",
            expected.len()
        )));
    }
    for ((name, shape), (_, slot)) in expected.iter().zip(params.slices_mut()) {
        let len = r.u32()?;
        let stored = std::str::from_utf8(r.take(len)?).unwrap_or("?");
        if stored != name {
            return Err(Error::ShapeMismatch(format!(
                "tensor `{stored}` found where `{name}` belongs"
            )));
        }
        let rank = r.u32()?;
        let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        if &dims != shape {
            return Err(Error::ShapeMismatch(format!(
                "tensor `{name}` has shape {dims:?}, expected {shape:?}"
            )));
        }
        let raw = r.take(4 * slot.len())?;
        for (v, c) in slot.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(c.try_into().expect("4 bytes"));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::ShapeMismatch(
            "trailing bytes after the last tensor".into(),
        ));
    }
    Ok((params, vocab))
}

pub fn save_model(path: &Path, params: &NetParams<f32>, vocab: &NGramVocab) -> Result<(), Error> {
    std::fs::write(path, encode_model(params, vocab)?).map_err(Error::io(path))
}

pub fn load_model(path: &Path) -> Result<(NetParams<f32>, NGramVocab), Error> {
    decode_model(&std::fs::read(path).map_err(Error::io(path))?)
}
