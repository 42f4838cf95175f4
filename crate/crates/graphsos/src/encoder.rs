//! Text embedding behind a pluggable interface.
//!
//! The built-in embedder is a deterministic hashing bag-of-words: it stands
//! in for a pre-trained [CLS]-token encoder so every downstream mechanism is
//! testable offline. A table variant serves externally precomputed vectors
//! from a file. [`BigramEmbedder`] is an additional order-sensitive
//! implementation for workloads (like order selection) where two texts with
//! the same token multiset must not collapse to one vector.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Embedding = Vec<f64>;

/// Anything that maps text to fixed-dimension vectors.
pub trait Encoder {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Embedding>;
}

/// The two stock encoder variants: the deterministic built-in embedder and
/// a lookup table of precomputed vectors.
#[derive(Debug, Clone, PartialEq)]
pub enum EncoderHandle {
    Builtin { dim: usize, seed: u64 },
    Table { dim: usize, map: BTreeMap<String, Embedding> },
}

impl EncoderHandle {
    pub fn builtin(dim: usize, seed: u64) -> Self {
        Self::Builtin { dim, seed }
    }

    /// Build a table handle, checking dimension consistency and finiteness
    /// across rows.
    pub fn table(entries: impl IntoIterator<Item = (String, Embedding)>) -> Result<Self> {
        let map: BTreeMap<String, Embedding> = entries.into_iter().collect();
        let mut dim = None;
        for (key, vector) in &map {
            match dim {
                None => dim = Some(vector.len()),
                Some(d) if d != vector.len() => {
                    return Err(Error::Format(format!(
                        "embedding for {key:?} has dimension {}, expected {d}",
                        vector.len()
                    )));
                }
                _ => {}
            }
            if vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("embedding for {key:?}")));
            }
        }
        Ok(Self::Table { dim: dim.unwrap_or(0), map })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Builtin { dim, .. } | Self::Table { dim, .. } => *dim,
        }
    }

    /// Deterministic embedding of `text`. The built-in variant tokenizes on
    /// non-alphanumerics, lowercases, hashes each token into one of `dim`
    /// buckets with a seeded hash, accumulates counts, and L2-normalizes;
    /// the empty token stream maps to the zero vector. The table variant
    /// looks the text up verbatim and errors on a miss.
    pub fn embed(&self, text: &str) -> Result<Embedding> {
        match self {
            Self::Builtin { dim, seed } => {
                let mut values = vec![0.0; *dim];
                for token in tokenize(text) {
                    let bucket = (seeded_hash(*seed, &token) % *dim as u64) as usize;
                    values[bucket] += 1.0;
                }
                l2_normalize(&mut values);
                Ok(values)
            }
            Self::Table { map, .. } => map
                .get(text)
                .cloned()
                .ok_or_else(|| Error::MissingEmbedding(text.to_string())),
        }
    }
}

impl Encoder for EncoderHandle {
    fn dim(&self) -> usize {
        self.dim()
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        self.embed(text)
    }
}

/// Order-sensitive hashing embedder: buckets both unigrams and adjacent
/// token bigrams, so permuting elements of a serialized graph moves the
/// vector while the token multiset alone does not pin it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BigramEmbedder {
    pub dim: usize,
    pub seed: u64,
}

impl BigramEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }
}

impl Encoder for BigramEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Embedding> {
        let tokens: Vec<String> = tokenize(text).collect();
        let mut values = vec![0.0; self.dim];
        for token in &tokens {
            values[(seeded_hash(self.seed, token) % self.dim as u64) as usize] += 1.0;
        }
        for pair in tokens.windows(2) {
            let joined = format!("{}\u{1}{}", pair[0], pair[1]);
            values[(seeded_hash(self.seed, &joined) % self.dim as u64) as usize] += 1.0;
        }
        l2_normalize(&mut values);
        Ok(values)
    }
}

fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// FNV-1a with the seed folded into the offset basis; stable across
/// platforms and builds, unlike the standard library hasher.
fn seeded_hash(seed: u64, token: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for byte in token.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn l2_normalize(values: &mut [f64]) {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in values.iter_mut() {
            *v /= norm;
        }
    }
}

fn percent_encode(key: &str) -> String {
    let mut out = String::with_capacity(key.len());
    for byte in key.bytes() {
        match byte {
            b' ' | b'\t' | b'\n' | b'\r' | b'%' => {
                let _ = write!(out, "%{byte:02X}");
            }
            other => out.push(other as char),
        }
    }
    out
}

fn percent_decode(key: &str) -> Result<String> {
    let bytes = key.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = bytes
                .get(i + 1..i + 3)
                .ok_or_else(|| Error::Format(format!("truncated percent escape in {key:?}")))?;
            let value = u8::from_str_radix(std::str::from_utf8(hex).unwrap_or("zz"), 16)
                .map_err(|_| Error::Format(format!("bad percent escape in {key:?}")))?;
            out.push(value);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| Error::Format(format!("non-utf8 key {key:?}")))
}

/// Load a `dim <d>` embedding table file written by
/// [`write_embedding_table`]. Keys are percent-decoded; every row must have
/// exactly `d` floats.
pub fn load_embedding_table(path: impl AsRef<Path>) -> Result<EncoderHandle> {
    let content = std::fs::read_to_string(path)?;
    let mut lines = content.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Format("empty embedding table".into()))?;
    let dim: usize = header
        .strip_prefix("dim ")
        .and_then(|d| d.trim().parse().ok())
        .ok_or_else(|| Error::Format(format!("expected `dim <d>` header, got {header:?}")))?;

    let mut map = BTreeMap::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let key = percent_decode(
            fields
                .next()
                .ok_or_else(|| Error::Format(format!("line {}: missing key", lineno + 1)))?,
        )?;
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Format(format!("line {}: bad float {f:?}", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::Format(format!(
                "line {}: row for {key:?} has {} values, expected {dim}",
                lineno + 1,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("embedding for {key:?}")));
        }
        if map.insert(key.clone(), values).is_some() {
            return Err(Error::Format(format!("duplicate key {key:?}")));
        }
    }
    Ok(EncoderHandle::Table { dim, map })
}

/// Write entries in the table file format. Floats use shortest round-trip
/// formatting, so load-after-write reproduces every vector exactly.
pub fn write_embedding_table<'a>(
    path: impl AsRef<Path>,
    dim: usize,
    entries: impl IntoIterator<Item = (&'a str, &'a [f64])>,
) -> Result<()> {
    let mut out = format!("dim {dim}\n");
    for (key, values) in entries {
        if values.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: values.len() });
        }
        out.push_str(&percent_encode(key));
        for v in values {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}
