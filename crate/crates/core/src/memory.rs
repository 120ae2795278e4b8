//! Item memories, level memories and value quantization.
//!
//! Binary layout of a serialized memory (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "HDCM"
//! version u16      1
//! kind    u8       0 = item memory, 1 = level memory
//! pad     u8       0
//! dim     u32
//! count   u32      number of vectors (symbols or levels)
//! body    count * ceil(dim / 64) u64 words, vector-major
//! ```

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{HdcError, Result};
use crate::hdvec::{words_for, HdRng, Hypervector};

const MAGIC: &[u8; 4] = b"HDCM";
const VERSION: u16 = 1;
const KIND_ITEM: u8 = 0;
const KIND_LEVEL: u8 = 1;

/// Random, pseudo-orthogonal vectors for nominal symbols `0..count`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ItemMemory {
    dim: usize,
    entries: Vec<Hypervector>,
}

impl ItemMemory {
    pub fn build(count: usize, dim: usize, rng: &mut HdRng) -> Result<Self> {
        if count == 0 {
            return Err(HdcError::InvalidArgument("item memory needs at least one symbol".into()));
        }
        let entries = (0..count)
            .map(|_| Hypervector::random(dim, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim, entries })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, symbol: usize) -> Option<&Hypervector> {
        self.entries.get(symbol)
    }

    pub fn entries(&self) -> &[Hypervector] {
        &self.entries
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_vectors(w, KIND_ITEM, self.dim, &self.entries)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let (dim, entries) = read_vectors(r, KIND_ITEM)?;
        if entries.is_empty() {
            return Err(HdcError::Format("item memory with no entries".into()));
        }
        Ok(Self { dim, entries })
    }
}

/// Ordered level vectors with linearly decreasing similarity.
///
/// Level 0 is random. Level `i` flips `flips_per_level` positions of level
/// `i - 1`, drawn without replacement from positions never flipped before, so
/// `similarity(levels[i], levels[j]) = 1 - flips_per_level * |i - j| / dim`
/// holds exactly. With `flips_per_level = floor(dim / (2 (L - 1)))` the two
/// extremes are at most orthogonal; the `dim mod 2(L-1)` remainder positions
/// are never flipped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LevelMemory {
    dim: usize,
    flips_per_level: usize,
    levels: Vec<Hypervector>,
}

impl LevelMemory {
    pub fn build(levels: usize, dim: usize, rng: &mut HdRng) -> Result<Self> {
        if levels < 2 {
            return Err(HdcError::InvalidArgument(format!("level memory needs at least 2 levels, got {levels}")));
        }
        let flips = dim / (2 * (levels - 1));
        if flips == 0 {
            return Err(HdcError::InvalidDimension(format!(
                "dimension {dim} too small for {levels} levels (need at least {})",
                2 * (levels - 1)
            )));
        }
        let first = Hypervector::random(dim, rng)?;
        let mut order: Vec<usize> = (0..dim).collect();
        order.shuffle(rng);

        let mut out = Vec::with_capacity(levels);
        out.push(first);
        for step in 0..levels - 1 {
            let mut next = out[step].clone();
            for &d in &order[step * flips..(step + 1) * flips] {
                next.flip(d);
            }
            out.push(next);
        }
        Ok(Self { dim, flips_per_level: flips, levels: out })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn flips_per_level(&self) -> usize {
        self.flips_per_level
    }

    pub fn level(&self, index: usize) -> &Hypervector {
        &self.levels[index]
    }

    pub fn levels(&self) -> &[Hypervector] {
        &self.levels
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        write_vectors(w, KIND_LEVEL, self.dim, &self.levels)
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let (dim, levels) = read_vectors(r, KIND_LEVEL)?;
        if levels.len() < 2 {
            return Err(HdcError::Format("level memory with fewer than 2 levels".into()));
        }
        let flips = levels[0].hamming(&levels[1])?;
        Ok(Self { dim, flips_per_level: flips, levels })
    }
}

pub fn build_im(count: usize, dim: usize, rng: &mut HdRng) -> Result<ItemMemory> {
    ItemMemory::build(count, dim, rng)
}

pub fn build_cim(levels: usize, dim: usize, rng: &mut HdRng) -> Result<LevelMemory> {
    LevelMemory::build(levels, dim, rng)
}

/// Uniform quantization of `[v_min, v_max]` with a fixed step; both
/// endpoints are levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizationSchema {
    pub v_min: f64,
    pub v_max: f64,
    pub step: f64,
}

impl QuantizationSchema {
    pub fn new(v_min: f64, v_max: f64, step: f64) -> Result<Self> {
        let q = Self { v_min, v_max, step };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v_min.is_finite() && self.v_max.is_finite() && self.step.is_finite()) {
            return Err(HdcError::InvalidArgument("quantization bounds must be finite".into()));
        }
        if self.step <= 0.0 {
            return Err(HdcError::InvalidArgument(format!("quantization step must be > 0, got {}", self.step)));
        }
        if self.v_max <= self.v_min {
            return Err(HdcError::InvalidArgument(format!(
                "empty quantization range [{}, {}]",
                self.v_min, self.v_max
            )));
        }
        if self.levels() < 2 {
            return Err(HdcError::InvalidArgument("quantization yields fewer than 2 levels".into()));
        }
        Ok(())
    }

    /// `round((v_max - v_min) / step) + 1`
    pub fn levels(&self) -> usize {
        ((self.v_max - self.v_min) / self.step).round() as usize + 1
    }

    /// Representative value of level `index`.
    pub fn level_value(&self, index: usize) -> f64 {
        self.v_min + index as f64 * self.step
    }

    /// Level index of `value`; out-of-range values are clamped.
    pub fn quantize(&self, value: f64) -> Result<usize> {
        if !value.is_finite() {
            return Err(HdcError::NonFinite { feature: 0, value });
        }
        let clamped = value.clamp(self.v_min, self.v_max);
        let index = ((clamped - self.v_min) / self.step).round() as usize;
        Ok(index.min(self.levels() - 1))
    }
}

pub fn quantize(value: f64, schema: &QuantizationSchema) -> Result<usize> {
    schema.quantize(value)
}

fn write_vectors<W: Write>(w: &mut W, kind: u8, dim: usize, vectors: &[Hypervector]) -> Result<()> {
    let io = |e| HdcError::io("writing memory", e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&[kind, 0]).map_err(io)?;
    w.write_all(&(dim as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(vectors.len() as u32).to_le_bytes()).map_err(io)?;
    for v in vectors {
        write_words(w, v)?;
    }
    Ok(())
}

fn read_vectors<R: Read>(r: &mut R, kind: u8) -> Result<(usize, Vec<Hypervector>)> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic)?;
    if &magic != MAGIC {
        return Err(HdcError::Format("not a memory file (bad magic)".into()));
    }
    let version = read_u16(r)?;
    if version != VERSION {
        return Err(HdcError::Format(format!("unsupported memory version {version}")));
    }
    let mut kp = [0u8; 2];
    read_exact(r, &mut kp)?;
    if kp[0] != kind {
        return Err(HdcError::Format(format!("memory kind {} where {kind} expected", kp[0])));
    }
    let dim = read_u32(r)? as usize;
    let count = read_u32(r)? as usize;
    let vectors = (0..count).map(|_| read_hv(r, dim)).collect::<Result<Vec<_>>>()?;
    Ok((dim, vectors))
}

pub(crate) fn write_words<W: Write>(w: &mut W, v: &Hypervector) -> Result<()> {
    let mut buf = Vec::with_capacity(v.words().len() * 8);
    for word in v.words() {
        buf.extend_from_slice(&word.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| HdcError::io("writing vector", e))
}

pub(crate) fn read_hv<R: Read>(r: &mut R, dim: usize) -> Result<Hypervector> {
    let mut buf = vec![0u8; words_for(dim) * 8];
    read_exact(r, &mut buf)?;
    let words = buf.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Hypervector::from_words(dim, words)
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf).map_err(|e| HdcError::io("reading binary file", e))
}

pub(crate) fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    read_exact(r, &mut b)?;
    Ok(u16::from_le_bytes(b))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}
