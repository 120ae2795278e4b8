//! Record and window encoding.
//!
//! A record of `n` real features becomes one hypervector: every feature is
//! quantized, looked up in that feature's own level memory, and the `n`
//! level vectors are bundled and binarized. Windows of consecutive records
//! (n-grams) are encoded by rotating an accumulator one step before bundling
//! in each record's vector.
//!
//! Encoder file layout (little-endian):
//!
//! ```text
//! magic "HDEN" | version u16 | pad u16 | dim u32 | n_features u32 | ngram u32 (0 = none)
//! per feature: v_min f64 | v_max f64 | step f64 | level memory record (see `memory`)
//! ```
//!
//! Encoded-set cache layout:
//!
//! ```text
//! magic "HDCE" | version u16 | pad u16 | dim u32 | count u64 | seed u64 | dataset hash [32]
//! count packed vectors | count labels as u32
//! ```

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::bundler::Bundle;
use crate::error::{check_dim, HdcError, Result};
use crate::hdvec::{HdRng, Hypervector};
use crate::memory::{
    read_exact, read_f64, read_hv, read_u16, read_u32, read_u64, write_words, LevelMemory, QuantizationSchema,
};

const ENCODER_MAGIC: &[u8; 4] = b"HDEN";
const CACHE_MAGIC: &[u8; 4] = b"HDCE";
const VERSION: u16 = 1;

/// Per-feature quantizers and level memories, plus the optional n-gram size.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderSchema {
    dim: usize,
    quantizers: Vec<QuantizationSchema>,
    memories: Vec<LevelMemory>,
    ngram: Option<usize>,
}

impl EncoderSchema {
    /// One independent level memory per feature, each drawn from its own
    /// stream `("cim", feature)` under `seed`.
    pub fn build(quantizers: Vec<QuantizationSchema>, dim: usize, ngram: Option<usize>, seed: u64) -> Result<Self> {
        if quantizers.is_empty() {
            return Err(HdcError::InvalidArgument("encoder needs at least one feature".into()));
        }
        let memories = quantizers
            .par_iter()
            .enumerate()
            .map(|(j, q)| {
                q.validate()?;
                LevelMemory::build(q.levels(), dim, &mut HdRng::derive(seed, "cim", j as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(quantizers, memories, ngram)
    }

    pub fn from_parts(
        quantizers: Vec<QuantizationSchema>,
        memories: Vec<LevelMemory>,
        ngram: Option<usize>,
    ) -> Result<Self> {
        if quantizers.is_empty() || quantizers.len() != memories.len() {
            return Err(HdcError::InvalidArgument(format!(
                "{} quantizers for {} level memories",
                quantizers.len(),
                memories.len()
            )));
        }
        if ngram == Some(0) {
            return Err(HdcError::InvalidArgument("n-gram length must be at least 1".into()));
        }
        let dim = memories[0].dim();
        for (j, (q, m)) in quantizers.iter().zip(&memories).enumerate() {
            check_dim(dim, m.dim())?;
            if q.levels() != m.len() {
                return Err(HdcError::InvalidArgument(format!(
                    "feature {j}: quantizer has {} levels, memory has {}",
                    q.levels(),
                    m.len()
                )));
            }
        }
        Ok(Self { dim, quantizers, memories, ngram })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_features(&self) -> usize {
        self.quantizers.len()
    }

    pub fn ngram(&self) -> Option<usize> {
        self.ngram
    }

    pub fn quantizers(&self) -> &[QuantizationSchema] {
        &self.quantizers
    }

    pub fn memory(&self, feature: usize) -> &LevelMemory {
        &self.memories[feature]
    }

    fn level_vectors<'a>(&'a self, record: &[f64]) -> Result<Vec<&'a Hypervector>> {
        if record.len() != self.n_features() {
            return Err(HdcError::InvalidArgument(format!(
                "record has {} features, schema expects {}",
                record.len(),
                self.n_features()
            )));
        }
        record
            .iter()
            .zip(&self.quantizers)
            .zip(&self.memories)
            .enumerate()
            .map(|(j, ((&x, q), m))| {
                let level = q.quantize(x).map_err(|_| HdcError::NonFinite { feature: j, value: x })?;
                Ok(m.level(level))
            })
            .collect()
    }

    /// Bundle of a record's level vectors, before binarization.
    pub fn sample_bundle(&self, record: &[f64]) -> Result<Bundle> {
        let levels = self.level_vectors(record)?;
        Bundle::from_vectors(self.dim, levels)
    }

    pub fn encode_sample(&self, record: &[f64], rng: &mut HdRng) -> Result<Hypervector> {
        Ok(self.sample_bundle(record)?.binarize(rng))
    }

    /// Encodes each record of the window, then combines them as an n-gram.
    pub fn encode_window(&self, records: &[Vec<f64>], rng: &mut HdRng) -> Result<Hypervector> {
        let n = self.ngram.unwrap_or(1);
        if records.len() != n {
            return Err(HdcError::InvalidArgument(format!(
                "window has {} records, encoder expects {n}",
                records.len()
            )));
        }
        let samples = records
            .iter()
            .map(|r| self.encode_sample(r, rng))
            .collect::<Result<Vec<_>>>()?;
        encode_ngram(&samples, rng)
    }

    /// Encodes every record; record `i` draws its ties from stream
    /// `("encode", i)` under `seed`, so the result does not depend on thread
    /// scheduling.
    pub fn encode_records(&self, records: &[Vec<f64>], seed: u64) -> Result<Vec<Hypervector>> {
        records
            .par_iter()
            .enumerate()
            .map(|(i, r)| self.encode_sample(r, &mut HdRng::derive(seed, "encode", i as u64)))
            .collect()
    }

    /// Encodes n-gram windows given as the index of each window's last
    /// record. Record vectors are encoded once (stream `("encode", i)`) and
    /// shared between overlapping windows; window `w` takes its n-gram ties
    /// from stream `("ngram", w)`.
    pub fn encode_windows(&self, records: &[Vec<f64>], window_ends: &[usize], seed: u64) -> Result<Vec<Hypervector>> {
        let n = self.ngram.unwrap_or(1);
        let samples = self.encode_records(records, seed)?;
        window_ends
            .par_iter()
            .enumerate()
            .map(|(w, &end)| {
                if end + 1 < n || end >= samples.len() {
                    return Err(HdcError::InvalidArgument(format!("window ending at {end} out of range")));
                }
                encode_ngram(&samples[end + 1 - n..=end], &mut HdRng::derive(seed, "ngram", w as u64))
            })
            .collect()
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let io = |e| HdcError::io("writing encoder", e);
        w.write_all(ENCODER_MAGIC).map_err(io)?;
        w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&0u16.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.n_features() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.ngram.unwrap_or(0) as u32).to_le_bytes()).map_err(io)?;
        for (q, m) in self.quantizers.iter().zip(&self.memories) {
            for x in [q.v_min, q.v_max, q.step] {
                w.write_all(&x.to_le_bytes()).map_err(io)?;
            }
            m.write_to(w)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != ENCODER_MAGIC {
            return Err(HdcError::Format("not an encoder file (bad magic)".into()));
        }
        let version = read_u16(r)?;
        if version != VERSION {
            return Err(HdcError::Format(format!("unsupported encoder version {version}")));
        }
        read_u16(r)?;
        let dim = read_u32(r)? as usize;
        let n_features = read_u32(r)? as usize;
        let ngram = match read_u32(r)? {
            0 => None,
            n => Some(n as usize),
        };
        let mut quantizers = Vec::with_capacity(n_features);
        let mut memories = Vec::with_capacity(n_features);
        for _ in 0..n_features {
            let q = QuantizationSchema::new(read_f64(r)?, read_f64(r)?, read_f64(r)?)?;
            let m = LevelMemory::read_from(r)?;
            check_dim(dim, m.dim())?;
            quantizers.push(q);
            memories.push(m);
        }
        Self::from_parts(quantizers, memories, ngram)
    }
}

pub fn encode_sample(record: &[f64], schema: &EncoderSchema, rng: &mut HdRng) -> Result<Hypervector> {
    schema.encode_sample(record, rng)
}

pub fn encode_window(records: &[Vec<f64>], schema: &EncoderSchema, rng: &mut HdRng) -> Result<Hypervector> {
    schema.encode_window(records, rng)
}

/// `B_0 = 0; B_j = rho(B_{j-1}) + s_j`, then majority.
pub fn encode_ngram(samples: &[Hypervector], rng: &mut HdRng) -> Result<Hypervector> {
    ngram_bundle(samples).map(|b| b.binarize(rng))
}

pub fn ngram_bundle(samples: &[Hypervector]) -> Result<Bundle> {
    let first = samples
        .first()
        .ok_or_else(|| HdcError::InvalidArgument("n-gram of an empty sequence".into()))?;
    let mut acc = Bundle::new(first.dim())?;
    for s in samples {
        acc.permute();
        acc.bundle_in(s)?;
    }
    Ok(acc)
}

/// Encoded samples with labels, keyed by the source dataset hash and seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSet {
    pub dim: usize,
    pub seed: u64,
    pub dataset_hash: [u8; 32],
    pub samples: Vec<Hypervector>,
    pub labels: Vec<usize>,
}

impl EncodedSet {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        if self.samples.len() != self.labels.len() {
            return Err(HdcError::InvalidArgument("sample and label counts differ".into()));
        }
        let io = |e| HdcError::io("writing encoded set", e);
        w.write_all(CACHE_MAGIC).map_err(io)?;
        w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
        w.write_all(&0u16.to_le_bytes()).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.samples.len() as u64).to_le_bytes()).map_err(io)?;
        w.write_all(&self.seed.to_le_bytes()).map_err(io)?;
        w.write_all(&self.dataset_hash).map_err(io)?;
        for s in &self.samples {
            check_dim(self.dim, s.dim())?;
            write_words(w, s)?;
        }
        for &l in &self.labels {
            w.write_all(&(l as u32).to_le_bytes()).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(HdcError::Format("not an encoded-set file (bad magic)".into()));
        }
        let version = read_u16(r)?;
        if version != VERSION {
            return Err(HdcError::Format(format!("unsupported encoded-set version {version}")));
        }
        read_u16(r)?;
        let dim = read_u32(r)? as usize;
        let count = read_u64(r)? as usize;
        let seed = read_u64(r)?;
        let mut dataset_hash = [0u8; 32];
        read_exact(r, &mut dataset_hash)?;
        let samples = (0..count).map(|_| read_hv(r, dim)).collect::<Result<Vec<_>>>()?;
        let labels = (0..count)
            .map(|_| read_u32(r).map(|l| l as usize))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { dim, seed, dataset_hash, samples, labels })
    }
}
