//! Integer-accumulator superposition and majority-rule binarization.
//!
//! A [`Bundle`] keeps one signed count per dimension plus the net number of
//! vectors bundled in. Counts are signed because bundling out during
//! retraining can drive a dimension below zero; the majority threshold
//! `2 * count` vs `n` stays well defined either way.

use crate::error::{check_dim, HdcError, Result};
use crate::hdvec::{HdRng, Hypervector, WORD_BITS};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bundle {
    counts: Vec<i32>,
    n: i64,
}

impl Bundle {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(HdcError::InvalidDimension("dimension must be at least 1".into()));
        }
        Ok(Self { counts: vec![0; dim], n: 0 })
    }

    pub fn from_counts(counts: Vec<i32>, n: i64) -> Result<Self> {
        if counts.is_empty() {
            return Err(HdcError::InvalidDimension("dimension must be at least 1".into()));
        }
        Ok(Self { counts, n })
    }

    /// Bundle of every vector in `vectors` (all of equal dimension).
    ///
    /// Uses bit-sliced vertical counters, which is much cheaper than
    /// per-dimension integer adds when hundreds of vectors are superposed.
    pub fn from_vectors<'a, I>(dim: usize, vectors: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Hypervector>,
    {
        let mut counter = SlicedCounter::new(dim)?;
        for v in vectors {
            counter.add(v)?;
        }
        Ok(counter.into_bundle())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    #[inline]
    pub fn counts(&self) -> &[i32] {
        &self.counts
    }

    /// Net number of bundled vectors (ins minus outs).
    #[inline]
    pub fn n(&self) -> i64 {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0 && self.counts.iter().all(|&c| c == 0)
    }

    /// Element-wise addition of `v`.
    pub fn bundle_in(&mut self, v: &Hypervector) -> Result<()> {
        check_dim(self.dim(), v.dim())?;
        self.accumulate(v, 1);
        self.n += 1;
        Ok(())
    }

    /// Element-wise subtraction of `v`.
    pub fn bundle_out(&mut self, v: &Hypervector) -> Result<()> {
        check_dim(self.dim(), v.dim())?;
        self.accumulate(v, -1);
        self.n -= 1;
        Ok(())
    }

    fn accumulate(&mut self, v: &Hypervector, sign: i32) {
        for (chunk, &w) in self.counts.chunks_mut(WORD_BITS).zip(v.words()) {
            for (b, c) in chunk.iter_mut().enumerate() {
                *c += sign * ((w >> b) & 1) as i32;
            }
        }
    }

    /// Rotates counts by one position toward higher indices; `n` unchanged.
    pub fn permute(&mut self) {
        self.counts.rotate_right(1);
    }

    /// Majority rule: 1 where `2 * count > n`, 0 where `2 * count < n`, and a
    /// fair coin from `rng` on ties. Ties are drawn in ascending dimension
    /// order.
    pub fn binarize(&self, rng: &mut HdRng) -> Hypervector {
        let dim = self.dim();
        let mut words = vec![0u64; dim.div_ceil(WORD_BITS)];
        for (d, &c) in self.counts.iter().enumerate() {
            let twice = 2 * c as i64;
            let bit = match twice.cmp(&self.n) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => rng.next_bool(),
            };
            if bit {
                words[d / WORD_BITS] |= 1 << (d % WORD_BITS);
            }
        }
        Hypervector::from_words(dim, words).expect("padding bits are never set")
    }

    /// Number of dimensions where the majority rule would need a coin flip.
    pub fn tie_count(&self) -> usize {
        self.counts.iter().filter(|&&c| 2 * c as i64 == self.n).count()
    }
}

pub fn new_bundle(dim: usize) -> Result<Bundle> {
    Bundle::new(dim)
}

pub fn bundle_in(mut b: Bundle, v: &Hypervector) -> Result<Bundle> {
    b.bundle_in(v)?;
    Ok(b)
}

pub fn bundle_out(mut b: Bundle, v: &Hypervector) -> Result<Bundle> {
    b.bundle_out(v)?;
    Ok(b)
}

pub fn permute_bundle(mut b: Bundle) -> Bundle {
    b.permute();
    b
}

pub fn binarize(b: &Bundle, rng: &mut HdRng) -> Hypervector {
    b.binarize(rng)
}

/// Binary counters stored as bit planes: plane `p` holds bit `p` of every
/// dimension's count.
struct SlicedCounter {
    dim: usize,
    planes: Vec<Vec<u64>>,
    n: i64,
}

impl SlicedCounter {
    fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(HdcError::InvalidDimension("dimension must be at least 1".into()));
        }
        Ok(Self { dim, planes: Vec::new(), n: 0 })
    }

    fn add(&mut self, v: &Hypervector) -> Result<()> {
        check_dim(self.dim, v.dim())?;
        self.n += 1;
        let needed = 64 - (self.n as u64).leading_zeros() as usize;
        while self.planes.len() < needed {
            self.planes.push(vec![0; v.words().len()]);
        }
        for (i, &w) in v.words().iter().enumerate() {
            let mut carry = w;
            for plane in self.planes.iter_mut() {
                if carry == 0 {
                    break;
                }
                let p = plane[i];
                plane[i] = p ^ carry;
                carry &= p;
            }
        }
        Ok(())
    }

    fn into_bundle(self) -> Bundle {
        let mut counts = vec![0i32; self.dim];
        for (p, plane) in self.planes.iter().enumerate() {
            for (chunk, &w) in counts.chunks_mut(WORD_BITS).zip(plane) {
                if w == 0 {
                    continue;
                }
                for (b, c) in chunk.iter_mut().enumerate() {
                    *c |= (((w >> b) & 1) as i32) << p;
                }
            }
        }
        Bundle { counts, n: self.n }
    }
}
