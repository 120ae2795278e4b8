//! Bit-packed binary hypervectors.
//!
//! Bit `d` of a hypervector lives in word `d / 64` at bit position `d % 64`
//! (least significant bit first). Bits past `dim` in the last word are kept
//! zero by every constructor and operation, so word-wise popcounts never see
//! garbage.
//!
//! The textual dump produced by [`Hypervector::to_hex`] is
//! `<dim>:<hex>` where `<hex>` is every packed word written as 8 little-endian
//! bytes, two lowercase hex digits per byte.

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, HdcError, Result};

pub const WORD_BITS: usize = 64;

/// Default dimensionality used throughout the engine.
pub const DEFAULT_DIM: usize = 10_000;

#[inline]
pub(crate) fn words_for(dim: usize) -> usize {
    dim.div_ceil(WORD_BITS)
}

#[inline]
fn tail_mask(dim: usize) -> u64 {
    match dim % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Hypervector {
    dim: usize,
    words: Vec<u64>,
}

impl Hypervector {
    pub fn zeros(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(HdcError::InvalidDimension("dimension must be at least 1".into()));
        }
        Ok(Self { dim, words: vec![0; words_for(dim)] })
    }

    /// Every bit independently 1 with probability one half.
    pub fn random(dim: usize, rng: &mut HdRng) -> Result<Self> {
        let mut v = Self::zeros(dim)?;
        for w in v.words.iter_mut() {
            *w = rng.next_u64();
        }
        v.clear_tail();
        Ok(v)
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self> {
        let mut v = Self::zeros(bits.len())?;
        for (d, &b) in bits.iter().enumerate() {
            if b {
                v.words[d / WORD_BITS] |= 1 << (d % WORD_BITS);
            }
        }
        Ok(v)
    }

    /// Parses a string of `0`/`1` characters, element 0 first.
    pub fn from_bit_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(HdcError::InvalidArgument(format!("invalid bit character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_bits(&bits)
    }

    /// Builds a vector from packed words; padding bits must be zero.
    pub fn from_words(dim: usize, words: Vec<u64>) -> Result<Self> {
        if dim == 0 {
            return Err(HdcError::InvalidDimension("dimension must be at least 1".into()));
        }
        if words.len() != words_for(dim) {
            return Err(HdcError::Format(format!(
                "expected {} words for dim {dim}, got {}",
                words_for(dim),
                words.len()
            )));
        }
        if words[words.len() - 1] & !tail_mask(dim) != 0 {
            return Err(HdcError::Format("non-zero padding bits".into()));
        }
        Ok(Self { dim, words })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, d: usize) -> bool {
        assert!(d < self.dim, "bit index {d} out of range for dim {}", self.dim);
        (self.words[d / WORD_BITS] >> (d % WORD_BITS)) & 1 == 1
    }

    pub fn set(&mut self, d: usize, value: bool) {
        assert!(d < self.dim, "bit index {d} out of range for dim {}", self.dim);
        let mask = 1u64 << (d % WORD_BITS);
        if value {
            self.words[d / WORD_BITS] |= mask;
        } else {
            self.words[d / WORD_BITS] &= !mask;
        }
    }

    pub fn flip(&mut self, d: usize) {
        assert!(d < self.dim, "bit index {d} out of range for dim {}", self.dim);
        self.words[d / WORD_BITS] ^= 1 << (d % WORD_BITS);
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.dim).map(move |d| self.get(d))
    }

    pub fn popcount(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Bitwise complement.
    pub fn not(&self) -> Self {
        let mut out = Self { dim: self.dim, words: self.words.iter().map(|w| !w).collect() };
        out.clear_tail();
        out
    }

    /// Number of differing positions.
    pub fn hamming(&self, other: &Self) -> Result<usize> {
        check_dim(self.dim, other.dim)?;
        Ok(self.hamming_unchecked(other))
    }

    #[inline]
    pub(crate) fn hamming_unchecked(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    /// Normalized Hamming similarity `1 - h/D`.
    pub fn similarity(&self, other: &Self) -> Result<f64> {
        Ok(1.0 - self.hamming(other)? as f64 / self.dim as f64)
    }

    /// Element-wise XOR.
    pub fn bind(&self, other: &Self) -> Result<Self> {
        check_dim(self.dim, other.dim)?;
        Ok(Self {
            dim: self.dim,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect(),
        })
    }

    /// Cyclic rotation by `k` positions toward higher indices: bit `d` of the
    /// input becomes bit `(d + k) mod dim` of the output.
    pub fn permute(&self, k: i64) -> Self {
        let dim = self.dim;
        let k = k.rem_euclid(dim as i64) as usize;
        if k == 0 {
            return self.clone();
        }
        // (v << k) | (v >> (dim - k)) over a dim-bit integer
        let mut out = shl(&self.words, k);
        let high = shr(&self.words, dim - k);
        for (o, h) in out.iter_mut().zip(high) {
            *o |= h;
        }
        let mut out = Self { dim, words: out };
        out.clear_tail();
        out
    }

    pub fn to_hex(&self) -> String {
        let mut s = format!("{}:", self.dim);
        for w in &self.words {
            for b in w.to_le_bytes() {
                s.push_str(&format!("{b:02x}"));
            }
        }
        s
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let (dim, hex) = s
            .split_once(':')
            .ok_or_else(|| HdcError::Format("missing ':' separator".into()))?;
        let dim: usize = dim
            .trim()
            .parse()
            .map_err(|_| HdcError::Format(format!("bad dimension {dim:?}")))?;
        let hex = hex.trim();
        if hex.len() != words_for(dim) * 16 || !hex.is_ascii() {
            return Err(HdcError::Format(format!("expected {} hex digits", words_for(dim) * 16)));
        }
        let mut words = Vec::with_capacity(words_for(dim));
        for chunk in hex.as_bytes().chunks(16) {
            let mut bytes = [0u8; 8];
            for (i, pair) in chunk.chunks(2).enumerate() {
                let pair = std::str::from_utf8(pair).expect("ascii");
                bytes[i] = u8::from_str_radix(pair, 16)
                    .map_err(|_| HdcError::Format(format!("bad hex byte {pair:?}")))?;
            }
            words.push(u64::from_le_bytes(bytes));
        }
        Self::from_words(dim, words)
    }

    #[inline]
    fn clear_tail(&mut self) {
        let mask = tail_mask(self.dim);
        if let Some(last) = self.words.last_mut() {
            *last &= mask;
        }
    }
}

impl fmt::Debug for Hypervector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.dim <= 128 {
            let s: String = self.bits().map(|b| if b { '1' } else { '0' }).collect();
            write!(f, "Hypervector({s})")
        } else {
            write!(f, "Hypervector(dim={}, popcount={})", self.dim, self.popcount())
        }
    }
}

fn shl(words: &[u64], k: usize) -> Vec<u64> {
    let n = words.len();
    let (ws, bs) = (k / WORD_BITS, k % WORD_BITS);
    let mut out = vec![0u64; n];
    for i in ws..n {
        let src = i - ws;
        let mut w = words[src] << bs;
        if bs != 0 && src > 0 {
            w |= words[src - 1] >> (WORD_BITS - bs);
        }
        out[i] = w;
    }
    out
}

fn shr(words: &[u64], k: usize) -> Vec<u64> {
    let n = words.len();
    let (ws, bs) = (k / WORD_BITS, k % WORD_BITS);
    let mut out = vec![0u64; n];
    for i in 0..n.saturating_sub(ws) {
        let src = i + ws;
        let mut w = words[src] >> bs;
        if bs != 0 && src + 1 < n {
            w |= words[src + 1] << (WORD_BITS - bs);
        }
        out[i] = w;
    }
    out
}

pub fn random_hv(dim: usize, rng: &mut HdRng) -> Result<Hypervector> {
    Hypervector::random(dim, rng)
}

pub fn hamming(a: &Hypervector, b: &Hypervector) -> Result<usize> {
    a.hamming(b)
}

pub fn similarity(a: &Hypervector, b: &Hypervector) -> Result<f64> {
    a.similarity(b)
}

pub fn bind(a: &Hypervector, b: &Hypervector) -> Result<Hypervector> {
    a.bind(b)
}

pub fn permute(v: &Hypervector, k: i64) -> Hypervector {
    v.permute(k)
}

/// Deterministic random stream: ChaCha with 8 rounds, seeded from a 64-bit
/// value through `rand_core`'s SplitMix64 expansion.
///
/// Sub-streams are derived from a parent seed, a purpose tag and an index
/// (see [`HdRng::derive`]), so each consumer of randomness owns a stream that
/// does not shift when another consumer draws more or fewer values.
#[derive(Clone, Debug)]
pub struct HdRng {
    inner: ChaCha8Rng,
}

impl HdRng {
    pub fn new(seed: u64) -> Self {
        Self { inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Stream for `(seed, tag, index)`. The key mixes seed and tag; the index
    /// selects the ChaCha stream, so indices never collide for one key.
    pub fn derive(seed: u64, tag: &str, index: u64) -> Self {
        let key = splitmix64(seed ^ fnv1a(tag.as_bytes()));
        let mut inner = ChaCha8Rng::seed_from_u64(key);
        inner.set_stream(index);
        Self { inner }
    }

    #[inline]
    pub fn next_bool(&mut self) -> bool {
        self.inner.next_u32() & 1 == 1
    }
}

impl RngCore for HdRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.inner.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.inner.try_fill_bytes(dest)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_bits(v: &Hypervector) -> Vec<bool> {
        v.bits().collect()
    }

    #[test]
    fn zero_dim_rejected() {
        assert!(matches!(Hypervector::zeros(0), Err(HdcError::InvalidDimension(_))));
        assert!(random_hv(0, &mut HdRng::new(1)).is_err());
    }

    #[test]
    fn hamming_hand_example() {
        let a = Hypervector::from_bit_str("10110010").unwrap();
        let b = Hypervector::from_bit_str("00111010").unwrap();
        // differing positions: 0 and 4
        let naive = "10110010".chars().zip("00111010".chars()).filter(|(x, y)| x != y).count();
        assert_eq!(naive, 2);
        assert_eq!(hamming(&a, &b).unwrap(), naive);
    }

    #[test]
    fn identity_and_complement() {
        let v = random_hv(1000, &mut HdRng::new(3)).unwrap();
        assert_eq!(hamming(&v, &v).unwrap(), 0);
        assert_eq!(hamming(&v, &v.not()).unwrap(), 1000);
        assert_eq!(similarity(&v, &v).unwrap(), 1.0);
        assert_eq!(similarity(&v, &v.not()).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_dims_error() {
        let a = Hypervector::zeros(10).unwrap();
        let b = Hypervector::zeros(11).unwrap();
        assert!(matches!(a.hamming(&b), Err(HdcError::DimensionMismatch { expected: 10, found: 11 })));
        assert!(a.similarity(&b).is_err());
        assert!(a.bind(&b).is_err());
    }

    #[test]
    fn same_seed_same_vector() {
        let a = random_hv(777, &mut HdRng::new(42)).unwrap();
        let b = random_hv(777, &mut HdRng::new(42)).unwrap();
        assert_eq!(a, b);
        let c = random_hv(777, &mut HdRng::new(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn random_pair_is_pseudo_orthogonal() {
        let mut rng = HdRng::new(7);
        let a = random_hv(10_000, &mut rng).unwrap();
        let b = random_hv(10_000, &mut rng).unwrap();
        let s = similarity(&a, &b).unwrap();
        assert!((0.48..=0.52).contains(&s), "similarity {s}");
    }

    #[test]
    fn popcount_of_dim64_stays_in_binomial_bulk() {
        // Exact Bin(64, 1/2) tails: P(outside [16, 48]) = 2.44e-5 and
        // P(outside [9, 55]) = 5.6e-10.
        for seed in 0..200 {
            let v = random_hv(64, &mut HdRng::new(seed)).unwrap();
            assert!((16..=48).contains(&v.popcount()), "seed {seed}");
            assert!((9..=55).contains(&v.popcount()), "seed {seed}");
        }
    }

    #[test]
    fn bind_identity_and_self_inverse() {
        let mut rng = HdRng::new(9);
        let v = random_hv(130, &mut rng).unwrap();
        let zero = Hypervector::zeros(130).unwrap();
        assert_eq!(bind(&v, &zero).unwrap(), v);
        assert_eq!(bind(&v, &v).unwrap(), zero);
    }

    #[test]
    fn permute_boundaries() {
        let v = random_hv(100, &mut HdRng::new(5)).unwrap();
        assert_eq!(permute(&v, 0), v);
        assert_eq!(permute(&permute(&v, 1), 99), v);
        assert_eq!(permute(&v, 7).popcount(), v.popcount());
        assert_eq!(permute(&v, -1), permute(&v, 99));
        assert_eq!(permute(&v, 100), v);
    }

    #[test]
    fn permute_moves_toward_higher_index() {
        let v = Hypervector::from_bit_str("1000000000").unwrap();
        assert_eq!(permute(&v, 3), Hypervector::from_bit_str("0001000000").unwrap());
        let w = Hypervector::from_bit_str("0000000001").unwrap();
        assert_eq!(permute(&w, 1), Hypervector::from_bit_str("1000000000").unwrap());
    }

    #[test]
    fn packed_ops_match_naive_oracle_on_word_boundaries() {
        let mut rng = HdRng::new(11);
        for dim in [1usize, 7, 8, 63, 64, 65, 127, 128, 129, 1000] {
            let a = random_hv(dim, &mut rng).unwrap();
            let b = random_hv(dim, &mut rng).unwrap();
            let (na, nb) = (naive_bits(&a), naive_bits(&b));
            let h = na.iter().zip(&nb).filter(|(x, y)| x != y).count();
            assert_eq!(a.hamming(&b).unwrap(), h, "dim {dim}");
            let x: Vec<bool> = na.iter().zip(&nb).map(|(x, y)| x ^ y).collect();
            assert_eq!(naive_bits(&a.bind(&b).unwrap()), x, "dim {dim}");
            for k in [0i64, 1, 5, 63, 64, 65, dim as i64 - 1, 3 * dim as i64 + 2] {
                let k_mod = k.rem_euclid(dim as i64) as usize;
                let mut rot = vec![false; dim];
                for (d, &bit) in na.iter().enumerate() {
                    rot[(d + k_mod) % dim] = bit;
                }
                assert_eq!(naive_bits(&a.permute(k)), rot, "dim {dim} k {k}");
            }
            assert_eq!(a.not().popcount(), dim - a.popcount());
        }
    }

    #[test]
    fn hex_round_trip_and_layout() {
        let v = Hypervector::from_bit_str("1000000011").unwrap();
        assert_eq!(v.to_hex(), "10:0103000000000000");
        assert_eq!(Hypervector::from_hex(&v.to_hex()).unwrap(), v);
        let r = random_hv(1000, &mut HdRng::new(1)).unwrap();
        assert_eq!(Hypervector::from_hex(&r.to_hex()).unwrap(), r);
        assert!(Hypervector::from_hex("10:ff07000000000000").is_err());
        assert!(Hypervector::from_hex("10:01").is_err());
    }

    #[test]
    fn derived_streams_are_independent_and_stable() {
        let mut a = HdRng::derive(5, "ties", 0);
        let mut b = HdRng::derive(5, "ties", 0);
        let mut c = HdRng::derive(5, "ties", 1);
        let mut d = HdRng::derive(5, "memory", 0);
        let xa: Vec<u64> = (0..4).map(|_| a.next_u64()).collect();
        let xb: Vec<u64> = (0..4).map(|_| b.next_u64()).collect();
        let xc: Vec<u64> = (0..4).map(|_| c.next_u64()).collect();
        let xd: Vec<u64> = (0..4).map(|_| d.next_u64()).collect();
        assert_eq!(xa, xb);
        assert_ne!(xa, xc);
        assert_ne!(xa, xd);
    }
}
