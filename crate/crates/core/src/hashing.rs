//! Hash-seeded projection variates.
//!
//! Every `(item, row)` pair maps to one `G(x; 0)` draw through a pure
//! function of the item bytes, the row and the master seed, so the sketch
//! never stores per-item state.
//!
//! The algorithm, fixed so sketches are reproducible across platforms:
//!
//! 1. `digest = fold(seed, bytes)`: start from `mix64(seed + GOLDEN)`, then for
//!    each 8-byte little-endian chunk (the last one zero-padded) set
//!    `h = mix64(h ^ chunk)`, and finish with `h = mix64(h ^ len)`.
//! 2. Word `c` of row `r` is `mix64(digest + (r·2^16 + c + 1)·GOLDEN)`, a
//!    SplitMix64 stream keyed by the digest.
//! 3. Words `2i` and `2i + 1` form the i-th candidate uniform/exponential
//!    pair; candidates are tried in order until one is valid.
//!
//! `mix64` is the SplitMix64 finalizer. None of this is cryptographic.

use crate::error::{Error, Result};
use crate::stable::{g0_transform, UniformExpPair};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const MAX_CANDIDATES: u64 = 1 << 15;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Opaque identifier of an item type. Equal bytes mean the same item.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ItemKey(Vec<u8>);

impl ItemKey {
    pub fn new(bytes: impl Into<Vec<u8>>) -> Self {
        ItemKey(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl From<&str> for ItemKey {
    fn from(s: &str) -> Self {
        ItemKey(s.as_bytes().to_vec())
    }
}

impl From<String> for ItemKey {
    fn from(s: String) -> Self {
        ItemKey(s.into_bytes())
    }
}

impl From<&[u8]> for ItemKey {
    fn from(b: &[u8]) -> Self {
        ItemKey(b.to_vec())
    }
}

impl From<u64> for ItemKey {
    fn from(v: u64) -> Self {
        ItemKey(v.to_le_bytes().to_vec())
    }
}

impl std::fmt::Display for ItemKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", String::from_utf8_lossy(&self.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariatePlan {
    pub master_seed: u64,
    pub k: usize,
}

impl VariatePlan {
    pub fn new(master_seed: u64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidConfig(
                "sketch width k must be at least 1".into(),
            ));
        }
        Ok(Self { master_seed, k })
    }
}

/// Keyed 64-bit digest of the item bytes.
pub fn item_digest(bytes: &[u8], seed: u64) -> u64 {
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    let mut chunks = bytes.chunks_exact(8);
    for chunk in &mut chunks {
        h = mix64(h ^ u64::from_le_bytes(chunk.try_into().unwrap()));
    }
    let rem = chunks.remainder();
    if !rem.is_empty() {
        let mut buf = [0u8; 8];
        buf[..rem.len()].copy_from_slice(rem);
        h = mix64(h ^ u64::from_le_bytes(buf));
    }
    mix64(h ^ bytes.len() as u64)
}

#[inline]
fn row_word(digest: u64, row: u64, counter: u64) -> u64 {
    let index = (row << 16) | counter;
    mix64(digest.wrapping_add(index.wrapping_add(1).wrapping_mul(GOLDEN)))
}

/// The raw words of the first candidate pair for `(digest, row)`.
pub fn row_words(digest: u64, row: usize) -> (u64, u64) {
    (
        row_word(digest, row as u64, 0),
        row_word(digest, row as u64, 1),
    )
}

/// The uniform/exponential pair used for `(digest, row)`.
pub fn hashed_pair(digest: u64, row: usize) -> UniformExpPair {
    let row = row as u64;
    for c in 0..MAX_CANDIDATES {
        if let Ok(pair) = UniformExpPair::from_words(
            row_word(digest, row, 2 * c),
            row_word(digest, row, 2 * c + 1),
        ) {
            return pair;
        }
    }
    // open_unit never yields 0 or 1, so the first candidate is always valid
    unreachable!("no valid candidate pair")
}

#[inline]
pub(crate) fn digest_variate(digest: u64, row: usize) -> f64 {
    g0_transform(hashed_pair(digest, row))
}

/// `R_row(item) ~ G(x; 0)`, a pure function of `(item, row, master_seed)`.
pub fn item_variate(item: &ItemKey, row: usize, plan: &VariatePlan) -> Result<f64> {
    if row >= plan.k {
        return Err(Error::RowOutOfRange { row, k: plan.k });
    }
    Ok(digest_variate(
        item_digest(item.as_bytes(), plan.master_seed),
        row,
    ))
}

/// All `k` variates of an item, written into `out`.
pub fn item_variates(item: &ItemKey, plan: &VariatePlan, out: &mut [f64]) {
    let digest = item_digest(item.as_bytes(), plan.master_seed);
    for (row, slot) in out.iter_mut().take(plan.k).enumerate() {
        *slot = digest_variate(digest, row);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(k: usize) -> VariatePlan {
        VariatePlan::new(0xC0FFEE, k).unwrap()
    }

    #[test]
    fn deterministic() {
        let item = ItemKey::from("flow-17");
        let a = item_variate(&item, 3, &plan(8)).unwrap();
        let b = item_variate(&item, 3, &plan(8)).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn row_out_of_range() {
        let item = ItemKey::from("x");
        assert_eq!(
            item_variate(&item, 8, &plan(8)),
            Err(Error::RowOutOfRange { row: 8, k: 8 })
        );
        assert!(VariatePlan::new(1, 0).is_err());
    }

    #[test]
    fn seed_and_bytes_matter() {
        let d = item_digest(b"abc", 1);
        assert_ne!(d, item_digest(b"abc", 2));
        assert_ne!(d, item_digest(b"abd", 1));
        // trailing zero bytes are distinguished by the length fold
        assert_ne!(item_digest(b"ab", 1), item_digest(b"ab\0", 1));
        assert_ne!(item_digest(b"", 1), item_digest(b"\0", 1));
    }

    #[test]
    fn batch_matches_single() {
        let p = plan(16);
        let item = ItemKey::from(12345u64);
        let mut out = vec![0.0; 16];
        item_variates(&item, &p, &mut out);
        for (row, v) in out.iter().enumerate() {
            assert_eq!(v.to_bits(), item_variate(&item, row, &p).unwrap().to_bits());
        }
    }

    #[test]
    fn exp_mean_over_items() {
        // E exp(R) = 1 and Var exp(R) = 4 - 1 = 3
        let p = plan(1);
        let n = 100_000;
        let mean = (0..n as u64)
            .map(|i| item_variate(&ItemKey::from(i), 0, &p).unwrap().exp())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.03, "{mean}");
    }
}
