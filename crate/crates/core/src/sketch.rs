//! The k-row linear projection of a turnstile stream.
//!
//! Row `l` holds `Σ_t R_l(i_t) d_t` and the sketch also carries `Σ_t d_t`, so
//! `projections[l] / total` is one draw from `G(y; Σ p_j log p_j)`.
//!
//! # Precision contract
//!
//! Every increment `R_l(i) · d` is rounded once to a multiple of
//! `2^-56` and accumulated in an `i128`. Integer accumulation is exact, so
//! the final state does not depend on ingestion order, merging is
//! associative and bit-identical to ingesting the concatenated stream, and
//! appending the negation of every element returns the sketch to exactly
//! zero. The representable range is about `±2.4e21` per row; an update that
//! would leave it fails with [`Error::Overflow`] and leaves the sketch
//! untouched.
//!
//! The relaxed strict-turnstile requirement (every item's final count is
//! non-negative) is the caller's responsibility; the sketch cannot see
//! per-item counts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::{digest_variate, item_digest, ItemKey, VariatePlan};

/// Fractional bits of the fixed-point accumulators.
pub const FRAC_BITS: u32 = 56;
const FIXED_ONE: f64 = (1u64 << FRAC_BITS) as f64;
const FIXED_LIMIT: f64 = 1.7e38; // just under i128::MAX

pub const MAGIC: [u8; 4] = *b"ESKT";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 1 + 4 + 8 + 8 + 16;

/// Below this magnitude the cheap i64 conversion is exact.
const I64_SAFE: f64 = 9.0e18;

#[inline]
fn to_fixed(x: f64) -> Result<i128> {
    let scaled = x * FIXED_ONE;
    if !scaled.is_finite() {
        return Err(Error::NonFinite(x));
    }
    if scaled.abs() >= FIXED_LIMIT {
        return Err(Error::Overflow);
    }
    // f64::round is symmetric, so to_fixed(-x) == -to_fixed(x)
    let r = scaled.round();
    if r.abs() < I64_SAFE {
        Ok(r as i64 as i128)
    } else {
        Ok(r as i128)
    }
}

#[inline]
fn from_fixed(v: i128) -> f64 {
    v as f64 / FIXED_ONE
}

#[derive(Debug, Clone, PartialEq)]
pub struct StreamElement {
    pub item: ItemKey,
    pub delta: f64,
}

impl StreamElement {
    pub fn new(item: impl Into<ItemKey>, delta: f64) -> Self {
        Self {
            item: item.into(),
            delta,
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            item: self.item.clone(),
            delta: -self.delta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SketchConfig {
    pub k: usize,
    pub zeta: f64,
    pub master_seed: u64,
}

impl SketchConfig {
    pub fn new(k: usize, zeta: f64, master_seed: u64) -> Result<Self> {
        let config = Self {
            k,
            zeta,
            master_seed,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig(
                "sketch width k must be at least 1".into(),
            ));
        }
        if self.k > u32::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "sketch width {} too large",
                self.k
            )));
        }
        if !(self.zeta > 0.0 && self.zeta.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "zeta {} must be positive",
                self.zeta
            )));
        }
        Ok(())
    }

    pub fn plan(&self) -> VariatePlan {
        VariatePlan {
            master_seed: self.master_seed,
            k: self.k,
        }
    }

    fn same_as(&self, other: &SketchConfig) -> Result<()> {
        if self.k != other.k {
            return Err(Error::ConfigMismatch(format!(
                "k {} vs {}",
                self.k, other.k
            )));
        }
        if self.zeta.to_bits() != other.zeta.to_bits() {
            return Err(Error::ConfigMismatch(format!(
                "zeta {} vs {}",
                self.zeta, other.zeta
            )));
        }
        if self.master_seed != other.master_seed {
            return Err(Error::ConfigMismatch(format!(
                "seed {} vs {}",
                self.master_seed, other.master_seed
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct EntropySketch {
    config: SketchConfig,
    projections: Vec<i128>,
    total: i128,
    // next row values, swapped in only when every row succeeded
    staged: Vec<i128>,
}

impl PartialEq for EntropySketch {
    fn eq(&self, other: &Self) -> bool {
        self.config.k == other.config.k
            && self.config.zeta.to_bits() == other.config.zeta.to_bits()
            && self.config.master_seed == other.config.master_seed
            && self.total == other.total
            && self.projections == other.projections
    }
}

impl EntropySketch {
    pub fn new(config: SketchConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            projections: vec![0; config.k],
            total: 0,
            staged: vec![0; config.k],
        })
    }

    pub fn config(&self) -> &SketchConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn total(&self) -> f64 {
        from_fixed(self.total)
    }

    pub fn raw_total(&self) -> i128 {
        self.total
    }

    pub fn raw_projections(&self) -> &[i128] {
        &self.projections
    }

    pub fn projections(&self) -> Vec<f64> {
        self.projections.iter().map(|&v| from_fixed(v)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.total == 0 && self.projections.iter().all(|&v| v == 0)
    }

    /// `y_l = projections[l] / total`, one draw per row from `G(y; δ)`.
    pub fn normalized(&self) -> Result<Vec<f64>> {
        if self.total <= 0 {
            return Err(Error::NonPositiveTotal(self.total()));
        }
        let total = self.total as f64;
        Ok(self.projections.iter().map(|&v| v as f64 / total).collect())
    }

    /// Adds `R_l(item) · delta` to every row and `delta` to the total.
    pub fn update(&mut self, element: &StreamElement) -> Result<()> {
        self.insert(&element.item, element.delta)
    }

    pub fn insert(&mut self, item: &ItemKey, delta: f64) -> Result<()> {
        if !delta.is_finite() {
            return Err(Error::NonFinite(delta));
        }
        let total = self
            .total
            .checked_add(to_fixed(delta)?)
            .ok_or(Error::Overflow)?;
        let digest = item_digest(item.as_bytes(), self.config.master_seed);
        for (row, (next, &cur)) in self.staged.iter_mut().zip(&self.projections).enumerate() {
            let inc = to_fixed(digest_variate(digest, row) * delta)?;
            *next = cur.checked_add(inc).ok_or(Error::Overflow)?;
        }
        std::mem::swap(&mut self.projections, &mut self.staged);
        self.total = total;
        Ok(())
    }

    pub fn extend<'a, I>(&mut self, elements: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a StreamElement>,
    {
        for e in elements {
            self.update(e)?;
        }
        Ok(())
    }

    /// Adds `other` into `self`. Both sketches must share k, ζ and seed.
    pub fn merge_from(&mut self, other: &EntropySketch) -> Result<()> {
        self.config.same_as(&other.config)?;
        let total = self.total.checked_add(other.total).ok_or(Error::Overflow)?;
        for ((next, &a), &b) in self
            .staged
            .iter_mut()
            .zip(&self.projections)
            .zip(&other.projections)
        {
            *next = a.checked_add(b).ok_or(Error::Overflow)?;
        }
        std::mem::swap(&mut self.projections, &mut self.staged);
        self.total = total;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 16 * self.config.k);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(FRAC_BITS as u8);
        out.push(0);
        out.extend_from_slice(&(self.config.k as u32).to_le_bytes());
        out.extend_from_slice(&self.config.zeta.to_le_bytes());
        out.extend_from_slice(&self.config.master_seed.to_le_bytes());
        out.extend_from_slice(&self.total.to_le_bytes());
        for v in &self.projections {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Malformed(format!(
                "{} bytes is shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if bytes[0..4] != MAGIC {
            return Err(Error::Malformed("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Version(version));
        }
        if bytes[6] as u32 != FRAC_BITS {
            return Err(Error::Malformed(format!(
                "fixed-point scale 2^-{} unsupported",
                bytes[6]
            )));
        }
        let k = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let zeta = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let master_seed = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
        let total = i128::from_le_bytes(bytes[28..44].try_into().unwrap());
        let expected = HEADER_LEN + 16 * k;
        if bytes.len() != expected {
            return Err(Error::Malformed(format!(
                "expected {expected} bytes for k = {k}, found {}",
                bytes.len()
            )));
        }
        let config =
            SketchConfig::new(k, zeta, master_seed).map_err(|e| Error::Malformed(e.to_string()))?;
        let projections = bytes[HEADER_LEN..]
            .chunks_exact(16)
            .map(|c| i128::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            config,
            projections,
            total,
            staged: vec![0; k],
        })
    }

    pub fn to_json(&self) -> String {
        let doc = SketchJson {
            version: FORMAT_VERSION,
            frac_bits: FRAC_BITS,
            k: self.config.k,
            zeta: self.config.zeta,
            master_seed: self.config.master_seed,
            total: self.total(),
            total_fixed: self.total.to_string(),
            projections: self.projections(),
            projections_fixed: self.projections.iter().map(|v| v.to_string()).collect(),
        };
        serde_json::to_string_pretty(&doc).expect("sketch json")
    }

    /// Parses the JSON debug form. The fixed-point fields are authoritative;
    /// the floating-point ones are for reading only.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: SketchJson =
            serde_json::from_str(s).map_err(|e| Error::Malformed(e.to_string()))?;
        if doc.version != FORMAT_VERSION {
            return Err(Error::Version(doc.version));
        }
        if doc.frac_bits != FRAC_BITS {
            return Err(Error::Malformed(format!(
                "fixed-point scale 2^-{} unsupported",
                doc.frac_bits
            )));
        }
        let config = SketchConfig::new(doc.k, doc.zeta, doc.master_seed)
            .map_err(|e| Error::Malformed(e.to_string()))?;
        let parse = |s: &str| {
            s.parse::<i128>()
                .map_err(|e| Error::Malformed(format!("{s}: {e}")))
        };
        let total = parse(&doc.total_fixed)?;
        let projections = doc
            .projections_fixed
            .iter()
            .map(|s| parse(s))
            .collect::<Result<Vec<_>>>()?;
        if projections.len() != doc.k {
            return Err(Error::Malformed(format!(
                "{} projections for k = {}",
                projections.len(),
                doc.k
            )));
        }
        Ok(Self {
            config,
            projections,
            total,
            staged: vec![0; doc.k],
        })
    }
}

/// Sum of two sketches built with the same configuration.
pub fn merge(a: &EntropySketch, b: &EntropySketch) -> Result<EntropySketch> {
    let mut out = a.clone();
    out.merge_from(b)?;
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct SketchJson {
    version: u16,
    frac_bits: u32,
    k: usize,
    zeta: f64,
    master_seed: u64,
    total: f64,
    total_fixed: String,
    projections: Vec<f64>,
    projections_fixed: Vec<String>,
}
