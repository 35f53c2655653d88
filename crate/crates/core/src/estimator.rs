//! Log-mean recovery of `δ = Σ p_j log p_j` and the Shannon entropy `H = -δ`.
//!
//! For normalized rows `y_1..y_k` and index `ζ > 0`,
//!
//! ```text
//! δ̂ = ζ⁻¹ log(ζ^-ζ k⁻¹ Σ exp(ζ y_j)) - BC
//! ```
//!
//! where `BC` is the small-sample bias of the uncorrected log-mean. `ζ = 1` is
//! the default; `ζ = 1.15` is slightly more efficient but has no exponential
//! tail bound.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::replicate_rng;
use crate::sketch::EntropySketch;
use crate::stable::fill_g0;

/// Fisher information per row about the location of `G(y; δ)`.
pub const FISHER_INFORMATION: f64 = 0.3445;

pub const DEFAULT_ZETA: f64 = 1.0;
pub const OPTIMAL_ZETA: f64 = 1.15;
pub const DEFAULT_BIAS_REPS: usize = 500_000;
pub const DEFAULT_BIAS_SEED: u64 = 0x5EED_B1A5;

const SHIPPED_TABLE: &str = include_str!("../data/bias_table.txt");

/// `ζ⁻¹ log(ζ^-ζ k⁻¹ Σ exp(ζ y_j))`, via a max-shifted log-sum-exp.
pub fn log_mean(ys: &[f64], zeta: f64) -> f64 {
    let max = ys.iter().fold(f64::NEG_INFINITY, |m, &y| m.max(zeta * y));
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = ys.iter().map(|&y| (zeta * y - max).exp()).sum();
    let lse = max + sum.ln();
    (lse - (ys.len() as f64).ln()) / zeta - zeta.ln()
}

/// `ζ² / (0.3445 (4^ζ - 1))`.
pub fn are(zeta: f64) -> f64 {
    zeta * zeta / (FISHER_INFORMATION * (4f64.powf(zeta) - 1.0))
}

/// `sqrt((4^ζ - 1) / (ζ² k))`, the limiting standard deviation of δ̂.
pub fn asymptotic_std_error(k: usize, zeta: f64) -> f64 {
    asymptotic_variance(k, zeta).sqrt()
}

pub fn asymptotic_variance(k: usize, zeta: f64) -> f64 {
    (4f64.powf(zeta) - 1.0) / (zeta * zeta * k as f64)
}

/// `(0.3445 k)⁻¹`.
pub fn cramer_rao_variance(k: usize) -> f64 {
    1.0 / (FISHER_INFORMATION * k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Provenance {
    /// Copied from the shipped table.
    Shipped,
    /// Linear in `1/k` between shipped entries.
    Interpolated,
    /// `BC(150) · 150 / k` for `150 < k ≤ 1000`.
    Extrapolated,
    /// Treated as zero for `k > 1000`.
    Negligible,
    /// Recomputed here by simulation.
    MonteCarlo { reps: usize, seed: u64 },
    /// Bias correction switched off.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasEntry {
    pub k: usize,
    pub zeta: f64,
    pub bc: f64,
    pub std_error: Option<f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BiasPolicy {
    /// Shipped entries where available, simulation otherwise.
    MonteCarlo { reps: usize, seed: u64 },
    /// Shipped entries, interpolation in `1/k`, then simulation.
    Interpolate { reps: usize, seed: u64 },
    /// `BC = 0`: the raw log-mean.
    None,
}

impl Default for BiasPolicy {
    fn default() -> Self {
        BiasPolicy::MonteCarlo {
            reps: DEFAULT_BIAS_REPS,
            seed: DEFAULT_BIAS_SEED,
        }
    }
}

#[derive(Debug)]
pub struct BiasTable {
    shipped: Vec<BiasEntry>,
    policy: BiasPolicy,
    cache: Mutex<HashMap<(usize, u64), BiasEntry>>,
}

impl Default for BiasTable {
    fn default() -> Self {
        Self::shipped()
    }
}

impl BiasTable {
    pub fn shipped() -> Self {
        Self {
            shipped: parse_table(SHIPPED_TABLE).expect("shipped bias table"),
            policy: BiasPolicy::default(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_policy(mut self, policy: BiasPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn policy(&self) -> BiasPolicy {
        self.policy
    }

    pub fn entries(&self) -> &[BiasEntry] {
        &self.shipped
    }

    pub fn lookup(&self, k: usize, zeta: f64) -> Option<&BiasEntry> {
        self.shipped.iter().find(|e| e.k == k && e.zeta == zeta)
    }

    /// The bias to subtract for `(k, ζ)` under this table's policy.
    pub fn resolve(&self, k: usize, zeta: f64) -> Result<BiasEntry> {
        if k == 0 {
            return Err(Error::InvalidConfig("k must be at least 1".into()));
        }
        let (reps, seed) = match self.policy {
            BiasPolicy::None => {
                return Ok(BiasEntry {
                    k,
                    zeta,
                    bc: 0.0,
                    std_error: None,
                    provenance: Provenance::Disabled,
                })
            }
            BiasPolicy::MonteCarlo { reps, seed } => (reps, seed),
            BiasPolicy::Interpolate { reps, seed } => {
                if let Some(e) = self.interpolate(k, zeta) {
                    return Ok(e);
                }
                (reps, seed)
            }
        };
        if let Some(e) = self.lookup(k, zeta) {
            return Ok(*e);
        }
        let key = (k, zeta.to_bits());
        if let Some(e) = self.cache.lock().unwrap().get(&key) {
            return Ok(*e);
        }
        let est = bias_correction(k, zeta, reps, seed)?;
        let entry = BiasEntry {
            k,
            zeta,
            bc: est.value,
            std_error: est.std_error,
            provenance: Provenance::MonteCarlo { reps, seed },
        };
        self.cache.lock().unwrap().insert(key, entry);
        Ok(entry)
    }

    fn interpolate(&self, k: usize, zeta: f64) -> Option<BiasEntry> {
        if let Some(e) = self.lookup(k, zeta) {
            return Some(*e);
        }
        let mut col: Vec<&BiasEntry> = self.shipped.iter().filter(|e| e.zeta == zeta).collect();
        if col.is_empty() {
            return None;
        }
        col.sort_by_key(|e| e.k);
        let first = col[0];
        let last = col[col.len() - 1];
        let entry = |bc: f64, provenance| BiasEntry {
            k,
            zeta,
            bc,
            std_error: None,
            provenance,
        };
        if k < first.k {
            None
        } else if k <= last.k {
            let hi = col.iter().position(|e| e.k > k)?;
            let (a, b) = (col[hi - 1], col[hi]);
            let (xa, xb, x) = (1.0 / a.k as f64, 1.0 / b.k as f64, 1.0 / k as f64);
            let bc = a.bc + (b.bc - a.bc) * (x - xa) / (xb - xa);
            Some(entry(bc, Provenance::Interpolated))
        } else if k <= 1000 {
            Some(entry(
                last.bc * last.k as f64 / k as f64,
                Provenance::Extrapolated,
            ))
        } else {
            log::warn!("bias correction for k = {k} taken as 0 (below 0.002 in magnitude)");
            Some(entry(0.0, Provenance::Negligible))
        }
    }
}

fn parse_table(text: &str) -> Result<Vec<BiasEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::Parse {
            line: i + 1,
            msg: msg.to_string(),
        };
        if fields.len() != 4 {
            return Err(bad("expected k, zeta, bc, std_error"));
        }
        out.push(BiasEntry {
            k: fields[0].parse().map_err(|_| bad("k"))?,
            zeta: fields[1].parse().map_err(|_| bad("zeta"))?,
            bc: fields[2].parse().map_err(|_| bad("bc"))?,
            std_error: Some(fields[3].parse().map_err(|_| bad("std_error"))?),
            provenance: Provenance::Shipped,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateResult {
    /// Bias-corrected estimate of δ.
    pub delta_hat: f64,
    /// `-delta_hat`.
    pub entropy_hat: f64,
    /// The log-mean before the bias correction.
    pub raw_delta: f64,
    pub bias_correction: f64,
    pub asymptotic_se: f64,
    pub bias_provenance: Provenance,
}

/// Estimate from normalized rows with an explicit bias term.
pub fn estimate_rows(ys: &[f64], zeta: f64, bias: &BiasEntry) -> Result<EstimateResult> {
    if ys.is_empty() {
        return Err(Error::InvalidConfig("no rows to estimate from".into()));
    }
    if !(zeta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "zeta {zeta} must be positive"
        )));
    }
    let raw = log_mean(ys, zeta);
    let delta_hat = raw - bias.bc;
    Ok(EstimateResult {
        delta_hat,
        entropy_hat: -delta_hat,
        raw_delta: raw,
        bias_correction: bias.bc,
        asymptotic_se: asymptotic_std_error(ys.len(), zeta),
        bias_provenance: bias.provenance,
    })
}

pub fn estimate(sketch: &EntropySketch, table: &BiasTable) -> Result<EstimateResult> {
    let ys = sketch.normalized()?;
    let zeta = sketch.config().zeta;
    let bias = table.resolve(sketch.k(), zeta)?;
    estimate_rows(&ys, zeta, &bias)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasEstimate {
    pub value: f64,
    /// Replicate standard deviation over `sqrt(reps)`; `None` for one replicate.
    pub std_error: Option<f64>,
    pub reps: usize,
}

/// Monte Carlo `BC = E[ζ⁻¹ log(ζ^-ζ k⁻¹ Σ exp(ζ z_j))]` with `z_j ~ G(z; 0)`.
///
/// Replicate `r` draws from stream `r` of `seed`, so the value does not
/// depend on the number of worker threads.
pub fn bias_correction(k: usize, zeta: f64, reps: usize, seed: u64) -> Result<BiasEstimate> {
    let values = replicate_log_means(k, zeta, reps, seed)?;
    Ok(summarize(&values))
}

/// The per-replicate log-means behind [`bias_correction`], in replicate order.
pub fn replicate_log_means(k: usize, zeta: f64, reps: usize, seed: u64) -> Result<Vec<f64>> {
    if k == 0 || reps == 0 {
        return Err(Error::InvalidConfig("k and reps must be at least 1".into()));
    }
    if !(zeta > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "zeta {zeta} must be positive"
        )));
    }
    Ok((0..reps as u64)
        .into_par_iter()
        .map_init(
            || vec![0.0; k],
            |buf, r| {
                let mut rng = replicate_rng(seed, r);
                fill_g0(&mut rng, buf);
                log_mean(buf, zeta)
            },
        )
        .collect())
}

pub(crate) fn summarize(values: &[f64]) -> BiasEstimate {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std_error = (n > 1).then(|| {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    });
    BiasEstimate {
        value: mean,
        std_error,
        reps: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_bias(k: usize) -> BiasEntry {
        BiasEntry {
            k,
            zeta: 1.0,
            bc: 0.0,
            std_error: None,
            provenance: Provenance::Disabled,
        }
    }

    #[test]
    fn degenerate_rows() {
        let r = estimate_rows(&[0.0; 7], 1.0, &zero_bias(7)).unwrap();
        assert_eq!(r.delta_hat, 0.0);
        assert_eq!(r.entropy_hat, 0.0);
    }

    #[test]
    fn shipped_k10_correction_is_subtracted() {
        let table = BiasTable::shipped();
        let bias = table.resolve(10, 1.0).unwrap();
        assert_eq!(bias.bc, -0.1617);
        assert_eq!(bias.provenance, Provenance::Shipped);
        let r = estimate_rows(&[0.0; 10], 1.0, &bias).unwrap();
        assert!((r.delta_hat - 0.1617).abs() < 1e-15);
        assert_eq!(r.entropy_hat, -r.delta_hat);
    }

    #[test]
    fn shipped_table_is_complete() {
        let table = BiasTable::shipped();
        assert_eq!(table.entries().len(), 30);
        for k in (10..=150).step_by(10) {
            for zeta in [1.0, 1.15] {
                assert!(table.lookup(k, zeta).is_some(), "{k} {zeta}");
            }
        }
        assert_eq!(table.lookup(100, 1.15).unwrap().bc, -0.01719);
        assert_eq!(table.lookup(150, 1.0).unwrap().bc, -0.009971);
        assert_eq!(table.lookup(10, 1.0).unwrap().std_error, Some(8.8584e-4));
    }

    #[test]
    fn interpolation_policy() {
        let table =
            BiasTable::shipped().with_policy(BiasPolicy::Interpolate { reps: 100, seed: 1 });
        let e = table.resolve(15, 1.0).unwrap();
        assert_eq!(e.provenance, Provenance::Interpolated);
        // halfway in 1/k between k = 10 and k = 20 is k = 40/3; k = 15 is past it
        assert!(e.bc < -0.07795 && e.bc > -0.1617);
        let e = table.resolve(300, 1.15).unwrap();
        assert_eq!(e.provenance, Provenance::Extrapolated);
        assert!((e.bc - (-0.01133 / 2.0)).abs() < 1e-15);
        let e = table.resolve(5000, 1.0).unwrap();
        assert_eq!(e.bc, 0.0);
        assert_eq!(e.provenance, Provenance::Negligible);
        // outside the table's ζ column: simulated
        let e = table.resolve(12, 0.8).unwrap();
        assert!(matches!(e.provenance, Provenance::MonteCarlo { .. }));
    }

    #[test]
    fn monte_carlo_policy_caches() {
        let table = BiasTable::shipped().with_policy(BiasPolicy::MonteCarlo {
            reps: 2000,
            seed: 3,
        });
        let a = table.resolve(7, 1.0).unwrap();
        let b = table.resolve(7, 1.0).unwrap();
        assert_eq!(a, b);
        assert!(a.bc < 0.0);
        assert_eq!(
            table.resolve(10, 1.0).unwrap().provenance,
            Provenance::Shipped
        );
        let none = BiasTable::shipped().with_policy(BiasPolicy::None);
        assert_eq!(none.resolve(10, 1.0).unwrap().bc, 0.0);
    }

    #[test]
    fn are_values() {
        assert!((are(1.0) - 0.968).abs() < 0.001);
        assert!((are(1.15) - 0.978).abs() < 0.001);
    }

    #[test]
    fn std_error_values() {
        assert!((asymptotic_std_error(100, 1.0) - 0.17320508075688773).abs() < 1e-15);
        assert_eq!(asymptotic_std_error(3, 1.0), 1.0);
        let expect = ((4f64.powf(1.15) - 1.0) / (1.15 * 1.15 * 100.0)).sqrt();
        assert_eq!(asymptotic_std_error(100, 1.15), expect);
    }

    #[test]
    fn log_mean_handles_large_magnitudes() {
        let ys = [800.0, 799.0, -1e6];
        let lm = log_mean(&ys, 1.0);
        let direct = 800.0 + ((1.0 + (-1.0f64).exp()) / 3.0).ln();
        assert!((lm - direct).abs() < 1e-12);
        assert!(log_mean(&[-1e6, -1e6], 1.0).is_finite());
    }

    #[test]
    fn single_replicate_has_no_std_error() {
        let b = bias_correction(10, 1.0, 1, 9).unwrap();
        let lm = replicate_log_means(10, 1.0, 1, 9).unwrap();
        assert_eq!(b.value, lm[0]);
        assert_eq!(b.std_error, None);
    }

    #[test]
    fn errors() {
        assert!(bias_correction(0, 1.0, 10, 1).is_err());
        assert!(bias_correction(10, 1.0, 0, 1).is_err());
        assert!(BiasTable::shipped().resolve(0, 1.0).is_err());
    }
}
