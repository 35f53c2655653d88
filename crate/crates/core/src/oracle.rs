//! Exact entropies of a fully materialized stream, for testing and
//! benchmarking. Memory is O(N) in the number of distinct items.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::hashing::ItemKey;
use crate::sketch::StreamElement;

/// Per-item cumulative quantities `a_j`.
#[derive(Debug, Clone, Default)]
pub struct AccumulationVector {
    counts: HashMap<ItemKey, f64>,
}

impl AccumulationVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_elements<'a, I>(elements: I) -> Self
    where
        I: IntoIterator<Item = &'a StreamElement>,
    {
        let mut acc = Self::new();
        for e in elements {
            acc.add(e);
        }
        acc
    }

    pub fn from_counts<I, K>(counts: I) -> Self
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<ItemKey>,
    {
        let mut acc = Self::new();
        for (k, c) in counts {
            *acc.counts.entry(k.into()).or_insert(0.0) += c;
        }
        acc
    }

    pub fn add(&mut self, element: &StreamElement) {
        *self.counts.entry(element.item.clone()).or_insert(0.0) += element.delta;
    }

    pub fn count(&self, item: &ItemKey) -> f64 {
        self.counts.get(item).copied().unwrap_or(0.0)
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> f64 {
        self.counts.values().sum()
    }

    /// Normalized frequencies of the items with positive count.
    ///
    /// Counts within `1e-12` of the largest magnitude below zero are rounding
    /// residue and count as zero; anything more negative is an error.
    pub fn probabilities(&self) -> Result<Vec<f64>> {
        let scale = self.counts.values().fold(0.0f64, |m, c| m.max(c.abs()));
        let tol = 1e-12 * scale;
        let mut positive = Vec::with_capacity(self.counts.len());
        for (item, &c) in &self.counts {
            if c < -tol {
                return Err(Error::NegativeCount {
                    item: item.to_string(),
                    count: c,
                });
            }
            if c > tol {
                positive.push(c);
            }
        }
        // fixed order so the sums are reproducible
        positive.sort_by(|a, b| a.total_cmp(b));
        let total: f64 = positive.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NonPositiveTotal(total));
        }
        Ok(positive.into_iter().map(|c| c / total).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entropies {
    pub alpha: f64,
    pub shannon: f64,
    pub renyi: f64,
    pub tsallis: f64,
}

impl Entropies {
    /// `δ = Σ p log p = -H`.
    pub fn delta(&self) -> f64 {
        -self.shannon
    }
}

fn power_sum(p: &[f64], alpha: f64) -> f64 {
    p.iter().map(|&x| (alpha * x.ln()).exp()).sum()
}

pub fn shannon_entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) || alpha == 1.0 {
        return Err(Error::Domain(format!(
            "alpha {alpha} must be positive and not 1"
        )));
    }
    Ok(())
}

/// Shannon, Rényi and Tsallis entropies at `alpha`.
pub fn exact_entropies(acc: &AccumulationVector, alpha: f64) -> Result<Entropies> {
    check_alpha(alpha)?;
    let p = acc.probabilities()?;
    let s = power_sum(&p, alpha);
    Ok(Entropies {
        alpha,
        shannon: shannon_entropy(&p),
        renyi: s.ln() / (1.0 - alpha),
        tsallis: (s - 1.0) / (1.0 - alpha),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitResidual {
    pub alpha: f64,
    /// `B_α = (Σ p^α)^{1/α}`.
    pub b_alpha: f64,
    /// `|(B_α - 1)/(1 - α) - S_α|`.
    pub tsallis_residual: f64,
    /// `|log B_α / (1 - α) - H_α|`.
    pub renyi_residual: f64,
    /// `|H_α - H|`.
    pub shannon_gap: f64,
}

/// Residuals of the `α → 1` limits along `alpha_grid`.
pub fn limit_check(acc: &AccumulationVector, alpha_grid: &[f64]) -> Result<Vec<LimitResidual>> {
    let p = acc.probabilities()?;
    let h = shannon_entropy(&p);
    alpha_grid
        .iter()
        .map(|&alpha| {
            check_alpha(alpha)?;
            if alpha >= 2.0 {
                return Err(Error::Domain(format!("alpha {alpha} not below 2")));
            }
            let s = power_sum(&p, alpha);
            let renyi = s.ln() / (1.0 - alpha);
            let tsallis = (s - 1.0) / (1.0 - alpha);
            let b = s.powf(1.0 / alpha);
            Ok(LimitResidual {
                alpha,
                b_alpha: b,
                tsallis_residual: ((b - 1.0) / (1.0 - alpha) - tsallis).abs(),
                renyi_residual: (b.ln() / (1.0 - alpha) - renyi).abs(),
                shannon_gap: (renyi - h).abs(),
            })
        })
        .collect()
}
