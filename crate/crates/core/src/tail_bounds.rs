//! Chernoff tail bounds for the uncorrected log-mean estimator.
//!
//! With `M_ζ(t) = Σ_{j≥0} t^j j^{ζj} / j!` (and `0^0 = 1`), the estimator
//! without bias correction satisfies, for `ζ ≤ 1`,
//!
//! ```text
//! P(δ̂ - δ ≥  ε) < exp(-k ε² / G_R),   ε² / G_R = sup_t [t e^{ζε}  - log M_ζ(t)]
//! P(δ̂ - δ ≤ -ε) < exp(-k ε² / G_L),   ε² / G_L = sup_t [-t e^{-ζε} - log M_ζ(-t)]
//! ```
//!
//! The series converges for every `t` when `ζ < 1` and for `|t| < 1/e` when
//! `ζ = 1`; both suprema are taken over that region. For `ζ > 1` the series
//! diverges and no exponential bound exists.
//!
//! The guarantee applies to the raw log-mean, not to the bias-corrected
//! estimate.

use std::f64::consts::E;
use std::io::Write;

use crate::error::{Error, Result};
use crate::optimize::golden_section_max;

const REL_TOL: f64 = 1e-16;
const MIN_TERMS: usize = 5;
const MAX_TERMS: usize = 2_000_000;
// alternating sums switch to Euler-van Wijngaarden averaging after this many terms
const DIRECT_TERMS: usize = 2_000;
const EULER_DEPTH: usize = 48;
const EDGE_GUARD: f64 = 1e-9;
const SEARCH_TOL: f64 = 1e-10;

/// Region where `M_ζ` converges: `|t| < t_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesDomain {
    pub zeta: f64,
    pub t_max: f64,
}

impl SeriesDomain {
    pub fn new(zeta: f64) -> Result<Self> {
        if !(zeta > 0.0) {
            return Err(Error::Domain(format!("zeta {zeta} must be positive")));
        }
        if zeta > 1.0 {
            return Err(Error::Domain(format!(
                "zeta {zeta} > 1: the series diverges and no exponential tail bound exists"
            )));
        }
        let t_max = if zeta == 1.0 { 1.0 / E } else { f64::INFINITY };
        Ok(Self { zeta, t_max })
    }

    pub fn contains(&self, t: f64) -> bool {
        t.abs() < self.t_max
    }

    /// Upper end of the optimizer's search interval.
    fn search_limit(&self) -> f64 {
        self.t_max * (1.0 - EDGE_GUARD)
    }
}

/// `M_ζ(t)`.
///
/// Positive `t` is summed directly, so at `ζ = 1` the cost grows like
/// `1/(1 - et)`; within about `1e-6` of `1/e` the sum gives up with
/// `NonConvergence`. Negative `t` is accelerated and works up to the edge.
pub fn m_series(zeta: f64, t: f64) -> Result<f64> {
    if t >= 0.0 {
        Ok(log_m_series(zeta, t)?.exp())
    } else {
        let domain = SeriesDomain::new(zeta)?;
        check_domain(&domain, t)?;
        Ok(1.0 + alternating_tail(zeta, -t)?)
    }
}

/// `log M_ζ(t)`, accurate for small `|t|` and without overflow for large `t`.
pub fn log_m_series(zeta: f64, t: f64) -> Result<f64> {
    let domain = SeriesDomain::new(zeta)?;
    check_domain(&domain, t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    if t < 0.0 {
        let tail = alternating_tail(zeta, -t)?;
        if tail <= -1.0 {
            return Err(Error::NonConvergence(format!(
                "M({t}) = {} is not positive",
                1.0 + tail
            )));
        }
        return Ok(tail.ln_1p());
    }
    let ln_tail = positive_tail_ln(zeta, t)?;
    // log(1 + e^s)
    Ok(if ln_tail > 30.0 {
        ln_tail + (-ln_tail).exp().ln_1p()
    } else {
        ln_tail.exp().ln_1p()
    })
}

fn check_domain(domain: &SeriesDomain, t: f64) -> Result<()> {
    if !t.is_finite() || !domain.contains(t) {
        return Err(Error::Domain(format!(
            "t = {t} outside the convergence region |t| < {} for zeta = {}",
            domain.t_max, domain.zeta
        )));
    }
    Ok(())
}

/// Log-magnitudes of the terms `j ≥ 1` of `Σ x^j j^{ζj} / j!`, generated by
/// the ratio `x (j+1)^{ζ-1} (1 + 1/j)^{ζj}`.
struct LogTerms {
    zeta: f64,
    ln_x: f64,
    j: usize,
    current: f64,
}

impl LogTerms {
    fn new(zeta: f64, x: f64) -> Self {
        let ln_x = x.ln();
        Self {
            zeta,
            ln_x,
            j: 1,
            current: ln_x,
        }
    }

    /// Moves to the next term and returns its log-magnitude.
    fn advance(&mut self) -> f64 {
        let j = self.j as f64;
        self.current +=
            self.ln_x + (self.zeta - 1.0) * (j + 1.0).ln() + self.zeta * j * (1.0 / j).ln_1p();
        self.j += 1;
        self.current
    }

    /// Log of a bound on every later term ratio, `x e^ζ (j+1)^{ζ-1}`.
    fn ln_ratio_bound(&self) -> f64 {
        self.ln_x + self.zeta + (self.zeta - 1.0) * ((self.j + 1) as f64).ln()
    }
}

/// `log Σ_{j≥1} x^j j^{ζj} / j!` for `x > 0`.
fn positive_tail_ln(zeta: f64, x: f64) -> Result<f64> {
    let mut terms = LogTerms::new(zeta, x);
    let mut max = terms.current;
    let mut scaled = 1.0;
    for n in 1..MAX_TERMS {
        let next = terms.advance();
        if next > max {
            scaled = scaled * (max - next).exp() + 1.0;
            max = next;
        } else {
            scaled += (next - max).exp();
        }
        let ln_sum = max + scaled.ln();
        let ln_r = terms.ln_ratio_bound();
        if n + 1 >= MIN_TERMS && ln_r < 0.0 {
            // remaining terms are bounded by a geometric series
            let ln_tail = terms.current + ln_r - (-ln_r.exp()).ln_1p();
            if ln_tail < ln_sum + REL_TOL.ln() {
                return Ok(ln_sum);
            }
        }
    }
    Err(Error::NonConvergence(format!(
        "M series at t = {x}, zeta = {zeta} needs more than {MAX_TERMS} terms"
    )))
}

/// `Σ_{j≥1} (-x)^j j^{ζj} / j!` for `x > 0`.
fn alternating_tail(zeta: f64, x: f64) -> Result<f64> {
    let mut terms = LogTerms::new(zeta, x);
    let mut sum = -x;
    let mut largest = x;
    let mut sign = 1.0;
    let mut prev_mag = x;
    for n in 1..MAX_TERMS {
        let mag = terms.advance().exp();
        let decreasing = mag < prev_mag;
        if n + 1 >= MIN_TERMS && decreasing && mag < REL_TOL * (1.0 + sum).abs() {
            return finish_alternating(sum, largest);
        }
        if n >= DIRECT_TERMS && decreasing {
            // smooth, slowly decaying magnitudes: accelerate the remainder
            let mut partial = Vec::with_capacity(EULER_DEPTH + 1);
            let mut s = sum;
            let mut term_mag = mag;
            let mut term_sign = sign;
            for i in 0..=EULER_DEPTH {
                if i > 0 {
                    term_mag = terms.advance().exp();
                }
                s += term_sign * term_mag;
                term_sign = -term_sign;
                partial.push(s);
            }
            while partial.len() > 1 {
                for i in 0..partial.len() - 1 {
                    partial[i] = 0.5 * (partial[i] + partial[i + 1]);
                }
                partial.pop();
            }
            return finish_alternating(partial[0], largest);
        }
        sum += sign * mag;
        sign = -sign;
        largest = largest.max(mag);
        prev_mag = mag;
    }
    Err(Error::NonConvergence(format!(
        "alternating M series at t = -{x}, zeta = {zeta} did not converge"
    )))
}

fn finish_alternating(sum: f64, largest: f64) -> Result<f64> {
    // catastrophic cancellation leaves too few correct digits
    if largest > 1e8 * (1.0 + sum).abs() {
        return Err(Error::NonConvergence(format!(
            "cancellation: largest term {largest:e} against M = {:e}",
            1.0 + sum
        )));
    }
    Ok(sum)
}

/// `t e^{ζε} - log M_ζ(t)`; NaN outside the domain.
pub fn right_objective(zeta: f64, epsilon: f64, t: f64) -> f64 {
    match log_m_series(zeta, t) {
        Ok(lm) => t * (zeta * epsilon).exp() - lm,
        Err(_) => f64::NAN,
    }
}

/// `-t e^{-ζε} - log M_ζ(-t)`; NaN outside the domain.
pub fn left_objective(zeta: f64, epsilon: f64, t: f64) -> f64 {
    match log_m_series(zeta, -t) {
        Ok(lm) => -t * (-zeta * epsilon).exp() - lm,
        Err(_) => f64::NAN,
    }
}

/// `lim_{ε→0} G_R = lim_{ε→0} G_L = 2(4^ζ - 1)/ζ²`.
pub fn limit_constant(zeta: f64) -> f64 {
    2.0 * (4f64.powf(zeta) - 1.0) / (zeta * zeta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailBoundResult {
    pub zeta: f64,
    pub epsilon: f64,
    pub g_right: f64,
    pub g_left: f64,
    pub t_star_right: f64,
    pub t_star_left: f64,
}

impl TailBoundResult {
    /// `exp(-kε²/G_R) + exp(-kε²/G_L)`, the two-sided bound on `P(|δ̂ - δ| ≥ ε)`.
    pub fn two_sided_bound(&self, k: usize) -> f64 {
        let e2 = self.epsilon * self.epsilon * k as f64;
        (-e2 / self.g_right).exp() + (-e2 / self.g_left).exp()
    }
}

fn maximize<F: Fn(f64) -> f64>(domain: &SeriesDomain, seed_t: f64, f: F) -> (f64, f64) {
    let hi = if domain.t_max.is_finite() {
        domain.search_limit()
    } else {
        // concave with f(0) = 0: double until the objective turns down
        let mut hi = seed_t.max(1e-8);
        for _ in 0..200 {
            let (a, b) = (f(hi), f(2.0 * hi));
            if b.is_nan() || b < a {
                break;
            }
            hi *= 2.0;
        }
        2.0 * hi
    };
    let m = golden_section_max(&f, 0.0, hi, SEARCH_TOL);
    (m.arg, m.value)
}

pub fn tail_constants(zeta: f64, epsilon: f64) -> Result<TailBoundResult> {
    let domain = SeriesDomain::new(zeta)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain(format!("epsilon {epsilon} must be positive")));
    }
    // small-ε optimum of the quadratic expansion
    let seed_t = zeta * epsilon / (4f64.powf(zeta) - 1.0);
    let (t_r, q_r) = maximize(&domain, seed_t, |t| right_objective(zeta, epsilon, t));
    let (t_l, q_l) = maximize(&domain, seed_t, |t| left_objective(zeta, epsilon, t));
    if !(q_r > 0.0 && q_l > 0.0) {
        return Err(Error::NonConvergence(format!(
            "tail exponents not positive (right {q_r}, left {q_l}) at zeta {zeta}, epsilon {epsilon}"
        )));
    }
    let e2 = epsilon * epsilon;
    Ok(TailBoundResult {
        zeta,
        epsilon,
        g_right: e2 / q_r,
        g_left: e2 / q_l,
        t_star_right: t_r,
        t_star_left: t_l,
    })
}

/// Smallest `k` with `exp(-kε²/G_R) + exp(-kε²/G_L) ≤ γ`.
///
/// The guarantee is for the log-mean without bias correction.
pub fn required_sketch_size(epsilon: f64, gamma: f64, zeta: f64) -> Result<usize> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!("gamma {gamma} not in (0, 1)")));
    }
    let c = tail_constants(zeta, epsilon)?;
    Ok(smallest_k(&c, gamma))
}

pub(crate) fn smallest_k(c: &TailBoundResult, gamma: f64) -> usize {
    if c.two_sided_bound(1) <= gamma {
        return 1;
    }
    // each tail at most γ/2
    let g = c.g_right.max(c.g_left);
    let mut hi = ((g * (2.0 / gamma).ln() / (c.epsilon * c.epsilon)).ceil() as usize).max(2);
    while c.two_sided_bound(hi) > gamma {
        hi *= 2;
    }
    let mut lo = 1;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if c.two_sided_bound(mid) <= gamma {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

pub fn tail_grid(zeta: f64, epsilons: &[f64]) -> Result<Vec<TailBoundResult>> {
    epsilons.iter().map(|&e| tail_constants(zeta, e)).collect()
}

pub fn write_tail_csv<W: Write>(rows: &[TailBoundResult], mut out: W) -> Result<()> {
    writeln!(out, "zeta,epsilon,g_right,g_left,t_star_right,t_star_left")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.10e},{:.10e},{:.10e},{:.10e}",
            r.zeta, r.epsilon, r.g_right, r.g_left, r.t_star_right, r.t_star_left
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_at_zero() {
        assert_eq!(m_series(1.0, 0.0).unwrap(), 1.0);
        assert_eq!(m_series(0.5, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn series_partial_sums() {
        // 1 + 0.1 + 0.02 + 0.0045 + 0.0010667 + ... summed term by term
        let mut direct = 1.0;
        let mut fact = 1.0;
        for j in 1..60 {
            fact *= j as f64;
            direct += 0.1f64.powi(j) * (j as f64).powi(j) / fact;
        }
        let m = m_series(1.0, 0.1).unwrap();
        assert!((m - direct).abs() < 1e-14, "{m} vs {direct}");
        assert!((m - 1.12590).abs() < 5e-5);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(m_series(1.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(m_series(1.0, -0.5), Err(Error::Domain(_))));
        assert!(matches!(m_series(1.2, 0.01), Err(Error::Domain(_))));
        assert!(m_series(0.5, 3.0).is_ok());
        assert!(tail_constants(1.15, 0.1).is_err());
        assert!(tail_constants(1.0, 0.0).is_err());
        assert!(required_sketch_size(0.1, 1.0, 1.0).is_err());
        assert!(required_sketch_size(0.1, 0.0, 1.0).is_err());
        assert!(required_sketch_size(-0.1, 0.05, 1.0).is_err());
    }

    #[test]
    fn constants_near_limit() {
        let c = tail_constants(1.0, 0.01).unwrap();
        assert!((c.g_right - 6.0).abs() < 0.12, "{c:?}");
        assert!((c.g_left - 6.0).abs() < 0.12, "{c:?}");
        let c = tail_constants(0.5, 1e-3).unwrap();
        assert!((c.g_right - 8.0).abs() < 0.05, "{c:?}");
        assert!((c.g_left - 8.0).abs() < 0.05, "{c:?}");
    }

    #[test]
    fn optimum_is_local_max() {
        for &(zeta, eps) in &[(1.0, 0.05), (1.0, 0.3), (0.7, 0.2)] {
            let c = tail_constants(zeta, eps).unwrap();
            let r = right_objective(zeta, eps, c.t_star_right);
            assert!(right_objective(zeta, eps, c.t_star_right + 1e-4) <= r);
            assert!(right_objective(zeta, eps, c.t_star_right - 1e-4) <= r);
            let l = left_objective(zeta, eps, c.t_star_left);
            assert!(left_objective(zeta, eps, c.t_star_left + 1e-4) <= l);
            assert!(left_objective(zeta, eps, c.t_star_left - 1e-4) <= l);
        }
    }

    #[test]
    fn size_scales_inverse_square() {
        let a = required_sketch_size(0.05, 0.05, 1.0).unwrap();
        let b = required_sketch_size(0.025, 0.05, 1.0).unwrap();
        let ratio = b as f64 / a as f64;
        assert!((3.5..=4.5).contains(&ratio), "{a} {b}");
    }

    #[test]
    fn size_is_minimal() {
        let c = tail_constants(1.0, 0.1).unwrap();
        let k = smallest_k(&c, 0.05);
        assert!(c.two_sided_bound(k) <= 0.05);
        assert!(c.two_sided_bound(k - 1) > 0.05);
        assert_eq!(required_sketch_size(0.1, 0.05, 1.0).unwrap(), k);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let rows = tail_grid(1.0, &[0.1, 0.5]).unwrap();
        let mut buf = Vec::new();
        write_tail_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("zeta,epsilon"));
    }
}
