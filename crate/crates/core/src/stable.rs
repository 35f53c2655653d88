//! The maximally skewed 1-stable law used for projections.
//!
//! The projection law `G(x; 0)` has characteristic function
//! `exp(-π|θ|/2 + iθ log|θ|)`, equivalently `(iθ)^{iθ}`. In the
//! `(α, β, γ, δ)` parameterization with
//! `φ(θ) = exp(γ[-|θ| - iθβ(2/π) log|θ|] + iδθ)` for `α = 1`, that is
//! `α = 1, β = -1, γ = π/2, δ = 0`. The sign of `β` was fixed by checking
//! `E[exp(kX)] = k^k` against samples, not by convention alone.
//!
//! Samples come from the Chambers-Mallows-Stuck transform of a uniform angle
//! and a standard exponential.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::RngCore;

use crate::error::{Error, Result};

const TWO_OVER_PI: f64 = 2.0 / PI;

/// Maps a 64-bit word into the open interval (0, 1).
///
/// Uses the top 52 bits so that `(m + 0.5) * 2^-52` is exactly representable
/// and can never round to 0 or 1.
#[inline]
pub fn open_unit(word: u64) -> f64 {
    const SCALE: f64 = 1.0 / (1u64 << 52) as f64;
    ((word >> 12) as f64 + 0.5) * SCALE
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl StableParams {
    /// Parameters of `G(x; 0)`.
    pub const G0: StableParams = StableParams {
        alpha: 1.0,
        beta: -1.0,
        gamma: FRAC_PI_2,
        delta: 0.0,
    };

    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::Domain(format!("alpha {alpha} not in (0, 2]")));
        }
        if !(-1.0..=1.0).contains(&beta) {
            return Err(Error::Domain(format!("beta {beta} not in [-1, 1]")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Domain(format!("gamma {gamma} must be positive")));
        }
        if !delta.is_finite() {
            return Err(Error::Domain(format!("delta {delta} must be finite")));
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            delta,
        })
    }

    /// Unit scale, zero location, `α = 1` with the given skewness.
    pub fn standard(beta: f64) -> Result<Self> {
        Self::new(1.0, beta, 1.0, 0.0)
    }
}

/// Inputs to the CMS transform: an angle uniform on (-π/2, π/2) and a
/// standard exponential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformExpPair {
    pub u: f64,
    pub w: f64,
}

impl UniformExpPair {
    pub fn new(u: f64, w: f64) -> Result<Self> {
        if !(u > -FRAC_PI_2 && u < FRAC_PI_2) {
            return Err(Error::Domain(format!("u {u} not in (-pi/2, pi/2)")));
        }
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Domain(format!("w {w} must be positive")));
        }
        Ok(Self { u, w })
    }

    /// Builds a pair from two raw 64-bit words. Fails only on the
    /// floating-point edge cases the sampler redraws on.
    #[inline]
    pub fn from_words(a: u64, b: u64) -> Result<Self> {
        let u = PI * (open_unit(a) - 0.5);
        let w = -open_unit(b).ln();
        Self::new(u, w)
    }
}

/// Chambers-Mallows-Stuck transform for `α = 1`.
///
/// With unit scale, `X = (2/π)[(π/2 + βu) tan u - β log((π/2) w cos u / (π/2 + βu))]`;
/// scale and location then map it to `γX + (2/π)βγ log γ + δ`.
pub fn cms_transform(pair: UniformExpPair, params: &StableParams) -> Result<f64> {
    if params.alpha != 1.0 {
        return Err(Error::Domain(format!(
            "cms_transform handles alpha = 1 only, got {}",
            params.alpha
        )));
    }
    let UniformExpPair { u, w } = UniformExpPair::new(pair.u, pair.w)?;
    let beta = params.beta;
    let skew = FRAC_PI_2 + beta * u;
    if skew <= 0.0 {
        return Err(Error::Domain(format!(
            "degenerate angle {u} for beta {beta}"
        )));
    }
    let x = TWO_OVER_PI * (skew * u.tan() - beta * (FRAC_PI_2 * w * u.cos() / skew).ln());
    let gamma = params.gamma;
    let out = gamma * x + TWO_OVER_PI * beta * gamma * gamma.ln() + params.delta;
    if out.is_finite() {
        Ok(out)
    } else {
        Err(Error::Domain(format!(
            "non-finite variate from u={u}, w={w}"
        )))
    }
}

/// `G(x; 0)` from a pair. Algebraically equal to `cms_transform(pair, &G0)`:
/// substituting `v = π/2 - u` the scale and shift cancel, leaving
/// `v cot v + log(w sin v / v)`.
#[inline]
pub fn g0_transform(pair: UniformExpPair) -> f64 {
    let v = FRAC_PI_2 - pair.u;
    let (s, c) = v.sin_cos();
    v * c / s + (pair.w * s / v).ln()
}

/// Draws a pair, redrawing on the floating-point edge cases.
pub fn sample_pair<R: RngCore + ?Sized>(rng: &mut R) -> UniformExpPair {
    loop {
        if let Ok(pair) = UniformExpPair::from_words(rng.next_u64(), rng.next_u64()) {
            return pair;
        }
    }
}

/// One draw from `G(x; 0)`.
pub fn sample_g0<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let x = g0_transform(sample_pair(rng));
        if x.is_finite() {
            return x;
        }
    }
}

/// Fills `out` with independent `G(x; 0)` draws.
pub fn fill_g0<R: RngCore + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for x in out.iter_mut() {
        *x = sample_g0(rng);
    }
}

/// Characteristic function of `G(x; 0)`: `exp(-π|θ|/2 + iθ log|θ|)`.
pub fn char_fn(theta: f64) -> Complex64 {
    if theta == 0.0 {
        return Complex64::new(1.0, 0.0);
    }
    let a = theta.abs();
    Complex64::new(-FRAC_PI_2 * a, theta * a.ln()).exp()
}

/// `E[exp(kX)]` for `X ~ G(x; 0)`, i.e. `k^k` with `0^0 = 1`.
pub fn exp_moment(k: f64) -> f64 {
    if k == 0.0 {
        1.0
    } else {
        k.powf(k)
    }
}

/// Positive strictly stable variate with Laplace transform `exp(-λ^α)`,
/// `0 < α < 1`, from the CMS transform with `β = 1` (Kanter's form).
pub fn positive_stable_transform(alpha: f64, pair: UniformExpPair) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} not in (0, 1)")));
    }
    let v = pair.u + FRAC_PI_2;
    let ln_z = (alpha * v).sin().ln() - v.sin().ln() / alpha
        + (1.0 - alpha) / alpha * (((1.0 - alpha) * v).sin().ln() - pair.w.ln());
    let z = ln_z.exp();
    if z.is_finite() && z > 0.0 {
        Ok(z)
    } else {
        Err(Error::Domain(format!(
            "degenerate positive stable draw at u={}",
            pair.u
        )))
    }
}

pub fn sample_positive_stable<R: RngCore + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} not in (0, 1)")));
    }
    loop {
        if let Ok(z) = positive_stable_transform(alpha, sample_pair(rng)) {
            return Ok(z);
        }
    }
}

/// `Y_α = (1 - Z_α)/(1 - α) + log(1 - α)`; its law tends to `G(x; 0)` as `α → 1`.
pub fn y_alpha_transform(alpha: f64, z: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} not in (0, 1)")));
    }
    let gap = 1.0 - alpha;
    Ok((1.0 - z) / gap + gap.ln())
}

pub fn sample_y_alpha<R: RngCore + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    let z = sample_positive_stable(alpha, rng)?;
    y_alpha_transform(alpha, z)
}

/// Closed-form `E[exp(θ Y_α)] = (1-α)^θ exp(θ/(1-α) - (θ/(1-α))^α)` for `θ > 0`.
pub fn y_alpha_mgf(alpha: f64, theta: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} not in (0, 1)")));
    }
    if !(theta > 0.0) {
        return Err(Error::Domain(format!("theta {theta} must be positive")));
    }
    let gap = 1.0 - alpha;
    let x = theta / gap;
    // x - x^α = -x (x^{α-1} - 1), kept accurate for α near 1
    let excess = -x * ((alpha - 1.0) * x.ln()).exp_m1();
    Ok((theta * gap.ln() + excess).exp())
}
