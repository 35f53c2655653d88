//! Streaming Shannon entropy of turnstile streams from maximally skewed
//! 1-stable projections.
//!
//! Each item type is hashed to `k` independent draws from `G(x; 0)`, the
//! stable law with characteristic function `(iθ)^{iθ}`. The sketch keeps the
//! `k` weighted sums plus the total weight; each normalized row is then a draw
//! from `G(y; δ)` with `δ = Σ p_j log p_j`, and the entropy `H = -δ` is
//! recovered with a bias-corrected log-mean.
//!
//! ```
//! use entsketch::{estimate, BiasTable, EntropySketch, SketchConfig, StreamElement};
//!
//! let mut sketch = EntropySketch::new(SketchConfig::new(200, 1.0, 7).unwrap()).unwrap();
//! for item in ["a", "b", "c", "d"] {
//!     sketch.update(&StreamElement::new(item, 25.0)).unwrap();
//! }
//! let est = estimate(&sketch, &BiasTable::shipped()).unwrap();
//! assert!((est.entropy_hat - 4f64.ln()).abs() < 4.0 * est.asymptotic_se);
//! ```

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod estimator;
pub mod hashing;
pub mod optimize;
pub mod oracle;
pub mod rng;
pub mod sketch;
pub mod stable;
pub mod stream;
pub mod tail_bounds;

pub use error::{Error, Result};
pub use estimator::{
    are, asymptotic_std_error, bias_correction, estimate, BiasPolicy, BiasTable, EstimateResult,
};
pub use hashing::{item_variate, ItemKey, VariatePlan};
pub use oracle::{exact_entropies, limit_check, AccumulationVector, Entropies};
pub use sketch::{merge, EntropySketch, SketchConfig, StreamElement};
pub use stable::{char_fn, sample_g0, StableParams, UniformExpPair};
pub use tail_bounds::{m_series, required_sketch_size, tail_constants, TailBoundResult};
