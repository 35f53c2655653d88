//! Monte Carlo experiments: small-sample bias, MSE against the Cramér-Rao
//! bound, tail constants and end-to-end stream accuracy.
//!
//! Every replicate draws from a generator keyed by `(seed, experiment key,
//! replicate)`, and rows come out in a fixed order, so a spec and seed always
//! produce the same CSV bytes.

use std::io::Write;
use std::path::PathBuf;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    asymptotic_variance, cramer_rao_variance, estimate_rows, log_mean, replicate_log_means,
    summarize, BiasPolicy, BiasTable,
};
use crate::hashing::{mix64, ItemKey};
use crate::oracle::{shannon_entropy, AccumulationVector};
use crate::rng::replicate_rng;
use crate::sketch::{EntropySketch, SketchConfig};
use crate::stable::fill_g0;
use crate::tail_bounds::{tail_constants, TailBoundResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    BiasTable,
    MseCurve,
    TailCurve,
    EndToEnd,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bias_table" => Ok(Self::BiasTable),
            "mse_curve" => Ok(Self::MseCurve),
            "tail_curve" => Ok(Self::TailCurve),
            "end_to_end" => Ok(Self::EndToEnd),
            other => Err(Error::InvalidConfig(format!(
                "unknown experiment kind {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamShape {
    /// Items visited round-robin, so counts are as equal as possible.
    Uniform,
    /// Independent draws with `P(item i) ∝ (i + 1)^-exponent`.
    Zipf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamSpec {
    pub shape: StreamShape,
    pub alphabet: u64,
    pub updates: u64,
    pub exponent: f64,
    /// Feed one update per distinct item carrying its count instead of every
    /// raw update. Same sketch up to fixed-point rounding, far fewer hashes.
    pub aggregate: bool,
}

impl Default for StreamSpec {
    fn default() -> Self {
        Self {
            shape: StreamShape::Uniform,
            alphabet: 4,
            updates: 10_000,
            exponent: 1.2,
            aggregate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub k_values: Vec<usize>,
    pub zeta_values: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// True δ for the MSE experiment; relative MSE divides by its square.
    pub reference_delta: f64,
    pub epsilons: Vec<f64>,
    pub stream: StreamSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::BiasTable,
            k_values: vec![10],
            zeta_values: vec![1.0],
            reps: 10_000,
            seed: 1,
            output: None,
            reference_delta: -(4f64.ln()),
            epsilons: vec![0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
            stream: StreamSpec::default(),
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {s:?}")))
        })
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {v:?}")))
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    /// `key = value` lines; lists are comma separated.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("expected key=value, got {line:?}")))?;
            spec.set(key.trim(), value.trim())?;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Reads JSON when the text starts with `{`, key=value otherwise.
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text)
        } else {
            Self::from_key_values(text)
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "kind" => self.kind = value.parse()?,
            "k" | "k_values" => self.k_values = parse_list(key, value)?,
            "zeta" | "zeta_values" => self.zeta_values = parse_list(key, value)?,
            "reps" => self.reps = parse_one(key, value)?,
            "seed" => self.seed = parse_one(key, value)?,
            "output" => self.output = Some(PathBuf::from(value)),
            "reference_delta" => self.reference_delta = parse_one(key, value)?,
            "epsilon" | "epsilons" => self.epsilons = parse_list(key, value)?,
            "stream" | "shape" => {
                self.stream.shape = match value {
                    "uniform" => StreamShape::Uniform,
                    "zipf" => StreamShape::Zipf,
                    other => return Err(Error::InvalidConfig(format!("unknown stream {other:?}"))),
                }
            }
            "alphabet" => self.stream.alphabet = parse_one(key, value)?,
            "updates" => self.stream.updates = parse_one(key, value)?,
            "exponent" => self.stream.exponent = parse_one(key, value)?,
            "aggregate" => self.stream.aggregate = parse_one(key, value)?,
            other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::InvalidConfig("reps must be at least 1".into()));
        }
        if self.kind != ExperimentKind::TailCurve && self.k_values.contains(&0) {
            return Err(Error::InvalidConfig("k values must be at least 1".into()));
        }
        if self.zeta_values.iter().any(|&z| !(z > 0.0)) {
            return Err(Error::InvalidConfig("zeta values must be positive".into()));
        }
        if self.kind == ExperimentKind::EndToEnd {
            let s = &self.stream;
            if s.alphabet == 0 {
                return Err(Error::InvalidConfig(
                    "stream alphabet must be non-empty".into(),
                ));
            }
            if s.shape == StreamShape::Zipf && !(s.exponent > 0.0) {
                return Err(Error::InvalidConfig(
                    "zipf exponent must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

fn stream_key(seed: u64, k: usize) -> u64 {
    mix64(seed ^ mix64(k as u64))
}

fn sorted_grid(spec: &ExperimentSpec) -> Vec<(usize, f64)> {
    let mut ks = spec.k_values.clone();
    ks.sort_unstable();
    ks.dedup();
    let mut zetas = spec.zeta_values.clone();
    zetas.sort_by(|a, b| a.total_cmp(b));
    zetas.dedup();
    ks.iter()
        .flat_map(|&k| zetas.iter().map(move |&z| (k, z)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasRow {
    pub k: usize,
    pub zeta: f64,
    pub bc: f64,
    pub std_error: Option<f64>,
    pub reps: usize,
}

pub fn run_bias_table(spec: &ExperimentSpec) -> Result<Vec<BiasRow>> {
    spec.validate()?;
    sorted_grid(spec)
        .into_iter()
        .map(|(k, zeta)| {
            let est = summarize(&replicate_log_means(
                k,
                zeta,
                spec.reps,
                stream_key(spec.seed, k),
            )?);
            Ok(BiasRow {
                k,
                zeta,
                bc: est.value,
                std_error: est.std_error,
                reps: est.reps,
            })
        })
        .collect()
}

pub fn write_bias_csv<W: Write>(rows: &[BiasRow], mut out: W) -> Result<()> {
    writeln!(out, "k,zeta,bc,std_error,reps")?;
    for r in rows {
        let se = r.std_error.map_or("NA".to_string(), |s| format!("{s:.6e}"));
        writeln!(out, "{},{},{:.8e},{},{}", r.k, r.zeta, r.bc, se, r.reps)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseRow {
    pub k: usize,
    pub zeta: f64,
    pub reps: usize,
    pub bias_correction: f64,
    pub mean_error: f64,
    pub variance: f64,
    pub mse: f64,
    pub relative_mse: f64,
    pub asymptotic_variance: f64,
    pub cramer_rao: f64,
    pub relative_cramer_rao: f64,
}

/// Empirical error of the bias-corrected estimator over `reps` replicates of
/// `y_j = δ + z_j`. All ζ values at one k share the same draws.
pub fn run_mse_curve(spec: &ExperimentSpec) -> Result<Vec<MseRow>> {
    run_mse_curve_with(
        spec,
        &BiasTable::shipped().with_policy(BiasPolicy::MonteCarlo {
            reps: 500_000,
            seed: spec.seed ^ 0xB1A5,
        }),
    )
}

pub fn run_mse_curve_with(spec: &ExperimentSpec, table: &BiasTable) -> Result<Vec<MseRow>> {
    spec.validate()?;
    let delta = spec.reference_delta;
    if delta == 0.0 || !delta.is_finite() {
        return Err(Error::InvalidConfig(
            "relative MSE needs a finite non-zero reference delta".into(),
        ));
    }
    let mut rows = Vec::new();
    for (k, zeta) in sorted_grid(spec) {
        let bc = table.resolve(k, zeta)?.bc;
        let key = stream_key(spec.seed, k);
        let errors: Vec<f64> = (0..spec.reps as u64)
            .into_par_iter()
            .map_init(
                || vec![0.0; k],
                |buf, r| {
                    let mut rng = replicate_rng(key, r);
                    fill_g0(&mut rng, buf);
                    for y in buf.iter_mut() {
                        *y += delta;
                    }
                    log_mean(buf, zeta) - bc - delta
                },
            )
            .collect();
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let mse = errors.iter().map(|e| e * e).sum::<f64>() / n;
        let variance = if errors.len() > 1 {
            errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        let cr = cramer_rao_variance(k);
        rows.push(MseRow {
            k,
            zeta,
            reps: spec.reps,
            bias_correction: bc,
            mean_error: mean,
            variance,
            mse,
            relative_mse: mse / (delta * delta),
            asymptotic_variance: asymptotic_variance(k, zeta),
            cramer_rao: cr,
            relative_cramer_rao: cr / (delta * delta),
        });
    }
    Ok(rows)
}

pub fn write_mse_csv<W: Write>(rows: &[MseRow], mut out: W) -> Result<()> {
    writeln!(
        out,
        "k,zeta,reps,bias_correction,mean_error,variance,mse,relative_mse,asymptotic_variance,cramer_rao,relative_cramer_rao"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
            r.k,
            r.zeta,
            r.reps,
            r.bias_correction,
            r.mean_error,
            r.variance,
            r.mse,
            r.relative_mse,
            r.asymptotic_variance,
            r.cramer_rao,
            r.relative_cramer_rao
        )?;
    }
    Ok(())
}

pub fn run_tail_curve(spec: &ExperimentSpec) -> Result<Vec<TailBoundResult>> {
    let mut zetas = spec.zeta_values.clone();
    zetas.sort_by(|a, b| a.total_cmp(b));
    zetas.dedup();
    let mut eps = spec.epsilons.clone();
    eps.sort_by(|a, b| a.total_cmp(b));
    eps.dedup();
    zetas
        .iter()
        .flat_map(|&z| eps.iter().map(move |&e| tail_constants(z, e)))
        .collect()
}

/// Per-item counts of one synthetic stream, indexed by item id.
pub fn generate_counts<R: Rng + ?Sized>(stream: &StreamSpec, rng: &mut R) -> Result<Vec<f64>> {
    let mut counts = vec![0.0; stream.alphabet as usize];
    for_each_update(stream, rng, |item| counts[item as usize] += 1.0)?;
    Ok(counts)
}

/// Calls `f` with the item id of every update, in stream order.
pub fn for_each_update<R, F>(stream: &StreamSpec, rng: &mut R, mut f: F) -> Result<()>
where
    R: Rng + ?Sized,
    F: FnMut(u64),
{
    match stream.shape {
        StreamShape::Uniform => {
            for t in 0..stream.updates {
                f(t % stream.alphabet);
            }
        }
        StreamShape::Zipf => {
            let weights = (1..=stream.alphabet)
                .map(|i| (i as f64).powf(-stream.exponent))
                .collect();
            let zipf = WeightedAliasIndex::new(weights)
                .map_err(|e| Error::InvalidConfig(format!("zipf: {e}")))?;
            for _ in 0..stream.updates {
                f(zipf.sample(rng) as u64);
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndToEndRow {
    pub replicate: usize,
    pub k: usize,
    pub zeta: f64,
    pub entropy_hat: f64,
    pub entropy_true: f64,
    pub error: f64,
    pub asymptotic_se: f64,
}

/// Builds a sketch of a synthetic stream per replicate and compares its
/// estimate with the exact entropy. Each replicate gets its own stream and its
/// own hash seed.
pub fn run_end_to_end(spec: &ExperimentSpec) -> Result<Vec<EndToEndRow>> {
    run_end_to_end_with(spec, &BiasTable::shipped())
}

pub fn run_end_to_end_with(spec: &ExperimentSpec, table: &BiasTable) -> Result<Vec<EndToEndRow>> {
    spec.validate()?;
    let mut rows = Vec::new();
    for (k, zeta) in sorted_grid(spec) {
        let bias = table.resolve(k, zeta)?;
        let key = stream_key(spec.seed, k);
        let batch: Vec<Result<EndToEndRow>> = (0..spec.reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = replicate_rng(key, r as u64);
                let hash_seed = rng.random::<u64>();
                let config = SketchConfig::new(k, zeta, hash_seed)?;
                let mut sketch = EntropySketch::new(config)?;
                let counts = if spec.stream.aggregate {
                    let counts = generate_counts(&spec.stream, &mut rng)?;
                    for (item, &c) in counts.iter().enumerate() {
                        if c != 0.0 {
                            sketch.insert(&ItemKey::from(item as u64), c)?;
                        }
                    }
                    counts
                } else {
                    let mut counts = vec![0.0; spec.stream.alphabet as usize];
                    let mut failure = None;
                    for_each_update(&spec.stream, &mut rng, |item| {
                        counts[item as usize] += 1.0;
                        if failure.is_none() {
                            failure = sketch.insert(&ItemKey::from(item), 1.0).err();
                        }
                    })?;
                    if let Some(e) = failure {
                        return Err(e);
                    }
                    counts
                };
                let acc = AccumulationVector::from_counts(
                    counts.iter().enumerate().map(|(i, &c)| (i as u64, c)),
                );
                let truth = shannon_entropy(&acc.probabilities()?);
                let est = estimate_rows(&sketch.normalized()?, zeta, &bias)?;
                Ok(EndToEndRow {
                    replicate: r,
                    k,
                    zeta,
                    entropy_hat: est.entropy_hat,
                    entropy_true: truth,
                    error: est.entropy_hat - truth,
                    asymptotic_se: est.asymptotic_se,
                })
            })
            .collect();
        for row in batch {
            rows.push(row?);
        }
    }
    Ok(rows)
}

pub fn write_end_to_end_csv<W: Write>(rows: &[EndToEndRow], mut out: W) -> Result<()> {
    writeln!(
        out,
        "replicate,k,zeta,entropy_hat,entropy_true,error,asymptotic_se"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.10e},{:.10e},{:.10e},{:.10e}",
            r.replicate, r.k, r.zeta, r.entropy_hat, r.entropy_true, r.error, r.asymptotic_se
        )?;
    }
    Ok(())
}

/// Runs the experiment named by `spec.kind` and writes its CSV.
pub fn run_to_csv<W: Write>(spec: &ExperimentSpec, out: W) -> Result<()> {
    match spec.kind {
        ExperimentKind::BiasTable => write_bias_csv(&run_bias_table(spec)?, out),
        ExperimentKind::MseCurve => write_mse_csv(&run_mse_curve(spec)?, out),
        ExperimentKind::TailCurve => {
            crate::tail_bounds::write_tail_csv(&run_tail_curve(spec)?, out)
        }
        ExperimentKind::EndToEnd => write_end_to_end_csv(&run_end_to_end(spec)?, out),
    }
}
