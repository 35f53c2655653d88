use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use entsketch::bench::{run_to_csv, ExperimentKind, ExperimentSpec};
use entsketch::estimator::{Provenance, DEFAULT_BIAS_REPS, DEFAULT_BIAS_SEED};
use entsketch::oracle::{exact_entropies, AccumulationVector};
use entsketch::stream::{StreamReader, DEFAULT_DELIMITER};
use entsketch::{
    estimate, merge, required_sketch_size, BiasPolicy, BiasTable, EntropySketch, SketchConfig,
};

#[derive(Parser)]
#[command(
    name = "entsketch",
    version,
    about = "Streaming Shannon entropy sketch"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BiasMode {
    /// Shipped table, simulation for other k
    Mc,
    /// Shipped table, interpolation, then simulation
    Fast,
    /// No bias correction
    None,
}

#[derive(Subcommand)]
enum Command {
    /// Build a sketch from `item[,quantity]` records
    Ingest {
        /// Input file; stdin when omitted
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        k: usize,
        #[arg(long, default_value_t = 1.0)]
        zeta: f64,
        #[arg(long, env = "ENTSKETCH_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_DELIMITER)]
        delimiter: char,
        #[arg(long)]
        output: PathBuf,
    },
    /// Estimate the entropy of a stored sketch
    Estimate {
        sketch: PathBuf,
        #[arg(long, value_enum, default_value_t = BiasMode::Mc)]
        bias: BiasMode,
        /// Replicates when the bias term has to be simulated
        #[arg(long, default_value_t = DEFAULT_BIAS_REPS)]
        reps: usize,
        #[arg(long, default_value_t = DEFAULT_BIAS_SEED)]
        bias_seed: u64,
    },
    /// Merge two sketches built with the same configuration
    Merge {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Smallest k with P(|error| >= epsilon) <= gamma
    Size {
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 1.0)]
        zeta: f64,
    },
    /// Exact entropies of a stream held in memory
    Oracle {
        #[arg(long)]
        input: Option<PathBuf>,
        /// Order of the Rényi and Tsallis entropies
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = DEFAULT_DELIMITER)]
        delimiter: char,
    },
    /// Run a Monte Carlo experiment and write CSV
    Bench {
        /// Experiment file, JSON or key=value lines
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        kind: Option<ExperimentKind>,
        /// Comma-separated sketch widths
        #[arg(long)]
        k: Option<String>,
        /// Comma-separated zeta values
        #[arg(long)]
        zeta: Option<String>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV destination; stdout when omitted
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print a sketch as JSON
    Inspect { sketch: PathBuf },
}

fn open_input(path: Option<&Path>) -> Result<Box<dyn BufRead>> {
    Ok(match path {
        Some(p) => Box::new(BufReader::new(
            File::open(p).with_context(|| format!("opening {}", p.display()))?,
        )),
        None => Box::new(BufReader::new(io::stdin())),
    })
}

fn read_sketch(path: &Path) -> Result<EntropySketch> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    EntropySketch::from_bytes(&bytes).with_context(|| format!("decoding {}", path.display()))
}

fn write_sketch(sketch: &EntropySketch, path: &Path) -> Result<()> {
    std::fs::write(path, sketch.to_bytes()).with_context(|| format!("writing {}", path.display()))
}

fn provenance_label(p: Provenance) -> String {
    match p {
        Provenance::Shipped => "shipped".into(),
        Provenance::Interpolated => "interpolated".into(),
        Provenance::Extrapolated => "extrapolated".into(),
        Provenance::Negligible => "negligible".into(),
        Provenance::MonteCarlo { reps, seed } => format!("monte_carlo(reps={reps},seed={seed})"),
        Provenance::Disabled => "disabled".into(),
    }
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Ingest {
            input,
            k,
            zeta,
            seed,
            delimiter,
            output,
        } => {
            let mut sketch = EntropySketch::new(SketchConfig::new(k, zeta, seed)?)?;
            for element in StreamReader::new(open_input(input.as_deref())?, delimiter) {
                sketch.update(&element?)?;
            }
            write_sketch(&sketch, &output)?;
        }
        Command::Estimate {
            sketch,
            bias,
            reps,
            bias_seed,
        } => {
            let sketch = read_sketch(&sketch)?;
            let policy = match bias {
                BiasMode::Mc => BiasPolicy::MonteCarlo {
                    reps,
                    seed: bias_seed,
                },
                BiasMode::Fast => BiasPolicy::Interpolate {
                    reps,
                    seed: bias_seed,
                },
                BiasMode::None => BiasPolicy::None,
            };
            let r = estimate(&sketch, &BiasTable::shipped().with_policy(policy))?;
            writeln!(out, "k={}", sketch.k())?;
            writeln!(out, "zeta={}", sketch.config().zeta)?;
            writeln!(out, "total={:.16e}", sketch.total())?;
            writeln!(out, "entropy={:.16e}", r.entropy_hat)?;
            writeln!(out, "delta={:.16e}", r.delta_hat)?;
            writeln!(out, "raw_delta={:.16e}", r.raw_delta)?;
            writeln!(out, "bias_correction={:.16e}", r.bias_correction)?;
            writeln!(out, "bias_source={}", provenance_label(r.bias_provenance))?;
            writeln!(out, "std_error={:.16e}", r.asymptotic_se)?;
        }
        Command::Merge { a, b, output } => {
            let merged = merge(&read_sketch(&a)?, &read_sketch(&b)?)?;
            write_sketch(&merged, &output)?;
        }
        Command::Size {
            epsilon,
            gamma,
            zeta,
        } => {
            writeln!(out, "{}", required_sketch_size(epsilon, gamma, zeta)?)?;
        }
        Command::Oracle {
            input,
            alpha,
            delimiter,
        } => {
            let mut acc = AccumulationVector::new();
            for element in StreamReader::new(open_input(input.as_deref())?, delimiter) {
                acc.add(&element?);
            }
            let e = exact_entropies(&acc, alpha)?;
            writeln!(out, "distinct={}", acc.distinct())?;
            writeln!(out, "total={:.16e}", acc.total())?;
            writeln!(out, "shannon={:.16e}", e.shannon)?;
            writeln!(out, "alpha={}", e.alpha)?;
            writeln!(out, "renyi={:.16e}", e.renyi)?;
            writeln!(out, "tsallis={:.16e}", e.tsallis)?;
        }
        Command::Bench {
            spec,
            kind,
            k,
            zeta,
            reps,
            seed,
            output,
        } => {
            let mut s = match &spec {
                Some(p) => ExperimentSpec::parse(
                    &std::fs::read_to_string(p)
                        .with_context(|| format!("reading {}", p.display()))?,
                )?,
                None => ExperimentSpec::default(),
            };
            if let Some(kind) = kind {
                s.kind = kind;
            }
            if let Some(k) = k {
                s.set("k", &k)?;
            }
            if let Some(z) = zeta {
                s.set("zeta", &z)?;
            }
            if let Some(r) = reps {
                s.reps = r;
            }
            if let Some(seed) = seed {
                s.seed = seed;
            }
            if output.is_some() {
                s.output = output;
            }
            s.validate()?;
            match &s.output {
                Some(p) => {
                    let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
                    let mut w = BufWriter::new(f);
                    run_to_csv(&s, &mut w)?;
                    w.flush()?;
                }
                None => run_to_csv(&s, &mut out)?,
            }
        }
        Command::Inspect { sketch } => {
            writeln!(out, "{}", read_sketch(&sketch)?.to_json())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
