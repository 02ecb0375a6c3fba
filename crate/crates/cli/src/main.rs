use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cachenet::harness::{
    generate, kappa_sweep, run_comparison, scaling_sweep, table_preset, write_results_csv, write_trajectory_csv,
    Algorithm, GenConfig, RunMeta, SolverConfigs,
};
use cachenet::model::{feasibility_report, validate_instance};
use cachenet::placement::{estimate_marginals, monte_carlo_load, plan_network, write_samples_csv};
use cachenet::{Instance, Strategy};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

/// Environment variable holding the worker thread count.
const THREADS_VAR: &str = "CACHENET_THREADS";

#[derive(Parser)]
#[command(name = "cachenet", version, about = "Joint rate control and cache placement solver")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// Generator configuration (JSON).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Benchmark parameter row, e.g. `cycle` or `grid-2d`.
    #[arg(long)]
    preset: Option<String>,
    /// Overrides the looseness coefficient of the configuration.
    #[arg(long)]
    kappa: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance.
    Gen {
        #[command(flatten)]
        source: Source,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Solve one instance with one algorithm.
    Solve {
        #[arg(long)]
        alg: Algorithm,
        #[arg(long)]
        instance: PathBuf,
        /// Result JSON (stdout when omitted).
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Run all four algorithms on a generated instance and write the result CSV.
    Compare {
        #[command(flatten)]
        source: Source,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Leave the runtime column empty.
        #[arg(long)]
        mask_runtime: bool,
    },
    /// Re-solve one generated instance for several looseness values.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long = "kappa-list", value_delimiter = ',', required = true)]
        kappas: Vec<f64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long)]
        mask_runtime: bool,
    },
    /// Scale capacities and demands and report LBSB against the upper bound.
    Scale {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        m: Vec<f64>,
    },
    /// Sample integral placements from a fractional strategy.
    Place {
        #[arg(long)]
        instance: PathBuf,
        /// Strategy JSON, or a result file from `solve`.
        #[arg(long)]
        strategy: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// CSV of sampled placements (`period,node,items...`).
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Check an instance, and optionally a strategy against it.
    Validate {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        strategy: Option<PathBuf>,
    },
}

fn main() {
    env_logger::init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.parse().with_context(|| format!("{THREADS_VAR}={v} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    let seed = cli.seed;
    match cli.command {
        Command::Gen { source, out } => {
            let inst = generate(&source.resolve(seed)?)?;
            emit(out.as_deref(), &inst.to_json()?)
        }
        Command::Solve {
            alg,
            instance,
            out,
            trajectory,
        } => {
            let inst = read_instance(&instance)?;
            let meta = RunMeta {
                topology: stem(&instance),
                seed,
                kappa: f64::NAN,
                fingerprint: String::new(),
            };
            let result = run_comparison(&inst, &inst.profile(), &[alg], &SolverConfigs::default(), meta)?;
            let r = &result.runs[0];
            if let Some(path) = trajectory {
                write_trajectory_csv(&r.trajectory, false, create(&path)?)?;
            }
            let body = json!({
                "algorithm": r.algorithm,
                "objective": r.objective,
                "feasible": r.feasible,
                "max_violation": r.max_violation,
                "runtime_ms": r.runtime_ms,
                "iterations": r.iterations,
                "clean_stop": r.clean_stop,
                "strategy": r.strategy,
            });
            emit(out.as_deref(), &serde_json::to_string_pretty(&body)?)
        }
        Command::Compare {
            source,
            out,
            mask_runtime,
        } => {
            let cfg = source.resolve(seed)?;
            let inst = generate(&cfg)?;
            let result = run_comparison(
                &inst,
                &inst.profile(),
                &Algorithm::ALL,
                &SolverConfigs::default(),
                RunMeta::from_config(&cfg),
            )?;
            if !result.all_feasible() {
                log::warn!("some algorithm returned an infeasible strategy");
            }
            write_results_csv(&result.rows(), mask_runtime, sink(out.as_deref())?)?;
            Ok(())
        }
        Command::Sweep {
            source,
            kappas,
            out,
            mask_runtime,
        } => {
            let cfg = source.resolve(seed)?;
            let results = kappa_sweep(&cfg, &kappas, &Algorithm::ALL, &SolverConfigs::default())?;
            let rows: Vec<_> = results.iter().flat_map(|r| r.rows()).collect();
            write_results_csv(&rows, mask_runtime, sink(out.as_deref())?)?;
            Ok(())
        }
        Command::Scale { instance, m } => {
            let inst = read_instance(&instance)?;
            let cfg = SolverConfigs::default();
            let rows = scaling_sweep(&inst, &m, &cfg.lbsb, &cfg.cr)?;
            let mut w = sink(None)?;
            writeln!(w, "m,lbsb_objective,upper_bound,ratio,path_count_bound,feasible")?;
            for r in rows {
                writeln!(
                    w,
                    "{},{},{},{},{},{}",
                    r.m, r.lbsb_objective, r.upper_bound, r.ratio, r.path_count_bound, r.feasible
                )?;
            }
            Ok(())
        }
        Command::Place {
            instance,
            strategy,
            samples,
            dump,
        } => {
            let inst = read_instance(&instance)?;
            let s = read_strategy(&strategy)?;
            let plans = plan_network(&inst, &s)?;
            if let Some(path) = dump {
                write_samples_csv(&plans, samples, seed, create(&path)?)?;
            }
            let mut worst: f64 = 0.0;
            for (v, plan) in plans.iter().enumerate() {
                let freq = estimate_marginals(plan, samples, seed.wrapping_add(v as u64))?;
                for (f, y) in freq.iter().zip(&s.y[v]) {
                    worst = worst.max((f - y).abs());
                }
            }
            let analytic = cachenet::model::link_loads(&inst, &s)?;
            let empirical = monte_carlo_load(&inst, &s, samples, None, seed)?;
            let load_error = analytic
                .iter()
                .zip(&empirical)
                .filter(|(a, _)| **a > 0.0)
                .map(|(a, e)| (e - a).abs() / a)
                .fold(0.0, f64::max);
            let body = json!({
                "samples": samples,
                "max_marginal_error": worst,
                "max_relative_load_error": load_error,
            });
            emit(None, &serde_json::to_string_pretty(&body)?)
        }
        Command::Validate { instance, strategy } => {
            let inst = read_instance(&instance)?;
            let report = validate_instance(&inst);
            if !report.is_ok() {
                report.into_result()?;
            }
            println!("instance ok: {} nodes, {} requests", inst.node_count(), inst.requests.len());
            if let Some(path) = strategy {
                let s = read_strategy(&path)?;
                let f = feasibility_report(&inst, &s, cachenet::lbsb::REPORT_TOLERANCE)?;
                println!(
                    "strategy: feasible={} max_violation={:e} objective={}",
                    f.feasible,
                    f.max_violation,
                    inst.profile().value(&s.r)
                );
                if !f.feasible {
                    bail!("strategy violates its constraints");
                }
            }
            Ok(())
        }
    }
}

impl Source {
    fn resolve(&self, seed: u64) -> Result<GenConfig> {
        let cfg = match (&self.config, &self.preset) {
            (Some(path), _) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            (None, Some(label)) => table_preset(label).with_context(|| format!("unknown preset `{label}`"))?,
            (None, None) => bail!("pass --config or --preset"),
        };
        let cfg = cfg.with_seed(seed);
        Ok(match self.kappa {
            Some(k) => cfg.with_kappa(k),
            None => cfg,
        })
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn read_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Instance::from_json(&text)?)
}

/// Accepts a bare strategy or a `solve` result with a `strategy` field.
fn read_strategy(path: &Path) -> Result<Strategy> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let inner = value.get("strategy").cloned().unwrap_or(value);
    Ok(serde_json::from_value(inner)?)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    let mut w = sink(path)?;
    writeln!(w, "{text}")?;
    Ok(())
}
