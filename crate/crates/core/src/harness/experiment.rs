//! Algorithm comparison, κ sweeps and scaling sweeps.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{apply_kappa, generate, GenConfig};
use crate::baselines::{greedy1, greedy2, BaselineConfig};
use crate::convexrelax::{solve_cr, upper_bound, CrConfig};
use crate::error::{Error, Result};
use crate::lbsb::{solve_lbsb, suboptimality_certificate, LbsbConfig, TrajectoryRow, REPORT_TOLERANCE};
use crate::model::feasibility_report;
use crate::model::{Instance, Strategy};
use crate::utility::UtilityProfile;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Lbsb,
    Cr,
    Greedy1,
    Greedy2,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Lbsb, Algorithm::Cr, Algorithm::Greedy1, Algorithm::Greedy2];

    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Lbsb => "lbsb",
            Algorithm::Cr => "cr",
            Algorithm::Greedy1 => "greedy1",
            Algorithm::Greedy2 => "greedy2",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.label() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Debug, Default)]
pub struct SolverConfigs {
    pub lbsb: LbsbConfig,
    pub cr: CrConfig,
    pub baseline: BaselineConfig,
}

/// Labels attached to every result row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub topology: String,
    pub seed: u64,
    pub kappa: f64,
    pub fingerprint: String,
}

impl RunMeta {
    pub fn from_config(cfg: &GenConfig) -> Self {
        Self {
            topology: cfg.topology.label(),
            seed: cfg.seed,
            kappa: cfg.kappa,
            fingerprint: cfg.fingerprint(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    pub strategy: Strategy,
    pub objective: f64,
    pub feasible: bool,
    pub max_violation: f64,
    pub runtime_ms: f64,
    /// Outer iterations (LBSB), subgradient iterations (CR), Frank-Wolfe steps (Greedy1), placements (Greedy2).
    pub iterations: usize,
    /// False when the solver stopped on an iteration cap or had to repair its output.
    pub clean_stop: bool,
    pub trajectory: Vec<TrajectoryRow>,
}

#[derive(Clone, Debug)]
pub struct ExperimentResult {
    pub meta: RunMeta,
    pub runs: Vec<AlgorithmRun>,
}

/// One line of the result CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub topology: String,
    pub seed: u64,
    pub kappa: f64,
    pub algorithm: Algorithm,
    pub objective: f64,
    pub normalized: Option<f64>,
    pub feasible: bool,
    pub max_violation: f64,
    pub runtime_ms: Option<f64>,
    pub iterations: usize,
}

impl ExperimentResult {
    pub fn run(&self, alg: Algorithm) -> Option<&AlgorithmRun> {
        self.runs.iter().find(|r| r.algorithm == alg)
    }

    pub fn objective(&self, alg: Algorithm) -> Option<f64> {
        self.run(alg).map(|r| r.objective)
    }

    /// `F(alg) / F(LBSB)` on this instance; `None` without an LBSB run or when it scored 0.
    pub fn normalized(&self, alg: Algorithm) -> Option<f64> {
        let base = self.objective(Algorithm::Lbsb)?;
        let f = self.objective(alg)?;
        (base != 0.0).then(|| f / base)
    }

    pub fn all_feasible(&self) -> bool {
        self.runs.iter().all(|r| r.feasible)
    }

    pub fn rows(&self) -> Vec<ResultRow> {
        self.runs
            .iter()
            .map(|r| ResultRow {
                topology: self.meta.topology.clone(),
                seed: self.meta.seed,
                kappa: self.meta.kappa,
                algorithm: r.algorithm,
                objective: r.objective,
                normalized: self.normalized(r.algorithm),
                feasible: r.feasible,
                max_violation: r.max_violation,
                runtime_ms: Some(r.runtime_ms),
                iterations: r.iterations,
            })
            .collect()
    }
}

fn run_one(inst: &Instance, profile: &UtilityProfile, alg: Algorithm, cfg: &SolverConfigs) -> Result<AlgorithmRun> {
    let clock = Instant::now();
    let (strategy, iterations, clean_stop, trajectory) = match alg {
        Algorithm::Lbsb => {
            let out = solve_lbsb(inst, profile, &cfg.lbsb, None)?;
            if !out.converged {
                log::warn!("LBSB stopped at its outer-iteration cap");
            }
            let n = out.trajectory.len();
            (out.strategy, n, out.converged && !out.repaired, out.trajectory)
        }
        Algorithm::Cr => {
            let out = solve_cr(inst, profile, &cfg.cr)?;
            let n = out.trajectory.len();
            (out.strategy, n, !out.repaired, out.trajectory)
        }
        Algorithm::Greedy1 => (greedy1(inst, profile, &cfg.baseline)?, cfg.baseline.fw.iterations, true, Vec::new()),
        Algorithm::Greedy2 => {
            let out = greedy2(inst, profile, &cfg.baseline)?;
            (out.strategy, out.placements.len(), true, Vec::new())
        }
    };
    let runtime_ms = clock.elapsed().as_secs_f64() * 1e3;
    let report = feasibility_report(inst, &strategy, REPORT_TOLERANCE)?;
    Ok(AlgorithmRun {
        algorithm: alg,
        objective: profile.value(&strategy.r),
        strategy,
        feasible: report.feasible,
        // adding 0 turns -0 into 0
        max_violation: report.max_violation + 0.0,
        runtime_ms,
        iterations,
        clean_stop,
        trajectory,
    })
}

/// Runs every algorithm in `algorithms` on one instance.
pub fn run_comparison(
    inst: &Instance,
    profile: &UtilityProfile,
    algorithms: &[Algorithm],
    cfg: &SolverConfigs,
    meta: RunMeta,
) -> Result<ExperimentResult> {
    let runs = algorithms
        .par_iter()
        .map(|&a| run_one(inst, profile, a, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentResult { meta, runs })
}

/// Generates the instance for `base` once and re-runs the comparison with capacities rescaled per κ.
pub fn kappa_sweep(
    base: &GenConfig,
    kappas: &[f64],
    algorithms: &[Algorithm],
    cfg: &SolverConfigs,
) -> Result<Vec<ExperimentResult>> {
    if let Some(k) = kappas.iter().find(|&&k| !(k > 0.0 && k <= 1.0)) {
        return Err(Error::Config(format!("looseness {k} outside (0, 1]")));
    }
    let inst = generate(base)?;
    let profile = inst.profile();
    kappas
        .iter()
        .map(|&k| {
            let mut scaled = inst.clone();
            apply_kappa(&mut scaled, k);
            let meta = RunMeta::from_config(&base.clone().with_kappa(k));
            run_comparison(&scaled, &profile, algorithms, cfg, meta)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub m: f64,
    pub lbsb_objective: f64,
    pub upper_bound: f64,
    pub ratio: f64,
    /// `θ·Σ n_e·max(0, t_e)/C_e`; unchanged under scaling.
    pub path_count_bound: f64,
    pub feasible: bool,
}

/// `F_LBSB / upper_bound` for the instance with capacities and demands scaled by each `m`.
pub fn scaling_sweep(inst: &Instance, ms: &[f64], lbsb: &LbsbConfig, cr: &CrConfig) -> Result<Vec<ScalingRow>> {
    if let Some(m) = ms.iter().find(|&&m| !(m >= 1.0 && m.is_finite())) {
        return Err(Error::Config(format!("scale {m} must be at least 1")));
    }
    ms.iter()
        .map(|&m| {
            let scaled = inst.scaled(m);
            let profile = scaled.profile();
            let out = solve_lbsb(&scaled, &profile, lbsb, None)?;
            let bound = upper_bound(&scaled, &profile, cr)?;
            let cert = suboptimality_certificate(&scaled, &profile, &out, 0.0)?;
            Ok(ScalingRow {
                m,
                lbsb_objective: out.objective,
                upper_bound: bound.value,
                ratio: out.objective / bound.value,
                path_count_bound: cert.path_count_bound,
                feasible: out.feasibility.feasible,
            })
        })
        .collect()
}

/// Result CSV; `mask_runtime` leaves the runtime column empty so reruns are byte-identical.
pub fn write_results_csv<W: Write>(rows: &[ResultRow], mask_runtime: bool, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        let mut row = row.clone();
        if mask_runtime {
            row.runtime_ms = None;
        }
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], mask_time: bool, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        let mut row = row.clone();
        if mask_time {
            row.elapsed_ms = 0.0;
        }
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
