//! Greedy comparison algorithms.
//!
//! Greedy1 fixes rates, places caches once by Frank-Wolfe on the total load
//! reduction and re-solves rates. Greedy2 alternates a rate step with a single
//! integral placement until every cache is full.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::layout::{Layout, VarSet, FIXED};
use crate::model::{Instance, Strategy};
use crate::subgradient::{self, Problem, Settings, Surface};
use crate::utility::UtilityProfile;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    pub iterations: usize,
    /// `None` uses `0.1·max λ̄`.
    pub step_scale: Option<f64>,
    pub feasibility_tolerance: f64,
    /// Early stop after this many iterations without a better feasible point.
    pub patience: Option<usize>,
}

impl Default for RateConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            step_scale: None,
            feasibility_tolerance: 1e-9,
            patience: Some(200),
        }
    }
}

/// Frank-Wolfe settings; the gradient is always taken at the current iterate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FwConfig {
    pub iterations: usize,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self { iterations: 100 }
    }
}

impl FwConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("Frank-Wolfe needs at least one iteration".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub rate: RateConfig,
    pub fw: FwConfig,
    /// Greedy2 placements between two rate steps.
    pub placements_per_rate_step: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            rate: RateConfig::default(),
            fw: FwConfig::default(),
            placements_per_rate_step: 1,
        }
    }
}

fn check_y(inst: &Instance, y: &[Vec<f64>]) -> Result<()> {
    let n = inst.node_count();
    if y.len() != n {
        return Err(Error::Dimension {
            what: "cache matrix rows",
            expected: n,
            got: y.len(),
        });
    }
    for (v, row) in y.iter().enumerate() {
        if row.len() != inst.catalog_size {
            return Err(Error::Dimension {
                what: "cache matrix columns",
                expected: inst.catalog_size,
                got: row.len(),
            });
        }
        if let Some(i) = row.iter().position(|&val| !(0.0..=1.0).contains(&val)) {
            return Err(Error::Domain(format!("y[{v}][{i}] = {} outside [0, 1]", row[i])));
        }
    }
    Ok(())
}

/// Maximizes `F(R)` over the link constraints with the caches frozen at `y`.
///
/// `warm` must be a residual vector feasible for `y`; it seeds the incumbent.
pub fn solve_rate_only(
    inst: &Instance,
    profile: &UtilityProfile,
    y: &[Vec<f64>],
    cfg: &RateConfig,
    warm: Option<&[f64]>,
) -> Result<Vec<f64>> {
    check_y(inst, y)?;
    let layout = Layout::new(inst, VarSet::Full)?;
    if profile.len() != layout.n_req {
        return Err(Error::Dimension {
            what: "utility profile",
            expected: layout.n_req,
            got: profile.len(),
        });
    }
    let r0 = match warm {
        Some(r) if r.len() == layout.n_req => r.to_vec(),
        Some(r) => {
            return Err(Error::Dimension {
                what: "warm-start residuals",
                expected: layout.n_req,
                got: r.len(),
            })
        }
        None => vec![0.0; layout.n_req],
    };
    let x0 = layout.pack(&Strategy { y: y.to_vec(), r: r0 });
    let problem = Problem {
        layout: &layout,
        profile,
        surface: Surface::Load,
        constraints: layout
            .busy_edges()
            .map(|e| (e, layout.threshold(e)))
            .filter(|&(_, t)| t > 0.0)
            .collect(),
        freeze_y: true,
    };
    let settings = Settings {
        iterations: cfg.iterations,
        step_scale: cfg
            .step_scale
            .unwrap_or_else(|| 0.1 * layout.demand.iter().copied().fold(0.0, f64::max)),
        tolerance: cfg.feasibility_tolerance,
        restore: true,
        aggregate: true,
        patience: cfg.patience,
    };
    let out = subgradient::run(&problem, &x0, settings);
    let x = match out.best {
        Some((x, _)) => x,
        None => {
            let mut x = out.last;
            // full rejection empties every link
            problem.raise_rates(&mut x, cfg.feasibility_tolerance);
            x
        }
    };
    Ok(layout.r(&x).to_vec())
}

/// `Σ_e g_e(y, r)` over all edges.
pub fn total_load_reduction(inst: &Instance, s: &Strategy) -> Result<f64> {
    s.check_dims(inst)?;
    let layout = Layout::new(inst, VarSet::Full)?;
    let rho = layout.loads(&layout.pack(s));
    Ok(layout.edge_demand.iter().zip(&rho).map(|(d, r)| d - r).sum())
}

/// Continuous greedy (Frank-Wolfe) for `max Σ_e g_e(·, r)` over the cache polytope.
pub fn frank_wolfe_dr(inst: &Instance, r: &[f64], cfg: &FwConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let layout = Layout::new(inst, VarSet::Full)?;
    if r.len() != layout.n_req {
        return Err(Error::Dimension {
            what: "residual vector",
            expected: layout.n_req,
            got: r.len(),
        });
    }
    let mut x = vec![0.0; layout.n_y];
    x.extend_from_slice(r);
    let ones = vec![1.0; layout.n_edges()];
    let mut grad = vec![0.0; layout.n_vars()];
    let step = 1.0 / cfg.iterations as f64;
    for _ in 0..cfg.iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        layout.add_load_gradient(&x, &ones, -1.0, &mut grad);
        for (v, vars) in layout.node_vars.iter().enumerate() {
            for k in top_positive(vars, &grad, layout.cache_cap[v] as usize) {
                x[k] += step;
            }
        }
    }
    for v in &mut x[..layout.n_y] {
        *v = v.min(1.0);
    }
    Ok(layout.unpack(&x).y)
}

/// At most `count` of `vars` with strictly positive score, largest first, lowest index on ties.
fn top_positive(vars: &[usize], score: &[f64], count: usize) -> Vec<usize> {
    let mut pick: Vec<usize> = vars.iter().copied().filter(|&k| score[k] > 0.0).collect();
    pick.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    pick.truncate(count);
    pick
}

pub fn greedy1(inst: &Instance, profile: &UtilityProfile, cfg: &BaselineConfig) -> Result<Strategy> {
    let empty = vec![vec![0.0; inst.catalog_size]; inst.node_count()];
    let r1 = solve_rate_only(inst, profile, &empty, &cfg.rate, None)?;
    let y = frank_wolfe_dr(inst, &r1, &cfg.fw)?;
    // caches only lower loads, so r1 stays feasible
    let r2 = solve_rate_only(inst, profile, &y, &cfg.rate, Some(&r1))?;
    Ok(Strategy { y, r: r2 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementStep {
    pub node: usize,
    pub item: usize,
    /// Total load reduction before and after the placement, at the same rates.
    pub before: f64,
    pub after: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Greedy2Result {
    pub strategy: Strategy,
    pub placements: Vec<PlacementStep>,
}

pub fn greedy2(inst: &Instance, profile: &UtilityProfile, cfg: &BaselineConfig) -> Result<Greedy2Result> {
    let layout = Layout::new(inst, VarSet::Full)?;
    let mut y = vec![vec![0.0; inst.catalog_size]; inst.node_count()];
    let mut x = vec![0.0; layout.n_vars()];
    let mut used = vec![0usize; layout.n_nodes];
    let mut r: Option<Vec<f64>> = None;
    let mut placements = Vec::new();
    let mut gain = vec![0.0; layout.n_y];
    let mut p = Vec::new();
    let batch = cfg.placements_per_rate_step.max(1);
    loop {
        let rates = solve_rate_only(inst, profile, &y, &cfg.rate, r.as_deref())?;
        x[layout.n_y..].copy_from_slice(&rates);
        r = Some(rates);
        let mut placed = 0;
        while placed < batch {
            placement_gains(&layout, &x, &mut gain, &mut p);
            let mut choice: Option<usize> = None;
            for k in 0..layout.n_y {
                let (v, _) = layout.y_of_var[k];
                if x[k] != 0.0 || (used[v] as f64) >= layout.cache_cap[v] {
                    continue;
                }
                if choice.is_none_or(|c| gain[k] > gain[c]) {
                    choice = Some(k);
                }
            }
            let Some(k) = choice else { break };
            let (v, i) = layout.y_of_var[k];
            let before = load_reduction(&layout, &x);
            x[k] = 1.0;
            y[v][i] = 1.0;
            used[v] += 1;
            placements.push(PlacementStep {
                node: v,
                item: i,
                before,
                after: load_reduction(&layout, &x),
            });
            placed += 1;
        }
        if placed == 0 {
            break;
        }
    }
    Ok(Greedy2Result {
        strategy: layout.unpack(&x),
        placements,
    })
}

fn load_reduction(layout: &Layout, x: &[f64]) -> f64 {
    let rho = layout.loads(x);
    layout.edge_demand.iter().zip(&rho).map(|(d, r)| d - r).sum()
}

/// Increase of the total load reduction from setting each empty entry to 1.
fn placement_gains(layout: &Layout, x: &[f64], gain: &mut [f64], p: &mut Vec<f64>) {
    // setting y_j = 1 zeroes the prefix products from hop j on
    gain.iter_mut().for_each(|g| *g = 0.0);
    for n in 0..layout.n_req {
        let a = layout.demand[n] - x[layout.n_y + n];
        p.clear();
        let mut acc = 1.0;
        for &var in &layout.prefix[n] {
            acc *= 1.0 - var_value(x, var);
            p.push(acc);
        }
        let mut tail = 0.0;
        for j in (0..p.len()).rev() {
            tail += p[j];
            let var = layout.prefix[n][j];
            if var != FIXED && x[var] == 0.0 {
                gain[var] += a * tail;
            }
        }
    }
}

#[inline]
fn var_value(x: &[f64], var: usize) -> f64 {
    if var == FIXED {
        0.0
    } else {
        x[var]
    }
}
