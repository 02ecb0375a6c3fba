//! Convex relaxation through the concave surrogate `g̃`.
//!
//! The relaxed problem keeps the cache and box constraints and replaces each
//! link constraint `g_e ≥ t_e` (with `t_e = Σλ̄ − C_e`) by
//! `g̃_e ≥ t_e / (1 − 1/e)`. Since `(1 − 1/e)·g̃ ≤ g ≤ g̃`, its feasible set lies
//! inside the original one and contains the original set for the tightened
//! capacities `C′ = C − (Σλ̄ − C)/(e − 1)`.

use std::f64::consts::E;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lbsb::{repair, TrajectoryRow, REPORT_TOLERANCE};
use crate::model::layout::{Layout, VarSet, FIXED};
use crate::model::{feasibility_report, FeasibilityReport, Instance, Strategy};
use crate::subgradient::{self, Problem, Settings, Surface};
use crate::utility::UtilityProfile;

/// `1 − 1/e`.
pub const SANDWICH: f64 = 1.0 - 1.0 / E;

/// Direction of a feasibility step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintStep {
    /// Polyak step along the supergradient of the most violated constraint.
    MostViolated,
    /// Polyak step on the total violation `Σ_j (b_j − g̃_j)₊`.
    Aggregate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrConfig {
    pub iterations: usize,
    /// Step scale `a` in `a/√k`; `None` uses `0.1·max λ̄`.
    pub step_scale: Option<f64>,
    pub feasibility_tolerance: f64,
    pub track_best: bool,
    /// Track rate-raised copies of infeasible iterates as candidates too.
    pub restore_iterates: bool,
    pub constraint_step: ConstraintStep,
    /// Dual evaluations allowed to [`upper_bound`].
    pub bound_iterations: usize,
}

impl Default for CrConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            step_scale: None,
            feasibility_tolerance: 1e-9,
            track_best: true,
            restore_iterates: true,
            constraint_step: ConstraintStep::MostViolated,
            bound_iterations: 3000,
        }
    }
}

impl CrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iteration budget must be at least 1".into()));
        }
        if let Some(a) = self.step_scale {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("step scale {a} must be positive")));
            }
        }
        if !(self.feasibility_tolerance >= 0.0 && self.feasibility_tolerance.is_finite()) {
            return Err(Error::Config("feasibility tolerance must be finite and >= 0".into()));
        }
        Ok(())
    }

    fn step_for(&self, inst: &Instance) -> f64 {
        self.step_scale
            .unwrap_or_else(|| 0.1 * inst.requests.iter().map(|q| q.demand).fold(0.0, f64::max))
    }
}

/// Surrogate slack `g̃_e − bound_e` on every constrained edge.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateReport {
    pub slack: Vec<(usize, f64)>,
    pub max_violation: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug)]
pub struct CrResult {
    pub strategy: Strategy,
    /// Objective of the returned point.
    pub objective: f64,
    /// Objective of the final iterate, feasible or not.
    pub last_objective: f64,
    pub surrogate: SurrogateReport,
    pub feasibility: FeasibilityReport,
    /// True when no tracked iterate was usable and rates were raised afterwards.
    pub repaired: bool,
    /// One row per iteration; `omega_k` carries the step length, `epsilon` and `delta_k` are 0.
    pub trajectory: Vec<TrajectoryRow>,
    /// Best feasible objective seen up to each iteration (`-inf` before the first).
    pub best_trace: Vec<f64>,
}

/// Edges with a binding original constraint: crossed by a response and `t_e > 0`.
fn constrained_edges(layout: &Layout) -> Vec<(usize, f64)> {
    layout
        .busy_edges()
        .map(|e| (e, layout.threshold(e)))
        .filter(|&(_, t)| t > 0.0)
        .collect()
}

fn check_profile(layout: &Layout, profile: &UtilityProfile) -> Result<()> {
    if profile.len() != layout.n_req {
        return Err(Error::Dimension {
            what: "utility profile",
            expected: layout.n_req,
            got: profile.len(),
        });
    }
    Ok(())
}

/// Surrogate feasibility of `s` with thresholds `t_e / divisor`.
pub fn surrogate_report(inst: &Instance, s: &Strategy, divisor: f64, tol: f64) -> Result<SurrogateReport> {
    s.check_dims(inst)?;
    let layout = Layout::new(inst, VarSet::Full)?;
    let x = layout.pack(s);
    let gt = layout.g_tilde(&x);
    let slack: Vec<(usize, f64)> = constrained_edges(&layout)
        .into_iter()
        .map(|(e, t)| (e, gt[e] - t / divisor))
        .collect();
    let max_violation = slack.iter().fold(0.0f64, |m, &(_, v)| m.max(-v));
    Ok(SurrogateReport {
        slack,
        max_violation,
        feasible: max_violation <= tol,
    })
}

pub fn solve_cr(inst: &Instance, profile: &UtilityProfile, cfg: &CrConfig) -> Result<CrResult> {
    cfg.validate()?;
    let layout = Layout::new(inst, VarSet::Reduced)?;
    check_profile(&layout, profile)?;
    let problem = Problem {
        layout: &layout,
        profile,
        surface: Surface::Surrogate,
        constraints: constrained_edges(&layout)
            .into_iter()
            .map(|(e, t)| (e, t / SANDWICH))
            .collect(),
        freeze_y: false,
    };
    let settings = Settings {
        iterations: cfg.iterations,
        step_scale: cfg.step_for(inst),
        tolerance: cfg.feasibility_tolerance,
        restore: cfg.restore_iterates,
        aggregate: cfg.constraint_step == ConstraintStep::Aggregate,
        patience: None,
    };
    let out = subgradient::run(&problem, &vec![0.0; layout.n_vars()], settings);
    let last_feasible = problem.worst(&out.last, cfg.feasibility_tolerance).0 <= cfg.feasibility_tolerance;
    let chosen = if cfg.track_best {
        out.best.as_ref().map(|(x, _)| x.clone())
    } else if last_feasible {
        Some(out.last.clone())
    } else {
        None
    };
    let (x, repaired) = match chosen {
        Some(x) => (x, false),
        None => {
            let mut x = out.last.clone();
            if !problem.raise_rates(&mut x, cfg.feasibility_tolerance) {
                debug!("surrogate set empty along the rate ray; falling back to link feasibility");
                x = out.last.clone();
                repair(&layout, &mut x, 0.0);
            }
            (x, true)
        }
    };
    let strategy = layout.unpack(&x);
    let trajectory = out
        .trajectory
        .iter()
        .map(|st| TrajectoryRow {
            outer_iter: st.iteration,
            objective: st.objective,
            max_violation: st.max_violation,
            satisfied_ratio: st.satisfied_ratio,
            epsilon: 0.0,
            omega_k: st.step,
            delta_k: 0.0,
            inner_iters: 1,
            elapsed_ms: st.elapsed_ms,
        })
        .collect();
    let best_trace = out.trajectory.iter().map(|st| st.best_objective).collect();
    Ok(CrResult {
        objective: problem.objective(&x),
        last_objective: out.last_objective,
        surrogate: surrogate_report(inst, &strategy, SANDWICH, cfg.feasibility_tolerance)?,
        feasibility: feasibility_report(inst, &strategy, REPORT_TOLERANCE)?,
        strategy,
        repaired,
        trajectory,
        best_trace,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TightenedCapacities {
    pub capacity: Vec<f64>,
    /// Busy edges whose tightened capacity is negative.
    pub negative: Vec<usize>,
}

/// `C′ = C − (Σλ̄ − C)/(e − 1)` per edge.
pub fn tightened_capacities(inst: &Instance) -> TightenedCapacities {
    let demand = inst.edge_demand();
    let capacity: Vec<f64> = inst
        .link_capacity
        .iter()
        .zip(&demand)
        .map(|(&c, &d)| c - (d - c) / (E - 1.0))
        .collect();
    let negative = (0..capacity.len())
        .filter(|&e| demand[e] > 0.0 && capacity[e] < 0.0)
        .collect();
    TightenedCapacities { capacity, negative }
}

/// Rate factor `(e − Δ)/(e − 1)` for instances with `Σλ̄ ≤ Δ·C` on every busy edge.
pub fn delta_guarantee(inst: &Instance, delta: f64) -> Result<f64> {
    if !(1.0..=E).contains(&delta) {
        return Err(Error::Config(format!("Δ = {delta} outside [1, e]")));
    }
    for (e, (&d, &c)) in inst.edge_demand().iter().zip(&inst.link_capacity).enumerate() {
        if d > 0.0 && d > delta * c * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "edge {e}: demand {d} exceeds Δ·C = {}",
                delta * c
            )));
        }
    }
    Ok((E - delta) / (E - 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    /// Best dual value; bounds the optimum of the surrogate-relaxed problem, hence of the original.
    pub value: f64,
    /// Best feasible objective found for the surrogate-relaxed problem.
    pub primal: f64,
    /// `value − primal`.
    pub gap: f64,
    pub iterations: usize,
}

/// One `min{1, a_t}` term of `g̃` on a constrained edge.
struct Term {
    req: usize,
    hop: usize,
    slot: usize,
}

/// Lagrangian dual of `max F` over `{g̃_e ≥ t_e} ∩ caches ∩ box`.
///
/// Each `min{1, a_t}` is written as `z_t ≤ 1, z_t ≤ a_t`; with multipliers
/// `μ_e` on `Σ λ̄ z_t ≥ t_e` and `ν_t` on `z_t ≤ a_t` the dual function is
/// `max_x [F + Σ ν_t a_t(x)] + Σ_t (μ_e λ̄_t − ν_t) − Σ_e μ_e t_e`
/// on `0 ≤ ν_t ≤ λ̄_t μ_e`, and its inner maximum is separable.
struct Dual<'a> {
    layout: &'a Layout,
    profile: &'a UtilityProfile,
    edges: Vec<(usize, f64)>,
    terms: Vec<Term>,
    /// Term ids per constrained edge slot.
    by_slot: Vec<Vec<usize>>,
}

#[derive(Clone)]
struct DualEval {
    /// Dual function with the cache part smoothed by `τ/2·‖y‖²`.
    smooth: f64,
    /// Exact dual function; a valid upper bound.
    exact: f64,
    grad_mu: Vec<f64>,
    grad_nu: Vec<f64>,
}

impl<'a> Dual<'a> {
    fn new(layout: &'a Layout, profile: &'a UtilityProfile, edges: Vec<(usize, f64)>) -> Self {
        let mut slot_of = vec![usize::MAX; layout.n_edges()];
        for (s, &(e, _)) in edges.iter().enumerate() {
            slot_of[e] = s;
        }
        let mut terms = Vec::new();
        let mut by_slot = vec![Vec::new(); edges.len()];
        for n in 0..layout.n_req {
            for (k, &e) in layout.hop_edge[n].iter().enumerate() {
                let slot = slot_of[e];
                if slot != usize::MAX {
                    by_slot[slot].push(terms.len());
                    terms.push(Term { req: n, hop: k, slot });
                }
            }
        }
        Dual {
            layout,
            profile,
            edges,
            terms,
            by_slot,
        }
    }

    /// Dual value and gradient; with `tau > 0` the cache maximizer is the
    /// projection of `c/τ` onto the node polytope, otherwise a top-`c` pick.
    fn eval(&self, mu: &[f64], nu: &[f64], tau: f64) -> DualEval {
        let l = self.layout;
        // per-request, per-hop weight
        let mut hop_w: Vec<Vec<f64>> = l.hop_edge.iter().map(|h| vec![0.0; h.len()]).collect();
        for (t, term) in self.terms.iter().enumerate() {
            hop_w[term.req][term.hop] += nu[t];
        }
        let mut cy = vec![0.0; l.n_y];
        let mut x = vec![0.0; l.n_vars()];
        let mut value = 0.0;
        for n in 0..l.n_req {
            let lam = l.demand[n];
            let w = &hop_w[n];
            let price = w.iter().sum::<f64>() / lam;
            let f = &self.profile.functions[n];
            let admitted = f.price_response(price, lam);
            x[l.n_y + n] = lam - admitted;
            value += f.value(admitted) + price * (lam - admitted);
            let mut tail = 0.0;
            for k in (0..w.len()).rev() {
                tail += w[k];
                let var = l.prefix[n][k];
                if var != FIXED {
                    cy[var] += tail;
                }
            }
        }
        let mut top = 0.0;
        let mut smoothed = 0.0;
        for (v, vars) in l.node_vars.iter().enumerate() {
            let mut order: Vec<usize> = vars.iter().copied().filter(|&k| cy[k] > 0.0).collect();
            order.sort_by(|&a, &b| cy[b].total_cmp(&cy[a]).then(a.cmp(&b)));
            for &k in order.iter().take(l.cache_cap[v] as usize) {
                x[k] = 1.0;
                top += cy[k];
            }
            if tau > 0.0 {
                for &k in vars {
                    x[k] = cy[k] / tau;
                }
                subgradient::project_capped_simplex(&mut x, vars, l.cache_cap[v]);
                smoothed += vars.iter().map(|&k| cy[k] * x[k] - 0.5 * tau * x[k] * x[k]).sum::<f64>();
            }
        }
        let shift = if tau > 0.0 { smoothed } else { top };
        let exact_shift = top - shift;
        let mut grad_nu = vec![0.0; self.terms.len()];
        for (t, term) in self.terms.iter().enumerate() {
            let n = term.req;
            let mut a = x[l.n_y + n] / l.demand[n];
            for &var in &l.prefix[n][..=term.hop] {
                if var != FIXED {
                    a += x[var];
                }
            }
            value += mu[term.slot] * l.demand[n] - nu[t];
            grad_nu[t] = a - 1.0;
        }
        let mut grad_mu = vec![0.0; self.edges.len()];
        for (s, &(e, t)) in self.edges.iter().enumerate() {
            value -= mu[s] * t;
            grad_mu[s] = l.edge_demand[e] - t;
        }
        value += shift;
        DualEval {
            smooth: value,
            exact: value + exact_shift,
            grad_mu,
            grad_nu,
        }
    }

    /// Projection onto `{μ ≥ 0, 0 ≤ ν_t ≤ λ̄_t μ}`, edge by edge.
    fn project(&self, mu: &mut [f64], nu: &mut [f64]) {
        let l = self.layout;
        for (s, ids) in self.by_slot.iter().enumerate() {
            let m0 = mu[s];
            let lam = |t: usize| l.demand[self.terms[t].req];
            // derivative of the squared distance in μ after the optimal ν clip
            let slope = |m: f64| -> f64 {
                let mut d = m - m0;
                for &t in ids {
                    let cap = lam(t) * m;
                    if nu[t] > cap {
                        d -= lam(t) * (nu[t] - cap);
                    }
                }
                d
            };
            let m = if slope(0.0) >= 0.0 {
                0.0
            } else {
                let mut lo = 0.0;
                let mut hi = m0.max(0.0) + ids.iter().map(|&t| nu[t] / lam(t)).fold(0.0, f64::max) + 1.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if slope(mid) < 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * hi {
                        break;
                    }
                }
                0.5 * (lo + hi)
            };
            mu[s] = m;
            for &t in ids {
                nu[t] = nu[t].clamp(0.0, lam(t) * m);
            }
        }
    }

    /// Accelerated projected gradient on the smoothed dual, cutting `τ` tenfold per phase
    /// and finishing on the exact dual. Returns the least exact value at a feasible
    /// multiplier and the number of dual evaluations spent.
    fn minimize(&self, budget: usize, primal: f64) -> (f64, usize) {
        let l = self.layout;
        let slots: f64 = l
            .node_vars
            .iter()
            .zip(&l.cache_cap)
            .filter(|(vars, _)| !vars.is_empty())
            .map(|(_, &c)| c)
            .sum();
        let scale = 1.0 + if primal.is_finite() { primal.abs() } else { 0.0 };
        let mut taus: Vec<f64> = if slots > 0.0 {
            (0..9).map(|k| 1e-2 * scale / slots * 10f64.powi(-k)).collect()
        } else {
            Vec::new()
        };
        taus.push(0.0);
        let close = |best: f64| primal.is_finite() && best - primal <= 1e-10 * scale;
        if self.terms.is_empty() {
            let ev = self.eval(&vec![0.0; self.edges.len()], &[], 0.0);
            return (ev.exact, 1);
        }
        let mut x = (vec![0.0; self.edges.len()], vec![0.0; self.terms.len()]);
        let mut best = f64::INFINITY;
        let mut evals = 0usize;
        let mut step = 1.0;
        for (p, &tau) in taus.iter().enumerate() {
            if evals >= budget || close(best) {
                break;
            }
            let limit = evals + (budget - evals).div_ceil(taus.len() - p);
            let mut ex = self.eval(&x.0, &x.1, tau);
            evals += 1;
            best = best.min(ex.exact);
            let mut y = x.clone();
            let mut ey = ex.clone();
            let mut t: f64 = 1.0;
            while evals < limit && !close(best) {
                let (z, ez, moved) = loop {
                    let mut zm: Vec<f64> = y.0.iter().zip(&ey.grad_mu).map(|(a, g)| a - step * g).collect();
                    let mut zn: Vec<f64> = y.1.iter().zip(&ey.grad_nu).map(|(a, g)| a - step * g).collect();
                    self.project(&mut zm, &mut zn);
                    let ez = self.eval(&zm, &zn, tau);
                    evals += 1;
                    best = best.min(ez.exact);
                    let (mut lin, mut sq) = (0.0, 0.0);
                    for ((a, b), g) in zm.iter().zip(&y.0).zip(&ey.grad_mu) {
                        lin += g * (a - b);
                        sq += (a - b) * (a - b);
                    }
                    for ((a, b), g) in zn.iter().zip(&y.1).zip(&ey.grad_nu) {
                        lin += g * (a - b);
                        sq += (a - b) * (a - b);
                    }
                    if ez.smooth <= ey.smooth + lin + sq / (2.0 * step) + 1e-15 * scale || evals >= limit {
                        break ((zm, zn), ez, sq);
                    }
                    step *= 0.5;
                };
                let size: f64 = z.0.iter().chain(&z.1).map(|v| v * v).sum();
                if moved <= 1e-30 * (1.0 + size) {
                    x = z;
                    break;
                }
                if ez.smooth > ex.smooth {
                    // momentum overshot: restart from the last accepted point
                    t = 1.0;
                    y = x.clone();
                    ey = ex.clone();
                    continue;
                }
                let next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
                let w = (t - 1.0) / next;
                let mut ym: Vec<f64> = z.0.iter().zip(&x.0).map(|(a, b)| a + w * (a - b)).collect();
                let mut yn: Vec<f64> = z.1.iter().zip(&x.1).map(|(a, b)| a + w * (a - b)).collect();
                self.project(&mut ym, &mut yn);
                x = z;
                ex = ez;
                t = next;
                ey = self.eval(&ym, &yn, tau);
                evals += 1;
                best = best.min(ey.exact);
                y = (ym, yn);
                step *= 1.5;
            }
        }
        (best, evals)
    }
}

/// Upper bound on the optimum from the dual of the surrogate relaxation with the original thresholds.
pub fn upper_bound(inst: &Instance, profile: &UtilityProfile, cfg: &CrConfig) -> Result<UpperBound> {
    surrogate_bound(inst, profile, cfg, 1.0)
}

/// Dual bound on `max F` over `{g̃_e ≥ t_e/divisor} ∩ caches ∩ box`.
pub fn surrogate_bound(
    inst: &Instance,
    profile: &UtilityProfile,
    cfg: &CrConfig,
    divisor: f64,
) -> Result<UpperBound> {
    cfg.validate()?;
    if !(divisor > 0.0 && divisor <= 1.0) {
        return Err(Error::Config(format!("threshold divisor {divisor} outside (0, 1]")));
    }
    let layout = Layout::new(inst, VarSet::Reduced)?;
    check_profile(&layout, profile)?;
    let constraints: Vec<(usize, f64)> = constrained_edges(&layout)
        .into_iter()
        .map(|(e, t)| (e, t / divisor))
        .collect();
    let problem = Problem {
        layout: &layout,
        profile,
        surface: Surface::Surrogate,
        constraints: constraints.clone(),
        freeze_y: false,
    };
    let settings = Settings {
        iterations: cfg.iterations,
        step_scale: cfg.step_for(inst),
        tolerance: cfg.feasibility_tolerance,
        restore: cfg.restore_iterates,
        aggregate: cfg.constraint_step == ConstraintStep::Aggregate,
        patience: None,
    };
    let out = subgradient::run(&problem, &vec![0.0; layout.n_vars()], settings);
    let primal = match out.best {
        Some((_, f)) => f,
        None => {
            let mut x = out.last.clone();
            if problem.raise_rates(&mut x, cfg.feasibility_tolerance) {
                problem.objective(&x)
            } else {
                f64::NEG_INFINITY
            }
        }
    };
    let dual = Dual::new(&layout, profile, constraints);
    let (value, iterations) = dual.minimize(cfg.bound_iterations.max(1), primal);
    Ok(UpperBound {
        value,
        primal,
        gap: value - primal,
        iterations,
    })
}
