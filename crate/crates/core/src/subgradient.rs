//! Switching subgradient method on the packed layout.
//!
//! Each iterate either takes a Polyak step toward the most violated
//! constraint `h_j(x) ≥ b_j` or, when every constraint holds within
//! tolerance, a diminishing step `a/√k` along the objective gradient.
//! Every step is followed by the projection onto the box and, when the
//! caches move, onto the per-node capacity simplex.

use std::time::Instant;

use crate::model::layout::{Layout, FIXED};
use crate::utility::UtilityProfile;

/// Constraint functions a problem may impose on an edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Surface {
    /// Concave surrogate `g̃_e`.
    Surrogate,
    /// Exact load reduction `g_e = Σλ̄ − ρ_e`.
    Load,
}

pub(crate) struct Problem<'a> {
    pub layout: &'a Layout,
    pub profile: &'a UtilityProfile,
    pub surface: Surface,
    /// `(edge, bound)` pairs, each meaning `h_edge(x) ≥ bound`.
    pub constraints: Vec<(usize, f64)>,
    pub freeze_y: bool,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Settings {
    pub iterations: usize,
    pub step_scale: f64,
    pub tolerance: f64,
    /// Also track rate-raised copies of infeasible iterates.
    pub restore: bool,
    /// Step on the summed violation of every violated constraint instead of the worst one.
    pub aggregate: bool,
    /// Stop once the incumbent has not improved for this many iterations.
    pub patience: Option<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct Step {
    pub iteration: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub satisfied_ratio: f64,
    pub step: f64,
    pub best_objective: f64,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug)]
pub(crate) struct Outcome {
    pub best: Option<(Vec<f64>, f64)>,
    pub last: Vec<f64>,
    pub last_objective: f64,
    pub trajectory: Vec<Step>,
}

impl Problem<'_> {
    pub fn surface_values(&self, x: &[f64]) -> Vec<f64> {
        match self.surface {
            Surface::Surrogate => self.layout.g_tilde(x),
            Surface::Load => {
                let rho = self.layout.loads(x);
                rho.iter()
                    .zip(&self.layout.edge_demand)
                    .map(|(r, d)| d - r)
                    .collect()
            }
        }
    }

    /// Largest violation `b_j − h_j(x)` (clamped below at 0), its index, and the satisfied share.
    pub fn worst(&self, x: &[f64], tol: f64) -> (f64, Option<usize>, f64) {
        if self.constraints.is_empty() {
            return (0.0, None, 1.0);
        }
        let h = self.surface_values(x);
        let mut worst = 0.0;
        let mut arg = None;
        let mut ok = 0usize;
        for (j, &(e, b)) in self.constraints.iter().enumerate() {
            let v = b - h[e];
            if v <= tol {
                ok += 1;
            }
            if v > worst {
                worst = v;
                arg = Some(j);
            }
        }
        (worst, arg, ok as f64 / self.constraints.len() as f64)
    }

    fn constraint_gradient(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        match self.surface {
            Surface::Surrogate => self.layout.add_g_tilde_supergradient(x, u, out),
            Surface::Load => self.layout.add_load_gradient(x, u, -1.0, out),
        }
        if self.freeze_y {
            out[..self.layout.n_y].iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.profile.value(self.layout.r(x))
    }

    /// `∂F/∂r`, evaluated a hair inside the box so that it stays finite.
    fn objective_gradient(&self, x: &[f64], out: &mut [f64]) {
        let l = self.layout;
        for n in 0..l.n_req {
            let d = l.demand[n];
            let lam = (d - x[l.n_y + n]).max(1e-9 * d);
            out[n] = -self.profile.functions[n].derivative(lam);
        }
    }

    pub fn project(&self, x: &mut [f64]) {
        self.layout.project(x);
        if !self.freeze_y {
            for (v, vars) in self.layout.node_vars.iter().enumerate() {
                project_capped_simplex(x, vars, self.layout.cache_cap[v]);
            }
        }
    }

    /// Raises `r` toward `λ̄` on the requests crossing a violated constraint,
    /// by a common bisected fraction, until every constraint holds.
    /// Returns false (leaving those rates at `λ̄`) when even full rejection does not suffice.
    pub fn raise_rates(&self, x: &mut [f64], tol: f64) -> bool {
        if self.worst(x, tol).0 <= tol {
            return true;
        }
        let l = self.layout;
        let h = self.surface_values(x);
        let mut hot = vec![false; l.n_edges()];
        for &(e, b) in &self.constraints {
            hot[e] = b - h[e] > tol;
        }
        let raised: Vec<usize> = (0..l.n_req)
            .filter(|&n| l.hop_edge[n].iter().any(|&e| hot[e]))
            .collect();
        let base = x.to_vec();
        let at = |t: f64, p: &mut [f64]| {
            for &n in &raised {
                let k = l.n_y + n;
                p[k] = base[k] + t * (l.demand[n] - base[k]);
            }
        };
        if self.surface == Surface::Load && self.freeze_y {
            // loads are affine in the raise fraction: ρ_e(θ) = fixed_e + (1 − θ)·moving_e
            let mut is_raised = vec![false; l.n_req];
            raised.iter().for_each(|&n| is_raised[n] = true);
            let (mut fixed, mut moving) = (vec![0.0; l.n_edges()], vec![0.0; l.n_edges()]);
            for n in 0..l.n_req {
                let a = l.demand[n] - base[l.n_y + n];
                let target = if is_raised[n] { &mut moving } else { &mut fixed };
                let mut prod = 1.0;
                for (k, &e) in l.hop_edge[n].iter().enumerate() {
                    let var = l.prefix[n][k];
                    if var != FIXED {
                        prod *= 1.0 - base[var];
                    }
                    target[e] += a * prod;
                }
            }
            let mut theta: f64 = 0.0;
            for &(e, _) in &self.constraints {
                let room = l.capacity[e] - fixed[e];
                if moving[e] > room {
                    if moving[e] <= 0.0 || room < -tol {
                        theta = 1.0;
                    } else {
                        theta = theta.max(1.0 - room / moving[e]);
                    }
                }
            }
            at(theta.min(1.0), x);
            return self.worst(x, tol).0 <= tol;
        }
        at(1.0, x);
        if self.worst(x, tol).0 > tol {
            return false;
        }
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..50 {
            let mid = 0.5 * (lo + hi);
            at(mid, x);
            if self.worst(x, tol).0 <= tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        at(hi, x);
        true
    }
}

/// Euclidean projection of `x[vars]` onto `{0 ≤ z ≤ 1, Σz ≤ cap}`.
pub(crate) fn project_capped_simplex(x: &mut [f64], vars: &[usize], cap: f64) {
    let clipped = |tau: f64| -> f64 { vars.iter().map(|&k| (x[k] - tau).clamp(0.0, 1.0)).sum() };
    if clipped(0.0) <= cap {
        for &k in vars {
            x[k] = x[k].clamp(0.0, 1.0);
        }
        return;
    }
    let mut lo = 0.0;
    let mut hi = vars.iter().map(|&k| x[k]).fold(0.0, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if clipped(mid) > cap {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    for &k in vars {
        x[k] = (x[k] - hi).clamp(0.0, 1.0);
    }
}

pub(crate) fn run(problem: &Problem<'_>, start: &[f64], cfg: Settings) -> Outcome {
    let clock = Instant::now();
    let l = problem.layout;
    let mut x = start.to_vec();
    problem.project(&mut x);
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut trajectory = Vec::with_capacity(cfg.iterations);
    let mut dir = vec![0.0; l.n_vars()];
    let mut grad_r = vec![0.0; l.n_req];
    // records `p` (or its rate-raised copy) when feasible and better than the incumbent
    let consider = |p: &[f64], viol: f64, best: &mut Option<(Vec<f64>, f64)>| {
        if viol > cfg.tolerance {
            // raising rates only lowers F
            let hopeless = best.as_ref().is_some_and(|(_, b)| problem.objective(p) <= *b);
            if !cfg.restore || hopeless {
                return;
            }
        }
        let mut cand = p.to_vec();
        if viol > cfg.tolerance && !problem.raise_rates(&mut cand, cfg.tolerance) {
            return;
        }
        let f = problem.objective(&cand);
        if best.as_ref().is_none_or(|(_, b)| f > *b) {
            *best = Some((cand, f));
        }
    };
    let mut since_gain = 0usize;
    for k in 1..=cfg.iterations {
        let (viol, arg, ratio) = problem.worst(&x, cfg.tolerance);
        let f = problem.objective(&x);
        let prev = best.as_ref().map(|b| b.1);
        consider(&x, viol, &mut best);
        match (prev, best.as_ref().map(|b| b.1)) {
            (Some(a), Some(b)) if b <= a + 1e-12 * a.abs().max(1.0) => since_gain += 1,
            _ => since_gain = 0,
        }
        if cfg.patience.is_some_and(|p| since_gain >= p) {
            break;
        }
        let mut step = 0.0;
        let mut stuck = false;
        match arg.filter(|_| viol > cfg.tolerance) {
            Some(j) => {
                let mut u = vec![0.0; l.n_edges()];
                let mut total = viol;
                if cfg.aggregate {
                    total = 0.0;
                    let h = problem.surface_values(&x);
                    for &(e, b) in &problem.constraints {
                        if b - h[e] > cfg.tolerance {
                            u[e] = 1.0;
                            total += b - h[e];
                        }
                    }
                } else {
                    u[problem.constraints[j].0] = 1.0;
                }
                let viol = total;
                problem.constraint_gradient(&x, &u, &mut dir);
                let nn: f64 = dir.iter().map(|v| v * v).sum();
                if nn == 0.0 {
                    // the violated constraint is already at its maximum
                    stuck = true;
                } else {
                    step = viol / nn;
                    for (xi, d) in x.iter_mut().zip(&dir) {
                        *xi += step * d;
                    }
                }
            }
            None => {
                problem.objective_gradient(&x, &mut grad_r);
                let scale = grad_r.iter().fold(0.0f64, |m, g| m.max(g.abs()));
                step = cfg.step_scale / (k as f64).sqrt();
                if scale > 0.0 {
                    for n in 0..l.n_req {
                        x[l.n_y + n] += step * grad_r[n] / scale;
                    }
                }
            }
        }
        problem.project(&mut x);
        trajectory.push(Step {
            iteration: k,
            objective: f,
            max_violation: viol,
            satisfied_ratio: ratio,
            step,
            best_objective: best.as_ref().map_or(f64::NEG_INFINITY, |b| b.1),
            elapsed_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        if stuck {
            break;
        }
    }
    let (viol, _, _) = problem.worst(&x, cfg.tolerance);
    consider(&x, viol, &mut best);
    Outcome {
        best,
        last_objective: problem.objective(&x),
        last: x,
        trajectory,
    }
}
