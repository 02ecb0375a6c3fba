//! Lagrangian barrier method with simple bounds.
//!
//! Constraints `c_j ≥ 0` are the link slacks `C − ρ` and cache slacks
//! `c' − Σ y`; each enters `Ψ = F + Σ σ_j s_j ln(c_j + s_j)` with shift
//! `s_j = ε σ_j^{α_σ}`. The inner box-constrained problems are solved by
//! [`trust_region_maximize`].

use std::time::Instant;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::boxsolve::{norm, trust_region_maximize, BoxBounds, SmoothOracle, TrustRegionConfig};
use crate::error::{Error, Result};
use crate::model::layout::{Layout, VarSet};
use crate::model::{feasibility_report, FeasibilityReport, Instance, Strategy, StrategyGradient};
use crate::utility::UtilityProfile;

/// Violation tolerance used when reporting terminal feasibility.
pub const REPORT_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct LbsbConfig {
    pub epsilon0: f64,
    pub tau: f64,
    pub alpha_omega: f64,
    pub beta_omega: f64,
    pub alpha_delta: f64,
    pub beta_delta: f64,
    pub alpha_sigma: f64,
    pub omega_s: f64,
    pub delta_s: f64,
    pub omega_star: f64,
    pub delta_star: f64,
    pub sigma0: f64,
    pub max_outer: usize,
    /// Extra stopping requirement on the largest constraint violation.
    pub feasibility_tolerance: f64,
    /// Floor on the inner accuracy target `ω_k`.
    pub min_inner_tolerance: f64,
    pub inner: TrustRegionConfig,
}

impl Default for LbsbConfig {
    fn default() -> Self {
        Self {
            epsilon0: 0.1,
            tau: 0.1,
            alpha_omega: 1.0,
            beta_omega: 1.0,
            alpha_delta: 0.75,
            beta_delta: 0.9,
            alpha_sigma: 1.0,
            omega_s: 1.0,
            delta_s: 1.0,
            omega_star: 1e-4,
            delta_star: 1e-4,
            sigma0: 1.0,
            max_outer: 200,
            feasibility_tolerance: 1e-7,
            min_inner_tolerance: 1e-6,
            inner: TrustRegionConfig::default(),
        }
    }
}

impl LbsbConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| 0.0 < v && v < 1.0;
        let pos = [
            self.alpha_omega,
            self.beta_omega,
            self.alpha_delta,
            self.beta_delta,
            self.omega_s,
            self.delta_s,
            self.omega_star,
            self.delta_star,
            self.sigma0,
            self.min_inner_tolerance,
        ];
        if !open(self.epsilon0)
            || !open(self.tau)
            || !(self.alpha_sigma > 0.0 && self.alpha_sigma <= 1.0)
            || pos.iter().any(|&v| !(v > 0.0))
            || self.feasibility_tolerance < 0.0
        {
            return Err(Error::Config(format!("barrier parameters out of range: {self:?}")));
        }
        if self.alpha_delta + 1.0 / (1.0 + self.alpha_sigma) <= 1.0 {
            warn!("alpha_delta + 1/(1 + alpha_sigma) <= 1; convergence theory does not cover this choice");
        }
        self.inner.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintId {
    /// Response edge index.
    Link(usize),
    Cache(usize),
}

/// Multiplier estimates and penalty schedule of one outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct LbsbState {
    pub constraints: Vec<ConstraintId>,
    pub sigma: Vec<f64>,
    pub epsilon: f64,
    pub omega: f64,
    pub delta: f64,
    pub alpha_sigma: f64,
}

impl LbsbState {
    /// Initial state: every non-vacuous constraint with multiplier `σ₀`.
    pub fn new(inst: &Instance, cfg: &LbsbConfig) -> Result<Self> {
        let layout = Layout::new(inst, VarSet::Reduced)?;
        let constraints = active_constraints(&layout);
        Ok(Self {
            sigma: vec![cfg.sigma0; constraints.len()],
            constraints,
            epsilon: cfg.epsilon0,
            omega: cfg.omega_s * cfg.epsilon0.powf(cfg.alpha_omega),
            delta: cfg.delta_s * cfg.epsilon0.powf(cfg.alpha_delta),
            alpha_sigma: cfg.alpha_sigma,
        })
    }
}

/// Busy links with a positive threshold and nodes whose free entries could overflow.
fn active_constraints(layout: &Layout) -> Vec<ConstraintId> {
    let mut out: Vec<ConstraintId> = layout
        .busy_edges()
        .filter(|&e| layout.threshold(e) > 0.0)
        .map(ConstraintId::Link)
        .collect();
    for (v, vars) in layout.node_vars.iter().enumerate() {
        if (vars.len() as f64) > layout.cache_cap[v] {
            out.push(ConstraintId::Cache(v));
        }
    }
    out
}

/// `s_j = ε σ_j^{α_σ}`.
pub fn compute_shifts(state: &LbsbState) -> Vec<f64> {
    state
        .sigma
        .iter()
        .map(|&s| state.epsilon * s.powf(state.alpha_sigma))
        .collect()
}

/// `σ s / (c + s)`.
pub fn first_order_estimate(sigma: f64, shift: f64, c: f64) -> f64 {
    sigma * shift / (c + shift)
}

fn constraint_values(layout: &Layout, constraints: &[ConstraintId], x: &[f64]) -> Vec<f64> {
    let rho = layout.loads(x);
    constraints
        .iter()
        .map(|c| match *c {
            ConstraintId::Link(e) => layout.capacity[e] - rho[e],
            ConstraintId::Cache(v) => {
                layout.cache_cap[v] - layout.node_vars[v].iter().map(|&k| x[k]).sum::<f64>()
            }
        })
        .collect()
}

/// First-order multiplier estimates at `s`; errors outside the barrier domain.
pub fn multiplier_estimates(inst: &Instance, state: &LbsbState, s: &Strategy) -> Result<Vec<f64>> {
    s.check_dims(inst)?;
    let layout = Layout::new(inst, VarSet::Reduced)?;
    let x = layout.pack(s);
    let c = constraint_values(&layout, &state.constraints, &x);
    let shifts = compute_shifts(state);
    c.iter()
        .zip(&shifts)
        .zip(&state.sigma)
        .enumerate()
        .map(|(j, ((&cj, &sj), &sg))| {
            if cj + sj > 0.0 {
                Ok(first_order_estimate(sg, sj, cj))
            } else {
                Err(Error::Domain(format!("constraint {j} outside the barrier domain")))
            }
        })
        .collect()
}

/// `Ψ` on the packed free variables, with exact gradient and Hessian-vector products.
pub struct BarrierOracle<'a> {
    layout: &'a Layout,
    profile: &'a UtilityProfile,
    constraints: &'a [ConstraintId],
    sigma: Vec<f64>,
    shift: Vec<f64>,
    cached_x: Vec<f64>,
    /// Per-edge σ̄ and curvature weights at `cached_x`.
    edge_est: Vec<f64>,
    edge_w: Vec<f64>,
    cache_est: Vec<(usize, f64, f64)>,
    curvature: Vec<f64>,
    valid: bool,
}

impl<'a> BarrierOracle<'a> {
    fn new(
        layout: &'a Layout,
        profile: &'a UtilityProfile,
        constraints: &'a [ConstraintId],
        sigma: Vec<f64>,
        shift: Vec<f64>,
    ) -> Self {
        Self {
            layout,
            profile,
            constraints,
            sigma,
            shift,
            cached_x: Vec::new(),
            edge_est: vec![0.0; layout.n_edges()],
            edge_w: vec![0.0; layout.n_edges()],
            cache_est: Vec::new(),
            curvature: vec![0.0; layout.n_req],
            valid: false,
        }
    }

    fn prepare(&mut self, x: &[f64]) {
        if self.cached_x.as_slice() == x {
            return;
        }
        self.cached_x.clear();
        self.cached_x.extend_from_slice(x);
        let c = constraint_values(self.layout, self.constraints, x);
        self.edge_est.iter_mut().for_each(|v| *v = 0.0);
        self.edge_w.iter_mut().for_each(|v| *v = 0.0);
        self.cache_est.clear();
        self.valid = true;
        for (j, id) in self.constraints.iter().enumerate() {
            let denom = c[j] + self.shift[j];
            if !(denom > 0.0) {
                self.valid = false;
            }
            let est = self.sigma[j] * self.shift[j] / denom;
            let w = est / denom;
            match *id {
                ConstraintId::Link(e) => {
                    self.edge_est[e] = est;
                    self.edge_w[e] = w;
                }
                ConstraintId::Cache(v) => self.cache_est.push((v, est, w)),
            }
        }
        self.profile
            .curvature_into(self.layout.r(x), &mut self.curvature);
    }

    fn barrier_value(&self, x: &[f64]) -> f64 {
        let c = constraint_values(self.layout, self.constraints, x);
        let mut v = self.profile.value(self.layout.r(x));
        for j in 0..c.len() {
            let arg = c[j] + self.shift[j];
            if !(arg > 0.0) {
                return f64::NEG_INFINITY;
            }
            v += self.sigma[j] * self.shift[j] * arg.ln();
        }
        v
    }
}

impl SmoothOracle for BarrierOracle<'_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        self.barrier_value(x)
    }

    fn gradient(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.prepare(x);
        let n_y = self.layout.n_y;
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.profile.gradient_into(self.layout.r(x), &mut grad[n_y..]);
        self.layout.add_load_gradient(x, &self.edge_est, -1.0, grad);
        for &(v, est, _) in &self.cache_est {
            for &k in &self.layout.node_vars[v] {
                grad[k] -= est;
            }
        }
        if self.valid {
            self.barrier_value(x)
        } else {
            f64::NEG_INFINITY
        }
    }

    fn hess_vec(&mut self, x: &[f64], v: &[f64], out: &mut [f64]) {
        self.prepare(x);
        let n_y = self.layout.n_y;
        out.iter_mut().for_each(|o| *o = 0.0);
        for n in 0..self.layout.n_req {
            out[n_y + n] = self.curvature[n] * v[n_y + n];
        }
        self.layout.add_load_hvp(x, &self.edge_est, v, -1.0, out);
        let mut d_rho = self.layout.load_directional(x, v);
        for (d, w) in d_rho.iter_mut().zip(&self.edge_w) {
            *d *= w;
        }
        self.layout.add_load_gradient(x, &d_rho, -1.0, out);
        for &(node, _, w) in &self.cache_est {
            let vars = &self.layout.node_vars[node];
            let sum: f64 = vars.iter().map(|&k| v[k]).sum();
            for &k in vars {
                out[k] -= w * sum;
            }
        }
    }
}

/// Barrier value and gradient at `s`, plus an oracle for further evaluations.
pub struct BarrierEval {
    pub value: f64,
    pub gradient: StrategyGradient,
    layout: Layout,
    profile: UtilityProfile,
    constraints: Vec<ConstraintId>,
    sigma: Vec<f64>,
    shift: Vec<f64>,
}

impl BarrierEval {
    /// Oracle on the packed variables `[free y.., r..]`.
    pub fn oracle(&self) -> BarrierOracle<'_> {
        BarrierOracle::new(
            &self.layout,
            &self.profile,
            &self.constraints,
            self.sigma.clone(),
            self.shift.clone(),
        )
    }

    pub fn pack(&self, s: &Strategy) -> Vec<f64> {
        self.layout.pack(s)
    }

    pub fn unpack(&self, x: &[f64]) -> Strategy {
        self.layout.unpack(x)
    }
}

/// `Ψ` at `s`; `value` is `−∞` outside the barrier domain.
pub fn barrier_eval(
    inst: &Instance,
    profile: &UtilityProfile,
    state: &LbsbState,
    s: &Strategy,
) -> Result<BarrierEval> {
    s.check_dims(inst)?;
    let layout = Layout::new(inst, VarSet::Reduced)?;
    let shift = compute_shifts(state);
    let mut eval = BarrierEval {
        value: 0.0,
        gradient: StrategyGradient {
            y: Vec::new(),
            r: Vec::new(),
        },
        layout,
        profile: profile.clone(),
        constraints: state.constraints.clone(),
        sigma: state.sigma.clone(),
        shift,
    };
    let x = eval.layout.pack(s);
    let mut g = vec![0.0; x.len()];
    let value = eval.oracle().gradient(&x, &mut g);
    let mut y = vec![vec![0.0; eval.layout.n_items]; eval.layout.n_nodes];
    for (k, &(v, i)) in eval.layout.y_of_var.iter().enumerate() {
        y[v][i] = g[k];
    }
    eval.value = value;
    eval.gradient = StrategyGradient {
        y,
        r: g[eval.layout.n_y..].to_vec(),
    };
    Ok(eval)
}

/// Dense multipliers: one per edge (response direction) and one per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub link: Vec<f64>,
    pub cache: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub outer_iter: usize,
    pub objective: f64,
    pub max_violation: f64,
    pub satisfied_ratio: f64,
    pub epsilon: f64,
    pub omega_k: f64,
    pub delta_k: f64,
    pub inner_iters: usize,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug)]
pub struct LbsbResult {
    pub strategy: Strategy,
    pub multipliers: Multipliers,
    pub objective: f64,
    pub stationarity: f64,
    pub complementarity: f64,
    pub feasibility: FeasibilityReport,
    pub trajectory: Vec<TrajectoryRow>,
    pub converged: bool,
    /// True when the terminal point had to be pushed back into the feasible set.
    pub repaired: bool,
    pub inner_iterations: usize,
}

/// Residual start point: empty caches and (nearly) every request rejected.
fn default_start(layout: &Layout, profile: &UtilityProfile) -> Vec<f64> {
    let mut x = layout.rejecting_point();
    for n in 0..layout.n_req {
        if !profile.functions[n].finite_at_zero() {
            x[layout.n_y + n] = layout.demand[n] * (1.0 - 1e-3);
        }
    }
    x
}

/// Moves `x` toward `anchor` until every shifted constraint is strictly inside its domain.
fn restore_domain(
    layout: &Layout,
    constraints: &[ConstraintId],
    shift: &[f64],
    x: &[f64],
    anchor: &[f64],
) -> Vec<f64> {
    let inside = |p: &[f64]| {
        constraint_values(layout, constraints, p)
            .iter()
            .zip(shift)
            .all(|(c, s)| c + 0.5 * s > 0.0)
    };
    if inside(x) {
        return x.to_vec();
    }
    let mut theta = 1e-6;
    loop {
        let p: Vec<f64> = x
            .iter()
            .zip(anchor)
            .map(|(a, b)| (1.0 - theta) * a + theta * b)
            .collect();
        if theta >= 1.0 || inside(&p) {
            debug!("barrier domain restored with blend {theta:e}");
            return p;
        }
        theta = (theta * 4.0).min(1.0);
    }
}

/// Raises `r` uniformly toward `λ̄` and shrinks overfull caches until the point is feasible.
pub(crate) fn repair(layout: &Layout, x: &mut [f64], tol: f64) {
    for (v, vars) in layout.node_vars.iter().enumerate() {
        let used: f64 = vars.iter().map(|&k| x[k]).sum();
        if used > layout.cache_cap[v] {
            let scale = layout.cache_cap[v] / used;
            for &k in vars {
                x[k] *= scale;
            }
        }
    }
    let worst = |p: &[f64]| {
        let rho = layout.loads(p);
        layout
            .busy_edges()
            .map(|e| rho[e] - layout.capacity[e])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    if worst(x) <= tol {
        return;
    }
    let base: Vec<f64> = x.to_vec();
    let at = |t: f64, p: &mut [f64]| {
        for n in 0..layout.n_req {
            let k = layout.n_y + n;
            p[k] = base[k] + t * (layout.demand[n] - base[k]);
        }
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        at(mid, x);
        if worst(x) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    at(hi, x);
}

fn full_report(inst: &Instance, layout: &Layout, x: &[f64]) -> FeasibilityReport {
    feasibility_report(inst, &layout.unpack(x), REPORT_TOLERANCE).expect("layout matches instance")
}

/// Runs the barrier method from `start` (default: empty caches, all demand rejected).
pub fn solve_lbsb(
    inst: &Instance,
    profile: &UtilityProfile,
    cfg: &LbsbConfig,
    start: Option<&Strategy>,
) -> Result<LbsbResult> {
    cfg.validate()?;
    let layout = Layout::new(inst, VarSet::Reduced)?;
    if profile.len() != layout.n_req {
        return Err(Error::Dimension {
            what: "utility profile",
            expected: layout.n_req,
            got: profile.len(),
        });
    }
    let clock = Instant::now();
    let mut state = LbsbState::new(inst, cfg)?;
    let constraints = state.constraints.clone();
    let anchor = default_start(&layout, profile);
    let mut x = match start {
        Some(s) => {
            s.check_dims(inst)?;
            let mut x = layout.pack(s);
            layout.project(&mut x);
            x
        }
        None => anchor.clone(),
    };
    let bounds = BoxBounds {
        lower: vec![0.0; layout.n_vars()],
        upper: layout.upper.clone(),
    };
    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut inner_total = 0;
    let mut stationarity = f64::INFINITY;
    let mut sigma_bar = state.sigma.clone();
    let mut complementarity = f64::INFINITY;

    for k in 0..cfg.max_outer {
        let shift = compute_shifts(&state);
        x = restore_domain(&layout, &constraints, &shift, &x, &anchor);
        let target = state.omega.max(cfg.min_inner_tolerance);
        let mut oracle = BarrierOracle::new(&layout, profile, &constraints, state.sigma.clone(), shift.clone());
        let inner = trust_region_maximize(&mut oracle, &bounds, &x, target, &cfg.inner)?;
        inner_total += inner.iterations;
        x = inner.x;
        stationarity = inner.residual_norm;

        let c = constraint_values(&layout, &constraints, &x);
        sigma_bar = (0..c.len())
            .map(|j| first_order_estimate(state.sigma[j], shift[j], c[j]))
            .collect();
        let comp_terms: Vec<f64> = (0..c.len()).map(|j| c[j] * sigma_bar[j]).collect();
        complementarity = norm(&comp_terms);
        let scaled: Vec<f64> = (0..c.len())
            .map(|j| comp_terms[j] / state.sigma[j].powf(cfg.alpha_sigma))
            .collect();
        let report = full_report(inst, &layout, &x);
        trajectory.push(TrajectoryRow {
            outer_iter: k,
            objective: profile.value(layout.r(&x)),
            max_violation: report.max_violation,
            satisfied_ratio: report.satisfied_ratio,
            epsilon: state.epsilon,
            omega_k: state.omega,
            delta_k: state.delta,
            inner_iters: inner.iterations,
            elapsed_ms: clock.elapsed().as_secs_f64() * 1e3,
        });
        debug!(
            "outer {k}: P={stationarity:.3e} comp={complementarity:.3e} viol={:.3e} eps={:.1e} inner={}",
            report.max_violation, state.epsilon, inner.iterations
        );
        if stationarity <= cfg.omega_star
            && complementarity <= cfg.delta_star
            && report.max_violation <= cfg.feasibility_tolerance
        {
            converged = true;
            break;
        }
        if norm(&scaled) <= state.delta {
            for (s, &b) in state.sigma.iter_mut().zip(&sigma_bar) {
                *s = b.max(f64::MIN_POSITIVE.sqrt());
            }
            state.omega *= state.epsilon.powf(cfg.beta_omega);
            state.delta *= state.epsilon.powf(cfg.beta_delta);
        } else {
            state.epsilon *= cfg.tau;
            state.omega = cfg.omega_s * state.epsilon.powf(cfg.alpha_omega);
            state.delta = cfg.delta_s * state.epsilon.powf(cfg.alpha_delta);
        }
    }

    let mut repaired = false;
    if full_report(inst, &layout, &x).max_violation > cfg.feasibility_tolerance {
        warn!("barrier method stopped before reaching feasibility; repairing terminal point");
        repair(&layout, &mut x, 0.0);
        repaired = true;
    }
    let strategy = layout.unpack(&x);
    let feasibility = full_report(inst, &layout, &x);
    let mut multipliers = Multipliers {
        link: vec![0.0; layout.n_edges()],
        cache: vec![0.0; layout.n_nodes],
    };
    for (j, id) in constraints.iter().enumerate() {
        match *id {
            ConstraintId::Link(e) => multipliers.link[e] = sigma_bar[j],
            ConstraintId::Cache(v) => multipliers.cache[v] = sigma_bar[j],
        }
    }
    Ok(LbsbResult {
        objective: profile.value(&strategy.r),
        strategy,
        multipliers,
        stationarity,
        complementarity,
        feasibility,
        trajectory,
        converged,
        repaired,
        inner_iterations: inner_total,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub complementarity: f64,
    pub dual_min: f64,
}

/// KKT residuals of `s` for the given multipliers. Cache entries that no
/// constraint-free solve may raise (nodes without room, entries off every
/// request prefix) are held at zero.
pub fn kkt_residuals(
    inst: &Instance,
    profile: &UtilityProfile,
    s: &Strategy,
    multipliers: &Multipliers,
) -> Result<KktResiduals> {
    s.check_dims(inst)?;
    let layout = Layout::new(inst, VarSet::Reduced)?;
    if multipliers.link.len() != layout.n_edges() || multipliers.cache.len() != layout.n_nodes {
        return Err(Error::Dimension {
            what: "multiplier vectors",
            expected: layout.n_edges() + layout.n_nodes,
            got: multipliers.link.len() + multipliers.cache.len(),
        });
    }
    let x = layout.pack(s);
    let mut grad = vec![0.0; x.len()];
    profile.gradient_into(layout.r(&x), &mut grad[layout.n_y..]);
    layout.add_load_gradient(&x, &multipliers.link, -1.0, &mut grad);
    for (v, vars) in layout.node_vars.iter().enumerate() {
        for &k in vars {
            grad[k] -= multipliers.cache[v];
        }
    }
    let res: Vec<f64> = (0..x.len())
        .map(|k| x[k] - (x[k] + grad[k]).clamp(0.0, layout.upper[k]))
        .collect();
    let rho = layout.loads(&x);
    let usage = layout.cache_usage(&x);
    let mut comp = Vec::new();
    for e in layout.busy_edges() {
        comp.push((layout.capacity[e] - rho[e]) * multipliers.link[e]);
    }
    for v in 0..layout.n_nodes {
        comp.push((layout.cache_cap[v] - usage[v]) * multipliers.cache[v]);
    }
    let dual_min = multipliers
        .link
        .iter()
        .chain(&multipliers.cache)
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(KktResiduals {
        stationarity: norm(&res),
        complementarity: norm(&comp),
        dual_min: if dual_min.is_finite() { dual_min } else { 0.0 },
    })
}

/// Additive optimality-gap bounds at a terminal point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Certificate {
    /// `Σ μ̂·max(0, t)` over links.
    pub multiplier_bound: f64,
    /// `θ·Σ n·max(0, t)/C` over links.
    pub path_count_bound: f64,
}

pub fn suboptimality_certificate(
    inst: &Instance,
    profile: &UtilityProfile,
    result: &LbsbResult,
    domain_floor: f64,
) -> Result<Certificate> {
    let layout = Layout::new(inst, VarSet::Reduced)?;
    let theta = profile.theta(domain_floor);
    if !theta.is_finite() {
        return Err(Error::Domain(
            "utility has no finite logarithmic-return bound on this domain".into(),
        ));
    }
    let mut multiplier_bound = 0.0;
    let mut path_count_bound = 0.0;
    for e in layout.busy_edges() {
        let t = layout.threshold(e).max(0.0);
        multiplier_bound += result.multipliers.link[e] * t;
        path_count_bound += layout.edge_paths[e] as f64 * t / layout.capacity[e];
    }
    Ok(Certificate {
        multiplier_bound,
        path_count_bound: theta * path_count_bound,
    })
}
