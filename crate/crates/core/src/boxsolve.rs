//! Box-constrained maximization: projection, projected-gradient residual and a
//! trust-region method following the projected gradient path.

use log::trace;

use crate::error::{Error, Result};

/// Lower and upper bound vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                what: "box bounds",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if let Some(k) = (0..lower.len()).find(|&k| !(lower[k] <= upper[k]) || !lower[k].is_finite() || !upper[k].is_finite()) {
            return Err(Error::Domain(format!(
                "empty or unbounded box in coordinate {k}: [{}, {}]",
                lower[k], upper[k]
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| l <= v && v <= u)
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::Dimension {
                what: "point vs box",
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    fn clamp_into(&self, x: &mut [f64]) {
        for ((v, &l), &u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(l, u);
        }
    }
}

pub fn project_box(b: &BoxBounds, x: &[f64]) -> Result<Vec<f64>> {
    b.check_dim(x.len())?;
    let mut out = x.to_vec();
    b.clamp_into(&mut out);
    Ok(out)
}

/// `x − Π(x + grad)`.
pub fn pg_residual(b: &BoxBounds, x: &[f64], grad: &[f64]) -> Result<Vec<f64>> {
    b.check_dim(x.len())?;
    b.check_dim(grad.len())?;
    if !b.contains(x) {
        return Err(Error::Domain("point outside box".into()));
    }
    Ok(residual(b, x, grad))
}

fn residual(b: &BoxBounds, x: &[f64], grad: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|k| x[k] - (x[k] + grad[k]).clamp(b.lower[k], b.upper[k]))
        .collect()
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Value, gradient and Hessian-vector products of a smooth objective.
pub trait SmoothOracle {
    fn value(&mut self, x: &[f64]) -> f64;

    /// Writes the gradient into `grad` and returns the value.
    fn gradient(&mut self, x: &[f64], grad: &mut [f64]) -> f64;

    /// Forward-difference fallback on the gradient.
    fn hess_vec(&mut self, x: &[f64], v: &[f64], out: &mut [f64]) {
        let nv = norm(v);
        if nv == 0.0 {
            out.iter_mut().for_each(|o| *o = 0.0);
            return;
        }
        let h = 1e-7 * (1.0 + norm(x)) / nv;
        let mut g0 = vec![0.0; x.len()];
        self.gradient(x, &mut g0);
        let xh: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + h * b).collect();
        self.gradient(&xh, out);
        for (o, g) in out.iter_mut().zip(&g0) {
            *o = (*o - g) / h;
        }
    }
}

/// `bᵀx + ½ xᵀHx` with a dense symmetric `H`.
#[derive(Clone, Debug)]
pub struct QuadraticOracle {
    pub hessian: Vec<Vec<f64>>,
    pub linear: Vec<f64>,
}

impl SmoothOracle for QuadraticOracle {
    fn value(&mut self, x: &[f64]) -> f64 {
        let mut hx = vec![0.0; x.len()];
        self.hess_vec(x, x, &mut hx);
        dot(&self.linear, x) + 0.5 * dot(x, &hx)
    }

    fn gradient(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.hess_vec(x, x, grad);
        let half_quad = 0.5 * dot(x, grad);
        for (g, b) in grad.iter_mut().zip(&self.linear) {
            *g += b;
        }
        dot(&self.linear, x) + half_quad
    }

    fn hess_vec(&mut self, _x: &[f64], v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.hessian) {
            *o = dot(row, v);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrustRegionConfig {
    /// Acceptance threshold on the gain ratio.
    pub mu: f64,
    /// Expansion threshold on the gain ratio.
    pub eta: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub initial_radius: f64,
    pub max_iterations: usize,
    /// Segments of the projected path examined per Cauchy search.
    pub max_segments: usize,
    /// Refine the Cauchy point by truncated conjugate gradients on the free variables.
    pub subspace_refinement: bool,
    pub max_cg_iterations: usize,
    pub cg_tolerance: f64,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            mu: 0.1,
            eta: 0.75,
            gamma0: 0.25,
            gamma1: 0.5,
            gamma2: 2.0,
            initial_radius: 1.0,
            max_iterations: 5000,
            max_segments: 100,
            subspace_refinement: true,
            max_cg_iterations: 100,
            cg_tolerance: 1e-6,
        }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0.0 < self.mu
            && self.mu < self.eta
            && self.eta < 1.0
            && 0.0 < self.gamma0
            && self.gamma0 <= self.gamma1
            && self.gamma1 <= 1.0
            && 1.0 <= self.gamma2
            && self.initial_radius > 0.0
            && self.max_segments >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("trust-region parameters violate their ordering: {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrustRegionOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub accepted: usize,
    pub hvp_count: usize,
    /// False when the iteration cap or a collapsed radius stopped the solve.
    pub converged: bool,
}

struct Counter<'a, O: SmoothOracle + ?Sized> {
    oracle: &'a mut O,
    hvps: usize,
}

impl<O: SmoothOracle + ?Sized> Counter<'_, O> {
    fn hv(&mut self, x: &[f64], v: &[f64], out: &mut [f64]) {
        self.hvps += 1;
        self.oracle.hess_vec(x, v, out);
    }
}

/// Largest `τ ≥ 0` with `‖s + τ d‖ ≤ Δ`.
fn trust_step(s: &[f64], d: &[f64], delta: f64) -> f64 {
    let a = dot(d, d);
    if a == 0.0 {
        return f64::INFINITY;
    }
    let b = dot(s, d);
    let c = (dot(s, s) - delta * delta).min(0.0);
    let disc = (b * b - a * c).max(0.0);
    // stable positive root of a τ² + 2bτ + c = 0
    if b >= 0.0 {
        let den = b + disc.sqrt();
        if den == 0.0 {
            0.0
        } else {
            -c / den
        }
    } else {
        (-b + disc.sqrt()) / a
    }
}

/// Generalized Cauchy point: first local maximizer of the quadratic model along
/// the projected gradient path, within the trust radius. Returns `(s, Hs)`.
fn cauchy_point<O: SmoothOracle + ?Sized>(
    oracle: &mut Counter<'_, O>,
    b: &BoxBounds,
    x: &[f64],
    g: &[f64],
    delta: f64,
    max_segments: usize,
) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut brk: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut d = vec![0.0; n];
    for k in 0..n {
        let t = if g[k] > 0.0 {
            (b.upper[k] - x[k]) / g[k]
        } else if g[k] < 0.0 {
            (b.lower[k] - x[k]) / g[k]
        } else {
            continue;
        };
        if t > 0.0 {
            d[k] = g[k];
            brk.push((t, k));
        }
    }
    brk.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut s = vec![0.0; n];
    let mut hs = vec![0.0; n];
    let mut hd = vec![0.0; n];
    let mut t_cur = 0.0;
    let mut next = 0;
    for _ in 0..max_segments {
        if d.iter().all(|&v| v == 0.0) {
            break;
        }
        let t_next = brk.get(next).map_or(f64::INFINITY, |p| p.0);
        let seg = t_next - t_cur;
        oracle.hv(x, &d, &mut hd);
        let alpha: f64 = (0..n).map(|k| (g[k] + hs[k]) * d[k]).sum();
        let beta = dot(&d, &hd);
        let tau_tr = trust_step(&s, &d, delta);
        let tau_end = seg.min(tau_tr);
        if alpha <= 0.0 {
            break;
        }
        if beta < 0.0 && -alpha / beta < tau_end {
            let tau = -alpha / beta;
            for k in 0..n {
                s[k] += tau * d[k];
                hs[k] += tau * hd[k];
            }
            break;
        }
        if !tau_end.is_finite() {
            // unbounded ascent along an unconstrained direction with no radius: cannot happen with finite Δ
            break;
        }
        for k in 0..n {
            s[k] += tau_end * d[k];
            hs[k] += tau_end * hd[k];
        }
        if tau_tr <= seg {
            break;
        }
        t_cur = t_next;
        while next < brk.len() && brk[next].0 <= t_cur {
            let k = brk[next].1;
            s[k] = if g[k] > 0.0 { b.upper[k] - x[k] } else { b.lower[k] - x[k] };
            d[k] = 0.0;
            next += 1;
        }
    }
    (s, hs)
}

/// Model gain `gᵀs + ½ sᵀHs` from a step and its Hessian product.
fn model_gain(g: &[f64], s: &[f64], hs: &[f64]) -> f64 {
    dot(g, s) + 0.5 * dot(s, hs)
}

/// Truncated conjugate gradients on the variables free at `x + s`, maximizing the model.
///
/// When a CG step would leave the box, the step is projected back and halved
/// until it does at least as well as stopping at the bound; CG then restarts on
/// the new free set. The CG iteration budget is shared across restarts.
#[allow(clippy::too_many_arguments)]
fn refine<O: SmoothOracle + ?Sized>(
    oracle: &mut Counter<'_, O>,
    b: &BoxBounds,
    x: &[f64],
    g: &[f64],
    delta: f64,
    s: &mut [f64],
    hs: &mut [f64],
    cfg: &TrustRegionConfig,
) {
    let n = x.len();
    let mut budget = cfg.max_cg_iterations;
    let mut r0 = f64::NAN;
    let mut cand = vec![0.0; n];
    let mut h_cand = vec![0.0; n];
    while budget > 0 {
        let free: Vec<bool> = (0..n)
            .map(|k| {
                let v = x[k] + s[k];
                b.lower[k] < v && v < b.upper[k]
            })
            .collect();
        let mut r: Vec<f64> = (0..n)
            .map(|k| if free[k] { g[k] + hs[k] } else { 0.0 })
            .collect();
        let mut rr = dot(&r, &r);
        if r0.is_nan() {
            r0 = rr.sqrt();
        }
        if rr == 0.0 || rr.sqrt() <= cfg.cg_tolerance * r0 {
            return;
        }
        let mut p = r.clone();
        let mut hp = vec![0.0; n];
        let mut hp_full = vec![0.0; n];
        let mut restart = false;
        while budget > 0 {
            budget -= 1;
            if rr.sqrt() <= cfg.cg_tolerance * r0 {
                return;
            }
            oracle.hv(x, &p, &mut hp_full);
            for k in 0..n {
                hp[k] = if free[k] { hp_full[k] } else { 0.0 };
            }
            let kappa = dot(&p, &hp);
            let mut a_box = f64::INFINITY;
            for k in 0..n {
                if p[k] > 0.0 {
                    a_box = a_box.min((b.upper[k] - x[k] - s[k]) / p[k]);
                } else if p[k] < 0.0 {
                    a_box = a_box.min((b.lower[k] - x[k] - s[k]) / p[k]);
                }
            }
            let a_box = a_box.max(0.0);
            let a_tr = trust_step(s, &p, delta).max(0.0);
            let a_cg = if kappa < 0.0 { rr / -kappa } else { f64::INFINITY };
            if a_box < a_cg.min(a_tr) {
                // the box cuts the step short
                let a_max = a_cg.min(a_tr);
                let base = model_gain(g, s, hs);
                let pd = dot(&p, &(0..n).map(|k| g[k] + hs[k]).collect::<Vec<_>>());
                let at_box = base + a_box * pd + 0.5 * a_box * a_box * dot(&p, &hp_full);
                let mut alpha = a_max;
                let mut taken = false;
                while alpha.is_finite() && alpha > a_box {
                    for k in 0..n {
                        let v = (x[k] + s[k] + alpha * p[k]).clamp(b.lower[k], b.upper[k]);
                        cand[k] = v - x[k];
                    }
                    let len = norm(&cand);
                    if len > delta {
                        // x + t·cand stays in the box for t ∈ [0, 1]
                        cand.iter_mut().for_each(|c| *c *= delta / len);
                    }
                    oracle.hv(x, &cand, &mut h_cand);
                    if model_gain(g, &cand, &h_cand) >= at_box {
                        s.copy_from_slice(&cand);
                        hs.copy_from_slice(&h_cand);
                        taken = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if !taken {
                    if !a_box.is_finite() {
                        return;
                    }
                    for k in 0..n {
                        s[k] += a_box * p[k];
                        hs[k] += a_box * hp_full[k];
                    }
                    // the bound variable lands exactly on its bound
                    for k in 0..n {
                        let v = (x[k] + s[k]).clamp(b.lower[k], b.upper[k]);
                        s[k] = v - x[k];
                    }
                }
                if norm(s) >= delta * (1.0 - 1e-12) {
                    return;
                }
                restart = true;
                break;
            }
            let a = a_cg.min(a_tr);
            if !a.is_finite() {
                return;
            }
            for k in 0..n {
                s[k] += a * p[k];
                hs[k] += a * hp_full[k];
            }
            if a_cg >= a_tr {
                return;
            }
            for k in 0..n {
                r[k] += a * hp[k];
            }
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
        }
        if !restart {
            return;
        }
    }
}

/// Maximizes `oracle` over the box until `‖x − Π(x + ∇f)‖ ≤ target_residual`.
pub fn trust_region_maximize<O: SmoothOracle + ?Sized>(
    oracle: &mut O,
    b: &BoxBounds,
    start: &[f64],
    target_residual: f64,
    cfg: &TrustRegionConfig,
) -> Result<TrustRegionOutcome> {
    cfg.validate()?;
    b.check_dim(start.len())?;
    if !b.contains(start) {
        return Err(Error::Domain("start point outside box".into()));
    }
    let n = start.len();
    let mut x = start.to_vec();
    let mut g = vec![0.0; n];
    let mut f = oracle.gradient(&x, &mut g);
    if !f.is_finite() {
        return Err(Error::NonFiniteStart);
    }
    let mut counter = Counter { oracle, hvps: 0 };
    let mut delta = cfg.initial_radius;
    let mut res = norm(&residual(b, &x, &g));
    let mut iterations = 0;
    let mut accepted = 0;
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    while res > target_residual && iterations < cfg.max_iterations {
        iterations += 1;
        let (mut s, mut hs) = cauchy_point(&mut counter, b, &x, &g, delta, cfg.max_segments);
        if cfg.subspace_refinement {
            refine(&mut counter, b, &x, &g, delta, &mut s, &mut hs, cfg);
        }
        for k in 0..n {
            trial[k] = x[k] + s[k];
        }
        b.clamp_into(&mut trial);
        for k in 0..n {
            s[k] = trial[k] - x[k];
        }
        let pred = dot(&g, &s) + 0.5 * dot(&s, &hs);
        let step = norm(&s);
        if step == 0.0 || pred <= 0.0 {
            trace!("trust region: no model ascent (step {step:e}, pred {pred:e})");
            delta *= cfg.gamma0;
            if delta < 1e-300 {
                break;
            }
            continue;
        }
        let f_trial = counter.oracle.gradient(&trial, &mut g_trial);
        let mut actual = f_trial - f;
        if f_trial.is_finite() && pred <= 1e-8 * (1.0 + f.abs()) {
            // f_trial − f is mostly cancellation here; the trapezoid rule on the
            // gradients is accurate to O(‖s‖³)
            actual = 0.5 * (dot(&g, &s) + dot(&g_trial, &s));
        }
        let rho = if f_trial.is_finite() { actual / pred } else { f64::NEG_INFINITY };
        if rho >= cfg.mu {
            accepted += 1;
            std::mem::swap(&mut x, &mut trial);
            f = f_trial;
            std::mem::swap(&mut g, &mut g_trial);
            res = norm(&residual(b, &x, &g));
            if rho >= cfg.eta {
                delta = delta.max(cfg.gamma2 * step).min(cfg.gamma2 * delta);
            }
        } else {
            delta = (cfg.gamma1 * step).clamp(cfg.gamma0 * delta, cfg.gamma1 * delta);
        }
        if delta <= 1e-15 * (1.0 + norm(&x)) {
            break;
        }
    }
    Ok(TrustRegionOutcome {
        x,
        value: f,
        residual_norm: res,
        iterations,
        accepted,
        hvp_count: counter.hvps,
        converged: res <= target_residual,
    })
}
