//! Utility families and the aggregate objective over residual rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A concave, non-decreasing, twice differentiable utility of an admitted rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilityFunction {
    /// `ln(λ + offset)`.
    LogShifted { offset: f64 },
    /// `weight·λ^(1−α)/(1−α)`, or `weight·ln λ` when `α = 1`.
    AlphaFair { alpha: f64, weight: f64 },
}

impl Default for UtilityFunction {
    fn default() -> Self {
        UtilityFunction::LogShifted { offset: 0.1 }
    }
}

impl UtilityFunction {
    pub fn log_shifted(offset: f64) -> Self {
        UtilityFunction::LogShifted { offset }
    }

    pub fn alpha_fair(alpha: f64, weight: f64) -> Self {
        UtilityFunction::AlphaFair { alpha, weight }
    }

    pub fn check(&self) -> Result<()> {
        match *self {
            UtilityFunction::LogShifted { offset } if !(offset >= 0.0 && offset.is_finite()) => {
                Err(Error::Config(format!("log offset must be finite and >= 0, got {offset}")))
            }
            UtilityFunction::AlphaFair { alpha, weight }
                if !(alpha >= 0.0 && alpha.is_finite() && weight > 0.0 && weight.is_finite()) =>
            {
                Err(Error::Config(format!("alpha-fair needs alpha >= 0 and weight > 0, got ({alpha}, {weight})")))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, lambda: f64) -> f64 {
        match *self {
            UtilityFunction::LogShifted { offset } => (lambda + offset).ln(),
            UtilityFunction::AlphaFair { alpha, weight } => {
                if alpha == 1.0 {
                    weight * lambda.ln()
                } else if lambda == 0.0 && alpha > 1.0 {
                    f64::NEG_INFINITY
                } else {
                    weight * lambda.powf(1.0 - alpha) / (1.0 - alpha)
                }
            }
        }
    }

    pub fn derivative(&self, lambda: f64) -> f64 {
        match *self {
            UtilityFunction::LogShifted { offset } => 1.0 / (lambda + offset),
            UtilityFunction::AlphaFair { alpha, weight } => weight * lambda.powf(-alpha),
        }
    }

    pub fn second_derivative(&self, lambda: f64) -> f64 {
        match *self {
            UtilityFunction::LogShifted { offset } => -1.0 / ((lambda + offset) * (lambda + offset)),
            UtilityFunction::AlphaFair { alpha, weight } => -alpha * weight * lambda.powf(-alpha - 1.0),
        }
    }

    /// `argmax_{0 ≤ λ ≤ cap} U(λ) − price·λ`.
    pub fn price_response(&self, price: f64, cap: f64) -> f64 {
        if price <= 0.0 {
            return cap;
        }
        let lambda = match *self {
            UtilityFunction::LogShifted { offset } => 1.0 / price - offset,
            UtilityFunction::AlphaFair { alpha, weight } => {
                if alpha == 0.0 {
                    if weight >= price {
                        cap
                    } else {
                        0.0
                    }
                } else {
                    (weight / price).powf(1.0 / alpha)
                }
            }
        };
        lambda.clamp(0.0, cap)
    }

    /// Whether the utility is finite (and differentiable) at zero rate.
    pub fn finite_at_zero(&self) -> bool {
        match *self {
            UtilityFunction::LogShifted { offset } => offset > 0.0,
            UtilityFunction::AlphaFair { alpha, .. } => alpha == 0.0,
        }
    }
}

/// `sup_{λ ≥ floor} λ·U'(λ)`; `f64::INFINITY` when unbounded.
pub fn theta_bound(f: &UtilityFunction, domain_floor: f64) -> f64 {
    let floor = domain_floor.max(0.0);
    match *f {
        // λ/(λ+ω₀) increases toward 1.
        UtilityFunction::LogShifted { .. } => 1.0,
        UtilityFunction::AlphaFair { alpha, weight } => {
            if alpha == 1.0 {
                weight
            } else if alpha < 1.0 {
                f64::INFINITY
            } else if floor > 0.0 {
                weight * floor.powf(1.0 - alpha)
            } else {
                f64::INFINITY
            }
        }
    }
}

pub fn is_unbounded_above(f: &UtilityFunction) -> bool {
    match *f {
        UtilityFunction::LogShifted { .. } => true,
        UtilityFunction::AlphaFair { alpha, .. } => alpha <= 1.0,
    }
}

/// One utility per request together with the demand vector.
#[derive(Clone, Debug, PartialEq)]
pub struct UtilityProfile {
    pub functions: Vec<UtilityFunction>,
    pub demand: Vec<f64>,
}

impl UtilityProfile {
    pub fn new(functions: Vec<UtilityFunction>, demand: Vec<f64>) -> Result<Self> {
        if functions.len() != demand.len() {
            return Err(Error::Dimension {
                what: "utility functions vs demands",
                expected: demand.len(),
                got: functions.len(),
            });
        }
        for f in &functions {
            f.check()?;
        }
        Ok(Self { functions, demand })
    }

    pub fn uniform(f: UtilityFunction, demand: Vec<f64>) -> Self {
        Self {
            functions: vec![f; demand.len()],
            demand,
        }
    }

    pub fn len(&self) -> usize {
        self.demand.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demand.is_empty()
    }

    /// Largest θ over all requests.
    pub fn theta(&self, domain_floor: f64) -> f64 {
        self.functions
            .iter()
            .map(|f| theta_bound(f, domain_floor))
            .fold(0.0, f64::max)
    }

    /// `Σ U_n(λ̄_n)`, the value with every request fully admitted.
    pub fn unconstrained_optimum(&self) -> f64 {
        self.functions
            .iter()
            .zip(&self.demand)
            .map(|(f, &d)| f.value(d))
            .sum()
    }

    pub fn value(&self, r: &[f64]) -> f64 {
        self.functions
            .iter()
            .zip(&self.demand)
            .zip(r)
            .map(|((f, &d), &rn)| f.value(d - rn))
            .sum()
    }

    pub(crate) fn gradient_into(&self, r: &[f64], out: &mut [f64]) {
        for (n, g) in out.iter_mut().enumerate() {
            *g = -self.functions[n].derivative(self.demand[n] - r[n]);
        }
    }

    pub(crate) fn curvature_into(&self, r: &[f64], out: &mut [f64]) {
        for (n, h) in out.iter_mut().enumerate() {
            *h = self.functions[n].second_derivative(self.demand[n] - r[n]);
        }
    }
}

/// `F(R) = Σ U_n(λ̄_n − r_n)` and its gradient over `r` (all components ≤ 0).
pub fn objective_f(profile: &UtilityProfile, r: &[f64]) -> Result<(f64, Vec<f64>)> {
    if r.len() != profile.len() {
        return Err(Error::Dimension {
            what: "residual vector",
            expected: profile.len(),
            got: r.len(),
        });
    }
    for (n, (&rn, &d)) in r.iter().zip(&profile.demand).enumerate() {
        if !(rn >= 0.0 && rn <= d) {
            return Err(Error::Domain(format!("r[{n}] = {rn} outside [0, {d}]")));
        }
    }
    let mut grad = vec![0.0; r.len()];
    profile.gradient_into(r, &mut grad);
    Ok((profile.value(r), grad))
}
