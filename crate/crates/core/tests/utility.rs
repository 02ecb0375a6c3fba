mod common;

use cachenet::utility::{is_unbounded_above, objective_f, theta_bound};
use cachenet::{UtilityFunction, UtilityProfile};
use common::central_diff;
use proptest::prelude::*;

fn families() -> Vec<UtilityFunction> {
    vec![
        UtilityFunction::log_shifted(0.1),
        UtilityFunction::log_shifted(2.0),
        UtilityFunction::alpha_fair(0.0, 1.5),
        UtilityFunction::alpha_fair(0.5, 1.0),
        UtilityFunction::alpha_fair(1.0, 2.0),
        UtilityFunction::alpha_fair(2.0, 1.0),
    ]
}

fn log_grid() -> impl Iterator<Item = f64> {
    (0..=180).map(|k| 10f64.powf(-6.0 + k as f64 / 20.0))
}

#[test]
fn all_rejected_value() {
    let p = UtilityProfile::uniform(UtilityFunction::log_shifted(0.1), vec![1.0; 100]);
    let (f, _) = objective_f(&p, &[1.0; 100]).unwrap();
    assert!((f - 100.0 * 0.1f64.ln()).abs() < 1e-9);
    assert!((f + 230.26).abs() < 5e-3);
}

#[test]
fn objective_gradient_matches_differences() {
    let demand = vec![1.0, 2.0, 0.5, 3.0];
    let fns = vec![
        UtilityFunction::log_shifted(0.1),
        UtilityFunction::alpha_fair(1.0, 2.0),
        UtilityFunction::alpha_fair(0.5, 1.0),
        UtilityFunction::alpha_fair(2.0, 1.0),
    ];
    let p = UtilityProfile::new(fns, demand).unwrap();
    let r = vec![0.3, 0.7, 0.1, 1.2];
    let (_, grad) = objective_f(&p, &r).unwrap();
    assert!(grad.iter().all(|&g| g <= 0.0));
    let fd = central_diff(&r, 1e-6, |x| p.value(x));
    for (a, b) in grad.iter().zip(&fd) {
        assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn concave_on_log_grid() {
    for f in families() {
        for lam in log_grid() {
            assert!(f.second_derivative(lam) <= 0.0, "{f:?} at {lam}");
            assert!(f.derivative(lam) >= 0.0);
        }
    }
}

#[test]
fn theta_dominates_sampled_returns() {
    for f in families() {
        let theta = theta_bound(&f, 0.0);
        if !theta.is_finite() {
            continue;
        }
        for lam in log_grid() {
            assert!(lam * f.derivative(lam) <= theta + 1e-12, "{f:?} at {lam}");
        }
    }
    let floored = UtilityFunction::alpha_fair(2.0, 1.0);
    let theta = theta_bound(&floored, 0.01);
    assert!((theta - 100.0).abs() < 1e-9);
    for lam in log_grid().filter(|&l| l >= 0.01) {
        assert!(lam * floored.derivative(lam) <= theta + 1e-9);
    }
}

#[test]
fn unbounded_flags_by_family() {
    assert!(is_unbounded_above(&UtilityFunction::log_shifted(0.1)));
    assert!(is_unbounded_above(&UtilityFunction::alpha_fair(0.5, 1.0)));
    assert!(!is_unbounded_above(&UtilityFunction::alpha_fair(2.0, 1.0)));
}

proptest! {
    #[test]
    fn objective_is_concave_in_r(
        a in proptest::collection::vec(0.0f64..=1.0, 5),
        b in proptest::collection::vec(0.0f64..=1.0, 5),
        t in 0.0f64..=1.0,
        family in 0usize..6,
    ) {
        let demand = vec![1.0, 2.0, 0.5, 1.5, 3.0];
        let f = families()[family];
        let p = UtilityProfile::uniform(f, demand.clone());
        // stay off λ = 0 where some families diverge
        let ra: Vec<f64> = a.iter().zip(&demand).map(|(u, d)| 0.99 * u * d).collect();
        let rb: Vec<f64> = b.iter().zip(&demand).map(|(u, d)| 0.99 * u * d).collect();
        let mid: Vec<f64> = ra.iter().zip(&rb).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let lhs = p.value(&mid);
        let rhs = t * p.value(&ra) + (1.0 - t) * p.value(&rb);
        prop_assert!(lhs >= rhs - 1e-9 * rhs.abs().max(1.0));
    }
}
