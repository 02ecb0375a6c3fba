use super::layout::{Layout, VarSet};
use super::{Instance, Strategy};
use crate::error::{Error, Result};

/// Gradient over `(y, r)` shaped like a [`Strategy`]; pinned entries are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyGradient {
    pub y: Vec<Vec<f64>>,
    pub r: Vec<f64>,
}

impl StrategyGradient {
    fn from_packed(layout: &Layout, g: &[f64]) -> Self {
        let mut y = vec![vec![0.0; layout.n_items]; layout.n_nodes];
        for (k, &(v, i)) in layout.y_of_var.iter().enumerate() {
            y[v][i] = g[k];
        }
        StrategyGradient {
            y,
            r: g[layout.n_y..].to_vec(),
        }
    }
}

/// Link and cache constraint values, indexed by edge and node.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintEval {
    /// `g_ba = Σλ̄ − ρ`.
    pub g: Vec<f64>,
    /// `t_ba = Σλ̄ − C`.
    pub threshold: Vec<f64>,
    /// `g − t = C − ρ`.
    pub link_slack: Vec<f64>,
    /// Whether any response crosses the edge; idle edges carry no constraint.
    pub busy: Vec<bool>,
    /// Free cache usage `g_v`.
    pub cache_usage: Vec<f64>,
    /// `c'_v − g_v`.
    pub cache_slack: Vec<f64>,
}

fn full_layout(inst: &Instance, s: &Strategy) -> Result<(Layout, Vec<f64>)> {
    s.check_dims(inst)?;
    let layout = Layout::new(inst, VarSet::Full)?;
    let x = layout.pack(s);
    Ok((layout, x))
}

/// Expected response rate `ρ` on every directed edge.
pub fn link_loads(inst: &Instance, s: &Strategy) -> Result<Vec<f64>> {
    let (layout, x) = full_layout(inst, s)?;
    Ok(layout.loads(&x))
}

pub fn constraint_values(inst: &Instance, s: &Strategy) -> Result<ConstraintEval> {
    let (layout, x) = full_layout(inst, s)?;
    let rho = layout.loads(&x);
    let g: Vec<f64> = layout
        .edge_demand
        .iter()
        .zip(&rho)
        .map(|(d, r)| d - r)
        .collect();
    let threshold: Vec<f64> = (0..layout.n_edges()).map(|e| layout.threshold(e)).collect();
    let link_slack = layout.capacity.iter().zip(&rho).map(|(c, r)| c - r).collect();
    let cache_usage = layout.cache_usage(&x);
    let eff = inst.effective_cache_capacity();
    let cache_slack = eff
        .iter()
        .zip(&cache_usage)
        .map(|(&c, u)| c as f64 - u)
        .collect();
    Ok(ConstraintEval {
        g,
        threshold,
        link_slack,
        busy: layout.edge_paths.iter().map(|&n| n > 0).collect(),
        cache_usage,
        cache_slack,
    })
}

fn busy_edge_index(inst: &Instance, layout: &Layout, edge: (usize, usize)) -> Result<usize> {
    let e = inst
        .graph
        .edge_index(edge.0, edge.1)
        .ok_or(Error::UnknownEdge(edge.0, edge.1))?;
    if layout.edge_paths[e] == 0 {
        return Err(Error::IdleEdge(edge.0, edge.1));
    }
    Ok(e)
}

/// Gradient of `g_ba` for the response edge `edge = (b, a)`.
pub fn constraint_gradients(
    inst: &Instance,
    s: &Strategy,
    edge: (usize, usize),
) -> Result<StrategyGradient> {
    let (layout, x) = full_layout(inst, s)?;
    let e = busy_edge_index(inst, &layout, edge)?;
    let mut u = vec![0.0; layout.n_edges()];
    u[e] = 1.0;
    let mut g = vec![0.0; layout.n_vars()];
    layout.add_load_gradient(&x, &u, -1.0, &mut g);
    Ok(StrategyGradient::from_packed(&layout, &g))
}

/// Concave surrogate `g̃` per edge.
pub fn g_tilde_values(inst: &Instance, s: &Strategy) -> Result<Vec<f64>> {
    let (layout, x) = full_layout(inst, s)?;
    Ok(layout.g_tilde(&x))
}

/// A supergradient of `g̃_ba` (zero on the flat branch and at the kink).
pub fn g_tilde_supergradient(
    inst: &Instance,
    s: &Strategy,
    edge: (usize, usize),
) -> Result<StrategyGradient> {
    let (layout, x) = full_layout(inst, s)?;
    let e = busy_edge_index(inst, &layout, edge)?;
    let mut u = vec![0.0; layout.n_edges()];
    u[e] = 1.0;
    let mut g = vec![0.0; layout.n_vars()];
    layout.add_g_tilde_supergradient(&x, &u, &mut g);
    Ok(StrategyGradient::from_packed(&layout, &g))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeasibilityReport {
    /// `(edge, C − ρ)` for every busy edge.
    pub link_slack: Vec<(usize, f64)>,
    /// `(node, c'_v − g_v)` for every node.
    pub cache_slack: Vec<(usize, f64)>,
    /// Largest distance of any entry from its box (pinned entries must equal 1).
    pub box_violation: f64,
    pub max_violation: f64,
    pub satisfied_ratio: f64,
    pub feasible: bool,
}

pub fn feasibility_report(inst: &Instance, s: &Strategy, tol: f64) -> Result<FeasibilityReport> {
    let eval = constraint_values(inst, s)?;
    let mut box_violation: f64 = 0.0;
    let mut bump = |v: f64| {
        box_violation = if v.is_nan() { f64::INFINITY } else { box_violation.max(v) };
    };
    for (v, row) in s.y.iter().enumerate() {
        for (i, &y) in row.iter().enumerate() {
            if inst.is_server(v, i) {
                bump((y - 1.0).abs());
            } else {
                bump(-y);
                bump(y - 1.0);
            }
        }
    }
    for (q, &r) in inst.requests.iter().zip(&s.r) {
        bump(-r);
        bump(r - q.demand);
    }
    let link_slack: Vec<(usize, f64)> = eval
        .link_slack
        .iter()
        .enumerate()
        .filter(|(e, _)| eval.busy[*e])
        .map(|(e, &sl)| (e, sl))
        .collect();
    let cache_slack: Vec<(usize, f64)> = eval.cache_slack.iter().copied().enumerate().collect();
    let mut max_violation = box_violation;
    let mut satisfied = 0usize;
    for &(_, sl) in link_slack.iter().chain(&cache_slack) {
        max_violation = if sl.is_nan() { f64::INFINITY } else { max_violation.max(-sl) };
        if sl >= -tol {
            satisfied += 1;
        }
    }
    let total = link_slack.len() + cache_slack.len();
    Ok(FeasibilityReport {
        link_slack,
        cache_slack,
        box_violation,
        max_violation,
        satisfied_ratio: if total == 0 { 1.0 } else { satisfied as f64 / total as f64 },
        feasible: max_violation <= tol,
    })
}

/// `g(s1) + g(s2) − g(s1∨s2) − g(s1∧s2)` per edge.
pub fn lattice_check_sample(inst: &Instance, s1: &Strategy, s2: &Strategy) -> Result<Vec<f64>> {
    let g1 = constraint_values(inst, s1)?.g;
    let g2 = constraint_values(inst, s2)?.g;
    let gj = constraint_values(inst, &s1.join(s2))?.g;
    let gm = constraint_values(inst, &s1.meet(s2))?.g;
    Ok((0..g1.len()).map(|e| g1[e] + g2[e] - gj[e] - gm[e]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Graph, Request};
    use crate::utility::UtilityFunction;

    /// `v0 – v1` with the item served at `v1`, one request from `v0`.
    fn two_node(cap: f64) -> Instance {
        let graph = Graph::from_undirected(2, &[(0, 1)]);
        let m = graph.edge_count();
        let mut link_capacity = vec![0.0; m];
        link_capacity[graph.edge_index(1, 0).unwrap()] = cap;
        Instance {
            graph,
            catalog_size: 1,
            servers: vec![vec![1]],
            requests: vec![Request {
                item: 0,
                path: vec![0, 1],
                demand: 1.0,
            }],
            link_capacity,
            cache_capacity: vec![1, 1],
            utility: UtilityFunction::default(),
        }
    }

    fn strat(y0: f64, r: f64) -> Strategy {
        Strategy {
            y: vec![vec![y0], vec![1.0]],
            r: vec![r],
        }
    }

    #[test]
    fn load_examples() {
        let inst = two_node(0.9);
        let e = inst.graph.edge_index(1, 0).unwrap();
        assert_eq!(link_loads(&inst, &strat(0.0, 0.0)).unwrap()[e], 1.0);
        assert_eq!(link_loads(&inst, &strat(1.0, 0.0)).unwrap()[e], 0.0);
        let rho = link_loads(&inst, &strat(0.5, 0.3)).unwrap()[e];
        assert!((rho - 0.7 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn constraint_example() {
        let inst = two_node(0.9);
        let e = inst.graph.edge_index(1, 0).unwrap();
        let ev = constraint_values(&inst, &strat(0.5, 0.3)).unwrap();
        assert!((ev.g[e] - 0.65).abs() < 1e-12);
        assert!((ev.threshold[e] - 0.1).abs() < 1e-12);
        assert!((ev.link_slack[e] - 0.55).abs() < 1e-12);
        assert!(!ev.busy[inst.graph.edge_index(0, 1).unwrap()]);
    }

    #[test]
    fn gradient_examples() {
        let inst = two_node(0.9);
        let g = constraint_gradients(&inst, &strat(0.0, 0.0), (1, 0)).unwrap();
        assert_eq!(g.r, vec![1.0]);
        assert_eq!(g.y[0][0], 1.0);
        assert_eq!(g.y[1][0], 0.0);
        let g = constraint_gradients(&inst, &strat(1.0, 0.0), (1, 0)).unwrap();
        assert_eq!(g.r, vec![0.0]);
        assert!(matches!(
            constraint_gradients(&inst, &strat(0.0, 0.0), (0, 1)),
            Err(Error::IdleEdge(0, 1))
        ));
    }

    #[test]
    fn g_tilde_and_sandwich_example() {
        let inst = two_node(0.9);
        let e = inst.graph.edge_index(1, 0).unwrap();
        let gt = g_tilde_values(&inst, &strat(0.5, 0.3)).unwrap()[e];
        assert!((gt - 0.8).abs() < 1e-12);
        let g = constraint_values(&inst, &strat(0.5, 0.3)).unwrap().g[e];
        let lower = (1.0 - (-1.0f64).exp()) * gt;
        assert!((lower - 0.5057).abs() < 1e-4);
        assert!(lower <= g && g <= gt);
        assert!((g_tilde_values(&inst, &strat(0.0, 1.0)).unwrap()[e] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn feasibility_examples() {
        let inst = two_node(0.85);
        let rep = feasibility_report(&inst, &strat(0.0, 1.0), 1e-9).unwrap();
        assert!(rep.feasible);
        assert_eq!(rep.satisfied_ratio, 1.0);
        let rep = feasibility_report(&inst, &strat(0.0, 0.0), 1e-9).unwrap();
        assert!(!rep.feasible);
        assert!((rep.max_violation - 0.15).abs() < 1e-12);
        let mut s = strat(0.0, 1.0);
        s.y[0][0] = 1.5;
        let rep = feasibility_report(&inst, &s, 1e-9).unwrap();
        assert!(!rep.feasible);
        assert!(rep.cache_slack[0].1 < 0.0);
    }

    #[test]
    fn lattice_defect_zero_on_comparable_pairs() {
        let inst = two_node(0.9);
        let a = strat(0.2, 0.1);
        let b = strat(0.6, 0.4);
        assert!(lattice_check_sample(&inst, &a, &a).unwrap().iter().all(|d| d.abs() < 1e-15));
        assert!(lattice_check_sample(&inst, &a, &b).unwrap().iter().all(|d| d.abs() < 1e-15));
    }
}
