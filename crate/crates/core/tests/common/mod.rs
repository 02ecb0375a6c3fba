#![allow(dead_code)]

use cachenet::boxsolve::{project_box, BoxBounds, QuadraticOracle, SmoothOracle};
use cachenet::harness::{apply_kappa, generate, GenConfig, TopologySpec};
use cachenet::model::{feasibility_report, Graph, Instance, Request};
use cachenet::{Strategy, UtilityFunction};
use rand::Rng;

/// Star of `paths` into a hub: request `k` runs `leaf_k → hub`, item `k` served at the hub.
pub fn shared_link(demands: &[f64], capacity: f64, leaf_cache: usize) -> Instance {
    let graph = Graph::from_undirected(2, &[(0, 1)]);
    let mut link_capacity = vec![0.0; graph.edge_count()];
    link_capacity[graph.edge_index(1, 0).unwrap()] = capacity;
    let k = demands.len();
    Instance {
        graph,
        catalog_size: k,
        servers: vec![vec![1]; k],
        requests: demands
            .iter()
            .enumerate()
            .map(|(i, &d)| Request {
                item: i,
                path: vec![0, 1],
                demand: d,
            })
            .collect(),
        link_capacity,
        cache_capacity: vec![leaf_cache, k],
        utility: UtilityFunction::default(),
    }
}

/// Instance from an undirected link list with capacities `κ·λmax`.
/// `free_cache[v]` counts slots beyond the node's designated items.
pub fn build(
    nodes: usize,
    links: &[(usize, usize)],
    servers: Vec<Vec<usize>>,
    requests: &[(usize, &[usize], f64)],
    free_cache: &[usize],
    kappa: f64,
) -> Instance {
    let graph = Graph::from_undirected(nodes, links);
    let cache_capacity = (0..nodes)
        .map(|v| free_cache[v] + servers.iter().filter(|s| s.contains(&v)).count())
        .collect();
    let mut inst = Instance {
        link_capacity: vec![0.0; graph.edge_count()],
        graph,
        catalog_size: servers.len(),
        servers,
        requests: requests
            .iter()
            .map(|&(item, path, demand)| Request {
                item,
                path: path.to_vec(),
                demand,
            })
            .collect(),
        cache_capacity,
        utility: UtilityFunction::default(),
    };
    apply_kappa(&mut inst, kappa);
    inst
}

/// Two unit requests from node 0 sharing the link to the server; no cache room.
pub fn pair_no_cache(kappa: f64) -> Instance {
    build(2, &[(0, 1)], vec![vec![1], vec![1]], &[(0, &[0, 1], 1.0), (1, &[0, 1], 1.0)], &[0, 0], kappa)
}

/// One request over `0 → 1 → 2`, one free slot at the relay node 1.
pub fn relay(kappa: f64) -> Instance {
    build(3, &[(0, 1), (1, 2)], vec![vec![2]], &[(0, &[0, 1, 2], 1.0)], &[0, 1, 0], kappa)
}

/// The relay line with demand 2: two busy links and a positive objective when tight.
pub fn two_link(kappa: f64) -> Instance {
    build(3, &[(0, 1), (1, 2)], vec![vec![2]], &[(0, &[0, 1, 2], 2.0)], &[0, 1, 0], kappa)
}

/// Two items with demands 1 and 0.5 competing for one slot at the requesting node.
pub fn competing(kappa: f64) -> Instance {
    build(2, &[(0, 1)], vec![vec![1], vec![1]], &[(0, &[0, 1], 1.0), (1, &[0, 1], 0.5)], &[1, 0], kappa)
}

/// One item over `0 → 1` with a free slot at the requesting node.
pub fn tiny_path(kappa: f64) -> Instance {
    build(2, &[(0, 1)], vec![vec![1]], &[(0, &[0, 1], 1.0)], &[1, 0], kappa)
}

/// Micro-instances with at most three grid coordinates: `(name, instance, dims)`.
pub fn micro_cases(kappa: f64) -> Vec<(&'static str, Instance, usize)> {
    vec![
        ("tiny_path", tiny_path(kappa), 2),
        ("pair_no_cache", pair_no_cache(kappa), 2),
        ("relay", relay(kappa), 2),
        ("competing", competing(kappa), 3),
    ]
}

/// Strategy at unit grid coordinates `p` for the micro-instance `name`.
/// Rates are fractions of demand; `competing` fills its single slot (`y_b = 1 − y_a`),
/// which loses nothing because every constraint is monotone in `y`.
pub fn micro_point(name: &str, inst: &Instance, p: &[f64]) -> Strategy {
    let mut s = Strategy::rejecting(inst);
    let rates = match name {
        "tiny_path" => {
            s.y[0][0] = p[0];
            &p[1..]
        }
        "pair_no_cache" => p,
        "relay" => {
            s.y[1][0] = p[0];
            &p[1..]
        }
        "competing" => {
            s.y[0][0] = p[0];
            s.y[0][1] = 1.0 - p[0];
            &p[1..]
        }
        _ => panic!("unknown micro-instance {name}"),
    };
    for ((r, u), q) in s.r.iter_mut().zip(rates).zip(&inst.requests) {
        *r = u * q.demand;
    }
    s
}

/// Grid optimum of a micro-instance, optionally with replaced link capacities.
pub fn micro_grid(name: &str, inst: &Instance, dims: usize, h: f64) -> GridOptimum {
    grid_max(inst, dims, h, |p| micro_point(name, inst, p))
}

/// Small generated instances used by the property suites.
pub fn small_generated(seed: u64, kappa: f64) -> Instance {
    let specs = [
        GenConfig::new(TopologySpec::Cycle { n: 6 }, 4, 8, 3, 1),
        GenConfig::new(TopologySpec::Grid2d { rows: 3, cols: 3 }, 4, 8, 4, 2),
        GenConfig::new(TopologySpec::BalancedTree { branching: 2, depth: 2 }, 3, 6, 3, 1),
    ];
    let cfg = specs[(seed % 3) as usize].clone().with_seed(seed).with_kappa(kappa);
    generate(&cfg).unwrap()
}

/// Uniform draw with free cache entries and residual fractions in `[lo, hi]`.
pub fn random_strategy(inst: &Instance, rng: &mut impl Rng, lo: f64, hi: f64) -> Strategy {
    let mut s = Strategy::admitting(inst);
    for (v, row) in s.y.iter_mut().enumerate() {
        for (i, y) in row.iter_mut().enumerate() {
            *y = if inst.is_server(v, i) { 1.0 } else { rng.random_range(lo..=hi) };
        }
    }
    for (r, q) in s.r.iter_mut().zip(&inst.requests) {
        *r = q.demand * rng.random_range(lo..=hi);
    }
    s
}

/// Free `(node, item)` entries of the cache matrix.
pub fn free_entries(inst: &Instance) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for v in 0..inst.node_count() {
        for i in 0..inst.catalog_size {
            if !inst.is_server(v, i) {
                out.push((v, i));
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct GridOptimum {
    /// Best objective over feasible grid points (`-inf` when none is feasible).
    pub value: f64,
    pub point: Vec<f64>,
    /// Largest objective change between the best point and a grid neighbour.
    pub error: f64,
}

/// Exhaustive search over `{0, h, 2h, …, 1}^dims`; `build` turns unit coordinates into a strategy.
pub fn grid_max(inst: &Instance, dims: usize, h: f64, build: impl Fn(&[f64]) -> Strategy) -> GridOptimum {
    let steps = (1.0 / h).round() as usize;
    let profile = inst.profile();
    let coord = |idx: &[usize]| -> Vec<f64> { idx.iter().map(|&k| k as f64 / steps as f64).collect() };
    let mut idx = vec![0usize; dims];
    let mut best = GridOptimum {
        value: f64::NEG_INFINITY,
        point: Vec::new(),
        error: 0.0,
    };
    let mut best_idx = Vec::new();
    loop {
        let p = coord(&idx);
        let s = build(&p);
        if feasibility_report(inst, &s, 1e-12).unwrap().feasible {
            let f = profile.value(&s.r);
            if f > best.value {
                best.value = f;
                best.point = p;
                best_idx = idx.clone();
            }
        }
        let mut d = 0;
        while d < dims {
            idx[d] += 1;
            if idx[d] <= steps {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == dims {
            break;
        }
    }
    if best.value.is_finite() {
        let f0 = best.value;
        for code in 0..3usize.pow(dims as u32) {
            let mut nb = best_idx.clone();
            let mut c = code;
            for k in nb.iter_mut() {
                let off = (c % 3) as i64 - 1;
                c /= 3;
                *k = (*k as i64 + off).clamp(0, steps as i64) as usize;
            }
            let f = profile.value(&build(&coord(&nb)).r);
            best.error = best.error.max((f - f0).abs());
        }
    }
    best
}

/// Central difference of `f` along every coordinate of `x`.
pub fn central_diff(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|k| {
            p[k] = x[k] + h;
            let up = f(&p);
            p[k] = x[k] - h;
            let down = f(&p);
            p[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a − b| / max(1, |b|)`, the mixed error used by the gradient checks.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Projected gradient ascent with step `1/L`, `L` the Frobenius norm of `H`.
pub fn pg_oracle(q: &QuadraticOracle, b: &BoxBounds, start: &[f64]) -> Vec<f64> {
    let l: f64 = q.hessian.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
    let mut q = q.clone();
    let mut x = start.to_vec();
    let mut g = vec![0.0; x.len()];
    for _ in 0..200_000 {
        q.gradient(&x, &mut g);
        let step: Vec<f64> = x.iter().zip(&g).map(|(a, d)| a + d / l).collect();
        let next = project_box(b, &step).unwrap();
        let moved = next.iter().zip(&x).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
        x = next;
        if moved < 1e-13 {
            break;
        }
    }
    x
}

/// `H = −(AᵀA + c·I)` with random `A`, and a random linear term.
pub fn random_concave(rng: &mut impl Rng, n: usize) -> QuadraticOracle {
    let a: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let c = rng.random_range(0.1..1.0);
    let hessian = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let ata: f64 = (0..n).map(|k| a[k][i] * a[k][j]).sum();
                    -(ata + if i == j { c } else { 0.0 })
                })
                .collect()
        })
        .collect();
    let linear = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    QuadraticOracle { hessian, linear }
}
