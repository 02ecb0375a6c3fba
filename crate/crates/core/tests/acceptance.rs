//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use cachenet::boxsolve::{trust_region_maximize, BoxBounds, SmoothOracle, TrustRegionConfig};
use cachenet::convexrelax::{solve_cr, tightened_capacities, CrConfig, SANDWICH};
use cachenet::harness::{
    generate, kappa_sweep, scaling_sweep, table_preset, Algorithm, ExperimentResult, SolverConfigs, TABLE_LABELS,
};
use cachenet::lbsb::{barrier_eval, solve_lbsb, suboptimality_certificate, LbsbConfig, LbsbResult, LbsbState};
use cachenet::model::{
    constraint_gradients, constraint_values, g_tilde_values, lattice_check_sample, link_loads, Instance,
};
use cachenet::placement::{build_plan, estimate_marginals, monte_carlo_load, sample_placement};
use cachenet::utility::objective_f;
use cachenet::Strategy;
use common::{
    central_diff, free_entries, micro_cases, micro_grid, pg_oracle, random_concave, random_strategy, rel_err,
    small_generated,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LOOSE_KAPPA: f64 = 0.95;
const LOOSE_REL_TOL: f64 = 0.01;
const RUNTIME_LIMIT_S: f64 = 60.0;
const EXACT_REL_TOL: f64 = 0.005;
const FEASIBILITY_TOL: f64 = 1e-6;
const FEASIBILITY_SEEDS: u64 = 20;
const FEASIBILITY_KAPPAS: [f64; 2] = [0.95, 0.85];
const KKT_TOL: f64 = 1e-4;
const GRID_STEP: f64 = 0.02;
const MICRO_KAPPAS: [f64; 3] = [0.95, 0.85, 0.7];
const SCALES: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
const SCALING_KAPPA: f64 = 0.8;
const RATIO_SLACK: f64 = 1e-6;
const PAIRS_PER_INSTANCE: usize = 1000;
const LATTICE_TOL: f64 = 1e-9;
const CROSS_PARTIAL_TOL: f64 = 1e-7;
const CROSS_PARTIAL_STEP: f64 = 1e-3;
const SANDWICH_TOL: f64 = 1e-9;
const GRADIENT_POINTS: usize = 100;
const GRADIENT_REL_TOL: f64 = 1e-5;
const GRADIENT_STEP: f64 = 1e-6;
const COVERAGE_TOL: f64 = 1e-12;
const MARGINAL_DRAWS: usize = 100_000;
const MARGINAL_SIGMAS: f64 = 4.0;
const MC_PERIODS: usize = 100_000;
const MC_REL_TOL: f64 = 0.02;
const TR_TOL: f64 = 1e-6;
const TR_CASES: usize = 200;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Outcome { pass, detail }
    }
}

/// LBSB runs and comparison results of the feasibility grid, shared by several criteria.
struct Grid {
    lbsb: Vec<(String, LbsbResult, f64)>,
    others: Vec<ExperimentResult>,
}

fn feasibility_grid() -> Grid {
    let algs = [Algorithm::Cr, Algorithm::Greedy1, Algorithm::Greedy2];
    let cfg = SolverConfigs::default();
    let mut grid = Grid {
        lbsb: Vec::new(),
        others: Vec::new(),
    };
    for label in TABLE_LABELS {
        for seed in 0..FEASIBILITY_SEEDS {
            let gen = table_preset(label).unwrap().with_seed(seed);
            for res in kappa_sweep(&gen, &FEASIBILITY_KAPPAS, &algs, &cfg).unwrap() {
                grid.others.push(res);
            }
            for &kappa in &FEASIBILITY_KAPPAS {
                let inst = generate(&gen.clone().with_kappa(kappa)).unwrap();
                let profile = inst.profile();
                let res = solve_lbsb(&inst, &profile, &cfg.lbsb, None).unwrap();
                let cert = suboptimality_certificate(&inst, &profile, &res, 0.0).unwrap();
                let gap = cert.path_count_bound - cert.multiplier_bound;
                grid.lbsb.push((format!("{label}/{seed}/{kappa}"), res, gap));
            }
        }
    }
    grid
}

fn loose_values() -> Outcome {
    let cases = [("cycle", 9.531), ("abilene", 3.812), ("dtelekom", 11.914)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, quoted) in cases {
        let cfg = table_preset(label).unwrap().with_kappa(LOOSE_KAPPA);
        let inst = generate(&cfg).unwrap();
        // every request admitted in full: N·ln(1 + 0.1)
        let target = inst.requests.len() as f64 * 1.1f64.ln();
        let clock = Instant::now();
        let res = solve_lbsb(&inst, &inst.profile(), &LbsbConfig::default(), None).unwrap();
        let secs = clock.elapsed().as_secs_f64();
        let ok = (res.objective - quoted).abs() <= LOOSE_REL_TOL * quoted
            && (target - quoted).abs() <= 5e-4
            && secs <= RUNTIME_LIMIT_S
            && res.feasibility.max_violation <= FEASIBILITY_TOL;
        pass &= ok;
        parts.push(format!("{label} {:.4} (target {quoted}, {secs:.1}s)", res.objective));
    }
    Outcome::new(pass, format!("{}; tol {LOOSE_REL_TOL} rel, {RUNTIME_LIMIT_S}s", parts.join(", ")))
}

fn loose_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut runs = 0;
    let mut where_ = String::from("-");
    for label in TABLE_LABELS {
        for seed in 0..2 {
            let gen = table_preset(label).unwrap().with_seed(seed);
            let res = kappa_sweep(&gen, &[1.0], &Algorithm::ALL, &SolverConfigs::default()).unwrap();
            let inst = generate(&gen).unwrap();
            let optimum = inst.profile().value(&vec![0.0; inst.requests.len()]);
            for alg in Algorithm::ALL {
                let f = res[0].objective(alg).unwrap();
                let err = (f - optimum).abs() / optimum.abs();
                runs += 1;
                if err > worst {
                    worst = err;
                    where_ = format!("{label}/{seed}/{alg}");
                }
            }
        }
    }
    Outcome::new(
        worst <= EXACT_REL_TOL,
        format!("{runs} runs, worst relative error {worst:.2e} at {where_}; tol {EXACT_REL_TOL}"),
    )
}

fn feasibility(grid: &Grid) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut where_ = String::new();
    let mut runs = 0;
    for r in &grid.others {
        for run in &r.runs {
            runs += 1;
            if run.max_violation > worst {
                worst = run.max_violation;
                where_ = format!("{}/{}/{}/{}", r.meta.topology, r.meta.seed, r.meta.kappa, run.algorithm);
            }
        }
    }
    for (tag, res, _) in &grid.lbsb {
        runs += 1;
        if res.feasibility.max_violation > worst {
            worst = res.feasibility.max_violation;
            where_ = format!("{tag}/lbsb");
        }
    }
    Outcome::new(
        worst <= FEASIBILITY_TOL,
        format!("{runs} runs, worst violation {worst:.2e} {where_}; tol {FEASIBILITY_TOL}"),
    )
}

fn kkt(grid: &Grid) -> Outcome {
    let (mut stat, mut comp) = (0.0f64, 0.0f64);
    let mut failing = Vec::new();
    for (tag, res, _) in &grid.lbsb {
        stat = stat.max(res.stationarity);
        comp = comp.max(res.complementarity);
        if res.stationarity > KKT_TOL || res.complementarity > KKT_TOL {
            failing.push(tag.clone());
        }
    }
    failing.truncate(5);
    Outcome::new(
        stat <= KKT_TOL && comp <= KKT_TOL,
        format!(
            "{} LBSB runs, max stationarity {stat:.2e}, max complementarity {comp:.2e}; tol {KKT_TOL}{}",
            grid.lbsb.len(),
            if failing.is_empty() { String::new() } else { format!("; failing {failing:?}") }
        ),
    )
}

fn certificates(grid: &Grid) -> Outcome {
    let mut pass = true;
    let mut worst_margin = f64::INFINITY;
    let mut cases = 0;
    for kappa in MICRO_KAPPAS {
        for (name, inst, dims) in micro_cases(kappa) {
            let profile = inst.profile();
            let res = solve_lbsb(&inst, &profile, &LbsbConfig::default(), None).unwrap();
            let cert = suboptimality_certificate(&inst, &profile, &res, 0.0).unwrap();
            let grid_opt = micro_grid(name, &inst, dims, GRID_STEP);
            let margin = res.objective - (grid_opt.value - cert.multiplier_bound - grid_opt.error);
            worst_margin = worst_margin.min(margin);
            pass &= margin >= 0.0 && cert.path_count_bound >= cert.multiplier_bound;
            cases += 1;
        }
    }
    let order_gap = grid.lbsb.iter().map(|(_, _, g)| *g).fold(f64::INFINITY, f64::min);
    pass &= order_gap >= 0.0;
    Outcome::new(
        pass,
        format!(
            "{cases} micro cases, least margin {worst_margin:.3e} (≥ 0 required, grid {GRID_STEP}); \
             path-count minus multiplier bound ≥ {order_gap:.3e} over {} runs",
            grid.lbsb.len()
        ),
    )
}

fn bracket() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut vacuous = 0;
    for kappa in MICRO_KAPPAS {
        for (name, inst, dims) in micro_cases(kappa) {
            let profile = inst.profile();
            let res = solve_cr(&inst, &profile, &CrConfig::default()).unwrap();
            let upper = micro_grid(name, &inst, dims, GRID_STEP);
            let mut tightened = inst.clone();
            tightened.link_capacity = tightened_capacities(&inst).capacity;
            let lower = micro_grid(name, &tightened, dims, GRID_STEP);
            let above = res.objective <= upper.value + upper.error;
            let below = if lower.value.is_finite() {
                res.objective >= lower.value - lower.error
            } else {
                vacuous += 1;
                true
            };
            if !(above && below) {
                pass = false;
                parts.push(format!("{name}@{kappa}: {} ∉ [{}, {}]", res.objective, lower.value, upper.value));
            }
        }
    }
    let n = 4 * MICRO_KAPPAS.len();
    Outcome::new(
        pass,
        format!("{n} micro cases, {vacuous} with empty tightened set; grid {GRID_STEP} {}", parts.join("; ")),
    )
}

fn scaling() -> Outcome {
    let rows = scaling_sweep(&common::two_link(SCALING_KAPPA), &SCALES, &LbsbConfig::default(), &CrConfig::default())
        .unwrap();
    let ratios: Vec<String> = rows.iter().map(|r| format!("{:.7}", r.ratio)).collect();
    let pass = rows[3].ratio > rows[0].ratio
        && rows.iter().all(|r| r.ratio <= 1.0 + RATIO_SLACK && r.lbsb_objective > 0.0);
    Outcome::new(pass, format!("ratios at m={SCALES:?}: [{}]; cap 1 + {RATIO_SLACK}", ratios.join(", ")))
}

/// Flat `(free y.., r..)` coordinates and the inverse map.
fn flatten(inst: &Instance, s: &Strategy) -> Vec<f64> {
    let mut x: Vec<f64> = free_entries(inst).iter().map(|&(v, i)| s.y[v][i]).collect();
    x.extend_from_slice(&s.r);
    x
}

fn unflatten(inst: &Instance, x: &[f64]) -> Strategy {
    let free = free_entries(inst);
    let mut s = Strategy::admitting(inst);
    for (k, &(v, i)) in free.iter().enumerate() {
        s.y[v][i] = x[k];
    }
    s.r.copy_from_slice(&x[free.len()..]);
    s
}

fn g_of(inst: &Instance, s: &Strategy) -> Vec<f64> {
    constraint_values(inst, s).unwrap().g
}

fn dr_submodularity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut mono, mut lattice, mut cross) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    let h = CROSS_PARTIAL_STEP;
    for seed in 0..3 {
        let inst = small_generated(seed, 0.9);
        for _ in 0..PAIRS_PER_INSTANCE {
            let a = random_strategy(&inst, &mut rng, 0.0, 1.0);
            let b = random_strategy(&inst, &mut rng, 0.0, 1.0);
            let hi = a.join(&b);
            for (u, v) in g_of(&inst, &a).iter().zip(g_of(&inst, &hi)) {
                mono = mono.min(v - u);
            }
            for d in lattice_check_sample(&inst, &a, &b).unwrap() {
                lattice = lattice.min(d);
            }
            let c = random_strategy(&inst, &mut rng, 0.05, 0.95);
            let x = flatten(&inst, &c);
            let i = rng.random_range(0..x.len());
            let j = (i + rng.random_range(1..x.len())) % x.len();
            let g = |di: f64, dj: f64| {
                let mut p = x.clone();
                p[i] += di;
                p[j] += dj;
                g_of(&inst, &unflatten(&inst, &p))
            };
            let (pp, pm, mp, mm) = (g(h, h), g(h, -h), g(-h, h), g(-h, -h));
            for e in 0..pp.len() {
                cross = cross.max((pp[e] - pm[e] - mp[e] + mm[e]) / (4.0 * h * h));
            }
        }
    }
    let pass = mono >= -LATTICE_TOL && lattice >= -LATTICE_TOL && cross <= CROSS_PARTIAL_TOL;
    Outcome::new(
        pass,
        format!(
            "3×{PAIRS_PER_INSTANCE} pairs: least monotone step {mono:.2e}, least lattice defect {lattice:.2e} \
             (tol −{LATTICE_TOL}), largest cross-partial {cross:.2e} (tol {CROSS_PARTIAL_TOL})"
        ),
    )
}

fn sandwich() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = f64::INFINITY;
    for seed in 0..3 {
        let inst = small_generated(seed, 0.9);
        for _ in 0..PAIRS_PER_INSTANCE {
            let s = random_strategy(&inst, &mut rng, 0.0, 1.0);
            let g = g_of(&inst, &s);
            let gt = g_tilde_values(&inst, &s).unwrap();
            for (a, b) in g.iter().zip(&gt) {
                worst = worst.min(a - SANDWICH * b).min(b - a);
            }
        }
    }
    Outcome::new(
        worst >= -SANDWICH_TOL,
        format!("3×{PAIRS_PER_INSTANCE} strategies, least defect {worst:.2e}; tol −{SANDWICH_TOL}"),
    )
}

fn gradients() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut ef, mut eg, mut ep) = (0.0f64, 0.0f64, 0.0f64);
    let (mut points, mut barrier_points) = (0, 0);
    let h = GRADIENT_STEP;
    let mut seed = 0;
    while points < GRADIENT_POINTS || barrier_points < GRADIENT_POINTS {
        let inst = small_generated(seed, 0.85);
        seed += 1;
        let profile = inst.profile();
        let mut state = LbsbState::new(&inst, &LbsbConfig::default()).unwrap();
        state.epsilon = 1.0;
        for (k, s) in state.sigma.iter_mut().enumerate() {
            *s = 0.5 + (k % 4) as f64 * 0.5;
        }
        let busy: Vec<usize> = {
            let ev = constraint_values(&inst, &Strategy::rejecting(&inst)).unwrap();
            (0..ev.busy.len()).filter(|&e| ev.busy[e]).collect()
        };
        for _ in 0..10 {
            let s = random_strategy(&inst, &mut rng, 0.05, 0.95);
            if points < GRADIENT_POINTS {
                points += 1;
                let (_, grad) = objective_f(&profile, &s.r).unwrap();
                let fd = central_diff(&s.r, h, |r| profile.value(r));
                for (a, b) in grad.iter().zip(&fd) {
                    ef = ef.max(rel_err(-a, *b).min(rel_err(*a, *b)));
                }
                let x = flatten(&inst, &s);
                let e = busy[rng.random_range(0..busy.len())];
                let edge = inst.graph.edges()[e];
                let d = constraint_gradients(&inst, &s, edge).unwrap();
                let analytic = flatten(&inst, &Strategy { y: d.y, r: d.r });
                let fd = central_diff(&x, h, |p| g_of(&inst, &unflatten(&inst, p))[e]);
                for (a, b) in analytic.iter().zip(&fd) {
                    eg = eg.max(rel_err(*a, *b));
                }
            }
            if barrier_points < GRADIENT_POINTS {
                let ev = barrier_eval(&inst, &profile, &state, &s).unwrap();
                if !ev.value.is_finite() {
                    continue;
                }
                barrier_points += 1;
                let mut oracle = ev.oracle();
                let x = ev.pack(&s);
                let mut g = vec![0.0; x.len()];
                oracle.gradient(&x, &mut g);
                let fd = central_diff(&x, h, |p| oracle.value(p));
                for (a, b) in g.iter().zip(&fd) {
                    ep = ep.max(rel_err(*a, *b));
                }
            }
        }
    }
    let pass = ef <= GRADIENT_REL_TOL && eg <= GRADIENT_REL_TOL && ep <= GRADIENT_REL_TOL;
    Outcome::new(
        pass,
        format!(
            "{GRADIENT_POINTS} points each: F {ef:.2e}, g {eg:.2e}, barrier {ep:.2e}; tol {GRADIENT_REL_TOL} \
             (error / max(1, |fd|))"
        ),
    )
}

fn placement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut cap_ok, mut coverage, mut sigmas) = (true, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let c = rng.random_range(1..5usize);
        let n = rng.random_range(c..12);
        let mut y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let total: f64 = y.iter().sum();
        if total > c as f64 {
            y.iter_mut().for_each(|v| *v *= c as f64 / total);
        }
        let plan = build_plan(&y, c).unwrap();
        for (i, v) in y.iter().enumerate() {
            coverage = coverage.max((plan.coverage(i) - v).abs());
        }
        for _ in 0..5000 {
            cap_ok &= sample_placement(&plan, rng.random_range(0.0..1.0)).len() <= c;
        }
        let est = estimate_marginals(&plan, MARGINAL_DRAWS, rng.random()).unwrap();
        for (e, p) in est.iter().zip(&y) {
            let sd = (p * (1.0 - p) / MARGINAL_DRAWS as f64).sqrt();
            let z = if sd > 0.0 { (e - p).abs() / sd } else if e == p { 0.0 } else { f64::INFINITY };
            sigmas = sigmas.max(z);
        }
    }
    let mut load_err = 0.0f64;
    for seed in 0..3 {
        let inst = small_generated(seed, 0.85);
        let mut s = random_strategy(&inst, &mut rng, 0.0, 1.0);
        let cap = inst.effective_cache_capacity();
        for (v, row) in s.y.iter_mut().enumerate() {
            let free: f64 = (0..inst.catalog_size).filter(|&i| !inst.is_server(v, i)).map(|i| row[i]).sum();
            let c = cap[v].max(0) as f64;
            for (i, val) in row.iter_mut().enumerate() {
                if !inst.is_server(v, i) && free > c {
                    *val *= c / free;
                }
            }
        }
        let rho = link_loads(&inst, &s).unwrap();
        let mc = monte_carlo_load(&inst, &s, MC_PERIODS, None, seed).unwrap();
        for (m, r) in mc.iter().zip(&rho) {
            if *r > 0.0 {
                load_err = load_err.max((m - r).abs() / r);
            } else if *m != 0.0 {
                load_err = f64::INFINITY;
            }
        }
    }
    let pass = cap_ok && coverage <= COVERAGE_TOL && sigmas <= MARGINAL_SIGMAS && load_err <= MC_REL_TOL;
    Outcome::new(
        pass,
        format!(
            "capacity {}, coverage error {coverage:.1e} (tol {COVERAGE_TOL}), marginals within {sigmas:.2}σ \
             (tol {MARGINAL_SIGMAS}σ at {MARGINAL_DRAWS}), link loads within {:.2}% (tol {}% at {MC_PERIODS})",
            if cap_ok { "respected" } else { "VIOLATED" },
            100.0 * load_err,
            100.0 * MC_REL_TOL
        ),
    )
}

fn trust_region() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    for _ in 0..TR_CASES {
        let n = rng.random_range(1..8usize);
        let mut q = random_concave(&mut rng, n);
        let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..0.0)).collect();
        let upper: Vec<f64> = lower.iter().map(|l| l + rng.random_range(0.1..2.0)).collect();
        let b = BoxBounds::new(lower.clone(), upper.clone()).unwrap();
        let start: Vec<f64> = lower.iter().zip(&upper).map(|(l, u)| rng.random_range(*l..=*u)).collect();
        let out = trust_region_maximize(&mut q, &b, &start, 1e-10, &TrustRegionConfig::default()).unwrap();
        let oracle = pg_oracle(&q, &b, &start);
        for (a, o) in out.x.iter().zip(&oracle) {
            worst = worst.max((a - o).abs());
        }
        if !b.contains(&out.x) {
            worst = f64::INFINITY;
        }
    }
    Outcome::new(worst <= TR_TOL, format!("{TR_CASES} quadratics, worst distance {worst:.2e}; tol {TR_TOL}"))
}

fn main() -> ExitCode {
    let mut results = Vec::new();
    let mut run = |id: u32, title: &str, f: &mut dyn FnMut() -> Outcome| {
        let clock = Instant::now();
        let out = f();
        println!(
            "criterion {id:>2} {} {title}: {} [{:.1}s]",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            clock.elapsed().as_secs_f64()
        );
        results.push(out.pass);
    };
    run(1, "loose benchmark values", &mut loose_values);
    run(2, "exactness at κ=1", &mut loose_exactness);
    let clock = Instant::now();
    let grid = feasibility_grid();
    println!("(feasibility grid computed in {:.1}s)", clock.elapsed().as_secs_f64());
    run(3, "feasibility", &mut || feasibility(&grid));
    run(4, "KKT termination", &mut || kkt(&grid));
    run(5, "suboptimality certificates", &mut || certificates(&grid));
    run(6, "relaxation bracket", &mut bracket);
    run(7, "scaling trend", &mut scaling);
    run(8, "DR-submodularity", &mut dr_submodularity);
    run(9, "surrogate sandwich", &mut sandwich);
    run(10, "gradient checks", &mut gradients);
    run(11, "placement", &mut placement);
    run(12, "trust-region suite", &mut trust_region);
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
