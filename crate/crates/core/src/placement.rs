//! Space-filling realization of fractional cache contents.
//!
//! A node with capacity `c` owns a strip of `c` unit rows. Items are laid out
//! left to right in ascending index order, each occupying a run of length
//! `y_i` that wraps onto the next row. Drawing one `τ ∈ [0, 1)` and reading
//! every row at `τ` yields at most `c` distinct items, and item `i` is
//! present with probability exactly `y_i`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Instance, Strategy};

/// Slack allowed on `Σ y ≤ c` before a plan is refused.
pub const PACKING_SLACK: f64 = 1e-12;

/// Periods simulated per random stream.
const BLOCK: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub item: usize,
    pub row: usize,
    pub start: f64,
    pub end: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlacementPlan {
    pub capacity: usize,
    pub catalog: usize,
    pub segments: Vec<Segment>,
    /// Segment indices per item (at most two).
    by_item: Vec<Vec<usize>>,
}

pub fn build_plan(y: &[f64], capacity: usize) -> Result<PlacementPlan> {
    if let Some(i) = y.iter().position(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Domain(format!("marginal y[{i}] = {} outside [0, 1]", y[i])));
    }
    let total: f64 = y.iter().sum();
    if total > capacity as f64 + PACKING_SLACK {
        return Err(Error::Domain(format!(
            "marginals sum to {total}, capacity is {capacity}"
        )));
    }
    let mut segments = Vec::new();
    let mut by_item = vec![Vec::new(); y.len()];
    let (mut row, mut at) = (0usize, 0.0f64);
    for (item, &len) in y.iter().enumerate() {
        let mut left = len;
        while left > 0.0 && row < capacity {
            let end = (at + left).min(1.0);
            by_item[item].push(segments.len());
            segments.push(Segment {
                item,
                row,
                start: at,
                end,
            });
            left -= end - at;
            at = end;
            if at >= 1.0 {
                row += 1;
                at = 0.0;
            }
            // rounding leftovers below the slack are dropped
            if left <= PACKING_SLACK {
                break;
            }
        }
    }
    Ok(PlacementPlan {
        capacity,
        catalog: y.len(),
        segments,
        by_item,
    })
}

impl PlacementPlan {
    pub fn contains(&self, item: usize, tau: f64) -> bool {
        self.by_item
            .get(item)
            .is_some_and(|ids| ids.iter().any(|&k| self.segments[k].start <= tau && tau < self.segments[k].end))
    }

    /// Measure of `{τ ∈ [0,1) : item is sampled}`, from the interval geometry.
    pub fn coverage(&self, item: usize) -> f64 {
        let mut spans: Vec<(f64, f64)> = self.by_item[item]
            .iter()
            .map(|&k| (self.segments[k].start, self.segments[k].end))
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut total = 0.0;
        let mut reach = f64::NEG_INFINITY;
        for (s, e) in spans {
            let from = s.max(reach);
            if e > from {
                total += e - from;
                reach = e;
            }
        }
        total
    }
}

/// Items read at horizontal coordinate `τ`, in ascending order.
pub fn sample_placement(plan: &PlacementPlan, tau: f64) -> Vec<usize> {
    let mut items: Vec<usize> = plan
        .segments
        .iter()
        .filter(|s| s.start <= tau && tau < s.end)
        .map(|s| s.item)
        .collect();
    items.sort_unstable();
    items.dedup();
    items
}

/// Empirical presence frequency of each item over `samples` uniform draws of `τ`.
pub fn estimate_marginals(plan: &PlacementPlan, samples: usize, seed: u64) -> Result<Vec<f64>> {
    if samples == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = vec![0usize; plan.catalog];
    for _ in 0..samples {
        let tau: f64 = rng.random();
        for item in sample_placement(plan, tau) {
            hits[item] += 1;
        }
    }
    Ok(hits.into_iter().map(|h| h as f64 / samples as f64).collect())
}

/// One plan per node from the full cache matrix (designated servers included).
pub fn plan_network(inst: &Instance, s: &Strategy) -> Result<Vec<PlacementPlan>> {
    s.check_dims(inst)?;
    s.y.iter()
        .zip(&inst.cache_capacity)
        .map(|(row, &c)| build_plan(row, c))
        .collect()
}

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

/// Mean per-period response traffic on every edge.
///
/// Each period draws one placement per node. With `requests_per_period = None`
/// every request sends its admitted rate as fluid traffic; with `Some(m)` it
/// issues `Poisson(m·λ)` unit requests, each counted as `1/m`.
pub fn monte_carlo_load(
    inst: &Instance,
    s: &Strategy,
    periods: usize,
    requests_per_period: Option<f64>,
    seed: u64,
) -> Result<Vec<f64>> {
    if periods == 0 {
        return Err(Error::Config("need at least one period".into()));
    }
    if let Some(m) = requests_per_period {
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::Config(format!("requests per period {m} must be positive")));
        }
    }
    let plans = plan_network(inst, s)?;
    let admitted = s.admitted(inst);
    let hops: Vec<Vec<usize>> = inst
        .requests
        .iter()
        .map(|q| {
            q.path
                .windows(2)
                .map(|w| inst.graph.edge_index(w[1], w[0]).ok_or(Error::UnknownEdge(w[1], w[0])))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let m = inst.graph.edge_count();
    let blocks = periods.div_ceil(BLOCK);
    let partial: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(seed, b);
            let mut load = vec![0.0; m];
            let mut tau = vec![0.0; plans.len()];
            let count = BLOCK.min(periods - b * BLOCK);
            for _ in 0..count {
                for t in tau.iter_mut() {
                    *t = rng.random::<f64>();
                }
                for (n, q) in inst.requests.iter().enumerate() {
                    let amount = match requests_per_period {
                        None => admitted[n],
                        Some(rate) => {
                            let mean = rate * admitted[n];
                            if mean > 0.0 {
                                Poisson::new(mean).expect("positive mean").sample(&mut rng) / rate
                            } else {
                                0.0
                            }
                        }
                    };
                    if amount == 0.0 {
                        continue;
                    }
                    for (k, &e) in hops[n].iter().enumerate() {
                        let v = q.path[k];
                        if plans[v].contains(q.item, tau[v]) {
                            break;
                        }
                        load[e] += amount;
                    }
                }
            }
            load
        })
        .collect();
    let mut total = vec![0.0; m];
    for part in partial {
        for (t, p) in total.iter_mut().zip(part) {
            *t += p;
        }
    }
    Ok(total.into_iter().map(|t| t / periods as f64).collect())
}

/// Writes `period,node,items...` rows for `periods` sampled placements of every node.
pub fn write_samples_csv<W: Write>(plans: &[PlacementPlan], periods: usize, seed: u64, mut out: W) -> Result<()> {
    writeln!(out, "period,node,items")?;
    for b in 0..periods.div_ceil(BLOCK) {
        let mut rng = block_rng(seed, b);
        for p in b * BLOCK..periods.min((b + 1) * BLOCK) {
            for (v, plan) in plans.iter().enumerate() {
                let items = sample_placement(plan, rng.random::<f64>());
                write!(out, "{p},{v}")?;
                for i in items {
                    write!(out, ",{i}")?;
                }
                writeln!(out)?;
            }
        }
    }
    Ok(())
}
