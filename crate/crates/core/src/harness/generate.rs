use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::topology::{distinct_nodes, generate_topology, shortest_path, TopologySpec};
use crate::error::{Error, Result};
use crate::model::{Graph, Instance, Request};
use crate::utility::UtilityFunction;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub topology: TopologySpec,
    pub catalog: usize,
    pub requests: usize,
    pub query_nodes: usize,
    /// Free cache slots per node.
    pub cache: usize,
    pub kappa: f64,
    #[serde(default = "default_zipf")]
    pub zipf: f64,
    #[serde(default = "default_demand")]
    pub demand: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub utility: UtilityFunction,
    /// Let a query node request an item again once it has drawn the whole catalog.
    #[serde(default)]
    pub allow_repeats: bool,
}

fn default_zipf() -> f64 {
    1.2
}

fn default_demand() -> f64 {
    1.0
}

impl GenConfig {
    pub fn new(topology: TopologySpec, catalog: usize, requests: usize, query_nodes: usize, cache: usize) -> Self {
        Self {
            topology,
            catalog,
            requests,
            query_nodes,
            cache,
            kappa: 0.95,
            zipf: default_zipf(),
            demand: default_demand(),
            seed: 0,
            utility: UtilityFunction::default(),
            allow_repeats: false,
        }
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, nodes: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.query_nodes == 0 || self.query_nodes > nodes {
            return bad(format!("{} query nodes on a {nodes}-node graph", self.query_nodes));
        }
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return bad(format!("looseness {} outside (0, 1]", self.kappa));
        }
        if !(self.zipf > 0.0) {
            return bad(format!("zipf exponent {} must be positive", self.zipf));
        }
        if !(self.demand > 0.0 && self.demand.is_finite()) {
            return bad(format!("demand {} must be positive", self.demand));
        }
        if self.catalog == 0 {
            return bad("empty catalog".into());
        }
        let per_node = self.requests.div_ceil(self.query_nodes);
        if per_node > self.catalog && !self.allow_repeats {
            return bad(format!(
                "{} requests over {} query nodes need {per_node} distinct items, catalog has {}",
                self.requests, self.query_nodes, self.catalog
            ));
        }
        if self.requests < self.catalog {
            return bad(format!(
                "{} requests cannot cover a catalog of {}",
                self.requests, self.catalog
            ));
        }
        self.utility.check()
    }

    /// Short hex digest of the configuration (seed included).
    pub fn fingerprint(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Normalized Zipf weights `i^(−s)` for ranks `1..=n`.
pub fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|i| (i as f64).powf(-s)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// `k` distinct items by successive Zipf draws, renormalizing after each draw.
pub(crate) fn zipf_without_replacement(n: usize, s: f64, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut weights = zipf_weights(n, s);
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let dist = WeightedIndex::new(&weights).expect("some weight remains");
        let i = dist.sample(rng);
        out.push(i);
        weights[i] = 0.0;
    }
    out
}

/// Capacities `κ·λmax` on every edge (0 on idle edges).
pub fn apply_kappa(inst: &mut Instance, kappa: f64) {
    inst.link_capacity = inst.edge_demand().iter().map(|d| kappa * d).collect();
}

pub fn generate_instance(graph: &Graph, cfg: &GenConfig) -> Result<Instance> {
    let n = graph.node_count();
    cfg.validate(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let servers: Vec<Vec<usize>> = (0..cfg.catalog).map(|_| vec![rng.random_range(0..n)]).collect();
    let queries = distinct_nodes(n, cfg.query_nodes, &mut rng);
    let base = cfg.requests / cfg.query_nodes;
    let extra = cfg.requests % cfg.query_nodes;
    // (query node, item) pairs
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(cfg.requests);
    for (k, &q) in queries.iter().enumerate() {
        let count = base + usize::from(k < extra);
        let mut left = count;
        while left > 0 {
            let round = left.min(cfg.catalog);
            for item in zipf_without_replacement(cfg.catalog, cfg.zipf, round, &mut rng) {
                pairs.push((q, item));
            }
            left -= round;
        }
    }
    cover_catalog(&mut pairs, cfg.catalog)?;
    let mut requests = Vec::with_capacity(pairs.len());
    for &(q, item) in &pairs {
        let path = shortest_path(graph, q, servers[item][0]).ok_or_else(|| {
            Error::Topology(format!("node {q} cannot reach the server of item {item}"))
        })?;
        requests.push(Request {
            item,
            path,
            demand: cfg.demand,
        });
    }
    let mut cache_capacity = vec![cfg.cache; n];
    for s in &servers {
        cache_capacity[s[0]] += 1;
    }
    let mut inst = Instance {
        graph: graph.clone(),
        catalog_size: cfg.catalog,
        servers,
        requests,
        link_capacity: Vec::new(),
        cache_capacity,
        utility: cfg.utility,
    };
    apply_kappa(&mut inst, cfg.kappa);
    Ok(inst)
}

/// Reassigns surplus requests so that every item is requested at least once.
fn cover_catalog(pairs: &mut [(usize, usize)], catalog: usize) -> Result<()> {
    let mut count = vec![0usize; catalog];
    for &(_, i) in pairs.iter() {
        count[i] += 1;
    }
    for missing in 0..catalog {
        if count[missing] > 0 {
            continue;
        }
        // most-requested donor item; last request of it whose node lacks `missing`
        let mut choice = None;
        let mut donors: Vec<usize> = (0..catalog).filter(|&i| count[i] > 1).collect();
        donors.sort_by(|&a, &b| count[b].cmp(&count[a]).then(a.cmp(&b)));
        'outer: for donor in donors {
            for k in (0..pairs.len()).rev() {
                let (q, i) = pairs[k];
                if i == donor && !pairs.iter().any(|&(q2, i2)| q2 == q && i2 == missing) {
                    choice = Some(k);
                    break 'outer;
                }
            }
        }
        let k = choice.ok_or_else(|| Error::Config(format!("cannot cover item {missing}")))?;
        count[pairs[k].1] -= 1;
        pairs[k].1 = missing;
        count[missing] += 1;
    }
    Ok(())
}

/// Parameter rows for the benchmark topologies, by label.
pub fn table_preset(label: &str) -> Option<GenConfig> {
    use super::topology::Backbone;
    let (topology, catalog, requests, queries, cache) = match label {
        "cycle" => (TopologySpec::Cycle { n: 30 }, 10, 100, 10, 2),
        "lollipop" => (TopologySpec::Lollipop { m: 15 }, 10, 100, 10, 2),
        "geant" => (TopologySpec::Backbone { name: Backbone::Geant }, 10, 100, 10, 2),
        "abilene" => (TopologySpec::Backbone { name: Backbone::Abilene }, 10, 40, 4, 2),
        "dtelekom" => (TopologySpec::Backbone { name: Backbone::Dtelekom }, 15, 125, 15, 3),
        "balanced-tree" => (TopologySpec::BalancedTree { branching: 2, depth: 5 }, 30, 450, 15, 3),
        "grid-2d" => (TopologySpec::Grid2d { rows: 8, cols: 8 }, 30, 450, 15, 3),
        "hypercube" => (TopologySpec::Hypercube { dim: 6 }, 15, 450, 15, 3),
        "small-world" => (TopologySpec::SmallWorld { side: 8, exponent: 2.0 }, 30, 450, 15, 3),
        "erdos-renyi" => (TopologySpec::ErdosRenyi { n: 64, p: 0.1 }, 30, 450, 15, 3),
        _ => return None,
    };
    let mut cfg = GenConfig::new(topology, catalog, requests, queries, cache);
    cfg.allow_repeats = requests.div_ceil(queries) > catalog;
    Some(cfg)
}

pub const TABLE_LABELS: [&str; 10] = [
    "cycle",
    "lollipop",
    "geant",
    "abilene",
    "dtelekom",
    "balanced-tree",
    "grid-2d",
    "hypercube",
    "small-world",
    "erdos-renyi",
];

/// Builds the topology from `cfg.seed` and generates the instance on it.
pub fn generate(cfg: &GenConfig) -> Result<Instance> {
    let g = generate_topology(&cfg.topology, cfg.seed)?;
    generate_instance(&g, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_instance;

    #[test]
    fn zipf_three_items() {
        let w = zipf_weights(3, 1.2);
        assert!((w[1] / w[0] - 0.4353).abs() < 1e-4);
        assert!((w[2] / w[0] - 3f64.powf(-1.2)).abs() < 1e-15);
        assert!((w[2] / w[0] - 0.2676).abs() < 1e-4);
        assert!((w[0] - 0.5873).abs() < 1e-4);
    }

    #[test]
    fn draws_are_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut d = zipf_without_replacement(10, 1.2, 10, &mut rng);
        d.sort_unstable();
        assert_eq!(d, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn cycle_instance_shape() {
        let cfg = GenConfig::new(TopologySpec::Cycle { n: 30 }, 10, 100, 10, 2);
        let inst = generate(&cfg).unwrap();
        assert!(validate_instance(&inst).is_ok());
        assert_eq!(inst.requests.len(), 100);
        assert!(inst.effective_cache_capacity().iter().all(|&c| c == 2));
        let mut seen = vec![false; 10];
        for q in &inst.requests {
            seen[q.item] = true;
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(inst, generate(&cfg).unwrap());
    }

    #[test]
    fn remainder_goes_to_first_nodes() {
        let cfg = GenConfig::new(TopologySpec::Cycle { n: 10 }, 5, 11, 3, 1);
        let inst = generate(&cfg).unwrap();
        let mut per_node = std::collections::BTreeMap::new();
        for q in &inst.requests {
            *per_node.entry(q.path[0]).or_insert(0) += 1;
        }
        let mut counts: Vec<usize> = per_node.values().copied().collect();
        counts.sort_unstable();
        assert_eq!(counts, vec![3, 4, 4]);
    }

    #[test]
    fn infeasible_request_count() {
        let cfg = GenConfig::new(TopologySpec::Cycle { n: 10 }, 5, 30, 3, 1);
        assert!(generate(&cfg).is_err());
    }
}
