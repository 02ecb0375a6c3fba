use std::collections::BTreeSet;
use std::path::PathBuf;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Graph;

const ABILENE: &str = include_str!("../../data/abilene.txt");
const GEANT: &str = include_str!("../../data/geant.txt");
const DTELEKOM: &str = include_str!("../../data/dtelekom.txt");

const ER_RETRIES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    Abilene,
    Geant,
    Dtelekom,
}

/// Topology family and parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TopologySpec {
    Cycle { n: usize },
    /// Clique on `m` nodes joined to a path of `m` nodes.
    Lollipop { m: usize },
    BalancedTree { branching: usize, depth: usize },
    Grid2d { rows: usize, cols: usize },
    Hypercube { dim: usize },
    /// Square grid plus one long-range link per node drawn with probability ∝ d^(−exponent).
    SmallWorld {
        side: usize,
        #[serde(default = "default_exponent")]
        exponent: f64,
    },
    ErdosRenyi { n: usize, p: f64 },
    Backbone { name: Backbone },
    /// Edge-list file: optional `nodes N` line, then `a b` per undirected link, `#` comments.
    File { path: PathBuf },
}

fn default_exponent() -> f64 {
    2.0
}

impl TopologySpec {
    pub fn label(&self) -> String {
        match self {
            TopologySpec::Cycle { .. } => "cycle".into(),
            TopologySpec::Lollipop { .. } => "lollipop".into(),
            TopologySpec::BalancedTree { .. } => "balanced-tree".into(),
            TopologySpec::Grid2d { .. } => "grid-2d".into(),
            TopologySpec::Hypercube { .. } => "hypercube".into(),
            TopologySpec::SmallWorld { .. } => "small-world".into(),
            TopologySpec::ErdosRenyi { .. } => "erdos-renyi".into(),
            TopologySpec::Backbone { name } => match name {
                Backbone::Abilene => "abilene".into(),
                Backbone::Geant => "geant".into(),
                Backbone::Dtelekom => "dtelekom".into(),
            },
            TopologySpec::File { path } => path
                .file_stem()
                .map_or_else(|| "file".into(), |s| s.to_string_lossy().into_owned()),
        }
    }
}

/// Parses an undirected edge list.
pub fn parse_edge_list(text: &str) -> Result<Graph> {
    let mut nodes: Option<usize> = None;
    let mut pairs = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let first = it.next().expect("non-empty line");
        if first == "nodes" {
            let n = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Topology(format!("line {}: bad node count", ln + 1)))?;
            nodes = Some(n);
            continue;
        }
        let parse = |t: Option<&str>| -> Result<usize> {
            t.and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Topology(format!("line {}: expected two node ids", ln + 1)))
        };
        let a = parse(Some(first))?;
        let b = parse(it.next())?;
        if it.next().is_some() {
            return Err(Error::Topology(format!("line {}: trailing tokens", ln + 1)));
        }
        pairs.push((a, b));
    }
    let max_id = pairs.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
    let n = nodes.unwrap_or(max_id);
    if max_id > n {
        return Err(Error::Topology(format!("node id {} exceeds declared count {n}", max_id - 1)));
    }
    if pairs.iter().any(|&(a, b)| a == b) {
        return Err(Error::Topology("self-loop in edge list".into()));
    }
    Ok(Graph::from_undirected(n, &pairs))
}

fn grid_pairs(rows: usize, cols: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                pairs.push((v, v + 1));
            }
            if r + 1 < rows {
                pairs.push((v, v + cols));
            }
        }
    }
    pairs
}

fn small_world(side: usize, exponent: f64, rng: &mut ChaCha8Rng) -> Graph {
    let n = side * side;
    let mut pairs = grid_pairs(side, side);
    for u in 0..n {
        let (ur, uc) = ((u / side) as i64, (u % side) as i64);
        let weights: Vec<f64> = (0..n)
            .map(|v| {
                if v == u {
                    0.0
                } else {
                    let d = (ur - (v / side) as i64).abs() + (uc - (v % side) as i64).abs();
                    (d as f64).powf(-exponent)
                }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = n - 1;
        for (v, w) in weights.iter().enumerate() {
            if pick < *w {
                chosen = v;
                break;
            }
            pick -= w;
        }
        if chosen == u {
            chosen = (u + 1) % n;
        }
        pairs.push((u, chosen));
    }
    Graph::from_undirected(n, &pairs)
}

pub fn generate_topology(spec: &TopologySpec, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bad = |msg: &str| Err(Error::Topology(msg.to_string()));
    let g = match *spec {
        TopologySpec::Cycle { n } => {
            if n < 3 {
                return bad("cycle needs at least 3 nodes");
            }
            Graph::from_undirected(n, &(0..n).map(|v| (v, (v + 1) % n)).collect::<Vec<_>>())
        }
        TopologySpec::Lollipop { m } => {
            if m < 2 {
                return bad("lollipop needs a clique of at least 2 nodes");
            }
            let mut pairs = Vec::new();
            for a in 0..m {
                for b in (a + 1)..m {
                    pairs.push((a, b));
                }
            }
            for v in m..2 * m {
                pairs.push((v - 1, v));
            }
            Graph::from_undirected(2 * m, &pairs)
        }
        TopologySpec::BalancedTree { branching, depth } => {
            if branching < 1 {
                return bad("branching factor must be positive");
            }
            let mut pairs = Vec::new();
            let mut level = vec![0usize];
            let mut next_id = 1;
            for _ in 0..depth {
                let mut next = Vec::new();
                for &p in &level {
                    for _ in 0..branching {
                        pairs.push((p, next_id));
                        next.push(next_id);
                        next_id += 1;
                    }
                }
                level = next;
            }
            Graph::from_undirected(next_id, &pairs)
        }
        TopologySpec::Grid2d { rows, cols } => {
            if rows * cols < 2 {
                return bad("grid needs at least 2 nodes");
            }
            Graph::from_undirected(rows * cols, &grid_pairs(rows, cols))
        }
        TopologySpec::Hypercube { dim } => {
            if dim < 1 || dim > 20 {
                return bad("hypercube dimension must be in 1..=20");
            }
            let n = 1usize << dim;
            let mut pairs = Vec::new();
            for v in 0..n {
                for b in 0..dim {
                    let w = v ^ (1 << b);
                    if v < w {
                        pairs.push((v, w));
                    }
                }
            }
            Graph::from_undirected(n, &pairs)
        }
        TopologySpec::SmallWorld { side, exponent } => {
            if side < 2 || !(exponent >= 0.0) {
                return bad("small world needs side >= 2 and a non-negative exponent");
            }
            small_world(side, exponent, &mut rng)
        }
        TopologySpec::ErdosRenyi { n, p } => {
            if n < 2 || !(p > 0.0 && p <= 1.0) {
                return bad("erdos-renyi needs n >= 2 and p in (0, 1]");
            }
            let mut found = None;
            for _ in 0..ER_RETRIES {
                let mut pairs = Vec::new();
                for a in 0..n {
                    for b in (a + 1)..n {
                        if rng.random::<f64>() < p {
                            pairs.push((a, b));
                        }
                    }
                }
                let g = Graph::from_undirected(n, &pairs);
                if g.is_connected() {
                    found = Some(g);
                    break;
                }
            }
            match found {
                Some(g) => g,
                None => return bad("no connected erdos-renyi draw within the retry budget"),
            }
        }
        TopologySpec::Backbone { name } => parse_edge_list(match name {
            Backbone::Abilene => ABILENE,
            Backbone::Geant => GEANT,
            Backbone::Dtelekom => DTELEKOM,
        })?,
        TopologySpec::File { ref path } => parse_edge_list(&std::fs::read_to_string(path)?)?,
    };
    Ok(g)
}

/// `k` distinct nodes drawn uniformly, in draw order.
pub(crate) fn distinct_nodes(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    sample(rng, n, k).into_vec()
}

/// Lexicographically smallest shortest path from `src` to `dst`.
pub fn shortest_path(g: &Graph, src: usize, dst: usize) -> Option<Vec<usize>> {
    let n = g.node_count();
    let mut dist = vec![usize::MAX; n];
    dist[dst] = 0;
    let mut queue = std::collections::VecDeque::from([dst]);
    while let Some(v) = queue.pop_front() {
        for &w in g.neighbors(v) {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    if dist[src] == usize::MAX {
        return None;
    }
    let mut path = vec![src];
    let mut cur = src;
    while cur != dst {
        cur = *g
            .neighbors(cur)
            .iter()
            .find(|&&w| dist[w] + 1 == dist[cur])
            .expect("a neighbour one step closer exists");
        path.push(cur);
    }
    Some(path)
}

/// Undirected link count (directed count / 2) for symmetric graphs.
pub fn undirected_links(g: &Graph) -> usize {
    g.edges()
        .iter()
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect::<BTreeSet<_>>()
        .len()
}
