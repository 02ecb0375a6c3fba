//! Cache-network instances, strategies and constraint evaluation.

mod eval;
mod io;
pub(crate) mod layout;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::utility::{UtilityFunction, UtilityProfile};

pub use eval::{
    constraint_gradients, constraint_values, feasibility_report, g_tilde_supergradient,
    g_tilde_values, lattice_check_sample, link_loads, ConstraintEval, FeasibilityReport,
    StrategyGradient,
};
pub use io::{InstanceFile, UtilitySpec};

/// Directed graph stored as an edge list with an index for `(a, b)` lookups.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    index: HashMap<(usize, usize), usize>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds the graph as given; call [`validate_instance`] to check invariants.
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut index = HashMap::with_capacity(edges.len());
        let mut adjacency = vec![Vec::new(); node_count];
        for (k, &(a, b)) in edges.iter().enumerate() {
            if index.contains_key(&(a, b)) {
                continue;
            }
            index.insert((a, b), k);
            if a < node_count && b < node_count {
                adjacency[a].push(b);
            }
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        Self {
            node_count,
            edges,
            index,
            adjacency,
        }
    }

    /// Adds both orientations of every undirected pair, dropping duplicates and loops.
    pub fn from_undirected(node_count: usize, pairs: &[(usize, usize)]) -> Self {
        let mut seen = std::collections::BTreeSet::new();
        let mut edges = Vec::with_capacity(2 * pairs.len());
        for &(a, b) in pairs {
            if a == b {
                continue;
            }
            if seen.insert((a, b)) {
                edges.push((a, b));
            }
            if seen.insert((b, a)) {
                edges.push((b, a));
            }
        }
        Self::new(node_count, edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        self.index.get(&(a, b)).copied()
    }

    /// Out-neighbours of `v` in increasing id order.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn is_connected(&self) -> bool {
        if self.node_count == 0 {
            return true;
        }
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == self.node_count
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub item: usize,
    /// Node sequence from the requester to a designated server.
    pub path: Vec<usize>,
    pub demand: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub graph: Graph,
    pub catalog_size: usize,
    /// Designated servers per item.
    pub servers: Vec<Vec<usize>>,
    pub requests: Vec<Request>,
    /// Capacity per directed edge, indexed like `graph.edges()`.
    pub link_capacity: Vec<f64>,
    pub cache_capacity: Vec<usize>,
    pub utility: UtilityFunction,
}

impl Instance {
    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    /// `c'_v = c_v − |{i : v ∈ S_i}|`, negative when servers overflow the cache.
    pub fn effective_cache_capacity(&self) -> Vec<i64> {
        let mut eff: Vec<i64> = self.cache_capacity.iter().map(|&c| c as i64).collect();
        eff.resize(self.node_count(), 0);
        for servers in &self.servers {
            for &v in servers {
                if v < eff.len() {
                    eff[v] -= 1;
                }
            }
        }
        eff
    }

    pub fn is_server(&self, node: usize, item: usize) -> bool {
        self.servers
            .get(item)
            .is_some_and(|s| s.contains(&node))
    }

    pub fn demand(&self) -> Vec<f64> {
        self.requests.iter().map(|q| q.demand).collect()
    }

    pub fn profile(&self) -> UtilityProfile {
        UtilityProfile::uniform(self.utility, self.demand())
    }

    /// `λmax` per edge: total demand whose response crosses the edge.
    pub fn edge_demand(&self) -> Vec<f64> {
        let mut load = vec![0.0; self.graph.edge_count()];
        for q in &self.requests {
            for w in q.path.windows(2) {
                if let Some(e) = self.graph.edge_index(w[1], w[0]) {
                    load[e] += q.demand;
                }
            }
        }
        load
    }

    /// Same instance with link capacities and demands multiplied by `m`.
    pub fn scaled(&self, m: f64) -> Instance {
        let mut out = self.clone();
        for c in &mut out.link_capacity {
            *c *= m;
        }
        for q in &mut out.requests {
            q.demand *= m;
        }
        out
    }

    pub fn from_json(text: &str) -> Result<Instance> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.into_instance()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstanceFile::from_instance(self))?)
    }
}

/// Cache probabilities `y[node][item]` and residual rates `r[request]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub y: Vec<Vec<f64>>,
    pub r: Vec<f64>,
}

impl Strategy {
    /// Empty caches, every request fully rejected.
    pub fn rejecting(inst: &Instance) -> Strategy {
        let mut s = Strategy::admitting(inst);
        s.r = inst.demand();
        s
    }

    /// Empty caches, every request fully admitted.
    pub fn admitting(inst: &Instance) -> Strategy {
        let mut y = vec![vec![0.0; inst.catalog_size]; inst.node_count()];
        for (i, servers) in inst.servers.iter().enumerate() {
            for &v in servers {
                if v < y.len() && i < inst.catalog_size {
                    y[v][i] = 1.0;
                }
            }
        }
        Strategy {
            y,
            r: vec![0.0; inst.requests.len()],
        }
    }

    pub fn check_dims(&self, inst: &Instance) -> Result<()> {
        if self.y.len() != inst.node_count() {
            return Err(Error::Dimension {
                what: "cache matrix rows",
                expected: inst.node_count(),
                got: self.y.len(),
            });
        }
        if let Some(row) = self.y.iter().find(|row| row.len() != inst.catalog_size) {
            return Err(Error::Dimension {
                what: "cache matrix columns",
                expected: inst.catalog_size,
                got: row.len(),
            });
        }
        if self.r.len() != inst.requests.len() {
            return Err(Error::Dimension {
                what: "residual vector",
                expected: inst.requests.len(),
                got: self.r.len(),
            });
        }
        Ok(())
    }

    /// Admitted rates `λ̄ − r`.
    pub fn admitted(&self, inst: &Instance) -> Vec<f64> {
        inst.requests
            .iter()
            .zip(&self.r)
            .map(|(q, r)| q.demand - r)
            .collect()
    }

    pub fn join(&self, other: &Strategy) -> Strategy {
        self.zip_with(other, f64::max)
    }

    pub fn meet(&self, other: &Strategy) -> Strategy {
        self.zip_with(other, f64::min)
    }

    fn zip_with(&self, other: &Strategy, f: fn(f64, f64) -> f64) -> Strategy {
        Strategy {
            y: self
                .y
                .iter()
                .zip(&other.y)
                .map(|(a, b)| a.iter().zip(b).map(|(&p, &q)| f(p, q)).collect())
                .collect(),
            r: self.r.iter().zip(&other.r).map(|(&p, &q)| f(p, q)).collect(),
        }
    }
}

/// One broken invariant found by [`validate_instance`].
#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    EmptyGraph,
    SelfLoop { node: usize },
    DuplicateEdge { a: usize, b: usize },
    EndpointOutOfRange { a: usize, b: usize },
    AsymmetricEdge { a: usize, b: usize },
    NoServer { item: usize },
    ServerOutOfRange { item: usize, node: usize },
    ServerListLength { expected: usize, got: usize },
    ItemOutOfRange { request: usize, item: usize },
    EmptyPath { request: usize },
    NodeOutOfRange { request: usize, node: usize },
    PathNotSimple { request: usize },
    MissingHop { request: usize, a: usize, b: usize },
    LastNotServer { request: usize },
    EarlyServer { request: usize, node: usize },
    NonPositiveDemand { request: usize },
    CapacityLength { expected: usize, got: usize },
    NonPositiveLinkCapacity { a: usize, b: usize },
    CacheLength { expected: usize, got: usize },
    NegativeEffectiveCache { node: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            EmptyGraph => write!(f, "graph has no nodes"),
            SelfLoop { node } => write!(f, "self-loop at node {node}"),
            DuplicateEdge { a, b } => write!(f, "duplicate edge ({a},{b})"),
            EndpointOutOfRange { a, b } => write!(f, "edge ({a},{b}) has an endpoint out of range"),
            AsymmetricEdge { a, b } => write!(f, "edge ({a},{b}) has no reverse edge"),
            NoServer { item } => write!(f, "item {item} has no designated server"),
            ServerOutOfRange { item, node } => write!(f, "item {item}: server {node} out of range"),
            ServerListLength { expected, got } => {
                write!(f, "server list covers {got} items, catalog has {expected}")
            }
            ItemOutOfRange { request, item } => write!(f, "request {request}: item {item} out of range"),
            EmptyPath { request } => write!(f, "request {request}: empty path"),
            NodeOutOfRange { request, node } => write!(f, "request {request}: node {node} out of range"),
            PathNotSimple { request } => write!(f, "request {request}: path not simple"),
            MissingHop { request, a, b } => write!(f, "request {request}: no edge ({a},{b})"),
            LastNotServer { request } => write!(f, "request {request}: last node not designated server"),
            EarlyServer { request, node } => {
                write!(f, "request {request}: node {node} is a server before the path end")
            }
            NonPositiveDemand { request } => write!(f, "request {request}: demand must be positive"),
            CapacityLength { expected, got } => write!(f, "{got} link capacities for {expected} edges"),
            NonPositiveLinkCapacity { a, b } => {
                write!(f, "edge ({a},{b}) carries traffic but has non-positive capacity")
            }
            CacheLength { expected, got } => write!(f, "{got} cache capacities for {expected} nodes"),
            NegativeEffectiveCache { node } => {
                write!(f, "node {node}: designated items exceed cache capacity")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::InvalidInstance(msgs.join("; ")))
        }
    }
}

pub fn validate_instance(inst: &Instance) -> ValidationReport {
    use Violation::*;
    let mut out = Vec::new();
    let g = &inst.graph;
    let n = g.node_count();
    if n == 0 {
        out.push(EmptyGraph);
    }
    let mut seen = std::collections::HashSet::new();
    for &(a, b) in g.edges() {
        if a >= n || b >= n {
            out.push(EndpointOutOfRange { a, b });
            continue;
        }
        if a == b {
            out.push(SelfLoop { node: a });
        }
        if !seen.insert((a, b)) {
            out.push(DuplicateEdge { a, b });
        }
        if g.edge_index(b, a).is_none() {
            out.push(AsymmetricEdge { a, b });
        }
    }

    if inst.servers.len() != inst.catalog_size {
        out.push(ServerListLength {
            expected: inst.catalog_size,
            got: inst.servers.len(),
        });
    }
    for (item, servers) in inst.servers.iter().enumerate() {
        if servers.is_empty() {
            out.push(NoServer { item });
        }
        for &node in servers {
            if node >= n {
                out.push(ServerOutOfRange { item, node });
            }
        }
    }

    for (request, q) in inst.requests.iter().enumerate() {
        if !(q.demand > 0.0 && q.demand.is_finite()) {
            out.push(NonPositiveDemand { request });
        }
        if q.item >= inst.catalog_size || q.item >= inst.servers.len() {
            out.push(ItemOutOfRange { request, item: q.item });
            continue;
        }
        if q.path.is_empty() {
            out.push(EmptyPath { request });
            continue;
        }
        if let Some(&node) = q.path.iter().find(|&&v| v >= n) {
            out.push(NodeOutOfRange { request, node });
            continue;
        }
        let mut on_path = std::collections::HashSet::new();
        if !q.path.iter().all(|v| on_path.insert(*v)) {
            out.push(PathNotSimple { request });
        }
        for w in q.path.windows(2) {
            if g.edge_index(w[0], w[1]).is_none() {
                out.push(MissingHop {
                    request,
                    a: w[0],
                    b: w[1],
                });
            }
        }
        let servers = &inst.servers[q.item];
        let (last, head) = q.path.split_last().expect("non-empty path");
        if !servers.contains(last) {
            out.push(LastNotServer { request });
        }
        for &node in head {
            if servers.contains(&node) {
                out.push(EarlyServer { request, node });
            }
        }
    }

    if inst.link_capacity.len() != g.edge_count() {
        out.push(CapacityLength {
            expected: g.edge_count(),
            got: inst.link_capacity.len(),
        });
    } else {
        for (e, &load) in inst.edge_demand().iter().enumerate() {
            let c = inst.link_capacity[e];
            if load > 0.0 && !(c > 0.0 && c.is_finite()) {
                let (a, b) = g.edges()[e];
                out.push(NonPositiveLinkCapacity { a, b });
            }
        }
    }

    if inst.cache_capacity.len() != n {
        out.push(CacheLength {
            expected: n,
            got: inst.cache_capacity.len(),
        });
    } else {
        for (node, &c) in inst.effective_cache_capacity().iter().enumerate() {
            if c < 0 {
                out.push(NegativeEffectiveCache { node });
            }
        }
    }
    ValidationReport { violations: out }
}
