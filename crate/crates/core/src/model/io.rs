use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Graph, Instance, Request};
use crate::error::{Error, Result};
use crate::utility::UtilityFunction;

pub type UtilitySpec = UtilityFunction;

/// On-disk instance layout. Link capacities are keyed `"a-b"` for the directed edge `a → b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub nodes: usize,
    pub edges: Vec<[usize; 2]>,
    pub catalog: usize,
    pub servers: BTreeMap<usize, Vec<usize>>,
    pub requests: Vec<Request>,
    pub link_capacity: BTreeMap<String, f64>,
    pub cache_capacity: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilitySpec>,
}

fn edge_key(a: usize, b: usize) -> String {
    format!("{a}-{b}")
}

fn parse_key(key: &str) -> Result<(usize, usize)> {
    let bad = || Error::InvalidInstance(format!("link capacity key {key:?} is not \"a-b\""));
    let (a, b) = key.split_once('-').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

impl InstanceFile {
    pub fn from_instance(inst: &Instance) -> Self {
        let edges = inst.graph.edges().iter().map(|&(a, b)| [a, b]).collect();
        let servers = inst
            .servers
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.clone()))
            .collect();
        let link_capacity = inst
            .graph
            .edges()
            .iter()
            .zip(&inst.link_capacity)
            .map(|(&(a, b), &c)| (edge_key(a, b), c))
            .collect();
        InstanceFile {
            nodes: inst.graph.node_count(),
            edges,
            catalog: inst.catalog_size,
            servers,
            requests: inst.requests.clone(),
            link_capacity,
            cache_capacity: inst.cache_capacity.clone(),
            utility: Some(inst.utility),
        }
    }

    /// Converts to an [`Instance`]. Edges absent from `link_capacity` get capacity 0.
    pub fn into_instance(self) -> Result<Instance> {
        let graph = Graph::new(self.nodes, self.edges.iter().map(|e| (e[0], e[1])).collect());
        let mut link_capacity = vec![0.0; graph.edge_count()];
        for (key, c) in &self.link_capacity {
            let (a, b) = parse_key(key)?;
            let e = graph.edge_index(a, b).ok_or(Error::UnknownEdge(a, b))?;
            link_capacity[e] = *c;
        }
        let mut servers = vec![Vec::new(); self.catalog];
        for (item, nodes) in self.servers {
            if item >= self.catalog {
                return Err(Error::InvalidInstance(format!(
                    "server entry for item {item} outside catalog of {}",
                    self.catalog
                )));
            }
            servers[item] = nodes;
        }
        let utility = self.utility.unwrap_or_default();
        utility.check()?;
        Ok(Instance {
            graph,
            catalog_size: self.catalog,
            servers,
            requests: self.requests,
            link_capacity,
            cache_capacity: self.cache_capacity,
            utility,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"{
        "nodes": 2, "edges": [[0,1],[1,0]], "catalog": 1,
        "servers": {"0": [1]},
        "requests": [{"item": 0, "path": [0,1], "demand": 1.0}],
        "link_capacity": {"1-0": 0.9, "0-1": 0.0},
        "cache_capacity": [1, 1]
    }"#;

    #[test]
    fn parse_and_roundtrip() {
        let inst = Instance::from_json(SAMPLE).unwrap();
        assert_eq!(inst.servers, vec![vec![1]]);
        assert_eq!(inst.link_capacity[inst.graph.edge_index(1, 0).unwrap()], 0.9);
        assert_eq!(inst.utility, UtilityFunction::log_shifted(0.1));
        let text = inst.to_json().unwrap();
        assert_eq!(Instance::from_json(&text).unwrap(), inst);
    }

    #[test]
    fn utility_field_is_read() {
        let text = SAMPLE.replace(
            "\"cache_capacity\"",
            "\"utility\": {\"kind\":\"alpha_fair\",\"alpha\":1.0,\"weight\":2.0}, \"cache_capacity\"",
        );
        let inst = Instance::from_json(&text).unwrap();
        assert_eq!(inst.utility, UtilityFunction::alpha_fair(1.0, 2.0));
    }

    #[test]
    fn bad_capacity_key() {
        let text = SAMPLE.replace("\"1-0\"", "\"1_0\"");
        assert!(Instance::from_json(&text).is_err());
        let text = SAMPLE.replace("\"1-0\"", "\"1-5\"");
        assert!(Instance::from_json(&text).is_err());
    }
}
