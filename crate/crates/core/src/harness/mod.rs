//! Topology and instance generation, experiment orchestration.

mod experiment;
mod generate;
mod topology;

pub use experiment::{
    kappa_sweep, run_comparison, scaling_sweep, write_results_csv, write_trajectory_csv, Algorithm,
    AlgorithmRun, ExperimentResult, ResultRow, RunMeta, ScalingRow, SolverConfigs,
};
pub use generate::{
    apply_kappa, generate, generate_instance, table_preset, zipf_weights, GenConfig, TABLE_LABELS,
};
pub use topology::{
    generate_topology, parse_edge_list, shortest_path, undirected_links, Backbone, TopologySpec,
};
