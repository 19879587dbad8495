//! Experiment orchestration: specs, replicas, records and summaries.

pub mod experiment;
pub mod persist;
pub mod report;
pub mod spec;

pub use experiment::{all_interior_eliminated, run_experiment, run_experiment_partial, run_replica, run_seed, RunRecord};
pub use persist::{read_records, report_run_directory, run_and_persist, write_records, RunDirectory};
pub use report::{sweep_report, SweepRow, SweepTable, SUMMARY_COLUMNS};
pub use spec::{ExperimentSpec, TopologySpec};

use crate::error::Result;
use crate::gw::mu_tree_plus_leaf;

/// Bound for a single special vertex: `1 - θ τ^{K-1}`, the probability that
/// the leaf event fails at a neighbor of the vertex.
pub fn single_vertex_bound(k: usize, theta: f64) -> Result<f64> {
    Ok(1.0 - mu_tree_plus_leaf(k, theta)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_vertex_endpoints() {
        assert_eq!(single_vertex_bound(5, 1.0).unwrap(), 0.0);
        assert_eq!(single_vertex_bound(5, 0.0).unwrap(), 1.0);
    }
}
