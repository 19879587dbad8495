//! Majority dynamics on trees and stacks of trees: simulation, stable cores,
//! droplets, branching-process analytics and the Steiner-tree combinatorics
//! behind the fixation bounds.

pub mod dynamics;
pub mod error;
pub mod gw;
pub mod harness;
pub mod rng;
pub mod stable_core;
pub mod topology;
pub mod tree_lemmas;
pub mod union_find;

pub use dynamics::{
    evaluate_update, is_absorbing, run_async, run_sync, Alphabet, DynamicsMode, DynamicsOptions, DynamicsRun,
    Fallback, FlipEvent, GhostPolicy, RuleMode, Spin, SpinConfiguration, TieAction, UpdateRule, MINUS, PLUS,
};
pub use error::{Error, Result};
pub use topology::{branch_region, BranchRegion, Topology, TopologyKind};
pub use stable_core::{
    compute_stable_core, doubly_open_projection, droplet_decomposition, plus_cluster, track_droplet_elimination,
    verify_core_stability, BoundaryMode, Droplet, StabilityReport, StableCore, StableVariant,
};
pub use gw::{
    gw_extinction, lambda_star, mc_estimate_event, mu_tree_plus_leaf, mu_tree_plus_pair, simulate_gw, tau, tau_tilde,
    theta_star_bound, FixedPointResult, GwTrace, McEstimate, TreeEvent,
};
pub use tree_lemmas::{
    build_event_family, check_lemma_b3, classify_special_2points, degree_census, empirical_proposition_check,
    steiner_subtree, DegreeCensus, EventFamily, SteinerTree,
};
pub use harness::{run_experiment, single_vertex_bound, sweep_report, ExperimentSpec, RunRecord};
