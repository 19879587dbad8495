use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spec::ExperimentSpec;
use crate::dynamics::{run_async, run_sync, DynamicsMode, DynamicsOptions, RuleMode, SpinConfiguration};
use crate::error::Result;
use crate::rng;
use crate::stable_core::{
    compute_stable_core, droplet_decomposition, track_droplet_elimination, verify_core_stability, StableVariant,
};
use crate::topology::Topology;

/// Metrics of one replica. `wall_ms` is kept out of the CSV so that records
/// are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub spec_hash: String,
    pub theta_index: usize,
    pub theta: f64,
    pub replica: usize,
    pub seed: u64,
    /// Every interior vertex is `+1` at the end of the run.
    pub interior_consensus: bool,
    pub interior_plus_fraction: f64,
    pub core_size: usize,
    pub core_density: f64,
    /// Core members that fail the static stability check.
    pub core_static_violations: usize,
    /// Core members that flipped during the run; zero for a stable core.
    pub core_flips: usize,
    pub droplet_count: usize,
    pub max_droplet_size: usize,
    pub interior_droplets: usize,
    pub interior_droplets_eliminated: usize,
    pub max_interior_droplet_size: usize,
    pub mean_elimination_time: Option<f64>,
    pub last_interior_flip: Option<f64>,
    pub flips: usize,
    pub absorbed: bool,
    #[serde(skip)]
    pub wall_ms: f64,
}

/// Seed of replica `replica` at grid point `theta_index`.
pub fn run_seed(master: u64, theta_index: usize, replica: usize) -> u64 {
    rng::derive_seed(master, "run", &[theta_index as u64, replica as u64])
}

fn initial_configuration(spec: &ExperimentSpec, topology: &Topology, theta: f64, seed: u64) -> Result<SpinConfiguration> {
    if spec.rule.mode != RuleMode::Multicolor {
        return SpinConfiguration::sample(topology, theta, seed);
    }
    let q = usize::from(spec.rule.colors);
    let weights = match &spec.color_weights {
        Some(w) => w.clone(),
        None => {
            let rest = (1.0 - theta) / (q - 1) as f64;
            (1..=q).map(|c| if c as i8 == spec.rule.majority_color { theta } else { rest }).collect()
        }
    };
    SpinConfiguration::sample_colors(topology, &weights, seed)
}

/// One replica at one grid point.
pub fn run_replica(spec: &ExperimentSpec, topology: &Topology, theta_index: usize, replica: usize) -> Result<RunRecord> {
    let start = Instant::now();
    let theta = spec.theta[theta_index];
    let seed = run_seed(spec.seed, theta_index, replica);
    let initial = initial_configuration(spec, topology, theta, seed)?;
    let binary = initial.binary_reduction(spec.rule.favored());
    let variant = spec.variant.unwrap_or_else(|| StableVariant::natural(topology));
    let core = compute_stable_core(topology, &binary, variant, spec.boundary)?;
    let stability = verify_core_stability(topology, &core, &spec.rule);

    let options = DynamicsOptions { ghosts: spec.boundary.ghost_policy(), flip_cap: spec.flip_cap };
    let run = match spec.mode {
        DynamicsMode::Async => run_async(topology, &initial, &spec.rule, spec.horizon, seed, options)?,
        DynamicsMode::Sync => run_sync(topology, &initial, &spec.rule, spec.horizon as usize, seed, options)?,
    };
    let core_flips = core.members.iter().filter(|&&v| run.last_flip[v].is_some()).count();

    let mut droplets = droplet_decomposition(topology, &core);
    track_droplet_elimination(&run, &mut droplets);
    let margin = spec.interior_margin;
    let interior: Vec<_> = droplets.iter().filter(|d| d.is_interior(topology, margin)).collect();
    let eliminated: Vec<f64> = interior.iter().filter_map(|d| d.elimination_time).collect();

    let interior_vertices = topology.interior_vertices(margin);
    let fin = &run.final_configuration;
    let interior_plus = interior_vertices.iter().filter(|&&v| fin.get(v) == run.favored).count();
    let interior_plus_fraction =
        if interior_vertices.is_empty() { 1.0 } else { interior_plus as f64 / interior_vertices.len() as f64 };

    Ok(RunRecord {
        spec_hash: spec.hash(),
        theta_index,
        theta,
        replica,
        seed,
        interior_consensus: interior_plus == interior_vertices.len(),
        interior_plus_fraction,
        core_size: core.len(),
        core_density: core.len() as f64 / topology.vertex_count() as f64,
        core_static_violations: stability.violators.len(),
        core_flips,
        droplet_count: droplets.len(),
        max_droplet_size: droplets.iter().map(|d| d.len()).max().unwrap_or(0),
        interior_droplets: interior.len(),
        interior_droplets_eliminated: eliminated.len(),
        max_interior_droplet_size: interior.iter().map(|d| d.len()).max().unwrap_or(0),
        mean_elimination_time: (!eliminated.is_empty())
            .then(|| eliminated.iter().sum::<f64>() / eliminated.len() as f64),
        last_interior_flip: run.last_flip_among(&interior_vertices),
        flips: run.flip_log.len(),
        absorbed: run.absorbed,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Run every (θ, replica) pair in parallel; results come back sorted by
/// (θ index, replica) with one entry per pair.
pub fn run_experiment_partial(spec: &ExperimentSpec) -> Result<Vec<Result<RunRecord>>> {
    spec.validate()?;
    let topology = spec.topology.build()?;
    let jobs: Vec<(usize, usize)> =
        (0..spec.theta.len()).flat_map(|t| (0..spec.replicas).map(move |r| (t, r))).collect();
    Ok(jobs.par_iter().map(|&(t, r)| run_replica(spec, &topology, t, r)).collect())
}

/// [`run_experiment_partial`], failing on the first error.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunRecord>> {
    run_experiment_partial(spec)?.into_iter().collect()
}

/// Every interior droplet of the record was eliminated by the horizon.
pub fn all_interior_eliminated(record: &RunRecord) -> bool {
    record.interior_droplets == record.interior_droplets_eliminated
}
