use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{DynamicsMode, UpdateRule};
use crate::error::{Error, Result};
use crate::stable_core::{BoundaryMode, StableVariant};
use crate::topology::{Topology, TopologyKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub k: usize,
    #[serde(default = "one")]
    pub width: usize,
    pub radius: usize,
}

fn one() -> usize {
    1
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology> {
        Topology::build(self.kind, self.k, self.width, self.radius)
    }
}

fn default_replicas() -> usize {
    1
}

fn default_horizon() -> f64 {
    50.0
}

fn default_margin() -> usize {
    2
}

fn default_flip_cap() -> usize {
    50_000_000
}

fn default_mode() -> DynamicsMode {
    DynamicsMode::Async
}

/// One experiment: a topology, a θ grid and everything needed to replay the
/// runs. Read from and written to TOML; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub topology: TopologySpec,
    pub theta: Vec<f64>,
    #[serde(default)]
    pub rule: UpdateRule,
    #[serde(default = "default_mode")]
    pub mode: DynamicsMode,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    /// Time horizon; the step count in sync mode.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub boundary: BoundaryMode,
    /// Core variant; the natural one for the topology when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<StableVariant>,
    #[serde(default = "default_margin")]
    pub interior_margin: usize,
    #[serde(default = "default_flip_cap")]
    pub flip_cap: usize,
    /// Multicolor initial weights; by default the favored color gets θ and
    /// the rest share `1 - θ` evenly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Summary columns to emit; all when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<String>,
}

impl ExperimentSpec {
    pub fn new(topology: TopologySpec, theta: Vec<f64>) -> ExperimentSpec {
        ExperimentSpec {
            topology,
            theta,
            rule: UpdateRule::default(),
            mode: DynamicsMode::Async,
            replicas: 1,
            horizon: default_horizon(),
            seed: 0,
            boundary: BoundaryMode::default(),
            variant: None,
            interior_margin: default_margin(),
            flip_cap: default_flip_cap(),
            color_weights: None,
            output: None,
            metrics: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<ExperimentSpec> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Spec(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicas == 0 {
            return Err(Error::Spec("replicas must be at least 1".into()));
        }
        if self.theta.is_empty() {
            return Err(Error::Spec("theta grid is empty".into()));
        }
        if let Some(t) = self.theta.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::Spec(format!("theta {t} outside [0, 1]")));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Spec(format!("horizon {} must be positive", self.horizon)));
        }
        if self.mode == DynamicsMode::Sync && self.horizon.fract() != 0.0 {
            return Err(Error::Spec("sync mode needs an integer step count".into()));
        }
        for m in &self.metrics {
            if !super::report::SUMMARY_COLUMNS.contains(&m.as_str()) {
                return Err(Error::Spec(format!("unknown metric {m:?}")));
            }
        }
        let topology = self.topology.build()?;
        self.rule.validate(crate::dynamics::effective_max_degree(&topology, self.boundary.ghost_policy()))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        hex::encode(Sha256::digest(&json))
    }

    /// Short form of [`ExperimentSpec::hash`] used as the run directory name.
    pub fn short_hash(&self) -> String {
        self.hash()[..16].to_string()
    }
}
