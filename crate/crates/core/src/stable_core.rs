//! Stable cores and droplets.
//!
//! A core is found by pruning inside a block of layers: keep the coordinates
//! that are `+1` in every layer of the block, then repeatedly delete any
//! coordinate with fewer than `K - 1` surviving tree neighbors (plus ghost
//! credit for neighbors cut off by the radius, unless the boundary is free).
//! Blocks are single layers, layer pairs `(2i, 2i + 1)`, or for odd-width
//! finite stacks pairs followed by one final triple.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Alphabet, DynamicsRun, GhostPolicy, RuleMode, SpinConfiguration, UpdateRule, MINUS, PLUS};
use crate::error::{Error, Result};
use crate::topology::{Ball, Topology, TopologyKind};
use crate::union_find::UnionFind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StableVariant {
    SingleLayer,
    DoublyOpen,
    TriplyOpen,
}

impl StableVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            StableVariant::SingleLayer => "single_layer",
            StableVariant::DoublyOpen => "doubly_open",
            StableVariant::TriplyOpen => "triply_open",
        }
    }

    /// The variant that is stable for this topology: single layers for
    /// `K >= 5` (and for a lone tree or layer), layer pairs for `K = 3, 4`,
    /// with a final triple on odd-width finite stacks.
    pub fn natural(topology: &Topology) -> StableVariant {
        let finite = matches!(
            topology.kind(),
            TopologyKind::StackFreeFinite | TopologyKind::StackPeriodicFinite
        );
        if topology.kind() == TopologyKind::Tree || topology.layers() == 1 || topology.k() >= 5 {
            StableVariant::SingleLayer
        } else if finite && topology.layers() % 2 == 1 {
            StableVariant::TriplyOpen
        } else {
            StableVariant::DoublyOpen
        }
    }
}

impl fmt::Display for StableVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StableVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_layer" => Ok(StableVariant::SingleLayer),
            "doubly_open" => Ok(StableVariant::DoublyOpen),
            "triply_open" => Ok(StableVariant::TriplyOpen),
            other => Err(Error::InvalidParameter(format!("unknown core variant {other:?}"))),
        }
    }
}

/// How tree neighbors beyond the truncation radius are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// Missing neighbors count for nothing.
    Free,
    /// Missing neighbors are `+1` forever.
    Clamped,
    /// Missing neighbors are assumed to continue the pattern, i.e. count as
    /// surviving core neighbors.
    #[default]
    Wildcard,
}

impl BoundaryMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryMode::Free => "free",
            BoundaryMode::Clamped => "clamped",
            BoundaryMode::Wildcard => "wildcard",
        }
    }

    /// Ghost treatment the dynamics needs for cores built in this mode to be
    /// stable.
    pub fn ghost_policy(self) -> GhostPolicy {
        match self {
            BoundaryMode::Free => GhostPolicy::Free,
            BoundaryMode::Clamped | BoundaryMode::Wildcard => GhostPolicy::PlusClamped,
        }
    }

    fn credit(self, ball: &Ball, c: usize) -> usize {
        match self {
            BoundaryMode::Free => 0,
            BoundaryMode::Clamped | BoundaryMode::Wildcard => ball.missing(c),
        }
    }
}

impl fmt::Display for BoundaryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "free" => Ok(BoundaryMode::Free),
            "clamped" => Ok(BoundaryMode::Clamped),
            "wildcard" => Ok(BoundaryMode::Wildcard),
            other => Err(Error::InvalidParameter(format!("unknown boundary mode {other:?}"))),
        }
    }
}

/// Partition of the layers into pruning blocks, plus a layer left over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerBlocks {
    pub blocks: Vec<Vec<usize>>,
    pub unpaired: Option<usize>,
}

/// Layer blocks of `variant` on `topology`.
pub fn layer_blocks(topology: &Topology, variant: StableVariant) -> Result<LayerBlocks> {
    let layers = topology.layers();
    let mismatch = |reason: &str| Error::VariantMismatch { variant: variant.to_string(), reason: reason.into() };
    match variant {
        StableVariant::SingleLayer => Ok(LayerBlocks { blocks: (0..layers).map(|l| vec![l]).collect(), unpaired: None }),
        StableVariant::DoublyOpen => {
            if topology.kind() == TopologyKind::Tree || layers < 2 {
                return Err(mismatch("needs a stack with at least two layers"));
            }
            let window = matches!(topology.kind(), TopologyKind::StackInfinite | TopologyKind::StackSemiInfinite);
            if layers % 2 == 1 && !window {
                return Err(mismatch("odd-width finite stacks use the triply open variant"));
            }
            Ok(LayerBlocks {
                blocks: (0..layers / 2).map(|i| vec![2 * i, 2 * i + 1]).collect(),
                unpaired: (layers % 2 == 1).then_some(layers - 1),
            })
        }
        StableVariant::TriplyOpen => {
            let finite = matches!(
                topology.kind(),
                TopologyKind::StackFreeFinite | TopologyKind::StackPeriodicFinite
            );
            if !finite || layers < 3 || layers.is_multiple_of(2) {
                return Err(mismatch("needs a finite stack of odd width at least 3"));
            }
            let mut blocks: Vec<Vec<usize>> = (0..(layers - 3) / 2).map(|i| vec![2 * i, 2 * i + 1]).collect();
            blocks.push(vec![layers - 3, layers - 2, layers - 1]);
            Ok(LayerBlocks { blocks, unpaired: None })
        }
    }
}

/// Prune `alive` coordinates of `ball` to the largest subset in which every
/// coordinate has at least `need` surviving neighbors plus `credit(c)`.
pub fn prune_ball(ball: &Ball, alive: &mut [bool], need: usize, credit: impl Fn(usize) -> usize) {
    let n = ball.len();
    let mut support = vec![0usize; n];
    let mut queue = VecDeque::new();
    for c in 0..n {
        if alive[c] {
            support[c] = credit(c) + ball.neighbors(c).filter(|&d| alive[d]).count();
            if support[c] < need {
                queue.push_back(c);
            }
        }
    }
    while let Some(c) = queue.pop_front() {
        if !alive[c] {
            continue;
        }
        alive[c] = false;
        for d in ball.neighbors(c) {
            if alive[d] {
                support[d] -= 1;
                if support[d] + 1 == need {
                    queue.push_back(d);
                }
            }
        }
    }
}

/// The fixed vertex set detected at time zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StableCore {
    pub variant: StableVariant,
    pub boundary_mode: BoundaryMode,
    pub blocks: Vec<Vec<usize>>,
    /// Sorted member ids.
    pub members: Vec<usize>,
    /// Members of each layer.
    pub per_layer: Vec<Vec<usize>>,
    flags: Vec<bool>,
    block_of_layer: Vec<Option<usize>>,
}

impl StableCore {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.flags[v]
    }

    pub fn block_of_layer(&self, layer: usize) -> Option<usize> {
        self.block_of_layer[layer]
    }
}

fn require_binary(configuration: &SpinConfiguration) -> Result<()> {
    if configuration.alphabet() != Alphabet::Binary {
        return Err(Error::InvalidParameter(
            "cores are defined on binary configurations; reduce colors first".into(),
        ));
    }
    Ok(())
}

/// Compute the stable core of `configuration`.
pub fn compute_stable_core(
    topology: &Topology,
    configuration: &SpinConfiguration,
    variant: StableVariant,
    boundary_mode: BoundaryMode,
) -> Result<StableCore> {
    require_binary(configuration)?;
    if configuration.len() != topology.vertex_count() {
        return Err(Error::InvalidParameter("configuration does not match topology".into()));
    }
    let LayerBlocks { blocks, .. } = layer_blocks(topology, variant)?;
    let ball = topology.ball();
    let need = topology.k() - 1;
    let mut flags = vec![false; topology.vertex_count()];
    let mut block_of_layer = vec![None; topology.layers()];
    for (b, block) in blocks.iter().enumerate() {
        for &l in block {
            block_of_layer[l] = Some(b);
        }
        let mut alive: Vec<bool> = (0..ball.len())
            .map(|c| block.iter().all(|&l| configuration.is_plus(topology.vertex(l, c))))
            .collect();
        prune_ball(ball, &mut alive, need, |c| boundary_mode.credit(ball, c));
        for (c, _) in alive.iter().enumerate().filter(|(_, &a)| a) {
            for &l in block {
                flags[topology.vertex(l, c)] = true;
            }
        }
    }
    let members: Vec<usize> = (0..flags.len()).filter(|&v| flags[v]).collect();
    let mut per_layer = vec![Vec::new(); topology.layers()];
    for &v in &members {
        per_layer[topology.layer_of(v)].push(v);
    }
    Ok(StableCore { variant, boundary_mode, blocks, members, per_layer, flags, block_of_layer })
}

/// Per-member outcome of [`verify_core_stability`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemberMargin {
    pub vertex: usize,
    /// Neighbors that are certain to stay `+1`.
    pub guaranteed: usize,
    /// Neighbors (ghosts included) the rule looks at.
    pub degree: usize,
    /// Smallest guaranteed count that forces `+1`.
    pub required: usize,
}

impl MemberMargin {
    pub fn margin(&self) -> i64 {
        self.guaranteed as i64 - self.required as i64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StabilityReport {
    pub margins: Vec<MemberMargin>,
    pub violators: Vec<usize>,
}

impl StabilityReport {
    pub fn is_stable(&self) -> bool {
        self.violators.is_empty()
    }
}

/// Static check that every core member is forced to `+1` by core neighbors
/// in its own block (and by ghosts when the boundary mode clamps them),
/// whatever the rest of the configuration does.
pub fn verify_core_stability(topology: &Topology, core: &StableCore, rule: &UpdateRule) -> StabilityReport {
    let clamp = core.boundary_mode.ghost_policy() == GhostPolicy::PlusClamped;
    let mut margins = Vec::with_capacity(core.len());
    let mut violators = Vec::new();
    for &v in &core.members {
        let block = core.block_of_layer(topology.layer_of(v));
        let inside = topology
            .neighbors(v)
            .iter()
            .filter(|&&w| core.contains(w) && core.block_of_layer(topology.layer_of(w)) == block)
            .count();
        let ghosts = if clamp { topology.ghosts(v) } else { 0 };
        let degree = topology.degree(v) + ghosts;
        let guaranteed = inside + ghosts;
        let required = match rule.mode {
            RuleMode::Threshold => rule.threshold,
            RuleMode::Majority | RuleMode::Multicolor => degree / 2 + 1,
        };
        let m = MemberMargin { vertex: v, guaranteed, degree, required };
        if m.margin() < 0 {
            violators.push(v);
        }
        margins.push(m);
    }
    StabilityReport { margins, violators }
}

/// The `+1` cluster of `v`: every vertex joined to `v` by a path of `+1`
/// vertices. Empty when `v` itself is `-1`.
pub fn plus_cluster(topology: &Topology, configuration: &SpinConfiguration, v: usize) -> Vec<usize> {
    if !configuration.is_plus(v) {
        return Vec::new();
    }
    let mut seen = vec![false; topology.vertex_count()];
    seen[v] = true;
    let mut stack = vec![v];
    let mut out = Vec::new();
    while let Some(u) = stack.pop() {
        out.push(u);
        for &w in topology.neighbors(u) {
            if !seen[w] && configuration.is_plus(w) {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    out.sort_unstable();
    out
}

/// A connected component of the complement of a core.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Droplet {
    pub id: usize,
    #[serde(skip)]
    pub members: Vec<usize>,
    pub touches_boundary: bool,
    pub elimination_time: Option<f64>,
}

impl Droplet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Whether every member lies in the interior at `margin`; droplets that
    /// reach the margin are truncation-affected.
    pub fn is_interior(&self, topology: &Topology, margin: usize) -> bool {
        self.members.iter().all(|&v| topology.is_interior(v, margin))
    }
}

/// Connected components of the vertices outside `core`, ordered by their
/// smallest member.
pub fn droplet_decomposition(topology: &Topology, core: &StableCore) -> Vec<Droplet> {
    let n = topology.vertex_count();
    let mut uf = UnionFind::new(n);
    for u in 0..n {
        if core.contains(u) {
            continue;
        }
        for &w in topology.neighbors(u) {
            if w > u && !core.contains(w) {
                uf.union(u, w);
            }
        }
    }
    let mut index = vec![usize::MAX; n];
    let mut droplets: Vec<Droplet> = Vec::new();
    for v in (0..n).filter(|&v| !core.contains(v)) {
        let r = uf.find(v);
        if index[r] == usize::MAX {
            index[r] = droplets.len();
            droplets.push(Droplet { id: droplets.len(), members: Vec::new(), touches_boundary: false, elimination_time: None });
        }
        let d = &mut droplets[index[r]];
        d.members.push(v);
        d.touches_boundary |= topology.is_boundary(v);
    }
    droplets
}

/// Fill in elimination times: the last flip time among members when every
/// member ends the run at `+1` (zero if none flipped), unset otherwise.
pub fn track_droplet_elimination(run: &DynamicsRun, droplets: &mut [Droplet]) {
    let fin = &run.final_configuration;
    for d in droplets.iter_mut() {
        d.elimination_time = if d.members.iter().all(|&v| fin.get(v) == run.favored) {
            Some(run.last_flip_among(&d.members).unwrap_or(0.0))
        } else {
            None
        };
    }
}

/// Result of [`doubly_open_projection`].
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    /// Layers merged into each projected layer.
    pub blocks: Vec<Vec<usize>>,
    /// One layer per block, `ball_size` spins each.
    pub configuration: SpinConfiguration,
}

/// Collapse each layer block to one layer: a coordinate is `+1` iff it is `+1`
/// in every layer of the block.
pub fn doubly_open_projection(
    topology: &Topology,
    configuration: &SpinConfiguration,
    variant: StableVariant,
) -> Result<Projection> {
    require_binary(configuration)?;
    if variant == StableVariant::SingleLayer {
        return Err(Error::VariantMismatch {
            variant: variant.to_string(),
            reason: "projection merges layer pairs or triples".into(),
        });
    }
    let LayerBlocks { blocks, unpaired } = layer_blocks(topology, variant)?;
    if let Some(l) = unpaired {
        return Err(Error::UnpairedLayer(l));
    }
    let n = topology.ball_size();
    let mut spins = Vec::with_capacity(blocks.len() * n);
    for block in &blocks {
        for c in 0..n {
            let open = block.iter().all(|&l| configuration.is_plus(topology.vertex(l, c)));
            spins.push(if open { PLUS } else { MINUS });
        }
    }
    Ok(Projection { blocks, configuration: SpinConfiguration::from_spins(spins, Alphabet::Binary)? })
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct CoreExport<'a> {
    variant: StableVariant,
    boundary_mode: BoundaryMode,
    members: &'a [usize],
    droplets: Vec<DropletExport>,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct DropletExport {
    id: usize,
    size: usize,
    touches_boundary: bool,
    elimination_time: Option<f64>,
}

/// Write `{variant, boundaryMode, members, droplets}` as JSON.
pub fn write_core_json<W: Write>(core: &StableCore, droplets: &[Droplet], out: W) -> Result<()> {
    let export = CoreExport {
        variant: core.variant,
        boundary_mode: core.boundary_mode,
        members: &core.members,
        droplets: droplets
            .iter()
            .map(|d| DropletExport {
                id: d.id,
                size: d.len(),
                touches_boundary: d.touches_boundary,
                elimination_time: d.elimination_time,
            })
            .collect(),
    };
    serde_json::to_writer_pretty(out, &export)?;
    Ok(())
}
