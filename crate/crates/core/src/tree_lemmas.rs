//! Steiner subtrees of a finite tree ball, their degree census, good and bad
//! special 2-points, and the families of disjoint witness regions that make
//! the `Tree⁺` events independent.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::SpinConfiguration;
use crate::error::{Error, Result};
use crate::gw::{epsilon1, epsilon2};
use crate::rng;
use crate::stable_core::{compute_stable_core, BoundaryMode, StableVariant};
use crate::topology::{branch_region, Topology, TopologyKind};

fn require_tree(topology: &Topology) -> Result<()> {
    if topology.kind() != TopologyKind::Tree {
        return Err(Error::InvalidParameter("expected a single tree".into()));
    }
    Ok(())
}

/// Minimal subtree of the ambient ball containing the special vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SteinerTree {
    pub k: usize,
    /// Sorted vertex ids.
    pub vertices: Vec<usize>,
    pub special: Vec<usize>,
    member: Vec<bool>,
    is_special: Vec<bool>,
    adjacency: Vec<Vec<usize>>,
}

impl SteinerTree {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.member.get(v).copied().unwrap_or(false)
    }

    pub fn is_special(&self, v: usize) -> bool {
        self.is_special.get(v).copied().unwrap_or(false)
    }

    /// Neighbors of `v` inside the tree, sorted.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn leaves(&self) -> Vec<usize> {
        self.vertices.iter().copied().filter(|&v| self.degree(v) == 1).collect()
    }

    pub fn is_connected(&self) -> bool {
        let Some(&start) = self.vertices.first() else { return true };
        let mut seen = vec![false; self.member.len()];
        seen[start] = true;
        let mut stack = vec![start];
        let mut count = 0;
        while let Some(u) = stack.pop() {
            count += 1;
            for &w in &self.adjacency[u] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        count == self.vertices.len()
    }
}

/// Delete non-special leaves of the ambient ball until none remain.
pub fn steiner_subtree(topology: &Topology, special: &[usize]) -> Result<SteinerTree> {
    require_tree(topology)?;
    if special.is_empty() {
        return Err(Error::EmptySpecialSet);
    }
    let n = topology.vertex_count();
    let mut is_special = vec![false; n];
    for &v in special {
        if v >= n {
            return Err(Error::InvalidParameter(format!("special vertex {v} outside the ball")));
        }
        is_special[v] = true;
    }
    let mut member = vec![true; n];
    let mut degree: Vec<usize> = (0..n).map(|v| topology.degree(v)).collect();
    let mut stack: Vec<usize> = (0..n).filter(|&v| degree[v] <= 1 && !is_special[v]).collect();
    while let Some(v) = stack.pop() {
        if !member[v] {
            continue;
        }
        member[v] = false;
        for &w in topology.neighbors(v) {
            if member[w] {
                degree[w] -= 1;
                if degree[w] <= 1 && !is_special[w] {
                    stack.push(w);
                }
            }
        }
    }
    let adjacency = (0..n)
        .map(|v| {
            if member[v] {
                topology.neighbors(v).iter().copied().filter(|&w| member[w]).collect()
            } else {
                Vec::new()
            }
        })
        .collect();
    let mut special: Vec<usize> = special.to_vec();
    special.sort_unstable();
    special.dedup();
    Ok(SteinerTree {
        k: topology.k(),
        vertices: (0..n).filter(|&v| member[v]).collect(),
        special,
        member,
        is_special,
        adjacency,
    })
}

/// `counts[i]` is the number of vertices of degree `i` in the tree; index 0
/// is only nonzero for a single-vertex tree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DegreeCensus {
    pub counts: Vec<usize>,
}

impl DegreeCensus {
    /// `M_i`.
    pub fn m(&self, i: usize) -> usize {
        self.counts.get(i).copied().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Degrees `i >= 3` with `M_i > M_1`.
    pub fn lemma_b1_violations(&self) -> Vec<usize> {
        (3..self.counts.len()).filter(|&i| self.m(i) > self.m(1)).collect()
    }

    /// `M_1 + 3 M_3 + ... + K M_K`.
    pub fn bad_two_point_bound(&self) -> usize {
        self.m(1) + (3..self.counts.len()).map(|i| i * self.m(i)).sum::<usize>()
    }
}

pub fn degree_census(tree: &SteinerTree) -> DegreeCensus {
    let mut counts = vec![0; tree.k + 1];
    for &v in &tree.vertices {
        counts[tree.degree(v)] += 1;
    }
    DegreeCensus { counts }
}

/// Special 2-points split into good and bad, with the good ones grouped into
/// maximal chains of adjacent vertices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TwoPointClasses {
    pub good_special: Vec<usize>,
    pub bad_special: Vec<usize>,
    /// Every bad 2-point, special or not.
    pub bad_all: usize,
    /// Chains in walking order.
    pub chains: Vec<Vec<usize>>,
}

impl TwoPointClasses {
    pub fn chain_lengths(&self) -> Vec<usize> {
        self.chains.iter().map(Vec::len).collect()
    }
}

fn is_good(tree: &SteinerTree, v: usize) -> bool {
    tree.degree(v) == 2 && tree.neighbors(v).iter().all(|&w| tree.degree(w) == 2)
}

pub fn classify_special_2points(tree: &SteinerTree) -> TwoPointClasses {
    let mut good_special = Vec::new();
    let mut bad_special = Vec::new();
    let mut bad_all = 0;
    for &v in &tree.vertices {
        if tree.degree(v) != 2 {
            continue;
        }
        let good = is_good(tree, v);
        if !good {
            bad_all += 1;
        }
        if tree.is_special(v) {
            if good {
                good_special.push(v);
            } else {
                bad_special.push(v);
            }
        }
    }
    let in_good = |v: usize| good_special.binary_search(&v).is_ok();
    let mut visited = vec![false; tree.member.len()];
    let mut chains = Vec::new();
    for &s in &good_special {
        let chained: Vec<usize> = tree.neighbors(s).iter().copied().filter(|&w| in_good(w)).collect();
        if visited[s] || chained.len() > 1 {
            continue;
        }
        let mut chain = vec![s];
        visited[s] = true;
        let mut cur = s;
        loop {
            let next = tree.neighbors(cur).iter().copied().find(|&w| in_good(w) && !visited[w]);
            match next {
                Some(w) => {
                    visited[w] = true;
                    chain.push(w);
                    cur = w;
                }
                None => break,
            }
        }
        chains.push(chain);
    }
    TwoPointClasses { good_special, bad_special, bad_all, chains }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LemmaBranch {
    /// Many leaves: `M_1 >= ε₁ N_1`.
    Leaves,
    /// Many good special 2-points: `N_3 >= ε₂ N_1`.
    GoodTwoPoints,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LemmaB3Report {
    pub k: usize,
    pub n1: usize,
    pub m1: usize,
    pub n3: usize,
    pub branch_a: bool,
    pub branch_b: bool,
}

impl LemmaB3Report {
    pub fn holds(&self) -> bool {
        self.branch_a || self.branch_b
    }

    /// The branch used to build the event family (leaves take precedence).
    pub fn branch(&self) -> Option<LemmaBranch> {
        if self.branch_a {
            Some(LemmaBranch::Leaves)
        } else if self.branch_b {
            Some(LemmaBranch::GoodTwoPoints)
        } else {
            None
        }
    }

    /// `⌈ε₁ N_1⌉`.
    pub fn leaf_target(&self) -> usize {
        let d = self.k * (self.k - 1);
        self.n1.div_ceil(d)
    }
}

/// Both branches are evaluated in exact integer arithmetic.
pub fn check_lemma_b3(tree: &SteinerTree) -> LemmaB3Report {
    let k = tree.k;
    let m1 = degree_census(tree).m(1);
    let n1 = tree.special.len();
    let n3 = classify_special_2points(tree).good_special.len();
    LemmaB3Report {
        k,
        n1,
        m1,
        n3,
        branch_a: m1 * k * (k - 1) >= n1,
        branch_b: n3 * 2 * k * (k - 1) >= (k * k - 3 * k + 4) * n1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    LeafFamily,
    PairFamily,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventItem {
    /// `[v]` for a leaf event, `[v, w]` for a pair event.
    pub anchors: Vec<usize>,
    /// Sorted witness region.
    pub region: Vec<usize>,
    pub clipped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EventFamily {
    pub kind: FamilyKind,
    pub items: Vec<EventItem>,
    pub guaranteed_count: usize,
    /// Whether all witness regions are pairwise vertex-disjoint.
    pub disjoint: bool,
}

fn pairwise_disjoint(items: &[EventItem], n: usize) -> bool {
    let mut owner = vec![false; n];
    for item in items {
        for &v in &item.region {
            if owner[v] {
                return false;
            }
            owner[v] = true;
        }
    }
    true
}

fn other_neighbor(tree: &SteinerTree, v: usize, not: usize) -> usize {
    *tree.neighbors(v).iter().find(|&&u| u != not).expect("2-point has a second neighbor")
}

fn pair_item(topology: &Topology, tree: &SteinerTree, v: usize, w: usize) -> Result<EventItem> {
    let v_out = other_neighbor(tree, v, w);
    let w_out = other_neighbor(tree, w, v);
    let a = branch_region(topology, v, &[v_out, w])?;
    let b = branch_region(topology, w, &[v, w_out])?;
    let mut region = a.members;
    region.extend(b.members);
    region.sort_unstable();
    Ok(EventItem { anchors: vec![v, w], region, clipped: a.clipped || b.clipped })
}

/// For each odd chain pick the leftover end and its outer partner `w` so that
/// no `w` is shared. The preferred choice leaves the last chain vertex over
/// and takes its outer neighbor (the smaller id for a one-vertex chain);
/// conflicts are resolved by augmenting paths.
fn assign_outer_partners(tree: &SteinerTree, chains: &[Vec<usize>]) -> Vec<Option<(usize, usize)>> {
    // candidates per chain: (leftover end, outer neighbor)
    let candidates: Vec<Vec<(usize, usize)>> = chains
        .iter()
        .map(|chain| {
            if chain.len() % 2 == 0 {
                return Vec::new();
            }
            let last = *chain.last().unwrap();
            let first = chain[0];
            if chain.len() == 1 {
                let mut ns = tree.neighbors(last).to_vec();
                ns.sort_unstable();
                ns.into_iter().map(|w| (last, w)).collect()
            } else {
                vec![
                    (last, other_neighbor(tree, last, chain[chain.len() - 2])),
                    (first, other_neighbor(tree, first, chain[1])),
                ]
            }
        })
        .collect();

    fn augment(
        c: usize,
        candidates: &[Vec<(usize, usize)>],
        taken: &mut std::collections::HashMap<usize, usize>,
        seen: &mut std::collections::HashSet<usize>,
        choice: &mut [Option<(usize, usize)>],
    ) -> bool {
        for &(end, w) in &candidates[c] {
            if !seen.insert(w) {
                continue;
            }
            let free = match taken.get(&w) {
                None => true,
                Some(&other) => augment(other, candidates, taken, seen, choice),
            };
            if free {
                taken.insert(w, c);
                choice[c] = Some((end, w));
                return true;
            }
        }
        false
    }

    let mut choice = vec![None; chains.len()];
    let mut taken = std::collections::HashMap::new();
    for c in 0..chains.len() {
        if !candidates[c].is_empty() {
            let mut seen = std::collections::HashSet::new();
            let placed = augment(c, &candidates, &mut taken, &mut seen, &mut choice);
            debug_assert!(placed, "outer partners always exist in a tree");
        }
    }
    choice
}

/// Build the family of `Tree⁺` events for the branch of the geometric lemma
/// that holds, with witness regions computed in the ambient ball.
pub fn build_event_family(topology: &Topology, tree: &SteinerTree) -> Result<EventFamily> {
    require_tree(topology)?;
    if tree.special.len() < 2 {
        return Err(Error::TooFewSpecial(tree.special.len()));
    }
    let report = check_lemma_b3(tree);
    let mut items = Vec::new();
    let (kind, guaranteed_count) = match report.branch() {
        Some(LemmaBranch::Leaves) => {
            for v in tree.leaves() {
                let r = branch_region(topology, v, &[tree.neighbors(v)[0]])?;
                items.push(EventItem { anchors: vec![v], region: r.members, clipped: r.clipped });
            }
            (FamilyKind::LeafFamily, report.leaf_target())
        }
        Some(LemmaBranch::GoodTwoPoints) => {
            let classes = classify_special_2points(tree);
            let partners = assign_outer_partners(tree, &classes.chains);
            for (chain, partner) in classes.chains.iter().zip(&partners) {
                let body: &[usize] = match partner {
                    Some((end, _)) if *end == chain[0] && chain.len() > 1 => &chain[1..],
                    Some(_) => &chain[..chain.len() - 1],
                    None => chain,
                };
                for pair in body.chunks(2) {
                    items.push(pair_item(topology, tree, pair[0], pair[1])?);
                }
                if let Some((end, w)) = partner {
                    items.push(pair_item(topology, tree, *end, *w)?);
                }
            }
            (FamilyKind::PairFamily, report.n3 / 2)
        }
        None => {
            return Err(Error::InvalidParameter(format!(
                "geometric lemma fails on this tree: {report:?}"
            )))
        }
    };
    let disjoint = pairwise_disjoint(&items, topology.vertex_count());
    Ok(EventFamily { kind, items, guaranteed_count, disjoint })
}

/// `min(⌈ε₁ N_1⌉, ⌊ε₂ N_1 / 2⌋)`, the family size promised for `N_1`
/// special vertices.
pub fn promised_family_size(k: usize, n1: usize) -> usize {
    let leaf = n1.div_ceil(k * (k - 1));
    let pair = ((k * k - 3 * k + 4) * n1) / (4 * k * (k - 1));
    leaf.min(pair)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PropositionReport {
    pub samples: usize,
    /// Samples in which no special vertex is in the core.
    pub misses: usize,
    pub frequency: f64,
    pub lambda: f64,
    /// `λ^{|Λ|}`.
    pub bound: f64,
    /// Binomial standard error at the bound.
    pub sigma: f64,
    /// `bound + 4σ + allowance - frequency`; negative means a violation.
    pub margin: f64,
}

impl PropositionReport {
    pub fn violated(&self) -> bool {
        self.margin < 0.0
    }
}

/// Monte Carlo frequency of `{Λ ∩ core = ∅}` on the ball with a wildcard
/// boundary, against `λ^{|Λ|}`.
pub fn empirical_proposition_check(
    topology: &Topology,
    special: &[usize],
    theta: f64,
    lambda: f64,
    samples: usize,
    allowance: f64,
    seed: u64,
) -> Result<PropositionReport> {
    require_tree(topology)?;
    if special.is_empty() {
        return Err(Error::EmptySpecialSet);
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let misses: usize = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<usize> {
            let s = rng::derive_seed(seed, "proposition", &[i as u64]);
            let config = SpinConfiguration::sample(topology, theta, s)?;
            let core = compute_stable_core(topology, &config, StableVariant::SingleLayer, BoundaryMode::Wildcard)?;
            Ok(usize::from(special.iter().all(|&v| !core.contains(v))))
        })
        .sum::<Result<usize>>()?;
    let frequency = misses as f64 / samples as f64;
    let bound = lambda.powi(special.len() as i32);
    let sigma = (bound * (1.0 - bound) / samples as f64).sqrt();
    Ok(PropositionReport {
        samples,
        misses,
        frequency,
        lambda,
        bound,
        sigma,
        margin: bound + 4.0 * sigma + allowance - frequency,
    })
}

/// Uniformly random special set: each ball vertex independently with
/// probability `density`, falling back to one uniform vertex if none is hit.
pub fn random_special_set(topology: &Topology, density: f64, seed: u64) -> Vec<usize> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(rng::derive_seed(seed, "special", &[]));
    let n = topology.vertex_count();
    let mut set: Vec<usize> = (0..n).filter(|_| rng.random::<f64>() < density).collect();
    if set.is_empty() {
        set.push(rng.random_range(0..n));
    }
    set
}

/// Every vertex of the ball path between two uniformly chosen outermost
/// vertices.
pub fn random_geodesic(topology: &Topology, seed: u64) -> Vec<usize> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(rng::derive_seed(seed, "geodesic", &[]));
    let ball = topology.ball();
    let outer: Vec<usize> = (0..ball.len()).filter(|&c| ball.depth(c) == ball.radius()).collect();
    let (a, b) = (outer[rng.random_range(0..outer.len())], outer[rng.random_range(0..outer.len())]);
    let layer = rng.random_range(0..topology.layers());
    topology.ball().path(a, b).into_iter().map(|c| topology.vertex(layer, c)).collect()
}

/// `ε₁` and `ε₂` for reporting.
pub fn epsilons(k: usize) -> (f64, f64) {
    (epsilon1(k), epsilon2(k))
}


/// Tallies of [`lemma_selftest`]; every count except `instances` and
/// `pair_families` should be zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SelftestReport {
    pub k: usize,
    pub instances: usize,
    pub pair_families: usize,
    pub steiner_defects: usize,
    pub lemma_b1_failures: usize,
    pub lemma_b3_failures: usize,
    pub bad_bound_failures: usize,
    pub overlapping_families: usize,
    pub pairing_mismatches: usize,
    pub short_families: usize,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.steiner_defects
            + self.lemma_b1_failures
            + self.lemma_b3_failures
            + self.bad_bound_failures
            + self.overlapping_families
            + self.pairing_mismatches
            + self.short_families
            == 0
    }
}

/// Check the geometric and disjointness lemmas on random special sets in a
/// radius-`radius` ball of `T_K`. Densities cycle through sparse and dense
/// sets so that paths, stars and combs all show up.
pub fn lemma_selftest(k: usize, radius: usize, instances: usize, seed: u64) -> Result<SelftestReport> {
    let topology = Topology::build(TopologyKind::Tree, k, 1, radius)?;
    let densities = [0.02, 0.05, 0.1, 0.3, 0.6, 0.9];
    let reports = (0..instances)
        .into_par_iter()
        .map(|i| -> Result<SelftestReport> {
            let mut rep = SelftestReport { k, instances: 1, ..SelftestReport::default() };
            let instance_seed = rng::derive_seed(seed, "lemma", &[i as u64]);
            // every seventh instance is a geodesic, which forces long chains
            let special = if i % 7 == 6 {
                random_geodesic(&topology, instance_seed)
            } else {
                random_special_set(&topology, densities[i % densities.len()], instance_seed)
            };
            let tree = steiner_subtree(&topology, &special)?;
            let leaves_special = tree.leaves().iter().all(|&v| tree.is_special(v));
            let minimal = tree.vertices.iter().all(|&v| tree.degree(v) >= 2 || tree.is_special(v));
            if !tree.is_connected() || !leaves_special || !minimal || !special.iter().all(|&v| tree.contains(v)) {
                rep.steiner_defects += 1;
            }
            let census = degree_census(&tree);
            if !census.lemma_b1_violations().is_empty() {
                rep.lemma_b1_failures += 1;
            }
            let classes = classify_special_2points(&tree);
            if classes.bad_all > census.bad_two_point_bound() {
                rep.bad_bound_failures += 1;
            }
            // a single special vertex has no leaves and no pairs; the lemma
            // is stated for at least two
            let b3 = check_lemma_b3(&tree);
            if tree.special.len() >= 2 && !b3.holds() {
                rep.lemma_b3_failures += 1;
            }
            if tree.special.len() >= 2 && b3.holds() {
                let fam = build_event_family(&topology, &tree)?;
                if !fam.disjoint {
                    rep.overlapping_families += 1;
                }
                if fam.kind == FamilyKind::PairFamily {
                    rep.pair_families += 1;
                    let expected: usize = classes.chains.iter().map(|c| c.len().div_ceil(2)).sum();
                    if fam.items.len() != expected {
                        rep.pairing_mismatches += 1;
                    }
                }
                if fam.items.len() < fam.guaranteed_count || fam.guaranteed_count < promised_family_size(k, tree.special.len()) {
                    rep.short_families += 1;
                }
            }
            Ok(rep)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(reports.into_iter().fold(SelftestReport { k, ..SelftestReport::default() }, |a, b| SelftestReport {
        k,
        instances: a.instances + b.instances,
        pair_families: a.pair_families + b.pair_families,
        steiner_defects: a.steiner_defects + b.steiner_defects,
        lemma_b1_failures: a.lemma_b1_failures + b.lemma_b1_failures,
        lemma_b3_failures: a.lemma_b3_failures + b.lemma_b3_failures,
        bad_bound_failures: a.bad_bound_failures + b.bad_bound_failures,
        overlapping_families: a.overlapping_families + b.overlapping_families,
        pairing_mismatches: a.pairing_mismatches + b.pairing_mismatches,
        short_families: a.short_families + b.short_families,
    }))
}
