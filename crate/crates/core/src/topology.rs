//! Finite truncations of the homogeneous tree `T_K` and of stacks of such trees.
//!
//! Every layer is a copy of the radius-`R` ball around a distinguished root of
//! `T_K`. Vertex ids are layer-major; inside a layer they follow breadth-first
//! order from the root, so the root of layer `i` is `i * ball_size`.
//!
//! Cross-layer edges always join identical tree coordinates in adjacent layers.
//! The only wraparound is for periodic stacks. A periodic stack of width 2
//! would carry a doubled vertical edge; it is collapsed into one, so those
//! vertices have degree `K + 1`.

use std::collections::VecDeque;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which graph family a [`Topology`] truncates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    /// A single copy of `T_K`.
    Tree,
    /// A window of `width` layers cut out of the doubly infinite stack.
    StackInfinite,
    /// `l` layers with free top and bottom.
    StackFreeFinite,
    /// `l` layers with the top layer joined back to the bottom one.
    StackPeriodicFinite,
    /// A window of the first `width` layers of the semi-infinite stack.
    StackSemiInfinite,
}

impl TopologyKind {
    pub const ALL: [TopologyKind; 5] = [
        TopologyKind::Tree,
        TopologyKind::StackInfinite,
        TopologyKind::StackFreeFinite,
        TopologyKind::StackPeriodicFinite,
        TopologyKind::StackSemiInfinite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TopologyKind::Tree => "tree",
            TopologyKind::StackInfinite => "stack_infinite",
            TopologyKind::StackFreeFinite => "stack_free_finite",
            TopologyKind::StackPeriodicFinite => "stack_periodic_finite",
            TopologyKind::StackSemiInfinite => "stack_semi_infinite",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TopologyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown topology kind `{s}`")))
    }
}

/// The radius-`R` ball of `T_K` in breadth-first order.
#[derive(Debug, Clone)]
pub struct Ball {
    k: usize,
    radius: usize,
    parent: Vec<Option<usize>>,
    depth: Vec<usize>,
    children: Vec<Vec<usize>>,
}

impl Ball {
    pub fn new(k: usize, radius: usize) -> Ball {
        let mut parent = vec![None];
        let mut depth = vec![0];
        let mut children: Vec<Vec<usize>> = vec![Vec::new()];
        let mut queue = VecDeque::from([0usize]);
        while let Some(u) = queue.pop_front() {
            if depth[u] == radius {
                continue;
            }
            let fanout = if u == 0 { k } else { k - 1 };
            for _ in 0..fanout {
                let c = parent.len();
                parent.push(Some(u));
                depth.push(depth[u] + 1);
                children.push(Vec::new());
                children[u].push(c);
                queue.push_back(c);
            }
        }
        Ball { k, radius, parent, depth, children }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn parent(&self, c: usize) -> Option<usize> {
        self.parent[c]
    }

    pub fn depth(&self, c: usize) -> usize {
        self.depth[c]
    }

    pub fn children(&self, c: usize) -> &[usize] {
        &self.children[c]
    }

    /// Tree neighbors of coordinate `c` inside the ball.
    pub fn neighbors(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.parent[c].into_iter().chain(self.children[c].iter().copied())
    }

    pub fn degree(&self, c: usize) -> usize {
        self.children[c].len() + usize::from(self.parent[c].is_some())
    }

    /// Neighbors that `T_K` has but the ball cut off.
    pub fn missing(&self, c: usize) -> usize {
        self.k - self.degree(c)
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        self.parent[a] == Some(b) || self.parent[b] == Some(a)
    }

    /// Vertices of the path from `a` to `b`, both included.
    pub fn path(&self, a: usize, b: usize) -> Vec<usize> {
        let (mut x, mut y) = (a, b);
        let mut left = Vec::new();
        let mut right = Vec::new();
        while self.depth[x] > self.depth[y] {
            left.push(x);
            x = self.parent[x].expect("non-root has a parent");
        }
        while self.depth[y] > self.depth[x] {
            right.push(y);
            y = self.parent[y].expect("non-root has a parent");
        }
        while x != y {
            left.push(x);
            right.push(y);
            x = self.parent[x].expect("non-root has a parent");
            y = self.parent[y].expect("non-root has a parent");
        }
        left.push(x);
        left.extend(right.into_iter().rev());
        left
    }
}

/// A finite truncation of one of the tree-related graph families.
#[derive(Debug, Clone)]
pub struct Topology {
    kind: TopologyKind,
    k: usize,
    width: usize,
    layers: usize,
    radius: usize,
    ball: Ball,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    clipped_below: Vec<bool>,
    clipped_above: Vec<bool>,
}

impl Topology {
    /// Build the truncation. `width` is the layer count for finite stacks and
    /// the size of the layer window for infinite and semi-infinite ones; it is
    /// ignored (one layer) for [`TopologyKind::Tree`].
    pub fn build(kind: TopologyKind, k: usize, width: usize, radius: usize) -> Result<Topology> {
        if k < 3 {
            return Err(Error::InvalidParameter(format!("tree degree K = {k} must be at least 3")));
        }
        if width == 0 {
            return Err(Error::InvalidParameter("width must be at least 1".into()));
        }
        if kind == TopologyKind::StackPeriodicFinite && width < 2 {
            return Err(Error::InvalidParameter(format!(
                "periodic stacks need width >= 2, got {width}"
            )));
        }
        let layers = if kind == TopologyKind::Tree { 1 } else { width };
        let ball = Ball::new(k, radius);
        let n = ball.len();

        let mut clipped_below = vec![false; layers];
        let mut clipped_above = vec![false; layers];
        match kind {
            TopologyKind::StackInfinite => {
                clipped_below[0] = true;
                clipped_above[layers - 1] = true;
            }
            TopologyKind::StackSemiInfinite => clipped_above[layers - 1] = true,
            _ => {}
        }

        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n * layers];
        for layer in 0..layers {
            let base = layer * n;
            for c in 0..n {
                adjacency[base + c].extend(ball.neighbors(c).map(|d| base + d));
            }
        }
        let mut vertical = |a: usize, b: usize| {
            for c in 0..n {
                let (x, y) = (a * n + c, b * n + c);
                if !adjacency[x].contains(&y) {
                    adjacency[x].push(y);
                    adjacency[y].push(x);
                }
            }
        };
        if kind != TopologyKind::Tree {
            for layer in 0..layers.saturating_sub(1) {
                vertical(layer, layer + 1);
            }
            if kind == TopologyKind::StackPeriodicFinite && layers >= 2 {
                vertical(layers - 1, 0);
            }
        }

        let mut offsets = Vec::with_capacity(n * layers + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        for mut list in adjacency {
            list.sort_unstable();
            targets.extend(list);
            offsets.push(targets.len());
        }

        Ok(Topology {
            kind,
            k,
            width,
            layers,
            radius,
            ball,
            offsets,
            targets,
            clipped_below,
            clipped_above,
        })
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn ball(&self) -> &Ball {
        &self.ball
    }

    pub fn ball_size(&self) -> usize {
        self.ball.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    /// Sorted neighbors of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.vertex_count()).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn layer_of(&self, v: usize) -> usize {
        v / self.ball.len()
    }

    pub fn coord_of(&self, v: usize) -> usize {
        v % self.ball.len()
    }

    pub fn vertex(&self, layer: usize, coord: usize) -> usize {
        layer * self.ball.len() + coord
    }

    /// Root of `layer`.
    pub fn root(&self, layer: usize) -> usize {
        self.vertex(layer, 0)
    }

    pub fn depth_of(&self, v: usize) -> usize {
        self.ball.depth(self.coord_of(v))
    }

    pub fn in_layer_neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        let base = self.layer_of(v) * self.ball.len();
        self.ball.neighbors(self.coord_of(v)).map(move |c| base + c)
    }

    /// Whether the layer was cut out of an infinite stack (it has a missing
    /// vertical neighbor).
    pub fn is_clipped_layer(&self, layer: usize) -> bool {
        self.clipped_below[layer] || self.clipped_above[layer]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.depth_of(v) == self.radius || self.is_clipped_layer(self.layer_of(v))
    }

    /// In-tree distance at most `radius - margin` and not in a clipped layer.
    pub fn is_interior(&self, v: usize, margin: usize) -> bool {
        self.radius >= margin
            && self.depth_of(v) <= self.radius - margin
            && !self.is_clipped_layer(self.layer_of(v))
    }

    pub fn interior_vertices(&self, margin: usize) -> Vec<usize> {
        (0..self.vertex_count()).filter(|&v| self.is_interior(v, margin)).collect()
    }

    /// Tree neighbors cut off by the radius.
    pub fn in_layer_ghosts(&self, v: usize) -> usize {
        self.ball.missing(self.coord_of(v))
    }

    /// Vertical neighbors cut off by the layer window.
    pub fn vertical_ghosts(&self, v: usize) -> usize {
        let l = self.layer_of(v);
        usize::from(self.clipped_below[l]) + usize::from(self.clipped_above[l])
    }

    pub fn ghosts(&self, v: usize) -> usize {
        self.in_layer_ghosts(v) + self.vertical_ghosts(v)
    }

    /// Write the edge list as `u v` rows under a `# kind K width radius` header.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# {} {} {} {}", self.kind, self.k, self.width, self.radius)?;
        for u in 0..self.vertex_count() {
            for &v in self.neighbors(u) {
                if u < v {
                    writeln!(out, "{u} {v}")?;
                }
            }
        }
        Ok(())
    }

    /// Number of self-avoiding paths with `n` edges starting at `origin`,
    /// counted by exhaustive depth-first search.
    pub fn self_avoiding_path_count(&self, origin: usize, n: usize) -> Result<u64> {
        if n > SAW_DEPTH_GUARD {
            return Err(Error::DepthGuardExceeded { requested: n, limit: SAW_DEPTH_GUARD });
        }
        let mut on_path = vec![false; self.vertex_count()];
        on_path[origin] = true;
        Ok(self.saw_from(origin, n, &mut on_path))
    }

    fn saw_from(&self, v: usize, remaining: usize, on_path: &mut [bool]) -> u64 {
        if remaining == 0 {
            return 1;
        }
        let mut total = 0;
        for &w in self.neighbors(v) {
            if !on_path[w] {
                on_path[w] = true;
                total += self.saw_from(w, remaining - 1, on_path);
                on_path[w] = false;
            }
        }
        total
    }
}

/// Longest path length accepted by [`Topology::self_avoiding_path_count`].
pub const SAW_DEPTH_GUARD: usize = 12;

/// A connected piece of a single tree left after deleting one or two
/// neighbors of its anchor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchRegion {
    pub anchor: usize,
    pub excluded: Vec<usize>,
    /// Sorted vertex ids.
    pub members: Vec<usize>,
    /// True when the region reaches the truncation radius, so it is only a
    /// finite piece of the infinite branch.
    pub clipped: bool,
}

impl BranchRegion {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.members.binary_search(&v).is_ok()
    }
}

/// The component of `x` in the tree after deleting `exclusions`.
pub fn branch_region(topology: &Topology, x: usize, exclusions: &[usize]) -> Result<BranchRegion> {
    if topology.kind() != TopologyKind::Tree {
        return Err(Error::InvalidParameter(
            "branch regions are defined on a single tree".into(),
        ));
    }
    if exclusions.is_empty() || exclusions.len() > 2 {
        return Err(Error::InvalidParameter(format!(
            "expected one or two exclusions, got {}",
            exclusions.len()
        )));
    }
    for &e in exclusions {
        if !topology.neighbors(x).contains(&e) {
            return Err(Error::ExclusionNotNeighbor { vertex: x, exclusion: e });
        }
    }
    let mut seen = vec![false; topology.vertex_count()];
    for &e in exclusions {
        seen[e] = true;
    }
    seen[x] = true;
    let mut members = vec![x];
    let mut stack = vec![x];
    let mut clipped = false;
    while let Some(u) = stack.pop() {
        clipped |= topology.depth_of(u) == topology.radius();
        for &w in topology.neighbors(u) {
            if !seen[w] {
                seen[w] = true;
                members.push(w);
                stack.push(w);
            }
        }
    }
    members.sort_unstable();
    Ok(BranchRegion { anchor: x, excluded: exclusions.to_vec(), members, clipped })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_sizes() {
        let t = Topology::build(TopologyKind::Tree, 3, 1, 2).unwrap();
        assert_eq!(t.vertex_count(), 10);
        let t = Topology::build(TopologyKind::Tree, 3, 1, 0).unwrap();
        assert_eq!(t.vertex_count(), 1);
        assert_eq!(t.edge_count(), 0);
    }

    #[test]
    fn free_stack_root_degree() {
        let t = Topology::build(TopologyKind::StackFreeFinite, 3, 2, 2).unwrap();
        assert_eq!(t.vertex_count(), 20);
        assert_eq!(t.degree(t.root(0)), 4);
        assert_eq!(t.neighbors(0), &[1, 2, 3, 10]);
    }

    #[test]
    fn parameter_errors() {
        assert!(Topology::build(TopologyKind::Tree, 2, 1, 2).is_err());
        assert!(Topology::build(TopologyKind::StackFreeFinite, 3, 0, 2).is_err());
        assert!(Topology::build(TopologyKind::StackPeriodicFinite, 3, 1, 2).is_err());
    }

    #[test]
    fn periodic_width_two_collapses_double_edge() {
        let t = Topology::build(TopologyKind::StackPeriodicFinite, 4, 2, 1).unwrap();
        assert_eq!(t.degree(t.root(0)), 5);
        assert_eq!(t.max_degree(), 5);
    }

    #[test]
    fn periodic_fiber_is_cycle() {
        let t = Topology::build(TopologyKind::StackPeriodicFinite, 3, 4, 1).unwrap();
        for layer in 0..4 {
            let v = t.root(layer);
            let vertical: Vec<_> =
                t.neighbors(v).iter().filter(|&&w| t.coord_of(w) == 0).copied().collect();
            assert_eq!(vertical.len(), 2);
        }
    }

    #[test]
    fn boundary_and_interior_flags() {
        let t = Topology::build(TopologyKind::StackInfinite, 3, 3, 3).unwrap();
        assert!(t.is_boundary(t.root(0)));
        assert!(!t.is_boundary(t.root(1)));
        assert!(t.is_interior(t.root(1), 2));
        assert!(!t.is_interior(t.root(0), 2));
        assert_eq!(t.vertical_ghosts(t.root(0)), 1);
        assert_eq!(t.ghosts(t.root(1)), 0);
        let leaf = t.vertex(1, t.ball_size() - 1);
        assert!(t.is_boundary(leaf));
        assert_eq!(t.in_layer_ghosts(leaf), 2);
    }

    #[test]
    fn branch_region_examples() {
        let t = Topology::build(TopologyKind::Tree, 3, 1, 2).unwrap();
        let r = branch_region(&t, 0, &[1]).unwrap();
        // root, children 2 and 3, and their four children
        assert_eq!(r.len(), 7);
        assert!(r.clipped);
        let r = branch_region(&t, 0, &[1, 2]).unwrap();
        assert_eq!(r.members, vec![0, 3, 8, 9]);

        let single = Topology::build(TopologyKind::Tree, 3, 1, 0).unwrap();
        assert!(matches!(
            branch_region(&single, 0, &[1]),
            Err(Error::ExclusionNotNeighbor { .. })
        ));
        assert!(matches!(branch_region(&t, 4, &[0]), Err(Error::ExclusionNotNeighbor { .. })));
    }

    #[test]
    fn saw_small_cases() {
        let t = Topology::build(TopologyKind::StackInfinite, 3, 5, 3).unwrap();
        let o = t.root(2);
        assert_eq!(t.self_avoiding_path_count(o, 0).unwrap(), 1);
        assert_eq!(t.self_avoiding_path_count(o, 1).unwrap(), 5);
        assert!(t.self_avoiding_path_count(o, 13).is_err());
    }

    #[test]
    fn ball_path() {
        let b = Ball::new(3, 3);
        assert_eq!(b.path(4, 4), vec![4]);
        let p = b.path(4, 6);
        assert_eq!(p.first(), Some(&4));
        assert_eq!(p.last(), Some(&6));
        assert_eq!(p.len(), 5);
    }

    #[test]
    fn edge_list_header() {
        let t = Topology::build(TopologyKind::Tree, 3, 1, 1).unwrap();
        let mut buf = Vec::new();
        t.write_edge_list(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "# tree 3 1 1\n0 1\n0 2\n0 3\n");
    }
}
