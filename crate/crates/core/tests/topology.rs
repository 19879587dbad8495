use std::collections::{HashSet, VecDeque};

use proptest::prelude::*;
use treefix_core::{branch_region, Topology, TopologyKind};

fn topology_strategy() -> impl Strategy<Value = Topology> {
    (0..5usize, 3..=5usize, 1..=4usize, 0..=3usize).prop_map(|(kind, k, width, radius)| {
        let kind = TopologyKind::ALL[kind];
        let width = if kind == TopologyKind::StackPeriodicFinite { width.max(2) } else { width };
        Topology::build(kind, k, width, radius).unwrap()
    })
}

fn ball_size(k: usize, r: usize) -> usize {
    1 + (0..r).map(|d| k * (k - 1).pow(d as u32)).sum::<usize>()
}

// BFS distances inside one layer
fn distances(t: &Topology, from: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; t.vertex_count()];
    dist[from] = Some(0);
    let mut q = VecDeque::from([from]);
    while let Some(u) = q.pop_front() {
        for w in t.in_layer_neighbors(u) {
            if dist[w].is_none() {
                dist[w] = Some(dist[u].unwrap() + 1);
                q.push_back(w);
            }
        }
    }
    dist
}

// independent enumeration: extend explicit path vectors breadth first
fn saw_oracle(t: &Topology, origin: usize, n: usize) -> u64 {
    let mut paths = vec![vec![origin]];
    for _ in 0..n {
        let mut next = Vec::new();
        for p in &paths {
            for &w in t.neighbors(*p.last().unwrap()) {
                if !p.contains(&w) {
                    let mut q = p.clone();
                    q.push(w);
                    next.push(q);
                }
            }
        }
        paths = next;
    }
    paths.len() as u64
}

proptest! {
    #[test]
    fn handshake_and_symmetry(t in topology_strategy()) {
        let degree_sum: usize = (0..t.vertex_count()).map(|v| t.degree(v)).sum();
        prop_assert_eq!(degree_sum, 2 * t.edge_count());
        for v in 0..t.vertex_count() {
            let ns = t.neighbors(v);
            prop_assert!(!ns.contains(&v));
            prop_assert_eq!(ns.iter().collect::<HashSet<_>>().len(), ns.len());
            for &w in ns {
                prop_assert!(t.neighbors(w).contains(&v));
            }
        }
    }

    #[test]
    fn layers_are_consistent(t in topology_strategy()) {
        prop_assert_eq!(t.ball_size(), ball_size(t.k(), t.radius()));
        prop_assert_eq!(t.vertex_count(), t.ball_size() * t.layers());
        let periodic = t.kind() == TopologyKind::StackPeriodicFinite;
        for v in 0..t.vertex_count() {
            prop_assert_eq!(t.vertex(t.layer_of(v), t.coord_of(v)), v);
            let in_layer: HashSet<usize> = t.in_layer_neighbors(v).collect();
            for &w in t.neighbors(v) {
                if in_layer.contains(&w) {
                    prop_assert_eq!(t.layer_of(w), t.layer_of(v));
                } else {
                    prop_assert_eq!(t.coord_of(w), t.coord_of(v));
                    let (a, b) = (t.layer_of(v), t.layer_of(w));
                    let gap = a.abs_diff(b);
                    prop_assert!(gap == 1 || (periodic && gap == t.layers() - 1));
                }
            }
            // full degree once ghosts are added back
            let full = if t.kind() == TopologyKind::Tree { t.k() } else { t.k() + 2 };
            let missing_vertical = match t.kind() {
                TopologyKind::StackFreeFinite => {
                    usize::from(t.layer_of(v) == 0) + usize::from(t.layer_of(v) + 1 == t.layers())
                }
                TopologyKind::StackSemiInfinite => usize::from(t.layer_of(v) == 0),
                TopologyKind::StackPeriodicFinite if t.layers() == 2 => 1,
                _ => 0,
            };
            if t.radius() > 0 || t.layers() > 1 {
                prop_assert_eq!(t.degree(v) + t.ghosts(v) + missing_vertical, full, "v={}", v);
            }
        }
    }

    #[test]
    fn branch_regions_partition_the_tree(k in 3..=5usize, radius in 1..=4usize, pick in any::<prop::sample::Index>()) {
        let t = Topology::build(TopologyKind::Tree, k, 1, radius).unwrap();
        let x = pick.index(t.vertex_count());
        let mut owner = vec![0usize; t.vertex_count()];
        owner[x] += 1;
        for &y in t.neighbors(x) {
            let region = branch_region(&t, y, &[x]).unwrap();
            for &m in &region.members {
                owner[m] += 1;
            }
            // in a tree, m lies beyond y as seen from x
            let (from_x, from_y) = (distances(&t, x), distances(&t, y));
            for &m in &region.members {
                prop_assert_eq!(from_x[m].unwrap(), from_y[m].unwrap() + 1);
            }
        }
        prop_assert!(owner.iter().all(|&c| c == 1));
    }

    #[test]
    fn saw_count_matches_enumeration(kind in 0..5usize, k in 3..=4usize, n in 0..=4usize) {
        let kind = TopologyKind::ALL[kind];
        let t = Topology::build(kind, k, 3, 3).unwrap();
        let origin = t.vertex(t.layers() / 2, 0);
        prop_assert_eq!(t.self_avoiding_path_count(origin, n).unwrap(), saw_oracle(&t, origin, n));
    }
}

#[test]
fn tree_paths_are_geodesics() {
    // in a tree a self-avoiding path is determined by its endpoint
    let t = Topology::build(TopologyKind::Tree, 4, 1, 5).unwrap();
    let dist = distances(&t, 0);
    for n in 0..=5 {
        let at_distance = dist.iter().filter(|d| **d == Some(n)).count() as u64;
        assert_eq!(t.self_avoiding_path_count(0, n).unwrap(), at_distance);
    }
}

#[test]
fn saw_bound_on_interior_vertices() {
    for k in [3, 4] {
        for kind in [TopologyKind::StackInfinite, TopologyKind::StackPeriodicFinite] {
            let t = Topology::build(kind, k, 5, 4).unwrap();
            let v = t.vertex(2, 0);
            for n in 1..=6 {
                let count = t.self_avoiding_path_count(v, n).unwrap();
                let bound = (k as u64 + 2) * (k as u64 + 1).pow(n as u32 - 1);
                assert!(count <= bound, "K={k} {kind} N={n}: {count} > {bound}");
            }
        }
    }
}

#[test]
fn depth_guard() {
    let t = Topology::build(TopologyKind::Tree, 3, 1, 2).unwrap();
    assert!(t.self_avoiding_path_count(0, 13).is_err());
}
