mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use common::k3_path_oracle;
use treefix_core::*;

fn tree_ball(k: usize, r: usize) -> Topology {
    Topology::build(TopologyKind::Tree, k, 1, r).unwrap()
}

fn binary(spins: Vec<Spin>) -> SpinConfiguration {
    SpinConfiguration::from_spins(spins, Alphabet::Binary).unwrap()
}

// deletes one randomly chosen violator at a time
fn prune_in_random_order(t: &Topology, c: &SpinConfiguration, seed: u64) -> BTreeSet<usize> {
    let ball = t.ball();
    let mut alive: Vec<bool> = (0..t.vertex_count()).map(|v| c.is_plus(v)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut bad: Vec<usize> = (0..t.vertex_count())
            .filter(|&v| alive[v])
            .filter(|&v| t.neighbors(v).iter().filter(|&&w| alive[w]).count() + ball.missing(v) < t.k() - 1)
            .collect();
        if bad.is_empty() {
            break;
        }
        bad.shuffle(&mut rng);
        alive[bad[0]] = false;
    }
    (0..t.vertex_count()).filter(|&v| alive[v]).collect()
}

// union of every vertex subset in which each member has K − 1 members or
// wildcards around it
fn subset_oracle(t: &Topology, c: &SpinConfiguration) -> BTreeSet<usize> {
    let ball = t.ball();
    let plus: Vec<usize> = (0..t.vertex_count()).filter(|&v| c.is_plus(v)).collect();
    assert!(plus.len() <= 20);
    let mut union = 0u64;
    for mask in 1u64..(1 << plus.len()) {
        let inside = |v: usize| plus.iter().position(|&p| p == v).is_some_and(|i| mask >> i & 1 == 1);
        let ok = (0..plus.len()).filter(|i| mask >> i & 1 == 1).all(|i| {
            let v = plus[i];
            t.neighbors(v).iter().filter(|&&w| inside(w)).count() + ball.missing(v) >= t.k() - 1
        });
        if ok {
            union |= mask;
        }
    }
    (0..plus.len()).filter(|i| union >> i & 1 == 1).map(|i| plus[i]).collect()
}

fn members(core: &StableCore) -> BTreeSet<usize> {
    core.members.iter().copied().collect()
}

proptest! {
    #[test]
    fn pruning_is_confluent(k in 3..=5usize, r in 1..=4usize, theta in 0.5..1.0f64, seed in any::<u64>()) {
        let t = tree_ball(k, r);
        let c = SpinConfiguration::sample(&t, theta, seed).unwrap();
        let core = compute_stable_core(&t, &c, StableVariant::SingleLayer, BoundaryMode::Wildcard).unwrap();
        for order in 0..3 {
            prop_assert_eq!(&prune_in_random_order(&t, &c, seed ^ order), &members(&core));
        }
    }

    #[test]
    fn adding_plus_never_shrinks_the_core(
        kind in 0..5usize,
        k in 3..=5usize,
        lo in 0.4..0.9f64,
        gap in 0.0..0.1f64,
        seed in any::<u64>(),
        boundary in prop_oneof![Just(BoundaryMode::Free), Just(BoundaryMode::Wildcard)],
    ) {
        let t = Topology::build(TopologyKind::ALL[kind], k, 3, 3).unwrap();
        let variant = StableVariant::natural(&t);
        // the same uniforms at two levels give pointwise ordered samples
        let small = SpinConfiguration::sample(&t, lo, seed).unwrap();
        let large = SpinConfiguration::sample(&t, lo + gap, seed).unwrap();
        prop_assert!((0..t.vertex_count()).all(|v| !small.is_plus(v) || large.is_plus(v)));
        let a = compute_stable_core(&t, &small, variant, boundary).unwrap();
        let b = compute_stable_core(&t, &large, variant, boundary).unwrap();
        prop_assert!(members(&a).is_subset(&members(&b)));
    }

    #[test]
    fn core_matches_path_oracle_k3(r in 1..=3usize, theta in 0.3..1.0f64, seed in any::<u64>()) {
        let t = tree_ball(3, r);
        let c = SpinConfiguration::sample(&t, theta, seed).unwrap();
        let core = compute_stable_core(&t, &c, StableVariant::SingleLayer, BoundaryMode::Wildcard).unwrap();
        prop_assert_eq!(members(&core), k3_path_oracle(&t, &c));
    }

    #[test]
    fn core_matches_subset_oracle(k in 3..=4usize, theta in 0.3..0.9f64, seed in any::<u64>()) {
        let t = tree_ball(k, 2);
        let c = SpinConfiguration::sample(&t, theta, seed).unwrap();
        prop_assume!((0..t.vertex_count()).filter(|&v| c.is_plus(v)).count() <= 16);
        let core = compute_stable_core(&t, &c, StableVariant::SingleLayer, BoundaryMode::Wildcard).unwrap();
        prop_assert_eq!(members(&core), subset_oracle(&t, &c));
    }

    #[test]
    fn droplets_partition_the_complement(kind in 0..5usize, k in 3..=5usize, theta in 0.5..1.0f64, seed in any::<u64>()) {
        let t = Topology::build(TopologyKind::ALL[kind], k, 2, 3).unwrap();
        let c = SpinConfiguration::sample(&t, theta, seed).unwrap();
        let core = compute_stable_core(&t, &c, StableVariant::natural(&t), BoundaryMode::Wildcard).unwrap();
        let drops = droplet_decomposition(&t, &core);
        let total: usize = drops.iter().map(|d| d.len()).sum();
        prop_assert_eq!(total + core.len(), t.vertex_count());
        let mut owner = vec![usize::MAX; t.vertex_count()];
        for d in &drops {
            for &v in &d.members {
                prop_assert!(!core.contains(v));
                prop_assert_eq!(owner[v], usize::MAX);
                owner[v] = d.id;
            }
        }
        // no edge joins two droplets, and each droplet is connected
        for u in 0..t.vertex_count() {
            for &w in t.neighbors(u) {
                if owner[u] != usize::MAX && owner[w] != usize::MAX {
                    prop_assert_eq!(owner[u], owner[w]);
                }
            }
        }
        for d in &drops {
            let mut seen = BTreeSet::from([d.members[0]]);
            let mut stack = vec![d.members[0]];
            while let Some(u) = stack.pop() {
                for &w in t.neighbors(u) {
                    if owner[w] == d.id && seen.insert(w) {
                        stack.push(w);
                    }
                }
            }
            prop_assert_eq!(seen.len(), d.len());
        }
    }
}

#[test]
fn projection_density_is_theta_squared() {
    let t = Topology::build(TopologyKind::StackFreeFinite, 4, 16, 8).unwrap();
    for theta in [0.8, 0.9] {
        let c = SpinConfiguration::sample(&t, theta, 3).unwrap();
        let p = doubly_open_projection(&t, &c, StableVariant::DoublyOpen).unwrap();
        let v = p.configuration.len() as f64;
        assert!(v >= 1e5);
        let all: Vec<usize> = (0..p.configuration.len()).collect();
        let q = theta * theta;
        let sigma = (q * (1.0 - q) / v).sqrt();
        let got = p.configuration.plus_fraction(&all);
        assert!((got - q).abs() <= 4.0 * sigma, "θ={theta}: {got} vs {q}");
    }
}

#[test]
fn k3_doubly_open_members_hold_three_of_five() {
    let t = Topology::build(TopologyKind::StackPeriodicFinite, 3, 4, 4).unwrap();
    for seed in 0..50 {
        let c = SpinConfiguration::sample(&t, 0.9, seed).unwrap();
        let core = compute_stable_core(&t, &c, StableVariant::DoublyOpen, BoundaryMode::Wildcard).unwrap();
        let report = verify_core_stability(&t, &core, &UpdateRule::majority());
        for m in &report.margins {
            assert_eq!(m.degree, 5);
            assert!(m.guaranteed >= 3, "{m:?}");
            // the guaranteed neighbors really are +1 at time zero
            let plus = t.neighbors(m.vertex).iter().filter(|&&w| c.is_plus(w)).count() + t.ghosts(m.vertex);
            assert!(plus >= m.guaranteed);
        }
        assert!(report.is_stable());
    }
}

#[test]
fn lone_droplet_elimination_time() {
    // one −1 vertex surrounded by core: eliminated at its first ring
    let t = Topology::build(TopologyKind::StackFreeFinite, 5, 2, 3).unwrap();
    let v = t.vertex(0, 0);
    let mut c = SpinConfiguration::uniform(t.vertex_count(), PLUS);
    c.set(v, MINUS);
    let core = compute_stable_core(&t, &c, StableVariant::SingleLayer, BoundaryMode::Wildcard).unwrap();
    let reps = 4000;
    let mut sum = 0.0;
    for seed in 0..reps {
        let mut drops = droplet_decomposition(&t, &core);
        assert_eq!(drops.len(), 1);
        assert_eq!(drops[0].members, vec![v]);
        let options = DynamicsOptions { ghosts: GhostPolicy::PlusClamped, ..DynamicsOptions::default() };
        let run = run_async(&t, &c, &UpdateRule::majority(), 50.0, seed, options).unwrap();
        track_droplet_elimination(&run, &mut drops);
        sum += drops[0].elimination_time.unwrap();
    }
    let mean = sum / reps as f64;
    assert!((mean - 1.0).abs() <= 4.0 / (reps as f64).sqrt(), "{mean}");
}

#[test]
fn hand_built_k3_fixture() {
    // K=3, R=2: root, children 1..3, grandchildren 4..9 (two per child)
    let t = tree_ball(3, 2);
    let mut spins = vec![PLUS; 10];
    // cut child 3 and both grandchildren under child 1
    spins[3] = MINUS;
    spins[4] = MINUS;
    spins[5] = MINUS;
    let c = binary(spins);
    let core = compute_stable_core(&t, &c, StableVariant::SingleLayer, BoundaryMode::Wildcard).unwrap();
    // child 1 keeps only the root and goes; the root is then left with child 2
    // alone and goes too; the path 6-2-7 and the leaves 8, 9 survive
    assert_eq!(core.members, vec![2, 6, 7, 8, 9]);
    assert_eq!(members(&core), k3_path_oracle(&t, &c));
}
