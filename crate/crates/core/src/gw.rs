//! Branching-process quantities behind the stable-core estimates.
//!
//! `τ(θ)` is the probability that a vertex, seen from its parent, is the root
//! of an all-`+1` subtree in which the root and every descendant keep at least
//! `K - 2` of their `K - 1` children. It is the largest fixed point of
//! `g = θ · P(Bin(K - 1, g) >= K - 2)`. From it:
//!
//! * `τ̃ = θ τ^{K-2}` (a root with only `K - 2` available branches, all needed),
//! * leaf event probability `θ τ^{K-1}`,
//! * pair event probability `τ̃²`,
//! * `λ* = min{(1 - leaf)^{ε₁}, (1 - pair)^{ε₂/2}}`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::stable_core::prune_ball;
use crate::dynamics::SpinConfiguration;
use crate::topology::{branch_region, Topology, TopologyKind};

const FIXED_POINT_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 10_000_000;

/// Neumaier-compensated sum.
fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

fn binomial_coefficient(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `P(Bin(n, p) >= k)` by direct summation.
pub fn binomial_tail(n: u64, p: f64, k: u64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let q = 1.0 - p;
    compensated_sum((k..=n).map(|j| binomial_coefficient(n, j) * p.powi(j as i32) * q.powi((n - j) as i32)))
}

fn check_inputs(k: usize, theta: f64) -> Result<()> {
    if k < 3 {
        return Err(Error::InvalidParameter(format!("K = {k} must be at least 3")));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidParameter(format!("theta = {theta} outside [0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Always true: the iteration starts at 1 and descends to the largest root.
    pub largest_root: bool,
    pub k: usize,
    pub theta: f64,
}

fn tau_map(k: usize, theta: f64, g: f64) -> f64 {
    theta * binomial_tail((k - 1) as u64, g, (k - 2) as u64)
}

/// Largest fixed point of `g ↦ θ · P(Bin(K - 1, g) >= K - 2)`.
pub fn tau(k: usize, theta: f64) -> Result<FixedPointResult> {
    check_inputs(k, theta)?;
    let mut g = 1.0;
    let mut iterations = 0;
    loop {
        let next = tau_map(k, theta, g);
        iterations += 1;
        let step = g - next;
        g = next;
        if step.abs() <= 1e-15 * g || g == 0.0 || iterations >= MAX_ITERATIONS {
            break;
        }
    }
    let residual = (tau_map(k, theta, g) - g).abs();
    debug_assert!(residual <= FIXED_POINT_TOL, "residual {residual} at K={k}, theta={theta}");
    Ok(FixedPointResult { value: g, iterations, residual, largest_root: true, k, theta })
}

/// `θ τ^{K-2}`.
pub fn tau_tilde(k: usize, theta: f64) -> Result<FixedPointResult> {
    let t = tau(k, theta)?;
    Ok(FixedPointResult { value: theta * t.value.powi(k as i32 - 2), ..t })
}

/// Probability of the leaf event: `θ τ^{K-1}`.
pub fn mu_tree_plus_leaf(k: usize, theta: f64) -> Result<f64> {
    Ok(theta * tau(k, theta)?.value.powi(k as i32 - 1))
}

/// Probability of the pair event: `τ̃²`.
pub fn mu_tree_plus_pair(k: usize, theta: f64) -> Result<f64> {
    Ok(tau_tilde(k, theta)?.value.powi(2))
}

/// `ε₁ = 1 / (K (K - 1))`.
pub fn epsilon1(k: usize) -> f64 {
    1.0 / (k * (k - 1)) as f64
}

/// `ε₂ = (K² - 3K + 4) / (2K (K - 1))`.
pub fn epsilon2(k: usize) -> f64 {
    (k * k - 3 * k + 4) as f64 / (2 * k * (k - 1)) as f64
}

pub fn lambda_star(k: usize, theta: f64) -> Result<f64> {
    let leaf = (1.0 - mu_tree_plus_leaf(k, theta)?).powf(epsilon1(k));
    let pair = (1.0 - mu_tree_plus_pair(k, theta)?).powf(epsilon2(k) / 2.0);
    Ok(leaf.min(pair))
}

/// A θ with `λ*(K, θ) < 1 / (K + 1)` such that `θ - grid_step` fails the
/// condition. Relies on `λ*` being nonincreasing in θ.
pub fn theta_star_bound(k: usize, grid_step: f64) -> Result<f64> {
    if !(grid_step > 0.0 && grid_step < 1.0) {
        return Err(Error::InvalidParameter(format!("grid step {grid_step} outside (0, 1)")));
    }
    let target = 1.0 / (k + 1) as f64;
    let ok = |theta: f64| lambda_star(k, theta).map(|l| l < target);
    let mut delta = grid_step;
    while !ok(1.0 - delta)? {
        delta /= 10.0;
        if delta < 1e-15 {
            return Err(Error::ThresholdNotFound(lambda_star(k, 1.0 - 1e-9)?));
        }
    }
    let (mut lo, mut hi) = (0.0, 1.0 - delta);
    while hi - lo > grid_step {
        let mid = 0.5 * (lo + hi);
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `(K + 2) Σ_{N >= 0} (K + 1)^{N-1} λ^N`, or `None` when the series diverges.
pub fn droplet_series_bound(k: usize, lambda: f64) -> Option<f64> {
    let r = (k + 1) as f64 * lambda;
    (r < 1.0).then(|| (k + 2) as f64 * (1.0 / (k + 1) as f64 + lambda / (1.0 - r)))
}

/// Smallest fixed point of `s ↦ ((1 - θ) + θ s)^{K-1}`.
pub fn gw_extinction(k: usize, theta: f64) -> Result<f64> {
    check_inputs(k, theta)?;
    if theta * (k - 1) as f64 <= 1.0 {
        return Ok(1.0);
    }
    let f = |s: f64| ((1.0 - theta) + theta * s).powi(k as i32 - 1);
    let mut s = 0.0;
    for _ in 0..MAX_ITERATIONS {
        let next = f(s);
        if (next - s).abs() <= 1e-15 {
            s = next;
            break;
        }
        s = next;
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwTrace {
    /// `Z_0, Z_1, ...`; stops early after the first zero.
    pub generations: Vec<u64>,
    pub k: usize,
    pub theta: f64,
    pub extinct: bool,
}

/// Galton-Watson process with `Z_0 ~ Bernoulli(θ)` and `Bin(K - 1, θ)`
/// offspring, run for up to `max_generations` generations after `Z_0`.
pub fn simulate_gw(k: usize, theta: f64, max_generations: usize, seed: u64) -> Result<GwTrace> {
    check_inputs(k, theta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng::derive_seed(seed, "gw", &[]));
    let mut z: u64 = u64::from(rng.random::<f64>() < theta);
    let mut generations = vec![z];
    for _ in 0..max_generations {
        if z == 0 {
            break;
        }
        let trials = z.saturating_mul((k - 1) as u64);
        z = Binomial::new(trials, theta).map_err(|e| Error::InvalidParameter(e.to_string()))?.sample(&mut rng);
        generations.push(z);
    }
    Ok(GwTrace { extinct: z == 0, generations, k, theta })
}

/// The two rooted events whose probabilities enter `λ*`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeEvent {
    /// A vertex `v` with one neighbor `v'` removed: `v` lies in the
    /// `(K - 1)`-core of the branch region `A_{v'}[v]`.
    Leaf,
    /// Adjacent `v, w` with outer neighbors `v', w'` removed: both lie in the
    /// core of `A_{v',w}[v] ∪ A_{v,w'}[w]`.
    Pair,
}

impl std::str::FromStr for TreeEvent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "leaf" => Ok(TreeEvent::Leaf),
            "pair" => Ok(TreeEvent::Pair),
            other => Err(Error::InvalidParameter(format!("unknown event {other:?}"))),
        }
    }
}

/// Exact probability of the event on a depth-`depth` truncation with
/// wildcard leaves: `p_0 = θ`, `p_h = θ · P(Bin(K - 1, p_{h-1}) >= K - 2)`.
pub fn truncated_event_probability(k: usize, event: TreeEvent, theta: f64, depth: usize) -> Result<f64> {
    check_inputs(k, theta)?;
    if depth == 0 {
        return Ok(theta.powi(if event == TreeEvent::Leaf { 1 } else { 2 }));
    }
    let mut p = theta;
    for _ in 1..depth {
        p = tau_map(k, theta, p);
    }
    Ok(match event {
        TreeEvent::Leaf => theta * p.powi(k as i32 - 1),
        TreeEvent::Pair => (theta * p.powi(k as i32 - 2)).powi(2),
    })
}

/// Depth-first search of the event with lazily revealed spins. `plus` is
/// asked about each visited vertex once, identified by its path of child
/// indices from the root (the pair event prefixes `0` for `v`, `1` for `w`).
pub fn search_event(k: usize, event: TreeEvent, depth: usize, plus: &mut impl FnMut(&[usize]) -> bool) -> bool {
    search(k, event, [depth, depth], plus)
}

fn branch(k: usize, remaining: usize, path: &mut Vec<usize>, plus: &mut impl FnMut(&[usize]) -> bool) -> bool {
    if !plus(path) {
        return false;
    }
    if remaining == 0 {
        return true;
    }
    let (slots, need) = (k - 1, k - 2);
    let (mut good, mut bad) = (0, 0);
    for i in 0..slots {
        path.push(i);
        let ok = branch(k, remaining - 1, path, plus);
        path.pop();
        if ok {
            good += 1;
            if good >= need {
                return true;
            }
        } else {
            bad += 1;
            if bad > slots - need {
                return false;
            }
        }
    }
    false
}

// a root with `slots` children, all of which must succeed
fn rooted(k: usize, slots: usize, depth: usize, path: &mut Vec<usize>, plus: &mut impl FnMut(&[usize]) -> bool) -> bool {
    if !plus(path) {
        return false;
    }
    if depth == 0 {
        return true;
    }
    (0..slots).all(|i| {
        path.push(i);
        let ok = branch(k, depth - 1, path, plus);
        path.pop();
        ok
    })
}

/// As [`search_event`], with separate depths below `v` and `w` for the pair
/// event (the leaf event uses the first).
pub(crate) fn search(k: usize, event: TreeEvent, depths: [usize; 2], plus: &mut impl FnMut(&[usize]) -> bool) -> bool {
    let mut path = Vec::with_capacity(depths[0].max(depths[1]) + 2);
    match event {
        TreeEvent::Leaf => rooted(k, k - 1, depths[0], &mut path, plus),
        TreeEvent::Pair => {
            path.push(0);
            if !rooted(k, k - 2, depths[0], &mut path, plus) {
                return false;
            }
            path.clear();
            path.push(1);
            rooted(k, k - 2, depths[1], &mut path, plus)
        }
    }
}

/// Evaluate the event on a materialized tree configuration by pruning the
/// witness region with wildcard credit at the radius. For the leaf event the
/// anchor is the root and `v'` its child `0`; for the pair event `v` is the
/// root, `w` its child `0` and the outer neighbors are the first remaining
/// children of each, so the region below `w` is one level shallower.
pub fn event_indicator(topology: &Topology, configuration: &SpinConfiguration, event: TreeEvent) -> Result<bool> {
    if topology.kind() != TopologyKind::Tree || topology.radius() == 0 {
        return Err(Error::InvalidParameter("events live on a tree of radius at least 1".into()));
    }
    let ball = topology.ball();
    let root = 0;
    let c0 = ball.children(root)[0];
    let mut region = vec![false; ball.len()];
    match event {
        TreeEvent::Leaf => {
            for &m in &branch_region(topology, root, &[c0])?.members {
                region[m] = true;
            }
        }
        TreeEvent::Pair => {
            let v_out = ball.children(root)[1];
            let w_out = *ball.children(c0).first().ok_or_else(|| Error::InvalidParameter("radius too small".into()))?;
            for &m in &branch_region(topology, root, &[v_out, c0])?.members {
                region[m] = true;
            }
            for &m in &branch_region(topology, c0, &[root, w_out])?.members {
                region[m] = true;
            }
            region[root] = true;
            region[c0] = true;
        }
    }
    let mut alive: Vec<bool> = (0..ball.len()).map(|c| region[c] && configuration.is_plus(c)).collect();
    prune_ball(ball, &mut alive, topology.k() - 1, |c| ball.missing(c));
    Ok(match event {
        TreeEvent::Leaf => alive[root],
        TreeEvent::Pair => alive[root] && alive[c0],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
    pub successes: usize,
}

const MC_SHARDS: usize = 64;

/// Monte Carlo frequency of `event` on a depth-truncated tree with wildcard
/// leaves. Shards use fixed seeds, so the result does not depend on the
/// thread count.
pub fn mc_estimate_event(k: usize, event: TreeEvent, theta: f64, depth: usize, samples: usize, seed: u64) -> Result<McEstimate> {
    check_inputs(k, theta)?;
    if depth < 3 {
        return Err(Error::InvalidParameter(format!("depth {depth} must be at least 3")));
    }
    if samples < 1000 {
        return Err(Error::InvalidParameter(format!("{samples} samples; at least 1000 required")));
    }
    let successes: usize = (0..MC_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let count = samples / MC_SHARDS + usize::from(shard < samples % MC_SHARDS);
            let mut rng = ChaCha8Rng::seed_from_u64(rng::derive_seed(seed, "event", &[shard as u64]));
            let mut plus = |_: &[usize]| rng.random::<f64>() < theta;
            (0..count).filter(|_| search_event(k, event, depth, &mut plus)).count()
        })
        .sum();
    let p = successes as f64 / samples as f64;
    Ok(McEstimate { estimate: p, stderr: (p * (1.0 - p) / samples as f64).sqrt(), samples, successes })
}
