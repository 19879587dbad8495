//! Zero-temperature majority dynamics.
//!
//! The asynchronous process gives every vertex an independent rate-1 Poisson
//! clock; a ring re-evaluates the vertex's spin from its neighbors. The
//! synchronous variant updates all vertices at integer times from the previous
//! configuration.
//!
//! Randomness is split by purpose: initial spins, per-vertex clocks (one ChaCha
//! stream id per vertex) and tie coins each come from their own stream derived
//! from the run seed, so the clock sequence of a vertex does not depend on what
//! its neighbors do. A coin is drawn only when a ring lands on a tie.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::cmp::Reverse;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::topology::Topology;

/// A spin value: `+1`/`-1` in binary mode, a color `1..=q` in multicolor mode.
pub type Spin = i8;

pub const PLUS: Spin = 1;
pub const MINUS: Spin = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alphabet {
    Binary,
    Colors(u8),
}

impl Alphabet {
    fn admits(self, s: Spin) -> bool {
        match self {
            Alphabet::Binary => s == PLUS || s == MINUS,
            Alphabet::Colors(q) => s >= 1 && (s as i32) <= i32::from(q),
        }
    }
}

/// Per-vertex spins at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinConfiguration {
    spins: Vec<Spin>,
    time: f64,
    alphabet: Alphabet,
}

impl SpinConfiguration {
    pub fn uniform(n: usize, spin: Spin) -> SpinConfiguration {
        SpinConfiguration { spins: vec![spin; n], time: 0.0, alphabet: Alphabet::Binary }
    }

    pub fn from_spins(spins: Vec<Spin>, alphabet: Alphabet) -> Result<SpinConfiguration> {
        if let Some(bad) = spins.iter().find(|&&s| !alphabet.admits(s)) {
            return Err(Error::InvalidParameter(format!("spin {bad} outside {alphabet:?}")));
        }
        Ok(SpinConfiguration { spins, time: 0.0, alphabet })
    }

    /// I.i.d. Bernoulli(θ) spins. Vertex `v` is `+1` iff its uniform draw from
    /// the initial-spin stream is below θ, so configurations for different θ
    /// and the same seed are monotonically coupled.
    pub fn sample(topology: &Topology, theta: f64, seed: u64) -> Result<SpinConfiguration> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidParameter(format!("theta = {theta} outside [0, 1]")));
        }
        let mut rng = rng::stream(seed, rng::INITIAL);
        let spins = (0..topology.vertex_count())
            .map(|_| if rng.random::<f64>() < theta { PLUS } else { MINUS })
            .collect();
        Ok(SpinConfiguration { spins, time: 0.0, alphabet: Alphabet::Binary })
    }

    /// I.i.d. colors with probabilities `weights[i]` for color `i + 1`.
    pub fn sample_colors(topology: &Topology, weights: &[f64], seed: u64) -> Result<SpinConfiguration> {
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 || weights.iter().any(|&w| w < 0.0) {
            return Err(Error::WeightSum(total));
        }
        if weights.len() < 2 || weights.len() > i8::MAX as usize {
            return Err(Error::InvalidParameter(format!("{} colors", weights.len())));
        }
        let mut rng = rng::stream(seed, rng::INITIAL);
        let spins = (0..topology.vertex_count())
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        return (i + 1) as Spin;
                    }
                }
                weights.len() as Spin
            })
            .collect();
        Ok(SpinConfiguration { spins, time: 0.0, alphabet: Alphabet::Colors(weights.len() as u8) })
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[Spin] {
        &self.spins
    }

    pub fn get(&self, v: usize) -> Spin {
        self.spins[v]
    }

    pub fn set(&mut self, v: usize, s: Spin) {
        self.spins[v] = s;
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    /// `+1` in binary mode, color 1 in multicolor mode.
    pub fn is_plus(&self, v: usize) -> bool {
        self.spins[v] == PLUS
    }

    pub fn plus_fraction(&self, vertices: &[usize]) -> f64 {
        if vertices.is_empty() {
            return 1.0;
        }
        vertices.iter().filter(|&&v| self.is_plus(v)).count() as f64 / vertices.len() as f64
    }

    /// Binary view: `favored` maps to `+1`, everything else to `-1`.
    pub fn binary_reduction(&self, favored: Spin) -> SpinConfiguration {
        SpinConfiguration {
            spins: self.spins.iter().map(|&s| if s == favored { PLUS } else { MINUS }).collect(),
            time: self.time,
            alphabet: Alphabet::Binary,
        }
    }

    /// One text row per layer, spins separated by single spaces.
    pub fn write_layers<W: Write>(&self, topology: &Topology, mut out: W) -> std::io::Result<()> {
        for layer in 0..topology.layers() {
            let row: Vec<String> = (0..topology.ball_size())
                .map(|c| match self.spins[topology.vertex(layer, c)] {
                    s if s > 0 && self.alphabet == Alphabet::Binary => "+1".to_string(),
                    s => s.to_string(),
                })
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleMode {
    #[default]
    Majority,
    Threshold,
    Multicolor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieAction {
    #[default]
    Coin,
    Hold,
}

/// What a threshold-rule vertex does when fewer than `M0` neighbors are `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    /// Plain majority with the configured tie action.
    #[default]
    Majority,
    Hold,
    Minus,
}

/// Update rule parameters. Fields not used by `mode` are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpdateRule {
    pub mode: RuleMode,
    /// Probability that a tie resolves to `+1` when `tie_action` is `Coin`.
    pub tie_bias: f64,
    pub tie_action: TieAction,
    /// `M0`: number of `+1` neighbors that forces `+1` in threshold mode.
    pub threshold: usize,
    pub fallback: Fallback,
    /// `q` in multicolor mode.
    pub colors: u8,
    pub majority_color: Spin,
}

impl Default for UpdateRule {
    fn default() -> Self {
        UpdateRule {
            mode: RuleMode::Majority,
            tie_bias: 0.5,
            tie_action: TieAction::Coin,
            threshold: 0,
            fallback: Fallback::Majority,
            colors: 2,
            majority_color: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Decision {
    Plus,
    Minus,
    Tie,
    Keep,
}

impl UpdateRule {
    pub fn majority() -> UpdateRule {
        UpdateRule::default()
    }

    pub fn hold_ties() -> UpdateRule {
        UpdateRule { tie_action: TieAction::Hold, ..UpdateRule::default() }
    }

    pub fn biased(p: f64) -> UpdateRule {
        UpdateRule { tie_bias: p, ..UpdateRule::default() }
    }

    pub fn threshold(m0: usize, fallback: Fallback) -> UpdateRule {
        UpdateRule { mode: RuleMode::Threshold, threshold: m0, fallback, ..UpdateRule::default() }
    }

    pub fn multicolor(colors: u8, majority_color: Spin) -> UpdateRule {
        UpdateRule { mode: RuleMode::Multicolor, colors, majority_color, ..UpdateRule::default() }
    }

    /// The spin that plays the role of `+1`.
    pub fn favored(&self) -> Spin {
        match self.mode {
            RuleMode::Multicolor => self.majority_color,
            _ => PLUS,
        }
    }

    pub fn alphabet(&self) -> Alphabet {
        match self.mode {
            RuleMode::Multicolor => Alphabet::Colors(self.colors),
            _ => Alphabet::Binary,
        }
    }

    /// Check the rule against `n0`, the largest number of neighbors a vertex
    /// can see.
    pub fn validate(&self, n0: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tie_bias) {
            return Err(Error::InvalidRule(format!("tie bias {} outside [0, 1]", self.tie_bias)));
        }
        match self.mode {
            RuleMode::Majority => Ok(()),
            RuleMode::Threshold if 2 * self.threshold > n0 => Ok(()),
            RuleMode::Threshold => Err(Error::InvalidRule(format!(
                "threshold M0 = {} must exceed N0 / 2 = {}",
                self.threshold,
                n0 as f64 / 2.0
            ))),
            RuleMode::Multicolor => {
                if self.colors < 2 || self.majority_color < 1 || self.majority_color as u8 > self.colors {
                    Err(Error::InvalidRule(format!(
                        "majority color {} with {} colors",
                        self.majority_color, self.colors
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn majority_decision(&self, plus: usize, total: usize) -> Decision {
        match (2 * plus).cmp(&total) {
            Ordering::Greater => Decision::Plus,
            Ordering::Less => Decision::Minus,
            Ordering::Equal => match self.tie_action {
                TieAction::Coin => Decision::Tie,
                TieAction::Hold => Decision::Keep,
            },
        }
    }

    fn decide(&self, plus: usize, total: usize) -> Decision {
        match self.mode {
            RuleMode::Majority | RuleMode::Multicolor => self.majority_decision(plus, total),
            RuleMode::Threshold if plus >= self.threshold => Decision::Plus,
            RuleMode::Threshold => match self.fallback {
                Fallback::Majority => self.majority_decision(plus, total),
                Fallback::Hold => Decision::Keep,
                Fallback::Minus => Decision::Minus,
            },
        }
    }

    /// Spin chosen by the "minus" side of the rule.
    fn minus_spin(&self, own: Spin, neighbors: &[Spin]) -> Spin {
        if self.mode != RuleMode::Multicolor {
            return MINUS;
        }
        if own != self.majority_color {
            return own;
        }
        let mut counts = vec![0usize; usize::from(self.colors) + 1];
        for &s in neighbors {
            if s != self.majority_color && s >= 1 {
                counts[s as usize] += 1;
            }
        }
        let mut best: Option<(usize, Spin)> = None;
        for c in 1..=self.colors as Spin {
            if c == self.majority_color {
                continue;
            }
            let n = counts[c as usize];
            if best.is_none_or(|(bn, _)| n > bn) {
                best = Some((n, c));
            }
        }
        best.map(|(_, c)| c).unwrap_or(own)
    }

    fn resolve(&self, decision: Decision, own: Spin, neighbors: &[Spin], coin: impl FnOnce() -> f64) -> Spin {
        match decision {
            Decision::Plus => self.favored(),
            Decision::Minus => self.minus_spin(own, neighbors),
            Decision::Keep => own,
            Decision::Tie => {
                if coin() < self.tie_bias {
                    self.favored()
                } else {
                    self.minus_spin(own, neighbors)
                }
            }
        }
    }

    /// New spin of a vertex with spin `own` whose neighbors hold
    /// `neighbor_spins`; `coin_draw` in `[0, 1)` settles coin ties.
    pub fn evaluate(&self, own: Spin, neighbor_spins: &[Spin], coin_draw: f64) -> Spin {
        let favored = self.favored();
        let plus = neighbor_spins.iter().filter(|&&s| s == favored).count();
        let d = self.decide(plus, neighbor_spins.len());
        self.resolve(d, own, neighbor_spins, || coin_draw)
    }

    /// Whether some outcome of an update differs from `own`.
    fn can_change(&self, own: Spin, neighbors: &[Spin], plus: usize, total: usize) -> bool {
        match self.decide(plus, total) {
            Decision::Plus => own != self.favored(),
            Decision::Minus => self.minus_spin(own, neighbors) != own,
            Decision::Keep => false,
            Decision::Tie => {
                (self.tie_bias > 0.0 && own != self.favored())
                    || (self.tie_bias < 1.0 && self.minus_spin(own, neighbors) != own)
            }
        }
    }
}

/// New spin under `rule`.
pub fn evaluate_update(rule: &UpdateRule, own: Spin, neighbor_spins: &[Spin], coin_draw: f64) -> Spin {
    rule.evaluate(own, neighbor_spins, coin_draw)
}

/// How vertices cut off by the truncation are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GhostPolicy {
    /// Boundary vertices only see their actual neighbors.
    #[default]
    Free,
    /// Each missing neighbor is replaced by a ghost frozen at `+1`.
    PlusClamped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsOptions {
    pub ghosts: GhostPolicy,
    /// Abort with [`Error::FlipCapExceeded`] past this many flips.
    pub flip_cap: usize,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        DynamicsOptions { ghosts: GhostPolicy::Free, flip_cap: 50_000_000 }
    }
}

/// Largest number of neighbors (ghosts included) any vertex sees.
pub fn effective_max_degree(topology: &Topology, ghosts: GhostPolicy) -> usize {
    (0..topology.vertex_count())
        .map(|v| {
            topology.degree(v) + if ghosts == GhostPolicy::PlusClamped { topology.ghosts(v) } else { 0 }
        })
        .max()
        .unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipEvent {
    pub time: f64,
    pub vertex: usize,
    pub old: Spin,
    pub new: Spin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsMode {
    Async,
    Sync,
}

/// Result of one realization of the dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsRun {
    pub seed: u64,
    pub mode: DynamicsMode,
    /// Time horizon (async) or step count (sync).
    pub horizon: f64,
    pub flip_log: Vec<FlipEvent>,
    pub final_configuration: SpinConfiguration,
    /// No vertex can change any more.
    pub absorbed: bool,
    pub absorbed_at: Option<f64>,
    pub last_flip: Vec<Option<f64>>,
    pub rings: u64,
    /// The spin playing the role of `+1` under the rule that produced the run.
    pub favored: Spin,
}

impl DynamicsRun {
    /// Time of the last flip among `vertices`, if any flipped.
    pub fn last_flip_among(&self, vertices: &[usize]) -> Option<f64> {
        vertices.iter().filter_map(|&v| self.last_flip[v]).fold(None, |acc, t| Some(acc.map_or(t, |a: f64| a.max(t))))
    }

    /// `time,vertex,old,new` rows.
    pub fn write_flip_log<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.flip_log {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Neighborhood<'a> {
    topology: &'a Topology,
    rule: &'a UpdateRule,
    ghosts: GhostPolicy,
    buf: Vec<Spin>,
}

impl<'a> Neighborhood<'a> {
    fn new(topology: &'a Topology, rule: &'a UpdateRule, ghosts: GhostPolicy) -> Self {
        Neighborhood { topology, rule, ghosts, buf: Vec::with_capacity(16) }
    }

    /// Fill the buffer with the neighbor spins of `v` (ghosts included) and
    /// return the number equal to the favored spin.
    fn load(&mut self, spins: &[Spin], v: usize) -> usize {
        let favored = self.rule.favored();
        self.buf.clear();
        self.buf.extend(self.topology.neighbors(v).iter().map(|&w| spins[w]));
        if self.ghosts == GhostPolicy::PlusClamped {
            for _ in 0..self.topology.ghosts(v) {
                self.buf.push(favored);
            }
        }
        self.buf.iter().filter(|&&s| s == favored).count()
    }

    fn active(&mut self, spins: &[Spin], v: usize) -> bool {
        let plus = self.load(spins, v);
        self.rule.can_change(spins[v], &self.buf, plus, self.buf.len())
    }

    fn update(&mut self, spins: &[Spin], v: usize, coins: &mut ChaCha8Rng) -> Spin {
        let plus = self.load(spins, v);
        let d = self.rule.decide(plus, self.buf.len());
        self.rule.resolve(d, spins[v], &self.buf, || coins.random::<f64>())
    }
}

/// True iff no vertex can change under `rule`: nobody disagrees with a forced
/// value and nobody sits on a coin tie that could move it.
pub fn is_absorbing(topology: &Topology, configuration: &SpinConfiguration, rule: &UpdateRule, ghosts: GhostPolicy) -> bool {
    let mut hood = Neighborhood::new(topology, rule, ghosts);
    (0..topology.vertex_count()).all(|v| !hood.active(configuration.spins(), v))
}

fn check_inputs(topology: &Topology, initial: &SpinConfiguration, rule: &UpdateRule, ghosts: GhostPolicy) -> Result<()> {
    if initial.len() != topology.vertex_count() {
        return Err(Error::InvalidParameter(format!(
            "configuration has {} spins for {} vertices",
            initial.len(),
            topology.vertex_count()
        )));
    }
    if initial.alphabet() != rule.alphabet() {
        return Err(Error::InvalidRule(format!(
            "rule expects {:?} spins, configuration has {:?}",
            rule.alphabet(),
            initial.alphabet()
        )));
    }
    rule.validate(effective_max_degree(topology, ghosts))
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Ring {
    time: f64,
    vertex: usize,
}

impl Eq for Ring {}

impl Ord for Ring {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.vertex.cmp(&other.vertex))
    }
}

impl PartialOrd for Ring {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact event-driven simulation of the asynchronous dynamics up to
/// `horizon`, stopping early once the configuration is absorbing.
pub fn run_async(
    topology: &Topology,
    initial: &SpinConfiguration,
    rule: &UpdateRule,
    horizon: f64,
    seed: u64,
    options: DynamicsOptions,
) -> Result<DynamicsRun> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("horizon {horizon} must be positive")));
    }
    check_inputs(topology, initial, rule, options.ghosts)?;
    let n = topology.vertex_count();
    let mut spins = initial.spins().to_vec();
    let mut hood = Neighborhood::new(topology, rule, options.ghosts);

    let mut active = vec![false; n];
    let mut active_count = 0usize;
    for v in 0..n {
        if hood.active(&spins, v) {
            active[v] = true;
            active_count += 1;
        }
    }

    let mut run = DynamicsRun {
        seed,
        mode: DynamicsMode::Async,
        horizon,
        flip_log: Vec::new(),
        final_configuration: initial.clone(),
        absorbed: false,
        absorbed_at: None,
        last_flip: vec![None; n],
        rings: 0,
        favored: rule.favored(),
    };
    if active_count == 0 {
        run.absorbed = true;
        run.absorbed_at = Some(0.0);
        return Ok(run);
    }

    let base = ChaCha8Rng::seed_from_u64(rng::derive_seed(seed, rng::CLOCK, &[]));
    let mut clocks: Vec<ChaCha8Rng> = (0..n)
        .map(|v| {
            let mut c = base.clone();
            c.set_stream(v as u64);
            c
        })
        .collect();
    let mut coins = rng::stream(seed, rng::COIN);
    let mut queue: BinaryHeap<Reverse<Ring>> = (0..n)
        .map(|v| {
            let dt: f64 = clocks[v].sample(Exp1);
            Reverse(Ring { time: dt, vertex: v })
        })
        .collect();

    let mut now = 0.0;
    while let Some(Reverse(ring)) = queue.pop() {
        if ring.time > horizon {
            break;
        }
        now = ring.time;
        run.rings += 1;
        let v = ring.vertex;
        if active[v] {
            let new = hood.update(&spins, v, &mut coins);
            if new != spins[v] {
                run.flip_log.push(FlipEvent { time: now, vertex: v, old: spins[v], new });
                if run.flip_log.len() > options.flip_cap {
                    return Err(Error::FlipCapExceeded { cap: options.flip_cap, time: now });
                }
                spins[v] = new;
                run.last_flip[v] = Some(now);
                for &w in std::iter::once(&v).chain(topology.neighbors(v)) {
                    let a = hood.active(&spins, w);
                    if a != active[w] {
                        active[w] = a;
                        if a {
                            active_count += 1;
                        } else {
                            active_count -= 1;
                        }
                    }
                }
                if active_count == 0 {
                    run.absorbed = true;
                    run.absorbed_at = Some(now);
                    break;
                }
            }
        }
        let dt: f64 = clocks[v].sample(Exp1);
        queue.push(Reverse(Ring { time: now + dt, vertex: v }));
    }

    run.final_configuration = SpinConfiguration { spins, time: if run.absorbed { now } else { horizon }, alphabet: initial.alphabet() };
    Ok(run)
}

/// Synchronous dynamics: at each integer time every vertex updates from the
/// previous configuration, with fresh tie coins drawn in vertex order.
pub fn run_sync(
    topology: &Topology,
    initial: &SpinConfiguration,
    rule: &UpdateRule,
    steps: usize,
    seed: u64,
    options: DynamicsOptions,
) -> Result<DynamicsRun> {
    check_inputs(topology, initial, rule, options.ghosts)?;
    let n = topology.vertex_count();
    let mut spins = initial.spins().to_vec();
    let mut next = spins.clone();
    let mut hood = Neighborhood::new(topology, rule, options.ghosts);
    let mut coins = rng::stream(seed, rng::COIN);
    let mut run = DynamicsRun {
        seed,
        mode: DynamicsMode::Sync,
        horizon: steps as f64,
        flip_log: Vec::new(),
        final_configuration: initial.clone(),
        absorbed: false,
        absorbed_at: None,
        last_flip: vec![None; n],
        rings: 0,
        favored: rule.favored(),
    };
    let mut last_step = 0;
    for step in 1..=steps {
        if (0..n).all(|v| !hood.active(&spins, v)) {
            run.absorbed = true;
            run.absorbed_at = Some((step - 1) as f64);
            break;
        }
        let t = step as f64;
        for v in 0..n {
            next[v] = hood.update(&spins, v, &mut coins);
            if next[v] != spins[v] {
                run.flip_log.push(FlipEvent { time: t, vertex: v, old: spins[v], new: next[v] });
                run.last_flip[v] = Some(t);
            }
        }
        run.rings += n as u64;
        if run.flip_log.len() > options.flip_cap {
            return Err(Error::FlipCapExceeded { cap: options.flip_cap, time: t });
        }
        std::mem::swap(&mut spins, &mut next);
        last_step = step;
    }
    if !run.absorbed && (0..n).all(|v| !hood.active(&spins, v)) {
        run.absorbed = true;
        run.absorbed_at = Some(last_step as f64);
    }
    let time = run.absorbed_at.unwrap_or(steps as f64);
    run.final_configuration = SpinConfiguration { spins, time, alphabet: initial.alphabet() };
    Ok(run)
}
