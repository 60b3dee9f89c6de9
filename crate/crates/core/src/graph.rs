//! Synthetic oracle-subgraph traversal tasks.
//!
//! Every instance is a layered "solution lattice" from the initial state to
//! a single answer state, `answer_distance` hops away, decorated with side
//! branches. Side branches are either dead ends (no path to the answer) or
//! detours (a chain that rejoins the lattice one layer further on, so the
//! answer stays reachable but the remaining path gets longer).
//!
//! Rewards are sparse: `+1` on every edge entering the answer, `0`
//! elsewhere. The surrogate score carries the local signal. Its aligned
//! form is the one-step distance improvement `dist(s) - dist(s')` (`-1` for
//! entering a dead end, `0` inside one). The adversarial form additionally
//! plants *traps*: side branches whose entry edge and interior look better
//! than real progress.
//!
//! Action order is shuffled per state, so index-based tie-breaking carries
//! no information about the task.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{ActionId, Environment, EnvironmentBuilder, StateId};
use crate::error::{HorizonError, Result};
use crate::schema::EnvDocument;

/// How surrogate scores relate to true progress.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SurrogateMode {
    /// `û = dist(s) - dist(s')`.
    Aligned,
    /// Aligned plus Gaussian noise with standard deviation `sigma`.
    Noisy { sigma: f64 },
    /// Aligned plus noise, with planted traps: the trap entry edge scores
    /// like progress plus `inflation` before noise, is then lifted into the
    /// top tier of its state, and trap interiors score at least like progress.
    Adversarial {
        #[serde(default = "default_inflation")]
        inflation: f64,
        #[serde(default)]
        sigma: f64,
    },
}

fn default_inflation() -> f64 {
    0.25
}

impl SurrogateMode {
    fn sigma(&self) -> f64 {
        match *self {
            SurrogateMode::Aligned => 0.0,
            SurrogateMode::Noisy { sigma } | SurrogateMode::Adversarial { sigma, .. } => sigma,
        }
    }
}

/// Parameters of one synthetic instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphInstanceSpec {
    pub seed: u64,
    /// Exact number of states. Zero means "as many as the structure needs";
    /// a larger value pads dead-end regions with extra leaves.
    pub num_states: usize,
    /// Inclusive out-degree range of lattice states.
    pub branching: (usize, usize),
    /// Shortest hop count from the initial state to the answer.
    pub answer_distance: usize,
    /// Length of side branches (dead-end depth, detour length).
    pub distractor_depth: usize,
    pub surrogate_mode: SurrogateMode,
    /// Probability that a lattice state past the first carries a trap
    /// (adversarial mode only; the initial state always carries one).
    pub trap_rate_target: f64,
    /// Lattice states per intermediate layer; more than one gives several
    /// shortest solution paths.
    pub layer_width: usize,
    /// Probability that a side branch is a dead end rather than a detour.
    pub dead_end_fraction: f64,
    /// Probability that a trap branch is a dead end rather than a detour.
    pub trap_dead_end_fraction: f64,
    /// Traps past the initial state are only planted at lattice states at
    /// least this many hops from the answer.
    pub trap_min_distance: usize,
    /// `episode_horizon = answer_distance + horizon_slack`.
    pub horizon_slack: usize,
}

impl Default for GraphInstanceSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            num_states: 0,
            branching: (3, 5),
            answer_distance: 3,
            distractor_depth: 2,
            surrogate_mode: SurrogateMode::Adversarial { inflation: default_inflation(), sigma: 0.3 },
            trap_rate_target: 0.6,
            layer_width: 2,
            dead_end_fraction: 0.2,
            trap_dead_end_fraction: 0.8,
            trap_min_distance: 3,
            horizon_slack: 3,
        }
    }
}

impl GraphInstanceSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HorizonError::InvalidParams(m.to_string()));
        if self.answer_distance == 0 {
            return bad("answer_distance must be at least 1");
        }
        if self.branching.0 == 0 || self.branching.0 > self.branching.1 {
            return bad("branching must be a non-empty range of positive out-degrees");
        }
        if self.distractor_depth == 0 {
            return bad("distractor_depth must be at least 1");
        }
        if self.layer_width == 0 {
            return bad("layer_width must be at least 1");
        }
        if [self.trap_rate_target, self.dead_end_fraction, self.trap_dead_end_fraction]
            .iter()
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return bad("trap_rate_target and the dead-end fractions must lie in [0, 1]");
        }
        let sigma = self.surrogate_mode.sigma();
        if !(sigma.is_finite() && sigma >= 0.0) {
            return bad("noise sigma must be finite and non-negative");
        }
        if let SurrogateMode::Adversarial { inflation, .. } = self.surrogate_mode {
            if !(inflation.is_finite() && inflation > 0.0) {
                return bad("inflation must be positive");
            }
        }
        Ok(())
    }

    pub fn episode_horizon(&self) -> usize {
        self.answer_distance + self.horizon_slack
    }
}

/// Shortest hop distances to the answer set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleInfo {
    /// `None` when no answer is reachable.
    pub dist: Vec<Option<u32>>,
}

impl OracleInfo {
    pub fn dist(&self, s: StateId) -> Option<u32> {
        self.dist.get(s.index()).copied().flatten()
    }

    pub fn reachable(&self, s: StateId) -> bool {
        self.dist(s).is_some()
    }
}

/// Exact distances by breadth-first search over reversed edges.
pub fn compute_oracle(env: &Environment) -> OracleInfo {
    let rev = env.reverse_adjacency();
    let mut dist = vec![None; env.num_states()];
    let mut queue = VecDeque::new();
    for a in env.answers() {
        dist[a.index()] = Some(0);
        queue.push_back(a);
    }
    while let Some(s) = queue.pop_front() {
        let d = dist[s.index()].expect("queued states have a distance");
        for &p in &rev[s.index()] {
            // answers are terminal: nothing leaves them
            if env.is_answer(p) {
                continue;
            }
            if dist[p.index()].is_none() {
                dist[p.index()] = Some(d + 1);
                queue.push_back(p);
            }
        }
    }
    OracleInfo { dist }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrapReason {
    Unreachable,
    Lengthened { by: u32 },
}

/// Verdict for one `(state, action)` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapLabel {
    pub state: StateId,
    pub action: ActionId,
    pub is_trap: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<TrapReason>,
}

/// All labels of an environment plus the Trap@1 applicability flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapLabeling {
    pub labels: Vec<TrapLabel>,
    /// No non-trap action at the initial state keeps the answer reachable;
    /// such instances do not count toward Trap@1.
    pub initial_excluded: bool,
}

impl TrapLabeling {
    pub fn traps(&self) -> impl Iterator<Item = &TrapLabel> {
        self.labels.iter().filter(|l| l.is_trap)
    }

    pub fn is_trap(&self, s: StateId, a: ActionId) -> bool {
        self.labels.iter().any(|l| l.is_trap && l.state == s && l.action == a)
    }

    pub fn traps_at(&self, s: StateId) -> usize {
        self.traps().filter(|l| l.state == s).count()
    }
}

/// Label myopic traps.
///
/// `(s, a)` is a trap when its surrogate score is in the top
/// `top_tier_quantile` of the scores at `s` (at least the single best,
/// ties included) and its successor either loses reachability while some
/// alternative keeps it, or is at least `min_lengthening` hops further
/// from the answer than the best alternative successor.
pub fn label_traps(
    env: &Environment,
    oracle: &OracleInfo,
    top_tier_quantile: f64,
    min_lengthening: u32,
) -> TrapLabeling {
    let mut labels = Vec::new();
    for s in 0..env.num_states() {
        let s = StateId(s as u32);
        if env.is_terminal(s) || !oracle.reachable(s) {
            continue;
        }
        let edges = env.actions(s);
        let n = edges.len();
        let tier = ((top_tier_quantile * n as f64).ceil() as usize).clamp(1, n);
        let mut scores: Vec<f64> = edges.iter().map(|e| e.surrogate).collect();
        scores.sort_by(|a, b| b.partial_cmp(a).expect("finite surrogates"));
        let threshold = scores[tier - 1];
        for (i, e) in edges.iter().enumerate() {
            let best_alt =
                edges.iter().enumerate().filter(|&(j, _)| j != i).filter_map(|(_, o)| oracle.dist(o.to)).min();
            let reason = match (oracle.dist(e.to), best_alt) {
                (None, Some(_)) => Some(TrapReason::Unreachable),
                (Some(d), Some(alt)) if d >= alt + min_lengthening.max(1) => {
                    Some(TrapReason::Lengthened { by: d - alt })
                }
                _ => None,
            };
            let is_trap = e.surrogate >= threshold && reason.is_some();
            labels.push(TrapLabel {
                state: s,
                action: ActionId(i as u32),
                is_trap,
                reason: reason.filter(|_| is_trap),
            });
        }
    }
    let s0 = env.initial_state();
    let initial_excluded = !env.actions(s0).iter().enumerate().any(|(i, e)| {
        oracle.reachable(e.to) && !labels.iter().any(|l| l.is_trap && l.state == s0 && l.action.index() == i)
    });
    TrapLabeling { labels, initial_excluded }
}

/// A generated instance with its oracle and trap labels.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphInstance {
    pub env: Environment,
    pub oracle: OracleInfo,
    pub traps: TrapLabeling,
}

impl GraphInstance {
    pub fn to_document(&self) -> EnvDocument {
        let mut doc = EnvDocument::from_env(&self.env);
        doc.traps = Some(self.traps.traps().cloned().collect());
        doc.oracle = Some(self.oracle.dist.clone());
        doc
    }
}

pub const DEFAULT_TOP_TIER_QUANTILE: f64 = 0.25;

#[derive(Clone, Copy, PartialEq)]
enum Role {
    DeadEnd,
    Detour,
}

fn fresh(counter: &mut u32) -> StateId {
    *counter += 1;
    StateId(*counter - 1)
}

struct PendingEdge {
    from: StateId,
    to: StateId,
    reward: f64,
    base: f64,
    role_trap: bool,
    trap_entry: bool,
}

/// Build an instance. Deterministic in `spec.seed`.
pub fn generate_instance(spec: &GraphInstanceSpec) -> Result<(Environment, OracleInfo)> {
    let inst = generate_labeled_instance(spec, DEFAULT_TOP_TIER_QUANTILE)?;
    Ok((inst.env, inst.oracle))
}

/// [`generate_instance`] plus trap labels at the given quantile.
pub fn generate_labeled_instance(spec: &GraphInstanceSpec, top_tier_quantile: f64) -> Result<GraphInstance> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.answer_distance;
    let (adversarial, inflation) = match spec.surrogate_mode {
        SurrogateMode::Adversarial { inflation, .. } => (true, inflation),
        _ => (false, 0.0),
    };

    let mut n_states: u32 = 0;

    // lattice layers; layer 0 is the initial state, layer d the answer
    let mut layers: Vec<Vec<StateId>> = Vec::with_capacity(d + 1);
    layers.push(vec![fresh(&mut n_states)]);
    for _ in 1..d {
        layers.push((0..spec.layer_width).map(|_| fresh(&mut n_states)).collect());
    }
    layers.push(vec![fresh(&mut n_states)]);
    let answer = layers[d][0];

    let mut edges: Vec<PendingEdge> = Vec::new();
    let mut dead_nodes: Vec<StateId> = Vec::new();

    for i in 0..d {
        let next = &layers[i + 1];
        // every state of layer i+1 gets a parent; extra progress edges are random
        let mut progress: Vec<Vec<StateId>> = vec![Vec::new(); layers[i].len()];
        for (j, &t) in next.iter().enumerate() {
            let p = if j < layers[i].len() { j } else { rng.gen_range(0..layers[i].len()) };
            progress[p].push(t);
        }
        for (pi, &s) in layers[i].iter().enumerate() {
            let degree = rng.gen_range(spec.branching.0..=spec.branching.1);
            if progress[pi].is_empty() {
                progress[pi].push(next[rng.gen_range(0..next.len())]);
            }
            // a second progress edge now and then when the layer is wide
            if next.len() > 1 && progress[pi].len() < 2 && degree > 2 && rng.gen_bool(0.5) {
                let extra = *next.iter().find(|t| !progress[pi].contains(t)).expect("wide layer");
                progress[pi].push(extra);
            }
            for &t in &progress[pi] {
                let reward = if t == answer { 1.0 } else { 0.0 };
                edges.push(PendingEdge { from: s, to: t, reward, base: 1.0, role_trap: false, trap_entry: false });
            }
            let far_enough = d - i >= spec.trap_min_distance;
            let wants_trap = adversarial && (i == 0 || (far_enough && rng.gen_bool(spec.trap_rate_target)));
            let mut sides = degree.saturating_sub(progress[pi].len());
            if adversarial && i == 0 {
                sides = sides.max(1);
            }
            let trap_slot = if wants_trap && sides > 0 { Some(rng.gen_range(0..sides)) } else { None };
            for k in 0..sides {
                let trap = trap_slot == Some(k);
                let p_dead = if trap { spec.trap_dead_end_fraction } else { spec.dead_end_fraction };
                let role = if rng.gen_bool(p_dead) { Role::DeadEnd } else { Role::Detour };
                // detours rejoin the lattice one layer on; from the last lattice
                // layer that would be the answer itself, so they become dead ends
                let role = if role == Role::Detour && i + 1 == d { Role::DeadEnd } else { role };
                let entry = fresh(&mut n_states);
                match role {
                    Role::DeadEnd => {
                        let base = if trap { 1.0 + inflation } else { -1.0 };
                        edges.push(PendingEdge {
                            from: s,
                            to: entry,
                            reward: 0.0,
                            base,
                            role_trap: trap,
                            trap_entry: trap,
                        });
                        dead_nodes.push(entry);
                        let mut frontier = vec![entry];
                        for _ in 1..spec.distractor_depth {
                            let mut grown = Vec::new();
                            for &f in &frontier {
                                let kids = rng.gen_range(1..=2);
                                for _ in 0..kids {
                                    let c = fresh(&mut n_states);
                                    edges.push(PendingEdge {
                                        from: f,
                                        to: c,
                                        reward: 0.0,
                                        base: 0.0,
                                        role_trap: trap,
                                        trap_entry: false,
                                    });
                                    dead_nodes.push(c);
                                    grown.push(c);
                                }
                            }
                            frontier = grown;
                        }
                    }
                    Role::Detour => {
                        let m = spec.distractor_depth;
                        edges.push(PendingEdge {
                            from: s,
                            to: entry,
                            reward: 0.0,
                            base: if trap { 1.0 + inflation } else { 1.0 - m as f64 },
                            role_trap: trap,
                            trap_entry: trap,
                        });
                        let mut prev = entry;
                        for _ in 1..m {
                            let c = fresh(&mut n_states);
                            edges.push(PendingEdge {
                                from: prev,
                                to: c,
                                reward: 0.0,
                                base: 1.0,
                                role_trap: trap,
                                trap_entry: false,
                            });
                            prev = c;
                        }
                        let rejoin = next[rng.gen_range(0..next.len())];
                        let reward = if rejoin == answer { 1.0 } else { 0.0 };
                        edges.push(PendingEdge {
                            from: prev,
                            to: rejoin,
                            reward,
                            base: 1.0,
                            role_trap: trap,
                            trap_entry: false,
                        });
                    }
                }
            }
        }
    }

    let needed = n_states as usize;
    if spec.num_states != 0 && spec.num_states < needed {
        return Err(HorizonError::InfeasibleSpec(format!(
            "structure needs {needed} states but num_states = {}",
            spec.num_states
        )));
    }
    if spec.num_states > needed && dead_nodes.is_empty() {
        return Err(HorizonError::InfeasibleSpec("no dead-end region to host padding states".into()));
    }
    while (n_states as usize) < spec.num_states {
        let host = dead_nodes[rng.gen_range(0..dead_nodes.len())];
        let leaf = fresh(&mut n_states);
        edges.push(PendingEdge { from: host, to: leaf, reward: 0.0, base: 0.0, role_trap: false, trap_entry: false });
    }

    // surrogate scores: base + noise, then trap inflation
    let sigma = spec.surrogate_mode.sigma();
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut scores: Vec<f64> = edges
        .iter()
        .map(|e| {
            let mut u = e.base;
            if sigma > 0.0 {
                u += noise.sample(&mut rng);
            }
            u
        })
        .collect();
    if adversarial {
        for (idx, e) in edges.iter().enumerate() {
            if e.role_trap && !e.trap_entry {
                // trap interiors look like steady progress
                scores[idx] = scores[idx].max(1.0);
            }
        }
    }
    // quantise so files round-trip exactly and ties are possible
    for u in &mut scores {
        *u = (*u * 1024.0).round() / 1024.0;
    }
    if adversarial {
        // noise may push a trap entry below the top tier of its state; lift
        // it back to the tier threshold so every planted trap qualifies
        for idx in 0..edges.len() {
            if !edges[idx].trap_entry {
                continue;
            }
            let from = edges[idx].from;
            let mut rivals: Vec<f64> =
                edges.iter().enumerate().filter(|&(j, o)| j != idx && o.from == from).map(|(j, _)| scores[j]).collect();
            let n = rivals.len() + 1;
            let tier = ((top_tier_quantile * n as f64).ceil() as usize).clamp(1, n);
            rivals.sort_by(|a, b| b.total_cmp(a));
            if let Some(&threshold) = rivals.get(tier - 1) {
                scores[idx] = scores[idx].max(threshold);
            }
        }
    }

    // shuffle action order per state
    let mut by_state: Vec<Vec<usize>> = vec![Vec::new(); n_states as usize];
    for (idx, e) in edges.iter().enumerate() {
        by_state[e.from.index()].push(idx);
    }
    let mut b = EnvironmentBuilder::with_states(spec.episode_horizon(), n_states as usize);
    for list in &mut by_state {
        list.shuffle(&mut rng);
        for (slot, &idx) in list.iter().enumerate() {
            let e = &edges[idx];
            b.add_edge(e.from, format!("r{slot}"), e.to, e.reward, scores[idx]);
        }
    }
    b.set_initial(layers[0][0]);
    b.add_answer(answer);
    let env = b.build()?;
    let oracle = compute_oracle(&env);
    debug_assert_eq!(oracle.dist(env.initial_state()), Some(d as u32));
    let traps = label_traps(&env, &oracle, top_tier_quantile, 1);
    Ok(GraphInstance { env, oracle, traps })
}
