//! Deterministic state-transition environments, trajectories and the
//! receding-horizon episode loop.
//!
//! An [`Environment`] is a finite directed multigraph: every state owns an
//! ordered list of outgoing edges, and each edge carries a label, a target
//! state, the reward collected when it is taken and the surrogate score a
//! step-wise policy sees for it. Action order is significant: every
//! tie-break in the crate resolves to the lowest action index.
//!
//! States with no outgoing edges are terminal, and so is every state in the
//! answer set.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HorizonError, Result};
use crate::policies::DecisionPolicy;

/// Dense index of a state inside its environment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u32);

impl StateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}", self.0)
    }
}

/// Index into the ordered action list of one state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub u32);

impl ActionId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// One outgoing action of a state.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub label: String,
    pub to: StateId,
    pub reward: f64,
    pub surrogate: f64,
}

/// Call counters standing in for the compute budget of a planner.
///
/// A single meter is threaded through an episode; policies charge their
/// internal simulations to the same meter as the executed steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetMeter {
    pub transition_calls: u64,
    pub surrogate_calls: u64,
    pub proposer_calls: u64,
    pub evaluator_calls: u64,
}

impl BudgetMeter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Weighted cost `w·counters`, weights ordered as
    /// (transition, surrogate, proposer, evaluator).
    pub fn weighted_cost(&self, weights: [f64; 4]) -> f64 {
        weights[0] * self.transition_calls as f64
            + weights[1] * self.surrogate_calls as f64
            + weights[2] * self.proposer_calls as f64
            + weights[3] * self.evaluator_calls as f64
    }

    pub fn accumulate(&mut self, other: &BudgetMeter) {
        self.transition_calls += other.transition_calls;
        self.surrogate_calls += other.surrogate_calls;
        self.proposer_calls += other.proposer_calls;
        self.evaluator_calls += other.evaluator_calls;
    }
}

/// Immutable deterministic environment. Build one with [`EnvironmentBuilder`]
/// or load it from the JSON document format in [`crate::schema`].
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    edges: Vec<Vec<Edge>>,
    initial: StateId,
    answer: Vec<bool>,
    episode_horizon: usize,
}

impl Environment {
    pub fn num_states(&self) -> usize {
        self.edges.len()
    }

    pub fn initial_state(&self) -> StateId {
        self.initial
    }

    pub fn episode_horizon(&self) -> usize {
        self.episode_horizon
    }

    /// Answer states in increasing id order.
    pub fn answers(&self) -> Vec<StateId> {
        self.answer.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| StateId(i as u32)).collect()
    }

    pub fn is_answer(&self, s: StateId) -> bool {
        self.answer.get(s.index()).copied().unwrap_or(false)
    }

    pub fn is_terminal(&self, s: StateId) -> bool {
        self.is_answer(s) || self.edges.get(s.index()).is_none_or(Vec::is_empty)
    }

    /// Outgoing edges of `s` in action order; empty for unknown states.
    pub fn actions(&self, s: StateId) -> &[Edge] {
        self.edges.get(s.index()).map_or(&[], Vec::as_slice)
    }

    pub fn num_actions(&self, s: StateId) -> usize {
        self.actions(s).len()
    }

    pub fn edge(&self, s: StateId, a: ActionId) -> Result<&Edge> {
        if s.index() >= self.edges.len() {
            return Err(HorizonError::UnknownState(s));
        }
        self.edges[s.index()].get(a.index()).ok_or(HorizonError::InvalidAction { state: s, action: a })
    }

    /// Apply `a` at `s`, charging one transition call.
    pub fn step(&self, s: StateId, a: ActionId, meter: &mut BudgetMeter) -> Result<(StateId, f64)> {
        let edge = self.edge(s, a)?;
        meter.transition_calls += 1;
        Ok((edge.to, edge.reward))
    }

    /// Surrogate score of `(s, a)`, charging one surrogate call.
    pub fn surrogate(&self, s: StateId, a: ActionId, meter: &mut BudgetMeter) -> Result<f64> {
        let edge = self.edge(s, a)?;
        meter.surrogate_calls += 1;
        Ok(edge.surrogate)
    }

    /// Maximum out-degree over all states.
    pub fn max_branching(&self) -> usize {
        self.edges.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Look up an action of `s` by its label.
    pub fn action_by_label(&self, s: StateId, label: &str) -> Option<ActionId> {
        self.actions(s).iter().position(|e| e.label == label).map(|i| ActionId(i as u32))
    }

    /// Predecessor lists: for each state, the states with an edge into it.
    pub fn reverse_adjacency(&self) -> Vec<Vec<StateId>> {
        let mut rev = vec![Vec::new(); self.num_states()];
        for (from, out) in self.edges.iter().enumerate() {
            for e in out {
                rev[e.to.index()].push(StateId(from as u32));
            }
        }
        rev
    }
}

/// Incremental constructor that validates the result.
#[derive(Debug, Default)]
pub struct EnvironmentBuilder {
    edges: Vec<Vec<Edge>>,
    initial: Option<StateId>,
    answers: Vec<StateId>,
    episode_horizon: usize,
}

impl EnvironmentBuilder {
    pub fn new(episode_horizon: usize) -> Self {
        Self { episode_horizon, ..Self::default() }
    }

    pub fn with_states(episode_horizon: usize, n: usize) -> Self {
        let mut b = Self::new(episode_horizon);
        b.edges = vec![Vec::new(); n];
        b
    }

    pub fn add_state(&mut self) -> StateId {
        self.edges.push(Vec::new());
        StateId(self.edges.len() as u32 - 1)
    }

    pub fn num_states(&self) -> usize {
        self.edges.len()
    }

    pub fn set_initial(&mut self, s: StateId) -> &mut Self {
        self.initial = Some(s);
        self
    }

    pub fn add_answer(&mut self, s: StateId) -> &mut Self {
        self.answers.push(s);
        self
    }

    pub fn add_edge(
        &mut self,
        from: StateId,
        label: impl Into<String>,
        to: StateId,
        reward: f64,
        surrogate: f64,
    ) -> ActionId {
        let out = &mut self.edges[from.index()];
        out.push(Edge { label: label.into(), to, reward, surrogate });
        ActionId(out.len() as u32 - 1)
    }

    pub fn build(self) -> Result<Environment> {
        let n = self.edges.len();
        if n == 0 {
            return Err(HorizonError::InvalidEnvironment("no states".into()));
        }
        if self.episode_horizon == 0 {
            return Err(HorizonError::InvalidEnvironment("episode_horizon must be positive".into()));
        }
        let initial = self.initial.unwrap_or(StateId(0));
        let in_range = |s: StateId| s.index() < n;
        if !in_range(initial) {
            return Err(HorizonError::InvalidEnvironment(format!("initial state {initial} out of range")));
        }
        let mut answer = vec![false; n];
        for &s in &self.answers {
            if !in_range(s) {
                return Err(HorizonError::InvalidEnvironment(format!("answer {s} out of range")));
            }
            answer[s.index()] = true;
        }
        for (from, out) in self.edges.iter().enumerate() {
            for e in out {
                if !in_range(e.to) {
                    return Err(HorizonError::InvalidEnvironment(format!("edge s{from} -> {} out of range", e.to)));
                }
                if !e.reward.is_finite() || !e.surrogate.is_finite() {
                    return Err(HorizonError::InvalidEnvironment(format!(
                        "non-finite reward or surrogate on edge from s{from}"
                    )));
                }
            }
            for (i, e) in out.iter().enumerate() {
                if out[..i].iter().any(|o| o.label == e.label) {
                    return Err(HorizonError::InvalidEnvironment(format!(
                        "duplicate action label {:?} at s{from}",
                        e.label
                    )));
                }
            }
        }
        Ok(Environment { edges: self.edges, initial, answer, episode_horizon: self.episode_horizon })
    }
}

/// Alternating state/action sequence with per-step rewards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<StateId>,
    pub actions: Vec<ActionId>,
    pub step_rewards: Vec<f64>,
    pub cumulative_return: f64,
}

impl Trajectory {
    pub fn new(start: StateId) -> Self {
        Self { states: vec![start], actions: Vec::new(), step_rewards: Vec::new(), cumulative_return: 0.0 }
    }

    pub fn push(&mut self, action: ActionId, next: StateId, reward: f64) {
        self.actions.push(action);
        self.states.push(next);
        self.step_rewards.push(reward);
        self.cumulative_return += reward;
    }

    /// Number of executed actions.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn start(&self) -> StateId {
        self.states[0]
    }

    pub fn last_state(&self) -> StateId {
        *self.states.last().expect("trajectory always holds its start state")
    }

    /// `(s_t, a_t)` pairs in order.
    pub fn pairs(&self) -> impl Iterator<Item = (StateId, ActionId)> + '_ {
        self.states.iter().copied().zip(self.actions.iter().copied())
    }

    /// Return collected over steps `from..to` (half-open, in action indices).
    pub fn segment_return(&self, from: usize, to: usize) -> f64 {
        self.step_rewards[from..to].iter().sum()
    }

    /// Check the structural invariants and replay every step against `env`.
    pub fn verify(&self, env: &Environment) -> Result<()> {
        if self.states.len() != self.actions.len() + 1 || self.step_rewards.len() != self.actions.len() {
            return Err(HorizonError::InvalidEnvironment("trajectory length mismatch".into()));
        }
        for (t, (s, a)) in self.pairs().enumerate() {
            let e = env.edge(s, a)?;
            if e.to != self.states[t + 1] || e.reward != self.step_rewards[t] {
                return Err(HorizonError::InvalidEnvironment(format!(
                    "trajectory diverges from environment at step {t}"
                )));
            }
        }
        Ok(())
    }
}

/// Sum of the per-step rewards.
pub fn trajectory_return(traj: &Trajectory) -> f64 {
    traj.step_rewards.iter().sum()
}

/// Run one receding-horizon episode: ask the policy for an action, apply it,
/// repeat until a terminal state or the episode horizon.
pub fn run_episode(
    env: &Environment,
    policy: &mut dyn DecisionPolicy,
    seed: u64,
    meter: &mut BudgetMeter,
) -> Result<Trajectory> {
    policy.reset(seed);
    let mut traj = Trajectory::new(env.initial_state());
    let horizon = env.episode_horizon();
    let mut s = env.initial_state();
    while traj.len() < horizon && !env.is_terminal(s) {
        let remaining = horizon - traj.len();
        let a = policy.decide(env, s, remaining, meter)?;
        let (next, reward) = env.step(s, a, meter)?;
        traj.push(a, next, reward);
        s = next;
    }
    Ok(traj)
}

/// Parameters for seeded random test environments.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RandomEnvSpec {
    pub seed: u64,
    pub num_states: usize,
    pub max_actions: usize,
    pub episode_horizon: usize,
    /// Probability that a non-initial state is an answer state.
    pub answer_probability: f64,
}

impl Default for RandomEnvSpec {
    fn default() -> Self {
        Self { seed: 0, num_states: 8, max_actions: 3, episode_horizon: 4, answer_probability: 0.1 }
    }
}

/// Random environment with half-integer rewards and surrogate scores, so
/// every return is exactly representable and ties do occur.
pub fn random_environment(spec: &RandomEnvSpec) -> Result<Environment> {
    if spec.num_states == 0 || spec.episode_horizon == 0 {
        return Err(HorizonError::InvalidParams("random env needs states and a positive horizon".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = EnvironmentBuilder::with_states(spec.episode_horizon, spec.num_states);
    for s in 0..spec.num_states {
        let s = StateId(s as u32);
        if s.0 != 0 && rng.gen_bool(spec.answer_probability.clamp(0.0, 1.0)) {
            b.add_answer(s);
        }
        // the initial state always has at least one action
        let lo = usize::from(s.0 == 0);
        let n_actions = rng.gen_range(lo..=spec.max_actions.max(lo));
        for i in 0..n_actions {
            let to = StateId(rng.gen_range(0..spec.num_states) as u32);
            let reward = f64::from(rng.gen_range(-2i32..=6)) * 0.5;
            let surrogate = f64::from(rng.gen_range(0i32..=4)) * 0.5;
            b.add_edge(s, format!("r{i}"), to, reward, surrogate);
        }
    }
    b.set_initial(StateId(0));
    b.build()
}
