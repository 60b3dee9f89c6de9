//! Trajectory-level planner: Monte Carlo tree search over proposer-pruned
//! actions, scoring whole simulated trajectories and reusing the scores of
//! near-duplicate trajectories through a bounded memory.

mod memory;
mod remote;
mod tree;

use serde::{Deserialize, Serialize};

pub use memory::{memory_insert, memory_lookup, Lookup, Similarity, TrajectoryMemory};
pub use remote::{RemoteEvaluator, RemoteProposer, DEFAULT_REMOTE_TIMEOUT};
pub use tree::{ucb_select, EdgeStats, Node, SearchTree};

use crate::env::{trajectory_return, ActionId, BudgetMeter, Environment, StateId, Trajectory};
use crate::error::{HorizonError, Result};
use crate::policies::DecisionPolicy;

/// Supplies the candidate actions of a state. Must be deterministic given
/// `(state, k)` and the seed passed to [`Proposer::reset`].
pub trait Proposer: Send {
    fn propose(&mut self, env: &Environment, s: StateId, k: usize) -> Result<Vec<ActionId>>;

    fn reset(&mut self, _seed: u64) {}
}

/// Scores a complete simulated trajectory.
pub trait TrajectoryEvaluator: Send {
    fn evaluate(&mut self, env: &Environment, traj: &Trajectory) -> Result<f64>;
}

/// The first `k` actions in environment order.
#[derive(Clone, Copy, Debug, Default)]
pub struct FirstK;

impl Proposer for FirstK {
    fn propose(&mut self, env: &Environment, s: StateId, k: usize) -> Result<Vec<ActionId>> {
        Ok((0..env.num_actions(s).min(k)).map(|i| ActionId(i as u32)).collect())
    }
}

/// The `k` actions with the highest surrogate score, lowest index first on
/// ties.
#[derive(Clone, Copy, Debug, Default)]
pub struct SurrogateTopK;

impl Proposer for SurrogateTopK {
    fn propose(&mut self, env: &Environment, s: StateId, k: usize) -> Result<Vec<ActionId>> {
        let edges = env.actions(s);
        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.sort_by(|&a, &b| edges[b].surrogate.total_cmp(&edges[a].surrogate).then(a.cmp(&b)));
        order.truncate(k);
        Ok(order.into_iter().map(|i| ActionId(i as u32)).collect())
    }
}

/// Every legal action, ignoring `k`.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityProposer;

impl Proposer for IdentityProposer {
    fn propose(&mut self, env: &Environment, s: StateId, _k: usize) -> Result<Vec<ActionId>> {
        Ok((0..env.num_actions(s)).map(|i| ActionId(i as u32)).collect())
    }
}

/// Exact trajectory return from the environment's own rewards.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExactEvaluator;

impl TrajectoryEvaluator for ExactEvaluator {
    fn evaluate(&mut self, _env: &Environment, traj: &Trajectory) -> Result<f64> {
        Ok(trajectory_return(traj))
    }
}

/// Built-in proposer choices for configuration files.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProposerKind {
    #[default]
    FirstK,
    SurrogateTopK,
    Identity,
}

impl ProposerKind {
    pub fn build(self) -> Box<dyn Proposer> {
        match self {
            ProposerKind::FirstK => Box::new(FirstK),
            ProposerKind::SurrogateTopK => Box::new(SurrogateTopK),
            ProposerKind::Identity => Box::new(IdentityProposer),
        }
    }
}

/// Lifetime of the trajectory memory.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryScope {
    /// Fresh memory for every planning call.
    #[default]
    PerPlanCall,
    /// One memory shared by all planning calls of an episode.
    PerEpisode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlareConfig {
    pub simulations: usize,
    pub rollout_depth: usize,
    pub exploration_c: f64,
    pub proposal_k: usize,
    pub memory_capacity: usize,
    pub similarity_threshold: f64,
    pub memory_scope: MemoryScope,
    pub similarity: Similarity,
    /// When false every simulated trajectory goes to the evaluator.
    pub memory_enabled: bool,
    pub proposer: ProposerKind,
}

impl Default for FlareConfig {
    fn default() -> Self {
        Self {
            simulations: 16,
            rollout_depth: 3,
            exploration_c: 1.4,
            proposal_k: 8,
            memory_capacity: 200,
            similarity_threshold: 0.9,
            memory_scope: MemoryScope::PerPlanCall,
            similarity: Similarity::Jaccard,
            memory_enabled: true,
            proposer: ProposerKind::FirstK,
        }
    }
}

impl FlareConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(HorizonError::InvalidParams(m.to_string()));
        if self.simulations == 0 {
            return bad("simulations must be at least 1");
        }
        if self.rollout_depth == 0 {
            return bad("rollout_depth must be at least 1");
        }
        if !(self.exploration_c.is_finite() && self.exploration_c >= 0.0) {
            return bad("exploration_c must be finite and non-negative");
        }
        if self.proposal_k == 0 {
            return bad("proposal_k must be at least 1");
        }
        if self.memory_capacity == 0 {
            return bad("memory_capacity must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return bad("similarity_threshold must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn new_memory(&self) -> TrajectoryMemory {
        TrajectoryMemory::new(self.memory_capacity, self.similarity)
    }
}

/// One simulation of a planning call.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationRecord {
    pub trajectory: Trajectory,
    /// Value backed up along the trajectory.
    pub value: f64,
    /// True when the value came from memory rather than the evaluator.
    pub reused: bool,
}

#[derive(Clone, Debug)]
pub struct PlanOutcome {
    pub action: ActionId,
    pub tree: SearchTree,
    pub simulations: Vec<SimulationRecord>,
    /// True when no root edge was visited and the action fell back to the
    /// surrogate ranking.
    pub fallback: bool,
}

impl PlanOutcome {
    pub fn memory_hits(&self) -> usize {
        self.simulations.iter().filter(|s| s.reused).count()
    }
}

/// Planner state shared by all simulations of one call.
struct Search<'a> {
    env: &'a Environment,
    cfg: &'a FlareConfig,
    proposer: &'a mut dyn Proposer,
    meter: &'a mut BudgetMeter,
    tree: SearchTree,
}

impl Search<'_> {
    fn expand(&mut self, s: StateId) -> Result<usize> {
        let actions = if self.env.is_terminal(s) {
            Vec::new()
        } else {
            self.meter.proposer_calls += 1;
            let raw = self.proposer.propose(self.env, s, self.cfg.proposal_k)?;
            let n = self.env.num_actions(s);
            let mut seen = Vec::with_capacity(raw.len());
            for a in raw {
                if a.index() >= n {
                    return Err(HorizonError::InvalidAction { state: s, action: a });
                }
                if !seen.contains(&a) {
                    seen.push(a);
                }
            }
            seen
        };
        let n = actions.len();
        self.tree.expand(s, &actions);
        Ok(n)
    }
}

/// Run one planning call from `root` and pick the action to execute.
///
/// `remaining` caps simulated trajectories at the steps left in the
/// episode. The root is expanded before the first simulation; a simulation
/// descends by [`ucb_select`] until it reaches an unexpanded state, expands
/// it and stops there. Its value is taken from `memory` on a hit (similarity
/// at least `similarity_threshold`) and from `evaluator` otherwise, and is
/// added once to each distinct `(state, action)` on the path.
#[allow(clippy::too_many_arguments)]
pub fn plan(
    env: &Environment,
    root: StateId,
    remaining: usize,
    cfg: &FlareConfig,
    proposer: &mut dyn Proposer,
    evaluator: &mut dyn TrajectoryEvaluator,
    memory: &mut TrajectoryMemory,
    meter: &mut BudgetMeter,
) -> Result<PlanOutcome> {
    cfg.validate()?;
    if root.index() >= env.num_states() {
        return Err(HorizonError::UnknownState(root));
    }
    if env.is_terminal(root) || remaining == 0 {
        return Err(HorizonError::TerminalState(root));
    }
    let mut search = Search { env, cfg, proposer, meter, tree: SearchTree::new() };
    if search.expand(root)? == 0 {
        return Err(HorizonError::ProposerEmpty(root));
    }
    let depth = cfg.rollout_depth.min(remaining);
    let mut log = Vec::with_capacity(cfg.simulations);

    for _ in 0..cfg.simulations {
        let mut traj = Trajectory::new(root);
        let mut s = root;
        while traj.len() < depth {
            if !search.tree.is_expanded(s) {
                search.expand(s)?;
                break;
            }
            if search.tree.node(s).is_none_or(|n| n.edges.is_empty()) {
                break;
            }
            let a = ucb_select(&search.tree, s, cfg.exploration_c)?;
            let (next, r) = env.step(s, a, search.meter)?;
            traj.push(a, next, r);
            s = next;
        }

        let looked_up = if cfg.memory_enabled { memory.lookup(&traj, cfg.similarity_threshold) } else { Lookup::Miss };
        let (value, reused) = match looked_up {
            Lookup::Hit { ret, .. } => (ret, true),
            Lookup::Miss => {
                search.meter.evaluator_calls += 1;
                let v = evaluator.evaluate(env, &traj)?;
                if cfg.memory_enabled {
                    memory.insert(&traj, v);
                }
                (v, false)
            }
        };
        let path: Vec<_> = traj.pairs().collect();
        search.tree.backup(&path, value);
        log.push(SimulationRecord { trajectory: traj, value, reused });
    }

    let tree = search.tree;
    let root_node = tree.node(root).expect("root expanded");
    let mut best: Option<&EdgeStats> = None;
    for e in root_node.edges.iter().filter(|e| e.visits > 0) {
        let better = match best {
            None => true,
            Some(b) => e.q() > b.q() || (e.q() == b.q() && e.action < b.action),
        };
        if better {
            best = Some(e);
        }
    }
    let (action, fallback) = match best {
        Some(e) => (e.action, false),
        None => {
            let mut pick = root_node.edges[0].action;
            let mut pick_u = env.surrogate(root, pick, search.meter)?;
            for e in &root_node.edges[1..] {
                let u = env.surrogate(root, e.action, search.meter)?;
                if u > pick_u || (u == pick_u && e.action < pick) {
                    pick = e.action;
                    pick_u = u;
                }
            }
            (pick, true)
        }
    };
    Ok(PlanOutcome { action, tree, simulations: log, fallback })
}

/// Receding-horizon wrapper around [`plan`].
pub struct FlarePolicy {
    cfg: FlareConfig,
    proposer: Box<dyn Proposer>,
    evaluator: Box<dyn TrajectoryEvaluator>,
    memory: TrajectoryMemory,
    keep_outcomes: bool,
    outcomes: Vec<PlanOutcome>,
}

impl FlarePolicy {
    /// Policy with the configured built-in proposer and the exact evaluator.
    pub fn new(cfg: FlareConfig) -> Result<Self> {
        let proposer = cfg.proposer.build();
        Self::with_components(cfg, proposer, Box::new(ExactEvaluator))
    }

    pub fn with_components(
        cfg: FlareConfig,
        proposer: Box<dyn Proposer>,
        evaluator: Box<dyn TrajectoryEvaluator>,
    ) -> Result<Self> {
        cfg.validate()?;
        let memory = cfg.new_memory();
        Ok(Self { cfg, proposer, evaluator, memory, keep_outcomes: false, outcomes: Vec::new() })
    }

    /// Keep every [`PlanOutcome`] of the current episode for inspection.
    pub fn record_outcomes(mut self, keep: bool) -> Self {
        self.keep_outcomes = keep;
        self
    }

    pub fn outcomes(&self) -> &[PlanOutcome] {
        &self.outcomes
    }

    pub fn config(&self) -> &FlareConfig {
        &self.cfg
    }
}

impl DecisionPolicy for FlarePolicy {
    fn name(&self) -> &str {
        "flare"
    }

    fn reset(&mut self, seed: u64) {
        self.memory.clear();
        self.outcomes.clear();
        self.proposer.reset(seed);
    }

    fn decide(
        &mut self,
        env: &Environment,
        state: StateId,
        remaining: usize,
        meter: &mut BudgetMeter,
    ) -> Result<ActionId> {
        if self.cfg.memory_scope == MemoryScope::PerPlanCall {
            self.memory.clear();
        }
        let outcome = plan(
            env,
            state,
            remaining,
            &self.cfg,
            self.proposer.as_mut(),
            self.evaluator.as_mut(),
            &mut self.memory,
            meter,
        )?;
        let a = outcome.action;
        if self.keep_outcomes {
            self.outcomes.push(outcome);
        }
        Ok(a)
    }
}
