//! Baseline decision policies: step-wise greedy, beam search and truncated
//! k-lookahead.
//!
//! All three share the [`DecisionPolicy`] interface used by
//! [`run_episode`](crate::env::run_episode). Ties are always resolved toward
//! the lowest action index (lexicographically smallest action sequence for
//! beam prefixes), so every decision is reproducible.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::env::{ActionId, BudgetMeter, Environment, StateId};
use crate::error::{HorizonError, Result};

/// A policy that picks one action per visited state.
///
/// `remaining` is the number of steps left in the episode, counting the
/// one being decided (always at least 1). Policies must not look further
/// ahead than that.
pub trait DecisionPolicy: Send {
    fn name(&self) -> &str;

    /// Clear per-episode state.
    fn reset(&mut self, seed: u64);

    fn decide(
        &mut self,
        env: &Environment,
        state: StateId,
        remaining: usize,
        meter: &mut BudgetMeter,
    ) -> Result<ActionId>;
}

fn require_actions(env: &Environment, s: StateId) -> Result<usize> {
    if s.index() >= env.num_states() {
        return Err(HorizonError::UnknownState(s));
    }
    match env.num_actions(s) {
        0 => Err(HorizonError::TerminalState(s)),
        n => Ok(n),
    }
}

/// `argmax_a û(s, a)`, lowest index on ties. Charges one surrogate call per
/// available action.
pub fn greedy_decide(env: &Environment, s: StateId, meter: &mut BudgetMeter) -> Result<ActionId> {
    let n = require_actions(env, s)?;
    let mut best = ActionId(0);
    let mut best_score = env.surrogate(s, best, meter)?;
    for i in 1..n {
        let a = ActionId(i as u32);
        let score = env.surrogate(s, a, meter)?;
        if score > best_score {
            best = a;
            best_score = score;
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, Default)]
pub struct GreedyPolicy;

impl DecisionPolicy for GreedyPolicy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn reset(&mut self, _seed: u64) {}

    fn decide(
        &mut self,
        env: &Environment,
        s: StateId,
        _remaining: usize,
        meter: &mut BudgetMeter,
    ) -> Result<ActionId> {
        greedy_decide(env, s, meter)
    }
}

// ---------------------------------------------------------------------------
// beam search

/// What a beam policy does with the winning prefix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Commitment {
    /// Execute only the first action, then search again from the new state.
    #[default]
    Recede,
    /// Execute the whole winning prefix before searching again.
    FullPrefix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamConfig {
    pub beam_width: usize,
    /// Prefix length explored before committing; `None` means the rest of
    /// the episode.
    pub beam_depth: Option<usize>,
    pub commit: Commitment,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self { beam_width: 8, beam_depth: None, commit: Commitment::Recede }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(HorizonError::InvalidParams("beam_width must be at least 1".into()));
        }
        if self.beam_depth == Some(0) {
            return Err(HorizonError::InvalidParams("beam_depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// A partial trajectory kept on the beam, ranked by its accumulated
/// surrogate score.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamPrefix {
    pub actions: Vec<ActionId>,
    pub last: StateId,
    pub score: f64,
}

/// Ranking used for beam pruning: higher score first, then the
/// lexicographically smaller action sequence.
pub fn beam_order(a: &BeamPrefix, b: &BeamPrefix) -> Ordering {
    b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal).then_with(|| a.actions.cmp(&b.actions))
}

/// Run beam search from `s` and return the beam after every depth
/// (`layers[t]` holds the survivors of length `t + 1`, plus any shorter
/// prefix that hit a terminal state and was carried along).
pub fn beam_layers(
    env: &Environment,
    s: StateId,
    width: usize,
    depth: usize,
    meter: &mut BudgetMeter,
) -> Result<Vec<Vec<BeamPrefix>>> {
    require_actions(env, s)?;
    if width == 0 || depth == 0 {
        return Err(HorizonError::InvalidParams("beam width and depth must be positive".into()));
    }
    let mut beam = vec![BeamPrefix { actions: Vec::new(), last: s, score: 0.0 }];
    let mut layers = Vec::with_capacity(depth);
    for _ in 0..depth {
        let mut candidates = Vec::new();
        let mut grew = false;
        for p in &beam {
            let stopped = !p.actions.is_empty() && env.is_terminal(p.last);
            if stopped || env.num_actions(p.last) == 0 {
                candidates.push(p.clone());
                continue;
            }
            for i in 0..env.num_actions(p.last) {
                let a = ActionId(i as u32);
                let u = env.surrogate(p.last, a, meter)?;
                let (next, _) = env.step(p.last, a, meter)?;
                let mut actions = p.actions.clone();
                actions.push(a);
                candidates.push(BeamPrefix { actions, last: next, score: p.score + u });
                grew = true;
            }
        }
        if !grew {
            break;
        }
        candidates.sort_by(beam_order);
        candidates.truncate(width);
        layers.push(candidates.clone());
        beam = candidates;
    }
    Ok(layers)
}

/// Best surviving prefix of a beam search from `s`.
pub fn beam_search(
    env: &Environment,
    s: StateId,
    width: usize,
    depth: usize,
    meter: &mut BudgetMeter,
) -> Result<BeamPrefix> {
    let layers = beam_layers(env, s, width, depth, meter)?;
    Ok(layers.last().and_then(|l| l.first()).cloned().expect("a non-terminal root yields one layer"))
}

/// First action of the best prefix found by beam search to
/// `min(beam_depth, remaining)`.
pub fn beam_decide(
    env: &Environment,
    s: StateId,
    cfg: &BeamConfig,
    remaining: usize,
    meter: &mut BudgetMeter,
) -> Result<ActionId> {
    cfg.validate()?;
    let depth = cfg.beam_depth.unwrap_or(remaining).min(remaining.max(1));
    Ok(beam_search(env, s, cfg.beam_width, depth, meter)?.actions[0])
}

#[derive(Clone, Debug, Default)]
pub struct BeamPolicy {
    cfg: BeamConfig,
    // (state the next queued action applies to, remaining queue)
    queued: Option<(StateId, Vec<ActionId>)>,
}

impl BeamPolicy {
    pub fn new(cfg: BeamConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, queued: None })
    }

    pub fn config(&self) -> &BeamConfig {
        &self.cfg
    }
}

impl DecisionPolicy for BeamPolicy {
    fn name(&self) -> &str {
        "beam"
    }

    fn reset(&mut self, _seed: u64) {
        self.queued = None;
    }

    fn decide(&mut self, env: &Environment, s: StateId, remaining: usize, meter: &mut BudgetMeter) -> Result<ActionId> {
        match self.cfg.commit {
            Commitment::Recede => beam_decide(env, s, &self.cfg, remaining, meter),
            Commitment::FullPrefix => {
                if let Some((expected, queue)) = self.queued.take() {
                    if expected == s && !queue.is_empty() {
                        let a = queue[0];
                        let next = env.edge(s, a)?.to;
                        self.queued = Some((next, queue[1..].to_vec()));
                        return Ok(a);
                    }
                }
                let depth = self.cfg.beam_depth.unwrap_or(remaining).min(remaining.max(1));
                let best = beam_search(env, s, self.cfg.beam_width, depth, meter)?;
                let a = best.actions[0];
                let next = env.edge(s, a)?.to;
                self.queued = Some((next, best.actions[1..].to_vec()));
                Ok(a)
            }
        }
    }
}

// ---------------------------------------------------------------------------
// truncated lookahead

/// How the continuation after the first simulated action is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Continuation {
    /// Maximise over every continuation (exhaustive depth-k enumeration).
    #[default]
    Exact,
    /// Follow the surrogate-greedy action after the first step.
    GreedyBySurrogate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LookaheadConfig {
    pub k: usize,
    pub continuation: Continuation,
}

impl Default for LookaheadConfig {
    fn default() -> Self {
        Self { k: 2, continuation: Continuation::Exact }
    }
}

impl LookaheadConfig {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(HorizonError::InvalidParams("lookahead depth k must be at least 1".into()));
        }
        Ok(())
    }
}

/// Best reward obtainable in at most `depth` further steps from `s`.
fn best_continuation(env: &Environment, s: StateId, depth: usize, meter: &mut BudgetMeter) -> Result<f64> {
    if depth == 0 || env.is_terminal(s) {
        return Ok(0.0);
    }
    let mut best = f64::NEG_INFINITY;
    for i in 0..env.num_actions(s) {
        let (next, r) = env.step(s, ActionId(i as u32), meter)?;
        let v = r + best_continuation(env, next, depth - 1, meter)?;
        if v > best {
            best = v;
        }
    }
    Ok(best)
}

fn greedy_continuation(env: &Environment, mut s: StateId, depth: usize, meter: &mut BudgetMeter) -> Result<f64> {
    let mut total = 0.0;
    for _ in 0..depth {
        if env.is_terminal(s) {
            break;
        }
        let a = greedy_decide(env, s, meter)?;
        let (next, r) = env.step(s, a, meter)?;
        total += r;
        s = next;
    }
    Ok(total)
}

/// Truncated lookahead value of taking `a` at `s`: the first reward plus the
/// best (or surrogate-greedy) continuation over the next `k - 1` steps.
/// Rewards beyond depth `k` count as zero; rollouts stop at terminal states.
pub fn truncated_value(
    env: &Environment,
    s: StateId,
    a: ActionId,
    k: usize,
    continuation: Continuation,
    meter: &mut BudgetMeter,
) -> Result<f64> {
    if k == 0 {
        return Err(HorizonError::InvalidParams("lookahead depth k must be at least 1".into()));
    }
    let (next, r) = env.step(s, a, meter)?;
    let rest = match continuation {
        Continuation::Exact => best_continuation(env, next, k - 1, meter)?,
        Continuation::GreedyBySurrogate => greedy_continuation(env, next, k - 1, meter)?,
    };
    Ok(r + rest)
}

/// `argmax_a Q̃_k(s, a)` with depth `min(k, remaining)`; ties go to the higher
/// surrogate score, then to the lower action index.
pub fn lookahead_decide(
    env: &Environment,
    s: StateId,
    cfg: &LookaheadConfig,
    remaining: usize,
    meter: &mut BudgetMeter,
) -> Result<ActionId> {
    cfg.validate()?;
    let n = require_actions(env, s)?;
    let depth = cfg.k.min(remaining.max(1));
    let mut best: Option<(ActionId, f64, f64)> = None;
    for i in 0..n {
        let a = ActionId(i as u32);
        let q = truncated_value(env, s, a, depth, cfg.continuation, meter)?;
        let u = env.surrogate(s, a, meter)?;
        let better = match best {
            None => true,
            Some((_, bq, bu)) => q > bq || (q == bq && u > bu),
        };
        if better {
            best = Some((a, q, u));
        }
    }
    Ok(best.expect("at least one action").0)
}

#[derive(Clone, Debug, Default)]
pub struct LookaheadPolicy {
    cfg: LookaheadConfig,
}

impl LookaheadPolicy {
    pub fn new(cfg: LookaheadConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl DecisionPolicy for LookaheadPolicy {
    fn name(&self) -> &str {
        "lookahead"
    }

    fn reset(&mut self, _seed: u64) {}

    fn decide(&mut self, env: &Environment, s: StateId, remaining: usize, meter: &mut BudgetMeter) -> Result<ActionId> {
        lookahead_decide(env, s, &self.cfg, remaining, meter)
    }
}
