//! Counterexample environments on which step-wise and truncated policies
//! provably lose, each returned with its analytically known optimal return.
//!
//! Surrogate scores take the smallest values satisfying the required
//! strict inequalities (1 for the lure, 0 for the paying action). Paying
//! actions are listed *first* at every decision state, so the lowest-index
//! tie-break always favours them: whatever a baseline loses, it loses to
//! the surrogate ranking and not to action order.

use serde::{Deserialize, Serialize};

use crate::env::{Environment, EnvironmentBuilder, StateId};
use crate::error::{HorizonError, Result};

/// An environment together with its optimal undiscounted return.
#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub env: Environment,
    pub optimal_return: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreedyTrapParams {
    /// Delayed reward magnitude.
    #[serde(rename = "M", alias = "reward")]
    pub reward: f64,
    #[serde(rename = "H", alias = "horizon")]
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamTrapParams {
    #[serde(rename = "B", alias = "beam_width")]
    pub beam_width: usize,
    #[serde(rename = "M", alias = "reward")]
    pub reward: f64,
    #[serde(rename = "H", alias = "horizon")]
    pub horizon: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LookaheadChainParams {
    /// Lookahead depth the environment defeats.
    pub k: usize,
    #[serde(rename = "H", alias = "horizon")]
    pub horizon: usize,
    #[serde(rename = "R_max", alias = "r_max")]
    pub r_max: f64,
}

impl LookaheadChainParams {
    /// Number of `(k + 1)`-step segments, `floor((H - 1) / (k + 1))`.
    pub fn segments(&self) -> usize {
        self.horizon.saturating_sub(1) / (self.k + 1)
    }
}

fn check_reward(r: f64, name: &str) -> Result<()> {
    if !(r.is_finite() && r > 0.0) {
        return Err(HorizonError::InvalidParams(format!("{name} must be a positive finite number, got {r}")));
    }
    Ok(())
}

/// Two-way fork: `a` (surrogate 1) and `b` (surrogate 0) both lead to a
/// one-action state; only the state behind `b` pays `M` on its way into the
/// absorbing zero-reward sink.
///
/// State ids: `s0 = 0`, `s_a = 1`, `s_b = 2`, sink `= 3`. Action order at
/// `s0` is `[b, a]`.
pub fn make_greedy_trap(p: &GreedyTrapParams) -> Result<Counterexample> {
    check_reward(p.reward, "M")?;
    if p.horizon < 2 {
        return Err(HorizonError::InvalidParams("greedy trap needs horizon >= 2".into()));
    }
    let mut b = EnvironmentBuilder::with_states(p.horizon, 4);
    let (s0, sa, sb, sink) = (StateId(0), StateId(1), StateId(2), StateId(3));
    b.add_edge(s0, "b", sb, 0.0, 0.0);
    b.add_edge(s0, "a", sa, 0.0, 1.0);
    b.add_edge(sa, "stop", sink, 0.0, 0.0);
    b.add_edge(sb, "stop", sink, p.reward, 0.0);
    b.add_edge(sink, "stay", sink, 0.0, 0.0);
    b.set_initial(s0);
    Ok(Counterexample { env: b.build()?, optimal_return: p.reward })
}

/// Root with one good action `g` (surrogate 0, listed first) and `B + 1`
/// decoys (surrogate 1). Every successor has a single terminal action into
/// the sink; only the one behind `g` pays `M`.
pub fn make_beam_trap(p: &BeamTrapParams) -> Result<Counterexample> {
    check_reward(p.reward, "M")?;
    if p.beam_width == 0 {
        return Err(HorizonError::InvalidParams("beam width must be at least 1".into()));
    }
    if p.horizon < 2 {
        return Err(HorizonError::InvalidParams("beam trap needs horizon >= 2".into()));
    }
    let decoys = p.beam_width + 1;
    let mut b = EnvironmentBuilder::new(p.horizon);
    let root = b.add_state();
    let sink = b.add_state();
    let good = b.add_state();
    b.add_edge(root, "g", good, 0.0, 0.0);
    b.add_edge(good, "stop", sink, p.reward, 0.0);
    for j in 1..=decoys {
        let s = b.add_state();
        b.add_edge(root, format!("d{j}"), s, 0.0, 1.0);
        b.add_edge(s, "stop", sink, 0.0, 0.0);
    }
    b.add_edge(sink, "stay", sink, 0.0, 0.0);
    b.set_initial(root);
    Ok(Counterexample { env: b.build()?, optimal_return: p.reward })
}

/// `N = floor((H - 1) / (k + 1))` segments. From each spine state `g` and
/// `d` both start a chain of `k` zero-reward transitions; the `(k + 1)`-th
/// transition returns to the next spine state and pays `R_max` on the `g`
/// branch only. The last spine state is terminal.
pub fn make_lookahead_chain(p: &LookaheadChainParams) -> Result<Counterexample> {
    check_reward(p.r_max, "R_max")?;
    if p.k == 0 {
        return Err(HorizonError::InvalidParams("k must be at least 1".into()));
    }
    if p.horizon <= p.k {
        return Err(HorizonError::InvalidParams("horizon must exceed k".into()));
    }
    let n = p.segments();
    if n == 0 {
        return Err(HorizonError::InvalidParams(format!("floor((H-1)/(k+1)) = 0 for H={}, k={}", p.horizon, p.k)));
    }
    let mut b = EnvironmentBuilder::new(p.horizon);
    let spine: Vec<StateId> = (0..=n).map(|_| b.add_state()).collect();
    for i in 0..n {
        for (label, pay) in [("g", p.r_max), ("d", 0.0)] {
            let surrogate = if label == "d" { 1.0 } else { 0.0 };
            let mut prev = spine[i];
            for j in 1..=p.k {
                let s = b.add_state();
                if j == 1 {
                    b.add_edge(prev, label, s, 0.0, surrogate);
                } else {
                    b.add_edge(prev, "next", s, 0.0, 0.0);
                }
                prev = s;
            }
            b.add_edge(prev, "next", spine[i + 1], pay, 0.0);
        }
    }
    b.set_initial(spine[0]);
    Ok(Counterexample { env: b.build()?, optimal_return: n as f64 * p.r_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{ActionId, BudgetMeter};

    #[test]
    fn greedy_trap_rewards() {
        let ce = make_greedy_trap(&GreedyTrapParams { reward: 5.0, horizon: 2 }).unwrap();
        let mut m = BudgetMeter::new();
        let s0 = ce.env.initial_state();
        let b = ce.env.action_by_label(s0, "b").unwrap();
        let (sb, r) = ce.env.step(s0, b, &mut m).unwrap();
        assert_eq!((sb, r), (StateId(2), 0.0));
        assert_eq!(ce.env.step(sb, ActionId(0), &mut m).unwrap(), (StateId(3), 5.0));
        let a = ce.env.action_by_label(s0, "a").unwrap();
        assert!(ce.env.actions(s0)[a.index()].surrogate > ce.env.actions(s0)[b.index()].surrogate);
        assert_eq!(ce.optimal_return, 5.0);
    }

    #[test]
    fn beam_trap_shape() {
        for width in [1, 2, 8] {
            let ce = make_beam_trap(&BeamTrapParams { beam_width: width, reward: 7.0, horizon: 3 }).unwrap();
            let root = ce.env.initial_state();
            assert_eq!(ce.env.num_actions(root), width + 2);
            let lures = ce.env.actions(root).iter().filter(|e| e.surrogate == 1.0).count();
            assert_eq!(lures, width + 1);
        }
    }

    #[test]
    fn chain_segment_count() {
        let p = LookaheadChainParams { k: 2, horizon: 10, r_max: 1.0 };
        assert_eq!(p.segments(), 3);
        let ce = make_lookahead_chain(&p).unwrap();
        assert_eq!(ce.optimal_return, 3.0);
        // spine + two k-chains per segment
        assert_eq!(ce.env.num_states(), 4 + 2 * 2 * 3);
        let p = LookaheadChainParams { k: 1, horizon: 13, r_max: 2.0 };
        assert_eq!(make_lookahead_chain(&p).unwrap().optimal_return, 12.0);
    }

    #[test]
    fn invalid_params() {
        assert!(make_greedy_trap(&GreedyTrapParams { reward: 0.0, horizon: 4 }).is_err());
        assert!(make_greedy_trap(&GreedyTrapParams { reward: 1.0, horizon: 1 }).is_err());
        assert!(make_beam_trap(&BeamTrapParams { beam_width: 0, reward: 1.0, horizon: 3 }).is_err());
        assert!(make_lookahead_chain(&LookaheadChainParams { k: 9, horizon: 10, r_max: 1.0 }).is_err());
        assert!(make_lookahead_chain(&LookaheadChainParams { k: 3, horizon: 3, r_max: 1.0 }).is_err());
        assert!(make_lookahead_chain(&LookaheadChainParams { k: 1, horizon: 5, r_max: f64::NAN }).is_err());
    }
}
