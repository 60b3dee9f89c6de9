//! Independent reference implementations used by the integration tests.
//! Each one is written from the definitions directly and shares no code
//! with the library beyond the environment accessors.

#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use horizonlab::env::{ActionId, Environment, StateId, Trajectory};
use horizonlab::flare::SimulationRecord;

/// Maximum return over every action sequence of at most `steps` steps,
/// stopping early only at terminal states.
pub fn best_return(env: &Environment, s: StateId, steps: usize) -> f64 {
    if steps == 0 || env.is_terminal(s) {
        return 0.0;
    }
    env.actions(s).iter().map(|e| e.reward + best_return(env, e.to, steps - 1)).fold(f64::NEG_INFINITY, f64::max)
}

/// Q̃_k(s, a): reward of `a` plus the best sum of the next `k - 1` rewards.
pub fn q_tilde(env: &Environment, s: StateId, a: ActionId, k: usize) -> f64 {
    let e = &env.actions(s)[a.index()];
    e.reward + best_return(env, e.to, k - 1)
}

/// Hop distances to the nearest answer by forward search from each state.
pub fn bfs_distances(env: &Environment) -> Vec<Option<u32>> {
    (0..env.num_states())
        .map(|i| {
            let start = StateId(i as u32);
            let mut seen = vec![false; env.num_states()];
            let mut queue = VecDeque::from([(start, 0u32)]);
            seen[start.index()] = true;
            while let Some((s, d)) = queue.pop_front() {
                if env.is_answer(s) {
                    return Some(d);
                }
                for e in env.actions(s) {
                    if !seen[e.to.index()] {
                        seen[e.to.index()] = true;
                        queue.push_back((e.to, d + 1));
                    }
                }
            }
            None
        })
        .collect()
}

/// Every shortest path (as state sequences) from `s` to an answer state.
pub fn shortest_paths(env: &Environment, dist: &[Option<u32>], s: StateId) -> Vec<Vec<StateId>> {
    match dist[s.index()] {
        None => Vec::new(),
        Some(0) => vec![vec![s]],
        Some(d) => env
            .actions(s)
            .iter()
            .filter(|e| dist[e.to.index()] == Some(d - 1))
            .flat_map(|e| shortest_paths(env, dist, e.to))
            .map(|mut p| {
                p.insert(0, s);
                p
            })
            .collect(),
    }
}

/// First 1-based step at which `traj` stops being a prefix of some
/// shortest path from its start, by comparison with the enumerated set.
pub fn first_error_by_enumeration(env: &Environment, dist: &[Option<u32>], traj: &Trajectory) -> Option<usize> {
    let paths = shortest_paths(env, dist, traj.start());
    let on_prefix = |n: usize| paths.iter().any(|p| p.len() > n && p[..=n] == traj.states[..=n]);
    (1..traj.states.len()).find(|&n| !on_prefix(n))
}

/// Jaccard overlap of `(state, action)` multisets by counting.
pub fn jaccard(a: &Trajectory, b: &Trajectory) -> f64 {
    let count = |t: &Trajectory| {
        let mut m: HashMap<(StateId, ActionId), usize> = HashMap::new();
        for p in t.pairs() {
            *m.entry(p).or_default() += 1;
        }
        m
    };
    let (ca, cb) = (count(a), count(b));
    let mut inter = 0;
    let mut union = 0;
    for (k, &x) in &ca {
        let y = cb.get(k).copied().unwrap_or(0);
        inter += x.min(y);
        union += x.max(y);
    }
    for (k, &y) in &cb {
        if !ca.contains_key(k) {
            union += y;
        }
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Edge statistics rebuilt from a simulation log: each simulation counts
/// once for every distinct pair on its trajectory.
pub fn replay_edges(log: &[SimulationRecord]) -> HashMap<(StateId, ActionId), (u64, f64)> {
    let mut stats: HashMap<(StateId, ActionId), (u64, f64)> = HashMap::new();
    for sim in log {
        let mut pairs: Vec<_> = sim.trajectory.pairs().collect();
        pairs.sort_unstable();
        pairs.dedup();
        for p in pairs {
            let e = stats.entry(p).or_default();
            e.0 += 1;
            e.1 += sim.value;
        }
    }
    stats
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return (xs.first().copied().unwrap_or(f64::NAN), f64::INFINITY);
    }
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}
