//! Exhaustive trajectory enumeration for small environments.

use crate::env::{ActionId, Environment, StateId, Trajectory};

/// Every trajectory from `start` that runs until a terminal state or
/// `steps` transitions, whichever comes first.
pub fn enumerate_trajectories(env: &Environment, start: StateId, steps: usize) -> Vec<Trajectory> {
    fn walk(env: &Environment, t: &mut Trajectory, steps: usize, out: &mut Vec<Trajectory>) {
        let s = t.last_state();
        if t.len() == steps || env.is_terminal(s) {
            out.push(t.clone());
            return;
        }
        for (i, e) in env.actions(s).iter().enumerate() {
            let mut next = t.clone();
            next.push(ActionId(i as u32), e.to, e.reward);
            walk(env, &mut next, steps, out);
        }
    }
    let mut out = Vec::new();
    walk(env, &mut Trajectory::new(start), steps, &mut out);
    out
}

/// Maximum undiscounted return over [`enumerate_trajectories`].
pub fn brute_force_optimum(env: &Environment, start: StateId, steps: usize) -> f64 {
    enumerate_trajectories(env, start, steps).iter().map(|t| t.cumulative_return).fold(f64::NEG_INFINITY, f64::max)
}
