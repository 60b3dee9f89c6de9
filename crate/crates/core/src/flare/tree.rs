use std::collections::BTreeMap;

use crate::env::{ActionId, StateId};
use crate::error::{HorizonError, Result};

/// Statistics of one `(state, action)` edge.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeStats {
    pub action: ActionId,
    pub visits: u64,
    pub return_sum: f64,
}

impl EdgeStats {
    /// Running mean of backed-up returns; 0 before the first visit.
    pub fn q(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.return_sum / self.visits as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Node {
    pub visits: u64,
    pub edges: Vec<EdgeStats>,
}

impl Node {
    pub fn edge(&self, a: ActionId) -> Option<&EdgeStats> {
        self.edges.iter().find(|e| e.action == a)
    }
}

/// Search tree of one planning call, keyed by state. A state reached along
/// two different paths shares one node.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SearchTree {
    nodes: BTreeMap<StateId, Node>,
}

impl SearchTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_expanded(&self, s: StateId) -> bool {
        self.nodes.contains_key(&s)
    }

    pub fn node(&self, s: StateId) -> Option<&Node> {
        self.nodes.get(&s)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (StateId, &Node)> {
        self.nodes.iter().map(|(&s, n)| (s, n))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Mark `s` expanded with the given candidate actions (possibly none).
    pub fn expand(&mut self, s: StateId, actions: &[ActionId]) {
        let edges = actions.iter().map(|&action| EdgeStats { action, visits: 0, return_sum: 0.0 }).collect();
        self.nodes.insert(s, Node { visits: 0, edges });
    }

    pub fn q(&self, s: StateId, a: ActionId) -> Option<f64> {
        self.node(s)?.edge(a).map(EdgeStats::q)
    }

    pub fn visits(&self, s: StateId, a: ActionId) -> Option<u64> {
        self.node(s)?.edge(a).map(|e| e.visits)
    }

    /// Add `ret` to every distinct `(s, a)` on the path. A pair that occurs
    /// more than once in one simulation is credited once.
    pub fn backup(&mut self, path: &[(StateId, ActionId)], ret: f64) {
        for (i, &(s, a)) in path.iter().enumerate() {
            if path[..i].contains(&(s, a)) {
                continue;
            }
            let node = self.nodes.get_mut(&s).expect("path states are expanded");
            let edge = node.edges.iter_mut().find(|e| e.action == a).expect("path actions are tree edges");
            edge.visits += 1;
            edge.return_sum += ret;
            node.visits += 1;
        }
    }
}

/// UCB child choice at an expanded node:
/// `argmax_a Q(s,a) + c * sqrt(ln max(N(s), 1) / (N(s,a) + 1))`,
/// lowest action index on ties.
pub fn ucb_select(tree: &SearchTree, s: StateId, c: f64) -> Result<ActionId> {
    let node = tree.node(s).ok_or(HorizonError::UnexpandedNode(s))?;
    let log_n = (node.visits.max(1) as f64).ln();
    let mut best: Option<(ActionId, f64)> = None;
    for e in &node.edges {
        let score = e.q() + c * (log_n / (e.visits as f64 + 1.0)).sqrt();
        let better = match best {
            None => true,
            Some((ba, bs)) => score > bs || (score == bs && e.action < ba),
        };
        if better {
            best = Some((e.action, score));
        }
    }
    best.map(|(a, _)| a).ok_or(HorizonError::TerminalState(s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tree_with(stats: &[(u32, u64, f64)]) -> SearchTree {
        let mut t = SearchTree::new();
        let s = StateId(0);
        let actions: Vec<ActionId> = stats.iter().map(|&(a, _, _)| ActionId(a)).collect();
        t.expand(s, &actions);
        let node = t.nodes.get_mut(&s).unwrap();
        for (e, &(_, n, sum)) in node.edges.iter_mut().zip(stats) {
            e.visits = n;
            e.return_sum = sum;
        }
        node.visits = stats.iter().map(|s| s.1).sum();
        t
    }

    #[test]
    fn unvisited_children_tie_to_lowest_index() {
        let t = tree_with(&[(3, 0, 0.0), (1, 0, 0.0), (2, 0, 0.0)]);
        assert_eq!(ucb_select(&t, StateId(0), 1.4).unwrap(), ActionId(1));
    }

    #[test]
    fn exploration_bonus_arithmetic() {
        // N(s)=10; (Q=0.5, N=4) scores 1.450, (Q=0.2, N=1) scores 1.702
        let mut t = tree_with(&[(0, 4, 2.0), (1, 1, 0.2)]);
        t.nodes.get_mut(&StateId(0)).unwrap().visits = 10;
        let ln10 = 10f64.ln();
        let first = 0.5 + 1.4 * (ln10 / 5.0).sqrt();
        let second = 0.2 + 1.4 * (ln10 / 2.0).sqrt();
        assert!((first - 1.450).abs() < 5e-4 && (second - 1.702).abs() < 5e-4);
        assert_eq!(ucb_select(&t, StateId(0), 1.4).unwrap(), ActionId(1));
    }

    #[test]
    fn zero_exploration_is_greedy_in_q() {
        let t = tree_with(&[(0, 9, 0.9), (1, 1, 0.5), (2, 3, 0.6)]);
        assert_eq!(ucb_select(&t, StateId(0), 0.0).unwrap(), ActionId(1));
    }

    #[test]
    fn unexpanded_node_errors() {
        let t = SearchTree::new();
        assert!(matches!(ucb_select(&t, StateId(4), 1.0), Err(HorizonError::UnexpandedNode(_))));
    }

    #[test]
    fn backup_credits_repeated_pairs_once() {
        let mut t = SearchTree::new();
        t.expand(StateId(0), &[ActionId(0)]);
        let path = [(StateId(0), ActionId(0)), (StateId(0), ActionId(0))];
        t.backup(&path, 2.0);
        assert_eq!(t.visits(StateId(0), ActionId(0)), Some(1));
        assert_eq!(t.q(StateId(0), ActionId(0)), Some(2.0));
        assert_eq!(t.node(StateId(0)).unwrap().visits, 1);
    }
}
