mod common;

use horizonlab::diagnostics::first_error;
use horizonlab::env::{random_environment, run_episode, ActionId, BudgetMeter, RandomEnvSpec, StateId, Trajectory};
use horizonlab::flare::{plan, ExactEvaluator, FirstK, FlareConfig, Similarity};
use horizonlab::graph::{generate_instance, GraphInstanceSpec};
use horizonlab::policies::{truncated_value, Continuation, LookaheadConfig, LookaheadPolicy};
use proptest::prelude::*;

fn small_env(seed: u64, n: usize, h: usize) -> horizonlab::env::Environment {
    random_environment(&RandomEnvSpec {
        seed,
        num_states: n,
        max_actions: 3,
        episode_horizon: h,
        answer_probability: 0.15,
    })
    .unwrap()
}

proptest! {
    #[test]
    fn q_tilde_matches_recursive_oracle(seed in 0u64..10_000, n in 2usize..10, k in 1usize..4) {
        let env = small_env(seed, n, 4);
        for s in 0..n {
            let s = StateId(s as u32);
            for a in 0..env.num_actions(s) {
                let a = ActionId(a as u32);
                let got = truncated_value(&env, s, a, k, Continuation::Exact, &mut BudgetMeter::new()).unwrap();
                prop_assert_eq!(got, common::q_tilde(&env, s, a, k));
            }
        }
    }

    #[test]
    fn full_horizon_lookahead_is_optimal(seed in 0u64..10_000, n in 2usize..10, h in 1usize..6) {
        let env = small_env(seed, n, h);
        let mut p = LookaheadPolicy::new(LookaheadConfig::with_k(h)).unwrap();
        let t = run_episode(&env, &mut p, 0, &mut BudgetMeter::new()).unwrap();
        prop_assert_eq!(t.cumulative_return, common::best_return(&env, env.initial_state(), h));
    }

    #[test]
    fn graph_oracle_matches_forward_bfs(seed in 0u64..500, d in 1usize..6) {
        let spec = GraphInstanceSpec { seed, answer_distance: d, ..GraphInstanceSpec::default() };
        let (env, oracle) = generate_instance(&spec).unwrap();
        prop_assert_eq!(&oracle.dist, &common::bfs_distances(&env));
        prop_assert_eq!(oracle.dist(env.initial_state()), Some(d as u32));
    }

    #[test]
    fn jaccard_matches_counting(
        a in prop::collection::vec((0u32..4, 0u32..3), 0..6),
        b in prop::collection::vec((0u32..4, 0u32..3), 0..6),
    ) {
        let build = |pairs: &[(u32, u32)]| {
            let mut t = Trajectory::new(StateId(pairs.first().map_or(0, |p| p.0)));
            for w in pairs.windows(2) {
                t.push(ActionId(w[0].1), StateId(w[1].0), 0.0);
            }
            if let Some(&(_, last)) = pairs.last() {
                t.push(ActionId(last), StateId(9), 0.0);
            }
            t
        };
        let (ta, tb) = (build(&a), build(&b));
        prop_assert_eq!(Similarity::Jaccard.between(&ta, &tb), common::jaccard(&ta, &tb));
    }

    #[test]
    fn plan_tree_agrees_with_log_replay(seed in 0u64..2_000, sims in 1usize..40) {
        let env = small_env(seed, 10, 5);
        let cfg = FlareConfig { simulations: sims, ..FlareConfig::default() };
        let mut memory = cfg.new_memory();
        let out = plan(&env, env.initial_state(), 5, &cfg, &mut FirstK, &mut ExactEvaluator, &mut memory, &mut BudgetMeter::new());
        let Ok(out) = out else { return Ok(()) };
        let replay = common::replay_edges(&out.simulations);
        for (s, node) in out.tree.nodes() {
            for e in node.edges.iter().filter(|e| e.visits > 0) {
                let (n, sum) = replay[&(s, e.action)];
                prop_assert_eq!(e.visits, n);
                prop_assert!((e.q() - sum / n as f64).abs() <= 1e-12);
            }
        }
        let root = out.tree.node(env.initial_state()).unwrap();
        prop_assert_eq!(root.edges.iter().map(|e| e.visits).sum::<u64>(), sims as u64);
    }
}

#[test]
fn first_error_matches_shortest_path_enumeration() {
    for seed in 0..60 {
        let spec = GraphInstanceSpec { seed, answer_distance: 2 + (seed as usize % 3), ..GraphInstanceSpec::default() };
        let (env, oracle) = generate_instance(&spec).unwrap();
        let dist = common::bfs_distances(&env);
        // a random walk over the episode horizon, driven by the seed
        let mut s = env.initial_state();
        let mut t = Trajectory::new(s);
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        while t.len() < env.episode_horizon() && !env.is_terminal(s) {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ActionId(((x >> 33) % env.num_actions(s) as u64) as u32);
            let e = &env.actions(s)[a.index()];
            t.push(a, e.to, e.reward);
            s = e.to;
        }
        assert_eq!(first_error(&t, &oracle), common::first_error_by_enumeration(&env, &dist, &t), "seed {seed}");
    }
}

#[test]
fn ten_state_instance_first_error() {
    let spec = GraphInstanceSpec {
        seed: 3,
        answer_distance: 2,
        branching: (2, 3),
        layer_width: 1,
        ..GraphInstanceSpec::default()
    };
    let (env, oracle) = generate_instance(&spec).unwrap();
    assert!(env.num_states() <= 12, "{} states", env.num_states());
    let dist = common::bfs_distances(&env);
    for t in horizonlab::analysis::enumerate_trajectories(&env, env.initial_state(), env.episode_horizon()) {
        assert_eq!(first_error(&t, &oracle), common::first_error_by_enumeration(&env, &dist, &t));
    }
}
