//! JSON document format for environments.
//!
//! ```json
//! {
//!   "states": 4,
//!   "initial": 0,
//!   "answers": [3],
//!   "edges": [{"from": 0, "action_label": "go", "to": 1, "reward": 0.0, "surrogate": 1.0}],
//!   "episode_horizon": 5
//! }
//! ```
//!
//! Action order within a state is the order in which its edges appear in
//! the file. Generators may attach `optimal_return`, `traps` and `oracle`;
//! readers ignore fields they do not use.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::{Environment, EnvironmentBuilder, StateId};
use crate::error::Result;
use crate::graph::TrapLabel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub from: u32,
    pub action_label: String,
    pub to: u32,
    pub reward: f64,
    pub surrogate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvDocument {
    pub states: usize,
    pub initial: u32,
    pub answers: Vec<u32>,
    pub edges: Vec<EdgeRecord>,
    pub episode_horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimal_return: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub traps: Option<Vec<TrapLabel>>,
    /// Shortest hop count to an answer per state; `null` when unreachable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Vec<Option<u32>>>,
}

impl EnvDocument {
    pub fn from_env(env: &Environment) -> Self {
        let mut edges = Vec::new();
        for s in 0..env.num_states() {
            for e in env.actions(StateId(s as u32)) {
                edges.push(EdgeRecord {
                    from: s as u32,
                    action_label: e.label.clone(),
                    to: e.to.0,
                    reward: e.reward,
                    surrogate: e.surrogate,
                });
            }
        }
        Self {
            states: env.num_states(),
            initial: env.initial_state().0,
            answers: env.answers().into_iter().map(|s| s.0).collect(),
            edges,
            episode_horizon: env.episode_horizon(),
            optimal_return: None,
            traps: None,
            oracle: None,
        }
    }

    pub fn to_env(&self) -> Result<Environment> {
        let mut b = EnvironmentBuilder::with_states(self.episode_horizon, self.states);
        b.set_initial(StateId(self.initial));
        for &a in &self.answers {
            b.add_answer(StateId(a));
        }
        for e in &self.edges {
            if e.from as usize >= self.states {
                return Err(crate::HorizonError::InvalidEnvironment(format!("edge source s{} out of range", e.from)));
            }
            b.add_edge(StateId(e.from), e.action_label.clone(), StateId(e.to), e.reward, e.surrogate);
        }
        b.build()
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Load an environment file, ignoring generator sidecar fields.
pub fn load_environment(path: &Path) -> Result<Environment> {
    EnvDocument::read(path)?.to_env()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{random_environment, RandomEnvSpec};
    use proptest::prelude::*;

    #[test]
    fn accepts_extra_fields() {
        let text = r#"{"states":2,"initial":0,"answers":[1],"episode_horizon":3,
            "edges":[{"from":0,"action_label":"go","to":1,"reward":1.0,"surrogate":0.5}],
            "optimal_return":1.0,"comment":"ignored"}"#;
        let doc: EnvDocument = serde_json::from_str(text).unwrap();
        let env = doc.to_env().unwrap();
        assert!(env.is_answer(StateId(1)));
        assert_eq!(doc.optimal_return, Some(1.0));
    }

    #[test]
    fn rejects_out_of_range_source() {
        let text = r#"{"states":1,"initial":0,"answers":[],"episode_horizon":3,
            "edges":[{"from":4,"action_label":"go","to":0,"reward":1.0,"surrogate":0.5}]}"#;
        let doc: EnvDocument = serde_json::from_str(text).unwrap();
        assert!(doc.to_env().is_err());
    }

    proptest! {
        #[test]
        fn document_roundtrip(seed in 0u64..500, n in 1usize..12) {
            let env = random_environment(&RandomEnvSpec { seed, num_states: n, ..RandomEnvSpec::default() }).unwrap();
            let doc = EnvDocument::from_env(&env);
            let text = doc.to_json_pretty().unwrap();
            let back: EnvDocument = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back.to_env().unwrap(), env);
        }
    }
}
