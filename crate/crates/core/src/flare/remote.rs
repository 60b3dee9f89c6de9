//! HTTP clients for an external proposer and trajectory evaluator.
//!
//! `POST {base}/propose` with `{"state": {"id", "actions"}, "k"}` answers
//! `{"actions": [label, ...]}`; `POST {base}/evaluate` with
//! `{"trajectories": [[{"state", "action"}, ...]]}` answers
//! `{"returns": [value, ...]}`. Actions travel as labels. Timeouts and
//! non-2xx replies become [`HorizonError::Remote`]; nothing is retried.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{Proposer, TrajectoryEvaluator};
use crate::env::{ActionId, Environment, StateId, Trajectory};
use crate::error::{HorizonError, Result};

pub const DEFAULT_REMOTE_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Serialize)]
struct StateDescriptor<'a> {
    id: u32,
    actions: Vec<&'a str>,
}

#[derive(Serialize)]
struct ProposeRequest<'a> {
    state: StateDescriptor<'a>,
    k: usize,
}

#[derive(Deserialize)]
struct ProposeResponse {
    actions: Vec<String>,
}

#[derive(Serialize)]
struct Step<'a> {
    state: u32,
    action: &'a str,
}

#[derive(Serialize)]
struct EvaluateRequest<'a> {
    trajectories: Vec<Vec<Step<'a>>>,
}

#[derive(Deserialize)]
struct EvaluateResponse {
    returns: Vec<f64>,
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(timeout).build()
}

fn endpoint(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path)
}

fn post<T: Serialize, R: for<'de> Deserialize<'de>>(agent: &ureq::Agent, url: &str, body: &T) -> Result<R> {
    let resp = agent.post(url).send_json(body).map_err(|e| match e {
        ureq::Error::Status(code, _) => HorizonError::Remote(format!("{url} answered HTTP {code}")),
        ureq::Error::Transport(t) => HorizonError::Remote(format!("{url}: {t}")),
    })?;
    resp.into_json::<R>().map_err(|e| HorizonError::Remote(format!("{url}: malformed response: {e}")))
}

pub struct RemoteProposer {
    url: String,
    agent: ureq::Agent,
}

impl RemoteProposer {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        Self { url: endpoint(base_url, "propose"), agent: agent(timeout) }
    }
}

impl Proposer for RemoteProposer {
    fn propose(&mut self, env: &Environment, s: StateId, k: usize) -> Result<Vec<ActionId>> {
        let actions = env.actions(s).iter().map(|e| e.label.as_str()).collect();
        let req = ProposeRequest { state: StateDescriptor { id: s.0, actions }, k };
        let resp: ProposeResponse = post(&self.agent, &self.url, &req)?;
        resp.actions
            .iter()
            .map(|label| {
                env.action_by_label(s, label)
                    .ok_or_else(|| HorizonError::Remote(format!("proposer returned unknown action {label:?} at {s}")))
            })
            .collect()
    }
}

pub struct RemoteEvaluator {
    url: String,
    agent: ureq::Agent,
}

impl RemoteEvaluator {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        Self { url: endpoint(base_url, "evaluate"), agent: agent(timeout) }
    }
}

impl TrajectoryEvaluator for RemoteEvaluator {
    fn evaluate(&mut self, env: &Environment, traj: &Trajectory) -> Result<f64> {
        let mut steps = Vec::with_capacity(traj.len());
        for (s, a) in traj.pairs() {
            steps.push(Step { state: s.0, action: env.edge(s, a)?.label.as_str() });
        }
        let req = EvaluateRequest { trajectories: vec![steps] };
        let resp: EvaluateResponse = post(&self.agent, &self.url, &req)?;
        match resp.returns.as_slice() {
            [v] if v.is_finite() => Ok(*v),
            [v] => Err(HorizonError::Remote(format!("evaluator returned non-finite value {v}"))),
            other => Err(HorizonError::Remote(format!("expected 1 return, got {}", other.len()))),
        }
    }
}
