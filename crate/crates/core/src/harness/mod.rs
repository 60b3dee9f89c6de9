//! Experiment orchestration: campaign configuration, seeded parallel
//! episode execution, proposition checks and budget sweeps.

mod props;
mod sweep;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use props::{
    run_proposition_suite, BeamTrapGrid, ChainPoint, GreedyTrapGrid, PropCheck, PropositionReport, PropsGrid,
};
pub use sweep::{run_budget_sweep, write_sweep_csv, AxisParam, BudgetAxis, SweepPoint};

use crate::adversarial::{
    make_beam_trap, make_greedy_trap, make_lookahead_chain, BeamTrapParams, GreedyTrapParams, LookaheadChainParams,
};
use crate::diagnostics::{
    build_record, summarize, write_records_jsonl, CampaignSummary, DiagnosticRecord, EpisodeContext, FailureThresholds,
};
use crate::env::{BudgetMeter, Environment, Trajectory};
use crate::error::{HorizonError, Result};
use crate::flare::{
    ExactEvaluator, FlareConfig, FlarePolicy, Proposer, RemoteEvaluator, RemoteProposer, TrajectoryEvaluator,
    DEFAULT_REMOTE_TIMEOUT,
};
use crate::graph::{
    compute_oracle, generate_labeled_instance, GraphInstanceSpec, OracleInfo, TrapLabeling, DEFAULT_TOP_TIER_QUANTILE,
};
use crate::policies::{BeamConfig, BeamPolicy, DecisionPolicy, GreedyPolicy, LookaheadConfig, LookaheadPolicy};
use crate::schema::EnvDocument;

pub const PROPOSER_URL_VAR: &str = "HORIZONLAB_PROPOSER_URL";
pub const EVALUATOR_URL_VAR: &str = "HORIZONLAB_EVALUATOR_URL";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    Greedy,
    Beam,
    Lookahead,
    Flare,
}

impl PolicyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Greedy => "greedy",
            PolicyKind::Beam => "beam",
            PolicyKind::Lookahead => "lookahead",
            PolicyKind::Flare => "flare",
        }
    }
}

/// A policy entry of a campaign: kind, its config object (defaults when
/// omitted) and an optional display name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub policy: PolicyKind,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

/// Parsed policy configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum PolicySpec {
    Greedy,
    Beam(BeamConfig),
    Lookahead(LookaheadConfig),
    Flare(FlareConfig),
}

fn parse_config<T: for<'de> Deserialize<'de> + Default>(v: &serde_json::Value, what: &str) -> Result<T> {
    if v.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(v.clone()).map_err(|e| HorizonError::Config(format!("{what} config: {e}")))
}

impl PolicyEntry {
    pub fn new(policy: PolicyKind) -> Self {
        Self { policy, config: serde_json::Value::Null, name: None }
    }

    pub fn with_config<T: Serialize>(policy: PolicyKind, config: &T) -> Self {
        Self { policy, config: serde_json::to_value(config).expect("configs serialize"), name: None }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.policy.as_str().to_string())
    }

    pub fn spec(&self) -> Result<PolicySpec> {
        let spec = match self.policy {
            PolicyKind::Greedy => {
                if !(self.config.is_null() || self.config.as_object().is_some_and(|o| o.is_empty())) {
                    return Err(HorizonError::Config("greedy takes no configuration".into()));
                }
                PolicySpec::Greedy
            }
            PolicyKind::Beam => {
                let c: BeamConfig = parse_config(&self.config, "beam")?;
                c.validate().map_err(|e| HorizonError::Config(e.to_string()))?;
                PolicySpec::Beam(c)
            }
            PolicyKind::Lookahead => {
                let c: LookaheadConfig = parse_config(&self.config, "lookahead")?;
                c.validate().map_err(|e| HorizonError::Config(e.to_string()))?;
                PolicySpec::Lookahead(c)
            }
            PolicyKind::Flare => {
                let c: FlareConfig = parse_config(&self.config, "flare")?;
                c.validate().map_err(|e| HorizonError::Config(e.to_string()))?;
                PolicySpec::Flare(c)
            }
        };
        Ok(spec)
    }
}

/// Endpoints of the external proposer and evaluator, if any.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RemoteSettings {
    pub proposer_url: Option<String>,
    pub evaluator_url: Option<String>,
    pub timeout: Option<Duration>,
}

impl RemoteSettings {
    /// Read [`PROPOSER_URL_VAR`] and [`EVALUATOR_URL_VAR`]; empty values are
    /// treated as unset.
    pub fn from_env() -> Self {
        let var = |k| std::env::var(k).ok().filter(|v: &String| !v.is_empty());
        Self { proposer_url: var(PROPOSER_URL_VAR), evaluator_url: var(EVALUATOR_URL_VAR), timeout: None }
    }
}

impl PolicySpec {
    /// Fresh policy instance; FLARE picks up remote endpoints when set.
    pub fn build(&self, remote: &RemoteSettings) -> Result<Box<dyn DecisionPolicy>> {
        Ok(match self {
            PolicySpec::Greedy => Box::new(GreedyPolicy),
            PolicySpec::Beam(c) => Box::new(BeamPolicy::new(c.clone())?),
            PolicySpec::Lookahead(c) => Box::new(LookaheadPolicy::new(c.clone())?),
            PolicySpec::Flare(c) => {
                let timeout = remote.timeout.unwrap_or(DEFAULT_REMOTE_TIMEOUT);
                let proposer: Box<dyn Proposer> = match &remote.proposer_url {
                    Some(url) => Box::new(RemoteProposer::new(url, timeout)),
                    None => c.proposer.build(),
                };
                let evaluator: Box<dyn TrajectoryEvaluator> = match &remote.evaluator_url {
                    Some(url) => Box::new(RemoteEvaluator::new(url, timeout)),
                    None => Box::new(ExactEvaluator),
                };
                Box::new(FlarePolicy::with_components(c.clone(), proposer, evaluator)?)
            }
        })
    }
}

fn default_distances() -> Vec<usize> {
    vec![2, 3, 4, 5]
}

fn default_quantile() -> f64 {
    DEFAULT_TOP_TIER_QUANTILE
}

/// Where campaign episodes come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSource {
    GreedyTrap {
        params: GreedyTrapParams,
    },
    BeamTrap {
        params: BeamTrapParams,
    },
    LookaheadChain {
        params: LookaheadChainParams,
    },
    /// Synthetic graph instances. Episode `i` uses `seed = base_seed + i`
    /// and `answer_distance = answer_distances[i % len]`; every other field
    /// comes from `spec`.
    Graph {
        #[serde(default)]
        spec: GraphInstanceSpec,
        #[serde(default = "default_distances")]
        answer_distances: Vec<usize>,
        #[serde(default = "default_quantile")]
        top_tier_quantile: f64,
    },
    /// A fixed environment file; trap labels are read from it when present.
    File {
        path: PathBuf,
    },
}

/// One episode's environment with its oracle data.
#[derive(Clone, Debug)]
pub struct EpisodeInstance {
    pub env: Environment,
    pub oracle: OracleInfo,
    pub traps: Option<TrapLabeling>,
}

impl EpisodeInstance {
    fn plain(env: Environment) -> Self {
        let oracle = compute_oracle(&env);
        Self { env, oracle, traps: None }
    }
}

enum Factory {
    Fixed(EpisodeInstance),
    Graph { spec: GraphInstanceSpec, distances: Vec<usize>, quantile: f64 },
}

impl EnvSource {
    fn factory(&self) -> Result<Factory> {
        let fixed = |r: Result<crate::adversarial::Counterexample>| -> Result<Factory> {
            let ce = r.map_err(|e| HorizonError::Config(e.to_string()))?;
            Ok(Factory::Fixed(EpisodeInstance::plain(ce.env)))
        };
        match self {
            EnvSource::GreedyTrap { params } => fixed(make_greedy_trap(params)),
            EnvSource::BeamTrap { params } => fixed(make_beam_trap(params)),
            EnvSource::LookaheadChain { params } => fixed(make_lookahead_chain(params)),
            EnvSource::Graph { spec, answer_distances, top_tier_quantile } => {
                if answer_distances.is_empty() {
                    return Err(HorizonError::Config("answer_distances must not be empty".into()));
                }
                if !(*top_tier_quantile > 0.0 && *top_tier_quantile <= 1.0) {
                    return Err(HorizonError::Config("top_tier_quantile must lie in (0, 1]".into()));
                }
                spec.validate().map_err(|e| HorizonError::Config(e.to_string()))?;
                Ok(Factory::Graph {
                    spec: spec.clone(),
                    distances: answer_distances.clone(),
                    quantile: *top_tier_quantile,
                })
            }
            EnvSource::File { path } => {
                let doc =
                    EnvDocument::read(path).map_err(|e| HorizonError::Config(format!("{}: {e}", path.display())))?;
                let env = doc.to_env().map_err(|e| HorizonError::Config(format!("{}: {e}", path.display())))?;
                let mut inst = EpisodeInstance::plain(env);
                if let Some(labels) = doc.traps {
                    inst.traps = Some(TrapLabeling { labels, initial_excluded: false });
                }
                Ok(Factory::Fixed(inst))
            }
        }
    }
}

impl Factory {
    fn instance(&self, seed: u64, index: usize) -> Result<EpisodeInstance> {
        match self {
            Factory::Fixed(i) => Ok(i.clone()),
            Factory::Graph { spec, distances, quantile } => {
                let spec =
                    GraphInstanceSpec { seed, answer_distance: distances[index % distances.len()], ..spec.clone() };
                let g = generate_labeled_instance(&spec, *quantile)?;
                Ok(EpisodeInstance { env: g.env, oracle: g.oracle, traps: Some(g.traps) })
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputPaths {
    pub records: Option<PathBuf>,
    pub summary_json: Option<PathBuf>,
    pub summary_csv: Option<PathBuf>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub env: EnvSource,
    pub policies: Vec<PolicyEntry>,
    pub episodes: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "one")]
    pub parallel_workers: usize,
    #[serde(default)]
    pub failure_thresholds: FailureThresholds,
    /// Weights for (transition, surrogate, proposer, evaluator) calls in the
    /// sweep's weighted cost column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_weights: Option<[f64; 4]>,
    #[serde(default)]
    pub outputs: OutputPaths,
}

impl CampaignConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HorizonError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| HorizonError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(HorizonError::Config("episodes must be at least 1".into()));
        }
        if self.policies.is_empty() {
            return Err(HorizonError::Config("at least one policy is required".into()));
        }
        if self.parallel_workers == 0 {
            return Err(HorizonError::Config("parallel_workers must be at least 1".into()));
        }
        let mut names = Vec::new();
        for p in &self.policies {
            p.spec()?;
            let n = p.label();
            if names.contains(&n) {
                return Err(HorizonError::Config(format!("duplicate policy name {n:?}; set distinct names")));
            }
            names.push(n);
        }
        Ok(())
    }

    /// Seed of episode `index`: `base_seed + index` (wrapping).
    pub fn episode_seed(&self, index: usize) -> u64 {
        self.base_seed.wrapping_add(index as u64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedEpisode {
    pub index: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct CampaignOutcome {
    /// Episode-major, policies in configuration order.
    pub records: Vec<DiagnosticRecord>,
    pub summary: CampaignSummary,
    pub skipped: Vec<SkippedEpisode>,
}

/// Run one episode, keeping the partial trajectory if the policy or the
/// environment fails.
pub fn execute_episode(
    env: &Environment,
    policy: &mut dyn DecisionPolicy,
    seed: u64,
) -> (Trajectory, BudgetMeter, Option<HorizonError>) {
    let mut meter = BudgetMeter::new();
    policy.reset(seed);
    let mut traj = Trajectory::new(env.initial_state());
    let mut s = env.initial_state();
    while traj.len() < env.episode_horizon() && !env.is_terminal(s) {
        let remaining = env.episode_horizon() - traj.len();
        let step = policy.decide(env, s, remaining, &mut meter).and_then(|a| Ok((a, env.step(s, a, &mut meter)?)));
        match step {
            Ok((a, (next, r))) => {
                traj.push(a, next, r);
                s = next;
            }
            Err(e) => return (traj, meter, Some(e)),
        }
    }
    (traj, meter, None)
}

fn run_episode_set(
    index: usize,
    seed: u64,
    factory: &Factory,
    policies: &[(String, PolicySpec)],
    thresholds: FailureThresholds,
    remote: &RemoteSettings,
) -> std::result::Result<Vec<DiagnosticRecord>, SkippedEpisode> {
    let inst = factory.instance(seed, index).map_err(|e| SkippedEpisode { index, reason: e.to_string() })?;
    let ctx = EpisodeContext { env: &inst.env, oracle: &inst.oracle, traps: inst.traps.as_ref(), thresholds };
    let records = policies
        .iter()
        .map(|(name, spec)| {
            let (traj, meter, err) = match spec.build(remote) {
                Ok(mut p) => execute_episode(&inst.env, p.as_mut(), seed),
                Err(e) => (Trajectory::new(inst.env.initial_state()), BudgetMeter::new(), Some(e)),
            };
            build_record(&ctx, index as u64, name, seed, &traj, meter, err.map(|e| e.to_string()))
        })
        .collect();
    Ok(records)
}

/// Run every policy on every episode. Deterministic given the config:
/// results are merged in episode order whatever the worker count.
pub fn run_campaign(cfg: &CampaignConfig, remote: &RemoteSettings) -> Result<CampaignOutcome> {
    cfg.validate()?;
    let factory = cfg.env.factory()?;
    let policies: Vec<(String, PolicySpec)> =
        cfg.policies.iter().map(|p| Ok((p.label(), p.spec()?))).collect::<Result<_>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallel_workers)
        .build()
        .map_err(|e| HorizonError::Config(format!("worker pool: {e}")))?;
    let results: Vec<_> = pool.install(|| {
        (0..cfg.episodes)
            .into_par_iter()
            .map(|i| run_episode_set(i, cfg.episode_seed(i), &factory, &policies, cfg.failure_thresholds, remote))
            .collect()
    });
    let mut records = Vec::with_capacity(cfg.episodes * policies.len());
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(rs) => records.extend(rs),
            Err(s) => skipped.push(s),
        }
    }
    let summary = summarize(&records)?;
    Ok(CampaignOutcome { records, summary, skipped })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

impl CampaignOutcome {
    pub fn write_records(&self, path: &Path) -> Result<()> {
        write_records_jsonl(create(path)?, &self.records)
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        self.summary.write_csv(create(path)?)
    }

    pub fn write_summary_json(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, &self.summary)?;
        std::io::Write::write_all(&mut w, b"\n")?;
        Ok(())
    }

    /// Write whichever outputs are configured.
    pub fn write_outputs(&self, paths: &OutputPaths) -> Result<()> {
        if let Some(p) = &paths.records {
            self.write_records(p)?;
        }
        if let Some(p) = &paths.summary_json {
            self.write_summary_json(p)?;
        }
        if let Some(p) = &paths.summary_csv {
            self.write_summary_csv(p)?;
        }
        Ok(())
    }
}
