//! Planning-behaviour metrics computed from an episode trajectory and the
//! oracle distances of its instance, plus their aggregation over a
//! campaign.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::env::{BudgetMeter, Environment, Trajectory};
use crate::error::{HorizonError, Result};
use crate::graph::{OracleInfo, TrapLabeling};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureCategory {
    MyopicDeviation,
    DeadEnd,
    Loop,
    Premature,
    None,
}

impl FailureCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureCategory::MyopicDeviation => "myopic_deviation",
            FailureCategory::DeadEnd => "dead_end",
            FailureCategory::Loop => "loop",
            FailureCategory::Premature => "premature",
            FailureCategory::None => "none",
        }
    }
}

/// Knobs of the failure precedence rules.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FailureThresholds {
    /// A state visited at least this often marks a loop.
    pub loop_visits: usize,
    /// Reachability lost at a step `<= ceil(horizon / early_divisor)`
    /// counts as a myopic deviation.
    pub early_divisor: usize,
}

impl Default for FailureThresholds {
    fn default() -> Self {
        Self { loop_visits: 3, early_divisor: 3 }
    }
}

impl FailureThresholds {
    pub fn early_cutoff(&self, horizon: usize) -> usize {
        horizon.div_ceil(self.early_divisor.max(1))
    }
}

/// Per-episode diagnostics, one JSON Lines record each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRecord {
    pub instance_id: u64,
    pub policy_name: String,
    pub seed: u64,
    /// Oracle distance from the initial state, when the instance has one.
    pub answer_distance: Option<u32>,
    pub success: bool,
    pub trap_at_1: Option<bool>,
    pub first_error_step: Option<usize>,
    pub recovered: Option<bool>,
    pub failure_category: FailureCategory,
    pub steps: usize,
    pub episode_return: f64,
    pub budget: BudgetMeter,
    /// Set when the policy or environment failed mid-episode; the other
    /// fields then describe the partial trajectory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// 1-based index of the first step that leaves every shortest solution
/// path, i.e. the first step along which the oracle distance does not drop
/// by exactly one. `None` when no step does.
pub fn first_error(traj: &Trajectory, oracle: &OracleInfo) -> Option<usize> {
    traj.states
        .windows(2)
        .position(|w| match (oracle.dist(w[0]), oracle.dist(w[1])) {
            (Some(a), Some(b)) => a == 0 || b + 1 != a,
            _ => true,
        })
        .map(|i| i + 1)
}

/// Whether the first executed action is a labeled trap. `None` when the
/// instance was excluded during labeling, has no trap at the initial state,
/// or the episode took no step.
pub fn trap_at_1(traj: &Trajectory, labels: &TrapLabeling) -> Option<bool> {
    let s0 = traj.start();
    if labels.initial_excluded || labels.traps_at(s0) == 0 {
        return None;
    }
    traj.actions.first().map(|&a| labels.is_trap(s0, a))
}

/// Whether an episode that deviated at `first_err` still ended at an
/// answer.
pub fn recovery(env: &Environment, traj: &Trajectory, first_err: usize) -> bool {
    first_err <= traj.len() && env.is_answer(traj.last_state())
}

/// Dominant failure mechanism of an unsuccessful episode, by precedence:
/// loop, premature stop, early loss of reachability, dead end.
pub fn categorize_failure(
    env: &Environment,
    traj: &Trajectory,
    oracle: &OracleInfo,
    thresholds: &FailureThresholds,
) -> FailureCategory {
    if env.is_answer(traj.last_state()) {
        return FailureCategory::None;
    }
    let mut visits: BTreeMap<_, usize> = BTreeMap::new();
    for &s in &traj.states {
        *visits.entry(s).or_default() += 1;
    }
    if visits.values().any(|&n| n >= thresholds.loop_visits) {
        return FailureCategory::Loop;
    }
    if traj.len() < env.episode_horizon() && oracle.reachable(traj.last_state()) {
        return FailureCategory::Premature;
    }
    let lost = traj.states.windows(2).position(|w| oracle.reachable(w[0]) && !oracle.reachable(w[1])).map(|i| i + 1);
    match lost {
        Some(t) if t <= thresholds.early_cutoff(env.episode_horizon()) => FailureCategory::MyopicDeviation,
        _ => FailureCategory::DeadEnd,
    }
}

/// Everything [`build_record`] needs besides the trajectory.
pub struct EpisodeContext<'a> {
    pub env: &'a Environment,
    pub oracle: &'a OracleInfo,
    pub traps: Option<&'a TrapLabeling>,
    pub thresholds: FailureThresholds,
}

pub fn build_record(
    ctx: &EpisodeContext<'_>,
    instance_id: u64,
    policy_name: &str,
    seed: u64,
    traj: &Trajectory,
    budget: BudgetMeter,
    error: Option<String>,
) -> DiagnosticRecord {
    let success = ctx.env.is_answer(traj.last_state());
    let first_error_step = first_error(traj, ctx.oracle);
    DiagnosticRecord {
        instance_id,
        policy_name: policy_name.to_string(),
        seed,
        answer_distance: ctx.oracle.dist(traj.start()),
        success,
        trap_at_1: ctx.traps.and_then(|t| trap_at_1(traj, t)),
        first_error_step,
        recovered: first_error_step.map(|e| recovery(ctx.env, traj, e)),
        failure_category: categorize_failure(ctx.env, traj, ctx.oracle, &ctx.thresholds),
        steps: traj.len(),
        episode_return: traj.cumulative_return,
        budget,
        error,
    }
}

/// Mean call counts per episode.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanBudget {
    pub transition_calls: f64,
    pub surrogate_calls: f64,
    pub proposer_calls: f64,
    pub evaluator_calls: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryCount {
    pub episodes: usize,
    pub recovered: usize,
}

/// Aggregates over one group of records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub episodes: usize,
    pub errors: usize,
    pub success_rate: f64,
    /// Over records where Trap@1 applies; `None` if there are none.
    pub trap_at_1_rate: Option<f64>,
    pub trap_at_1_applicable: usize,
    /// Over records with a first error; episodes without one are excluded
    /// and counted in `first_error_excluded`.
    pub mean_first_error_step: Option<f64>,
    pub first_error_excluded: usize,
    pub recovery_rate: Option<f64>,
    /// Fraction still on a shortest-path prefix after step `t + 1`.
    pub prefix_survival: Vec<f64>,
    pub recovery_by_first_error: BTreeMap<usize, RecoveryCount>,
    pub failure_histogram: BTreeMap<FailureCategory, usize>,
    pub mean_budget: MeanBudget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub overall: GroupSummary,
    /// Keyed by answer distance.
    pub strata: BTreeMap<u32, GroupSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub policies: Vec<PolicySummary>,
}

fn mean(sum: f64, n: usize) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

fn summarize_group(records: &[&DiagnosticRecord]) -> GroupSummary {
    let n = records.len();
    let successes = records.iter().filter(|r| r.success).count();
    let trap: Vec<bool> = records.iter().filter_map(|r| r.trap_at_1).collect();
    let errs: Vec<usize> = records.iter().filter_map(|r| r.first_error_step).collect();
    let rec: Vec<bool> = records.iter().filter_map(|r| r.recovered).collect();

    let longest = records.iter().map(|r| r.steps).max().unwrap_or(0);
    let prefix_survival = (1..=longest)
        .map(|t| records.iter().filter(|r| r.first_error_step.is_none_or(|e| e > t)).count() as f64 / n as f64)
        .collect();

    let mut recovery_by_first_error: BTreeMap<usize, RecoveryCount> = BTreeMap::new();
    for r in records {
        if let (Some(e), Some(ok)) = (r.first_error_step, r.recovered) {
            let c = recovery_by_first_error.entry(e).or_default();
            c.episodes += 1;
            c.recovered += usize::from(ok);
        }
    }
    let mut failure_histogram = BTreeMap::new();
    for r in records.iter().filter(|r| !r.success) {
        *failure_histogram.entry(r.failure_category).or_insert(0) += 1;
    }
    let total = records.iter().fold(BudgetMeter::new(), |mut acc, r| {
        acc.accumulate(&r.budget);
        acc
    });
    let per = |x: u64| x as f64 / n as f64;
    GroupSummary {
        episodes: n,
        errors: records.iter().filter(|r| r.error.is_some()).count(),
        success_rate: successes as f64 / n as f64,
        trap_at_1_rate: mean(trap.iter().filter(|&&t| t).count() as f64, trap.len()),
        trap_at_1_applicable: trap.len(),
        mean_first_error_step: mean(errs.iter().sum::<usize>() as f64, errs.len()),
        first_error_excluded: n - errs.len(),
        recovery_rate: mean(rec.iter().filter(|&&t| t).count() as f64, rec.len()),
        prefix_survival,
        recovery_by_first_error,
        failure_histogram,
        mean_budget: MeanBudget {
            transition_calls: per(total.transition_calls),
            surrogate_calls: per(total.surrogate_calls),
            proposer_calls: per(total.proposer_calls),
            evaluator_calls: per(total.evaluator_calls),
        },
    }
}

/// Aggregate records per policy (in order of first appearance) and per
/// answer-distance stratum.
pub fn summarize(records: &[DiagnosticRecord]) -> Result<CampaignSummary> {
    if records.is_empty() {
        return Err(HorizonError::EmptyInput);
    }
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.policy_name.as_str()) {
            order.push(&r.policy_name);
        }
    }
    let policies = order
        .into_iter()
        .map(|name| {
            let mine: Vec<&DiagnosticRecord> = records.iter().filter(|r| r.policy_name == name).collect();
            let mut by_d: BTreeMap<u32, Vec<&DiagnosticRecord>> = BTreeMap::new();
            for r in &mine {
                if let Some(d) = r.answer_distance {
                    by_d.entry(d).or_default().push(r);
                }
            }
            PolicySummary {
                policy: name.to_string(),
                overall: summarize_group(&mine),
                strata: by_d.into_iter().map(|(d, rs)| (d, summarize_group(&rs))).collect(),
            }
        })
        .collect();
    Ok(CampaignSummary { policies })
}

pub fn write_records_jsonl<W: Write>(mut out: W, records: &[DiagnosticRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records_jsonl(text: &str) -> Result<Vec<DiagnosticRecord>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

#[derive(Serialize)]
struct CsvRow<'a> {
    policy: &'a str,
    answer_distance: String,
    episodes: usize,
    errors: usize,
    success_rate: f64,
    trap_at_1_rate: Option<f64>,
    mean_first_error_step: Option<f64>,
    first_error_excluded: usize,
    recovery_rate: Option<f64>,
    mean_transition_calls: f64,
    mean_surrogate_calls: f64,
    mean_proposer_calls: f64,
    mean_evaluator_calls: f64,
}

impl CampaignSummary {
    pub fn policy(&self, name: &str) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.policy == name)
    }

    /// One row per policy and stratum; the `all` row covers every record of
    /// the policy.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.policies {
            let groups = std::iter::once(("all".to_string(), &p.overall))
                .chain(p.strata.iter().map(|(d, g)| (d.to_string(), g)));
            for (stratum, g) in groups {
                w.serialize(CsvRow {
                    policy: &p.policy,
                    answer_distance: stratum,
                    episodes: g.episodes,
                    errors: g.errors,
                    success_rate: g.success_rate,
                    trap_at_1_rate: g.trap_at_1_rate,
                    mean_first_error_step: g.mean_first_error_step,
                    first_error_excluded: g.first_error_excluded,
                    recovery_rate: g.recovery_rate,
                    mean_transition_calls: g.mean_budget.transition_calls,
                    mean_surrogate_calls: g.mean_budget.surrogate_calls,
                    mean_proposer_calls: g.mean_budget.proposer_calls,
                    mean_evaluator_calls: g.mean_budget.evaluator_calls,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvironmentBuilder, StateId};
    use crate::graph::compute_oracle;

    /// 0 -> 1 -> 2 (answer), 0 -> 3 (dead end), 1 <-> 4 cycle, 4 -> 3.
    fn env() -> Environment {
        let mut b = EnvironmentBuilder::with_states(6, 5);
        b.add_edge(StateId(0), "p", StateId(1), 0.0, 0.0);
        b.add_edge(StateId(0), "x", StateId(3), 0.0, 0.0);
        b.add_edge(StateId(1), "p", StateId(2), 1.0, 0.0);
        b.add_edge(StateId(1), "c", StateId(4), 0.0, 0.0);
        b.add_edge(StateId(4), "c", StateId(1), 0.0, 0.0);
        b.add_edge(StateId(4), "d", StateId(3), 0.0, 0.0);
        b.add_edge(StateId(3), "z", StateId(3), 0.0, 0.0);
        b.add_answer(StateId(2));
        b.build().unwrap()
    }

    fn walk(env: &Environment, labels: &[&str]) -> Trajectory {
        let mut t = Trajectory::new(env.initial_state());
        let mut s = env.initial_state();
        for l in labels {
            let a = env.action_by_label(s, l).unwrap();
            let e = env.edge(s, a).unwrap();
            t.push(a, e.to, e.reward);
            s = e.to;
        }
        t
    }

    #[test]
    fn first_error_cases() {
        let e = env();
        let o = compute_oracle(&e);
        assert_eq!(first_error(&walk(&e, &["p", "p"]), &o), None);
        assert_eq!(first_error(&walk(&e, &["x"]), &o), Some(1));
        assert_eq!(first_error(&walk(&e, &["p", "c", "c", "p"]), &o), Some(2));
    }

    #[test]
    fn recovery_after_detour() {
        let e = env();
        let t = walk(&e, &["p", "c", "c", "p"]);
        assert!(recovery(&e, &t, 2));
        assert!(!recovery(&e, &walk(&e, &["x", "z"]), 1));
    }

    #[test]
    fn failure_precedence() {
        let e = env();
        let o = compute_oracle(&e);
        let th = FailureThresholds::default();
        assert_eq!(categorize_failure(&e, &walk(&e, &["p", "p"]), &o, &th), FailureCategory::None);
        let looped = walk(&e, &["p", "c", "c", "c", "c", "c"]);
        assert_eq!(categorize_failure(&e, &looped, &o, &th), FailureCategory::Loop);
        assert_eq!(categorize_failure(&e, &walk(&e, &["p", "c"]), &o, &th), FailureCategory::Premature);
        let dead = walk(&e, &["x", "z", "z"]);
        assert_eq!(
            categorize_failure(&e, &dead, &o, &FailureThresholds { loop_visits: 9, early_divisor: 3 }),
            FailureCategory::MyopicDeviation
        );
        // reachability lost at step 3, past ceil(6 / 3) = 2
        let late = walk(&e, &["p", "c", "d", "z", "z", "z"]);
        assert_eq!(
            categorize_failure(&e, &late, &o, &FailureThresholds { loop_visits: 9, early_divisor: 3 }),
            FailureCategory::DeadEnd
        );
    }

    #[test]
    fn summary_basics() {
        let rec = |policy: &str, trap: Option<bool>, success: bool| DiagnosticRecord {
            instance_id: 0,
            policy_name: policy.into(),
            seed: 0,
            answer_distance: Some(2),
            success,
            trap_at_1: trap,
            first_error_step: (!success).then_some(1),
            recovered: (!success).then_some(false),
            failure_category: if success { FailureCategory::None } else { FailureCategory::DeadEnd },
            steps: 2,
            episode_return: 0.0,
            budget: BudgetMeter { transition_calls: 2, ..BudgetMeter::new() },
            error: None,
        };
        let s = summarize(&[rec("g", Some(true), false), rec("g", Some(false), true), rec("f", None, true)]).unwrap();
        let g = &s.policy("g").unwrap().overall;
        assert_eq!(g.trap_at_1_rate, Some(0.5));
        assert_eq!(g.success_rate, 0.5);
        assert_eq!(g.prefix_survival, vec![0.5, 0.5]);
        assert_eq!(g.mean_budget.transition_calls, 2.0);
        let f = &s.policy("f").unwrap().overall;
        assert_eq!(f.trap_at_1_rate, None);
        assert!(f.failure_histogram.is_empty());
        assert_eq!(f.first_error_excluded, 1);
        assert_eq!(s.policies[0].policy, "g");
        assert!(matches!(summarize(&[]), Err(HorizonError::EmptyInput)));

        let mut csv = Vec::new();
        s.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().count(), 1 + 4);
        assert!(text.lines().nth(1).unwrap().starts_with("g,all,2,"));
    }

    #[test]
    fn records_roundtrip_through_jsonl() {
        let e = env();
        let o = compute_oracle(&e);
        let ctx = EpisodeContext { env: &e, oracle: &o, traps: None, thresholds: FailureThresholds::default() };
        let t = walk(&e, &["p", "c"]);
        let r = build_record(&ctx, 3, "greedy", 7, &t, BudgetMeter::new(), Some("boom".into()));
        assert_eq!(r.answer_distance, Some(2));
        assert_eq!(r.first_error_step, Some(2));
        assert_eq!(r.recovered, Some(false));
        let mut buf = Vec::new();
        write_records_jsonl(&mut buf, std::slice::from_ref(&r)).unwrap();
        let back = read_records_jsonl(std::str::from_utf8(&buf).unwrap()).unwrap();
        assert_eq!(back, vec![r]);
    }
}
