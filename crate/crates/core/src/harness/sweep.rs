use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{run_campaign, CampaignConfig, PolicyEntry, PolicyKind, PolicySpec, RemoteSettings};
use crate::diagnostics::MeanBudget;
use crate::error::{HorizonError, Result};

/// Budget knob varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisParam {
    /// FLARE simulations per planning call.
    S,
    /// Beam width.
    B,
    /// Lookahead depth.
    K,
}

impl AxisParam {
    pub fn as_str(self) -> &'static str {
        match self {
            AxisParam::S => "S",
            AxisParam::B => "B",
            AxisParam::K => "k",
        }
    }
}

/// `S=1,2,4` style axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BudgetAxis {
    pub param: AxisParam,
    pub values: Vec<usize>,
}

impl FromStr for BudgetAxis {
    type Err = HorizonError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, list) = s
            .split_once('=')
            .ok_or_else(|| HorizonError::Config(format!("axis {s:?} is not of the form NAME=v1,v2")))?;
        let param = match name.trim() {
            "S" => AxisParam::S,
            "B" => AxisParam::B,
            "k" | "K" => AxisParam::K,
            other => return Err(HorizonError::Config(format!("unknown axis {other:?}; expected S, B or k"))),
        };
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<usize>()
                    .ok()
                    .filter(|&n| n > 0)
                    .ok_or_else(|| HorizonError::Config(format!("axis value {v:?} is not a positive integer")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(HorizonError::Config("axis needs at least one value".into()));
        }
        Ok(Self { param, values })
    }
}

/// Aggregates of one policy at one budget value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis: String,
    pub value: usize,
    pub policy: String,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_budget: MeanBudget,
    pub mean_cost: Option<f64>,
}

fn apply(entry: &PolicyEntry, param: AxisParam, value: usize) -> Result<PolicyEntry> {
    let spec = entry.spec()?;
    let out = match (param, spec) {
        (AxisParam::S, PolicySpec::Flare(mut c)) => {
            c.simulations = value;
            PolicyEntry::with_config(PolicyKind::Flare, &c)
        }
        (AxisParam::B, PolicySpec::Beam(mut c)) => {
            c.beam_width = value;
            PolicyEntry::with_config(PolicyKind::Beam, &c)
        }
        (AxisParam::K, PolicySpec::Lookahead(mut c)) => {
            c.k = value;
            PolicyEntry::with_config(PolicyKind::Lookahead, &c)
        }
        _ => return Ok(entry.clone()),
    };
    Ok(PolicyEntry { name: entry.name.clone(), ..out })
}

/// Re-run the campaign once per axis value, setting the knob on every
/// policy it applies to; other policies run unchanged.
pub fn run_budget_sweep(cfg: &CampaignConfig, axis: &BudgetAxis, remote: &RemoteSettings) -> Result<Vec<SweepPoint>> {
    if axis.values.is_empty() {
        return Err(HorizonError::Config("axis needs at least one value".into()));
    }
    cfg.validate()?;
    let mut points = Vec::new();
    for &v in &axis.values {
        let policies = cfg.policies.iter().map(|p| apply(p, axis.param, v)).collect::<Result<Vec<_>>>()?;
        let run = CampaignConfig { policies, ..cfg.clone() };
        let outcome = run_campaign(&run, remote)?;
        for p in &outcome.summary.policies {
            let mb = p.overall.mean_budget;
            let mean_cost = cfg.cost_weights.map(|w| {
                w[0] * mb.transition_calls
                    + w[1] * mb.surrogate_calls
                    + w[2] * mb.proposer_calls
                    + w[3] * mb.evaluator_calls
            });
            points.push(SweepPoint {
                axis: axis.param.as_str().to_string(),
                value: v,
                policy: p.policy.clone(),
                episodes: p.overall.episodes,
                success_rate: p.overall.success_rate,
                mean_budget: mb,
                mean_cost,
            });
        }
    }
    Ok(points)
}

#[derive(Serialize)]
struct Row<'a> {
    axis: &'a str,
    value: usize,
    policy: &'a str,
    episodes: usize,
    success_rate: f64,
    mean_transition_calls: f64,
    mean_surrogate_calls: f64,
    mean_proposer_calls: f64,
    mean_evaluator_calls: f64,
    mean_cost: Option<f64>,
}

pub fn write_sweep_csv<W: Write>(out: W, points: &[SweepPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(Row {
            axis: &p.axis,
            value: p.value,
            policy: &p.policy,
            episodes: p.episodes,
            success_rate: p.success_rate,
            mean_transition_calls: p.mean_budget.transition_calls,
            mean_surrogate_calls: p.mean_budget.surrogate_calls,
            mean_proposer_calls: p.mean_budget.proposer_calls,
            mean_evaluator_calls: p.mean_budget.evaluator_calls,
            mean_cost: p.mean_cost,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::FailureThresholds;
    use crate::graph::GraphInstanceSpec;
    use crate::harness::{EnvSource, OutputPaths};

    #[test]
    fn axis_parsing() {
        let a: BudgetAxis = "S=1,2,4".parse().unwrap();
        assert_eq!(a, BudgetAxis { param: AxisParam::S, values: vec![1, 2, 4] });
        assert_eq!("k=3".parse::<BudgetAxis>().unwrap().param, AxisParam::K);
        for bad in ["S", "Q=1", "S=", "S=0", "B=1,x"] {
            assert!(bad.parse::<BudgetAxis>().is_err(), "{bad}");
        }
    }

    #[test]
    fn greedy_ignores_the_axis() {
        let cfg = CampaignConfig {
            env: EnvSource::Graph {
                spec: GraphInstanceSpec::default(),
                answer_distances: vec![2, 3],
                top_tier_quantile: 0.25,
            },
            policies: vec![PolicyEntry::new(PolicyKind::Greedy), PolicyEntry::new(PolicyKind::Flare)],
            episodes: 6,
            base_seed: 0,
            parallel_workers: 2,
            failure_thresholds: FailureThresholds::default(),
            cost_weights: Some([0.0, 0.0, 0.0, 1.0]),
            outputs: OutputPaths::default(),
        };
        let axis: BudgetAxis = "S=1,4".parse().unwrap();
        let pts = run_budget_sweep(&cfg, &axis, &RemoteSettings::default()).unwrap();
        assert_eq!(pts.len(), 4);
        let greedy: Vec<_> = pts.iter().filter(|p| p.policy == "greedy").collect();
        assert_eq!(greedy[0].success_rate, greedy[1].success_rate);
        assert_eq!(greedy[0].mean_budget, greedy[1].mean_budget);
        let flare: Vec<_> = pts.iter().filter(|p| p.policy == "flare").collect();
        assert!(flare[0].mean_budget.evaluator_calls < flare[1].mean_budget.evaluator_calls);
        assert_eq!(flare[1].mean_cost, Some(flare[1].mean_budget.evaluator_calls));
    }
}
