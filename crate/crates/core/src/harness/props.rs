use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::adversarial::{
    make_beam_trap, make_greedy_trap, make_lookahead_chain, BeamTrapParams, Counterexample, GreedyTrapParams,
    LookaheadChainParams,
};
use crate::analysis::brute_force_optimum;
use crate::env::{run_episode, BudgetMeter};
use crate::error::Result;
use crate::flare::{FlareConfig, FlarePolicy};
use crate::policies::{BeamConfig, BeamPolicy, DecisionPolicy, GreedyPolicy, LookaheadConfig, LookaheadPolicy};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreedyTrapGrid {
    #[serde(rename = "M")]
    pub rewards: Vec<f64>,
    #[serde(rename = "H")]
    pub horizons: Vec<usize>,
}

impl Default for GreedyTrapGrid {
    fn default() -> Self {
        Self { rewards: vec![1.0, 5.0, 100.0], horizons: vec![2, 5, 10] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamTrapGrid {
    #[serde(rename = "B")]
    pub widths: Vec<usize>,
    #[serde(rename = "M")]
    pub reward: f64,
    #[serde(rename = "H")]
    pub horizon: usize,
}

impl Default for BeamTrapGrid {
    fn default() -> Self {
        Self { widths: vec![1, 2, 4, 8, 16], reward: 7.0, horizon: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainPoint {
    #[serde(rename = "H")]
    pub horizon: usize,
    pub k: usize,
    #[serde(rename = "R_max")]
    pub r_max: f64,
}

/// Parameter grids of the counterexample checks; a missing section runs
/// its default grid, an empty one is skipped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropsGrid {
    pub greedy_trap: GreedyTrapGrid,
    pub beam_trap: BeamTrapGrid,
    pub lookahead_chain: Vec<ChainPoint>,
}

impl Default for PropsGrid {
    fn default() -> Self {
        Self {
            greedy_trap: GreedyTrapGrid::default(),
            beam_trap: BeamTrapGrid::default(),
            lookahead_chain: vec![
                ChainPoint { horizon: 10, k: 2, r_max: 1.0 },
                ChainPoint { horizon: 13, k: 1, r_max: 2.0 },
                ChainPoint { horizon: 22, k: 3, r_max: 1.0 },
            ],
        }
    }
}

/// One exact comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropCheck {
    pub family: String,
    pub params: String,
    pub check: String,
    pub expected: f64,
    pub observed: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub checks: Vec<PropCheck>,
}

impl PropositionReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn push(&mut self, family: &str, params: &str, check: &str, expected: f64, observed: f64) {
        self.checks.push(PropCheck {
            family: family.into(),
            params: params.into(),
            check: check.into(),
            expected,
            observed,
            pass: expected == observed,
        });
    }

    /// Plain-text table, one line per check, then a totals line.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<16} {:<24} {:<28} {:>10} {:>10}  result\n",
            "family", "params", "check", "expected", "observed"
        );
        for c in &self.checks {
            let verdict = if c.pass { "PASS" } else { "FAIL" };
            let _ = writeln!(
                s,
                "{:<16} {:<24} {:<28} {:>10} {:>10}  {verdict}",
                c.family,
                c.params,
                c.check,
                num(c.expected),
                num(c.observed)
            );
        }
        let passed = self.checks.iter().filter(|c| c.pass).count();
        let _ = writeln!(s, "{passed}/{} checks passed", self.checks.len());
        s
    }
}

/// Plain decimal for ordinary magnitudes, exponent form otherwise.
fn num(x: f64) -> String {
    if x != 0.0 && !(1e-4..1e9).contains(&x.abs()) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn episode_return(ce: &Counterexample, policy: &mut dyn DecisionPolicy) -> Result<f64> {
    Ok(run_episode(&ce.env, policy, 0, &mut BudgetMeter::new())?.cumulative_return)
}

fn optimum(ce: &Counterexample) -> f64 {
    brute_force_optimum(&ce.env, ce.env.initial_state(), ce.env.episode_horizon())
}

/// Build every grid point, run the relevant policies and compare returns
/// with their analytic values. Invalid grid points are reported as errors.
pub fn run_proposition_suite(grid: &PropsGrid) -> Result<PropositionReport> {
    let mut report = PropositionReport::default();

    for &m in &grid.greedy_trap.rewards {
        for &h in &grid.greedy_trap.horizons {
            let ce = make_greedy_trap(&GreedyTrapParams { reward: m, horizon: h })?;
            let params = format!("M={} H={h}", num(m));
            let fam = "greedy-trap";
            report.push(fam, &params, "optimum (enumeration)", m, optimum(&ce));
            report.push(fam, &params, "greedy return", 0.0, episode_return(&ce, &mut GreedyPolicy)?);
            // one step beyond the immediate reward
            let mut one_step = LookaheadPolicy::new(LookaheadConfig::with_k(2))?;
            report.push(fam, &params, "one-step lookahead return", m, episode_return(&ce, &mut one_step)?);
        }
    }

    let bt = &grid.beam_trap;
    for &b in &bt.widths {
        let ce = make_beam_trap(&BeamTrapParams { beam_width: b, reward: bt.reward, horizon: bt.horizon })?;
        let params = format!("B={b} M={} H={}", num(bt.reward), bt.horizon);
        let fam = "beam-trap";
        report.push(fam, &params, "optimum (enumeration)", bt.reward, optimum(&ce));
        let mut beam = BeamPolicy::new(BeamConfig { beam_width: b, ..BeamConfig::default() })?;
        report.push(fam, &params, "beam return", 0.0, episode_return(&ce, &mut beam)?);
        let mut flare = FlarePolicy::new(FlareConfig::default())?;
        report.push(fam, &params, "flare return", bt.reward, episode_return(&ce, &mut flare)?);
    }

    for p in &grid.lookahead_chain {
        let params = LookaheadChainParams { k: p.k, horizon: p.horizon, r_max: p.r_max };
        let ce = make_lookahead_chain(&params)?;
        let bound = p.r_max * params.segments() as f64;
        let label = format!("H={} k={} R_max={}", p.horizon, p.k, num(p.r_max));
        let fam = "lookahead-chain";
        let opt = optimum(&ce);
        report.push(fam, &label, "optimum (enumeration)", bound, opt);
        let mut pk = LookaheadPolicy::new(LookaheadConfig::with_k(p.k))?;
        report.push(fam, &label, &format!("gap of lookahead k={}", p.k), bound, opt - episode_return(&ce, &mut pk)?);
        let mut pk1 = LookaheadPolicy::new(LookaheadConfig::with_k(p.k + 1))?;
        report.push(fam, &label, &format!("lookahead k={} return", p.k + 1), bound, episode_return(&ce, &mut pk1)?);
    }
    Ok(report)
}
