use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use horizonlab::adversarial::{
    make_beam_trap, make_greedy_trap, make_lookahead_chain, BeamTrapParams, GreedyTrapParams, LookaheadChainParams,
};
use horizonlab::env::BudgetMeter;
use horizonlab::graph::{generate_labeled_instance, GraphInstanceSpec, DEFAULT_TOP_TIER_QUANTILE};
use horizonlab::harness::{
    execute_episode, run_budget_sweep, run_campaign, run_proposition_suite, write_sweep_csv, BudgetAxis,
    CampaignConfig, PolicyEntry, PolicyKind, PropsGrid, RemoteSettings,
};
use horizonlab::schema::{load_environment, EnvDocument};
use horizonlab::HorizonError;

#[derive(Parser)]
#[command(name = "horizonlab", version, about = "Long-horizon planning policies, counterexamples and diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    GreedyTrap,
    BeamTrap,
    LookaheadChain,
    Graph,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Greedy,
    Beam,
    Lookahead,
    Flare,
}

impl From<PolicyArg> for PolicyKind {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Greedy => PolicyKind::Greedy,
            PolicyArg::Beam => PolicyKind::Beam,
            PolicyArg::Lookahead => PolicyKind::Lookahead,
            PolicyArg::Flare => PolicyKind::Flare,
        }
    }
}

#[derive(clap::Args)]
struct PolicyOverride {
    /// Run only this policy instead of the ones in the config.
    #[arg(long, value_enum)]
    policy: Option<PolicyArg>,
    /// JSON config for `--policy`.
    #[arg(long, requires = "policy")]
    policy_config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the counterexample environments against their analytic returns.
    Props {
        #[arg(long)]
        grid: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a diagnostic campaign and write records and a summary.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_records: Option<PathBuf>,
        /// Summary CSV; a JSON summary is written next to it.
        #[arg(long)]
        out_summary: Option<PathBuf>,
        #[command(flatten)]
        policy: PolicyOverride,
    },
    /// Re-run a campaign across values of one budget knob.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `S=..`, `B=..` or `k=..` followed by comma-separated values.
        #[arg(long)]
        axis: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        policy: PolicyOverride,
    },
    /// Write a generated environment as JSON.
    GenEnv {
        #[arg(long, value_enum)]
        family: Family,
        /// Generator parameters (counterexample families).
        #[arg(long)]
        params: Option<PathBuf>,
        /// Instance spec (graph family).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_TOP_TIER_QUANTILE)]
        top_tier_quantile: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one episode of one policy on an environment file.
    Run {
        #[arg(long)]
        env: PathBuf,
        #[arg(long, value_enum)]
        policy: PolicyArg,
        #[arg(long)]
        policy_config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Check(String),
    Config(String),
    Runtime(String),
}

impl From<HorizonError> for Failure {
    fn from(e: HorizonError) -> Self {
        match e {
            HorizonError::Config(_)
            | HorizonError::InvalidParams(_)
            | HorizonError::InvalidEnvironment(_)
            | HorizonError::InfeasibleSpec(_)
            | HorizonError::Json(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn read_json<T: for<'de> serde::Deserialize<'de>>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn policy_entry(kind: PolicyArg, config: Option<&Path>) -> Result<PolicyEntry, Failure> {
    let mut entry = PolicyEntry::new(kind.into());
    if let Some(p) = config {
        entry.config = read_json(p)?;
    }
    entry.spec()?;
    Ok(entry)
}

fn load_campaign(path: &Path, over: &PolicyOverride) -> Result<CampaignConfig, Failure> {
    let mut cfg = CampaignConfig::load(path)?;
    if let Some(kind) = over.policy {
        cfg.policies = vec![policy_entry(kind, over.policy_config.as_deref())?];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Props { grid, out } => {
            let grid: PropsGrid = match grid {
                Some(p) => read_json(&p)?,
                None => PropsGrid::default(),
            };
            let report = run_proposition_suite(&grid)?;
            let text = report.to_text();
            match out {
                Some(p) => write_file(&p, &text)?,
                None => print!("{text}"),
            }
            if !report.all_passed() {
                return Err(Failure::Check("some proposition checks failed".into()));
            }
        }
        Command::Diagnose { config, out_records, out_summary, policy } => {
            let mut cfg = load_campaign(&config, &policy)?;
            if out_records.is_some() {
                cfg.outputs.records = out_records;
            }
            if let Some(csv) = out_summary {
                cfg.outputs.summary_json = Some(csv.with_extension("json"));
                cfg.outputs.summary_csv = Some(csv);
            }
            let outcome = run_campaign(&cfg, &RemoteSettings::from_env())?;
            for s in &outcome.skipped {
                eprintln!("skipped episode {}: {}", s.index, s.reason);
            }
            outcome.write_outputs(&cfg.outputs)?;
            if cfg.outputs.summary_csv.is_none() {
                outcome.summary.write_csv(std::io::stdout().lock())?;
            }
        }
        Command::Sweep { config, axis, out, policy } => {
            let cfg = load_campaign(&config, &policy)?;
            let axis: BudgetAxis = axis.parse()?;
            let points = run_budget_sweep(&cfg, &axis, &RemoteSettings::from_env())?;
            match out {
                Some(p) => {
                    let mut buf = Vec::new();
                    write_sweep_csv(&mut buf, &points)?;
                    write_file(&p, &String::from_utf8_lossy(&buf))?;
                }
                None => write_sweep_csv(std::io::stdout().lock(), &points)?,
            }
        }
        Command::GenEnv { family, params, spec, top_tier_quantile, out } => {
            let need_params =
                || params.as_deref().ok_or_else(|| Failure::Config("--params is required for this family".into()));
            let doc = match family {
                Family::GreedyTrap => {
                    counterexample_doc(make_greedy_trap(&read_json::<GreedyTrapParams>(need_params()?)?)?)
                }
                Family::BeamTrap => counterexample_doc(make_beam_trap(&read_json::<BeamTrapParams>(need_params()?)?)?),
                Family::LookaheadChain => {
                    counterexample_doc(make_lookahead_chain(&read_json::<LookaheadChainParams>(need_params()?)?)?)
                }
                Family::Graph => {
                    let spec: GraphInstanceSpec = match spec {
                        Some(p) => read_json(&p)?,
                        None => GraphInstanceSpec::default(),
                    };
                    if !(top_tier_quantile > 0.0 && top_tier_quantile <= 1.0) {
                        return Err(Failure::Config("--top-tier-quantile must lie in (0, 1]".into()));
                    }
                    generate_labeled_instance(&spec, top_tier_quantile)?.to_document()
                }
            };
            write_file(&out, &(doc.to_json_pretty()? + "\n"))?;
        }
        Command::Run { env, policy, policy_config, seed } => {
            let env = load_environment(&env).map_err(|e| Failure::Config(e.to_string()))?;
            let entry = policy_entry(policy, policy_config.as_deref())?;
            let mut p = entry.spec()?.build(&RemoteSettings::from_env())?;
            let (traj, meter, err): (_, BudgetMeter, _) = execute_episode(&env, p.as_mut(), seed);
            let labels: Vec<&str> = traj.pairs().map(|(s, a)| env.actions(s)[a.index()].label.as_str()).collect();
            let out = serde_json::json!({
                "policy": entry.label(),
                "states": traj.states,
                "actions": labels,
                "return": traj.cumulative_return,
                "reached_answer": env.is_answer(traj.last_state()),
                "budget": meter,
            });
            let mut stdout = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, &out).map_err(HorizonError::from)?;
            let _ = writeln!(stdout);
            if let Some(e) = err {
                return Err(Failure::Runtime(e.to_string()));
            }
        }
    }
    Ok(())
}

fn counterexample_doc(ce: horizonlab::adversarial::Counterexample) -> EnvDocument {
    let mut doc = EnvDocument::from_env(&ce.env);
    doc.optimal_return = Some(ce.optimal_return);
    doc
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(m)) | Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
    }
}
