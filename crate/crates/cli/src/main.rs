use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use pgs_core::experiment::{highway_matrix, run_experiment, ExperimentSpec, Scheme};
use pgs_core::milp::{build_model, export_mps, Mode};
use pgs_core::mobility::load_trace;
use pgs_core::playback::MissPolicy;
use pgs_core::scenario::{default_highway_scenario, default_paper_scenario, load_scenario, Scenario};

const DEFAULT_SWEEP_USERS: [usize; 5] = [2, 5, 10, 15, 20];

/// Predictive video delivery experiments: rate allocation, quality planning
/// and base-station sleep scheduling over a lookahead window.
#[derive(Parser)]
#[command(name = "pgs", version)]
struct Cli {
    /// Worker threads for the sweep (all cores when unset).
    #[arg(long, global = true, env = "PGS_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One user count and one error variance per scheme.
    Run {
        #[command(flatten)]
        common: Common,
        /// Number of users (scenario's count when omitted).
        #[arg(long)]
        users: Option<usize>,
        /// Rate prediction error variance in dB^2.
        #[arg(long, default_value_t = 0.0)]
        sigma2: f64,
    },
    /// Cross product of schemes, user counts, variances and quality targets.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP_USERS)]
        users: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.0])]
        sigma2: Vec<f64>,
    },
    /// Write the exact model of one instance in fixed MPS format.
    ExportMilp {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModeArg::MinPower)]
        mode: ModeArg,
        #[arg(long)]
        users: Option<usize>,
        /// Quality target level (scenario's when omitted).
        #[arg(long)]
        l_req: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Scenario JSON, or `paper` / `highway` for the built-in ones.
    #[arg(long, default_value = "paper")]
    scenario: String,
    /// Mobility trace CSV replacing the generated highway.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "es,pgs_minair_alg,pgs_minpower_alg")]
    schemes: Vec<String>,
    /// Quality targets (scenario's target when omitted).
    #[arg(long, value_delimiter = ',')]
    l_req: Vec<usize>,
    /// Error draws per cell.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    #[arg(long)]
    out: PathBuf,
    /// Solve exact models above the binary-count guard.
    #[arg(long)]
    force_milp: bool,
    /// Branch-and-bound time limit in seconds.
    #[arg(long, default_value_t = 60.0)]
    milp_time_limit: f64,
    #[arg(long, value_enum, default_value_t = PolicyArg::Downgrade)]
    miss_policy: PolicyArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    MinPower,
    MinAir,
    MaxQuality,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Downgrade,
    Stall,
}

fn scenario_from(arg: &str) -> Result<Scenario> {
    Ok(match arg {
        "paper" => default_paper_scenario(),
        "highway" => default_highway_scenario(),
        path => load_scenario(path)?,
    })
}

fn build_spec(common: Common, users: Vec<usize>, sigma2: Vec<f64>) -> Result<ExperimentSpec> {
    if users.is_empty() || sigma2.is_empty() {
        bail!("empty axis list");
    }
    if !(common.milp_time_limit > 0.0 && common.milp_time_limit.is_finite()) {
        bail!("--milp-time-limit must be positive");
    }
    let scenario = scenario_from(&common.scenario)?;
    let mut spec = ExperimentSpec::new(scenario);
    if let Some(path) = &common.trace {
        spec.trace = Some(load_trace(path, &spec.scenario.time)?);
    }
    spec.schemes = common
        .schemes
        .iter()
        .map(|s| s.trim().parse::<Scheme>())
        .collect::<std::result::Result<_, _>>()?;
    spec.users = users;
    spec.sigma2 = sigma2;
    if !common.l_req.is_empty() {
        spec.l_req = common.l_req;
    }
    spec.seeds = common.seeds;
    spec.force_milp = common.force_milp;
    spec.settings.milp_time_limit = Duration::from_secs_f64(common.milp_time_limit);
    spec.policy = match common.miss_policy {
        PolicyArg::Downgrade => MissPolicy::Downgrade,
        PolicyArg::Stall => MissPolicy::AlwaysStall,
    };
    spec.out_dir = Some(common.out);
    Ok(spec)
}

fn execute(spec: ExperimentSpec) -> Result<()> {
    let out = spec.out_dir.clone().expect("set by build_spec");
    let result = run_experiment(&spec)?;
    eprintln!("{} rows written to {}", result.rows.len(), out.join("metrics.csv").display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Run { common, users, sigma2 } => {
            let users = match users {
                Some(m) => m,
                None => scenario_from(&common.scenario)?.user_count,
            };
            execute(build_spec(common, vec![users], vec![sigma2])?)
        }
        Command::Sweep { common, users, sigma2 } => execute(build_spec(common, users, sigma2)?),
        Command::ExportMilp {
            scenario,
            mode,
            users,
            l_req,
            out,
        } => {
            let mut scenario = match scenario {
                Some(p) => load_scenario(p)?,
                None => default_paper_scenario(),
            };
            if let Some(l) = l_req {
                scenario.ladder = scenario.ladder.with_target(l)?;
            }
            let users = users.unwrap_or(scenario.user_count);
            let matrix = highway_matrix(&scenario, users)?;
            let mode = match mode {
                ModeArg::MinPower => Mode::MinPower,
                ModeArg::MinAir => Mode::MinAir,
                ModeArg::MaxQuality => Mode::MaxQuality,
            };
            let model = build_model(mode, &matrix, &scenario);
            export_mps(&model, &out)?;
            eprintln!(
                "{mode}: {} columns, {} rows, {} binaries -> {}",
                model.lp.vars(),
                model.lp.constraints.len(),
                model.free_binaries(),
                out.display()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
