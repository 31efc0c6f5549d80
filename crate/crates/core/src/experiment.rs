//! Scheme dispatch and the scheme x users x error x target sweep with its
//! CSV outputs.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use rayon::prelude::*;

use crate::baselines::{adapt_quality_online, allocate_baseline, full_quality_demand, BaselineMode};
use crate::error::{Error, Result};
use crate::heuristic::{allocate_rates_pgs, plan_segment_quality, HeuristicConfig, Objective, DEFAULT_BETA};
use crate::milp::{build_model, solve_milp_with, MilpOptions, Mode, DEFAULT_MAX_BINARIES};
use crate::mobility::{generate_highway_trace, MobilityTrace};
use crate::plan::{AllocationPlan, QualityPlan};
use crate::playback::{compute_metrics, simulate_playback, write_timeline, Metrics, MissPolicy, PlaybackResult};
use crate::power::{always_on_schedule, PowerSchedule};
use crate::radio::{build_rate_matrix, perturb_rates, RateMatrix, RealizedRates};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Es,
    Rp,
    PgsMinAirAlg,
    PgsMinAirAlgLp,
    PgsMinPowerAlg,
    PgsMinAirMilp,
    PgsMinPowerMilp,
    MaxQualityMilp,
}

impl Scheme {
    pub const ALL: [Scheme; 8] = [
        Scheme::Es,
        Scheme::Rp,
        Scheme::PgsMinAirAlg,
        Scheme::PgsMinAirAlgLp,
        Scheme::PgsMinPowerAlg,
        Scheme::PgsMinAirMilp,
        Scheme::PgsMinPowerMilp,
        Scheme::MaxQualityMilp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Es => "es",
            Scheme::Rp => "rp",
            Scheme::PgsMinAirAlg => "pgs_minair_alg",
            Scheme::PgsMinAirAlgLp => "pgs_minair_alglp",
            Scheme::PgsMinPowerAlg => "pgs_minpower_alg",
            Scheme::PgsMinAirMilp => "pgs_minair_milp",
            Scheme::PgsMinPowerMilp => "pgs_minpower_milp",
            Scheme::MaxQualityMilp => "maxquality_milp",
        }
    }

    pub fn is_milp(&self) -> bool {
        matches!(self, Scheme::PgsMinAirMilp | Scheme::PgsMinPowerMilp | Scheme::MaxQualityMilp)
    }

    pub fn is_predictive(&self) -> bool {
        !matches!(self, Scheme::Es | Scheme::Rp)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Experiment(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub milp_time_limit: Duration,
    pub max_binaries: usize,
    pub beta: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            milp_time_limit: Duration::from_secs(60),
            max_binaries: DEFAULT_MAX_BINARIES,
            beta: DEFAULT_BETA,
        }
    }
}

/// A scheme's plan for one rate matrix.
#[derive(Debug, Clone)]
pub struct SchemeAllocation {
    pub scheme: Scheme,
    pub x: AllocationPlan,
    pub schedule: PowerSchedule,
    /// Planned quality; `None` for reactive schemes that choose levels
    /// from realized rates.
    pub quality: Option<QualityPlan>,
    /// Percentile sweep of the heuristic, `(y, P_Net)`.
    pub sweep: Vec<(u32, f64)>,
    pub y_star: Option<u32>,
    /// Objective value of an exact solve.
    pub milp_objective: Option<f64>,
}

/// Plans airtime, quality and BS states for `scheme` from predicted rates.
/// The ladder's target level is the quality target.
pub fn allocate(
    scheme: Scheme,
    matrix: &RateMatrix,
    scenario: &Scenario,
    settings: &SolverSettings,
) -> Result<SchemeAllocation> {
    let mut out = SchemeAllocation {
        scheme,
        x: AllocationPlan::zeros(matrix.users(), scenario.time.slots()),
        schedule: always_on_schedule(&AllocationPlan::zeros(matrix.users(), scenario.time.slots()), matrix, scenario),
        quality: None,
        sweep: Vec::new(),
        y_star: None,
        milp_objective: None,
    };
    match scheme {
        Scheme::Es | Scheme::Rp => {
            let mode = if scheme == Scheme::Es {
                BaselineMode::EqualShare
            } else {
                BaselineMode::RateProportional
            };
            out.x = allocate_baseline(mode, matrix, &full_quality_demand(matrix, scenario));
            out.schedule = always_on_schedule(&out.x, matrix, scenario);
        }
        Scheme::PgsMinAirAlg | Scheme::PgsMinAirAlgLp | Scheme::PgsMinPowerAlg => {
            let mut config = HeuristicConfig::new(if scheme == Scheme::PgsMinPowerAlg {
                Objective::MinPower
            } else {
                Objective::MinAir
            });
            if scheme == Scheme::PgsMinAirAlgLp {
                config = config.with_lp(settings.beta);
            }
            let h = allocate_rates_pgs(matrix, scenario, &config)?;
            out.quality = Some(plan_segment_quality(&h.x, matrix, &scenario.ladder, &scenario.time));
            out.x = h.x;
            out.schedule = h.schedule;
            out.sweep = h.sweep;
            out.y_star = Some(h.y_star);
        }
        Scheme::PgsMinAirMilp | Scheme::PgsMinPowerMilp | Scheme::MaxQualityMilp => {
            let mode = match scheme {
                Scheme::PgsMinAirMilp => Mode::MinAir,
                Scheme::PgsMinPowerMilp => Mode::MinPower,
                _ => Mode::MaxQuality,
            };
            let model = build_model(mode, matrix, scenario);
            let sol = solve_milp_with(
                &model,
                &MilpOptions {
                    time_limit: settings.milp_time_limit,
                    max_binaries: settings.max_binaries,
                },
            )?;
            out.schedule = if mode == Mode::MinPower {
                PowerSchedule::from_bits(sol.x.bs_loads(matrix), sol.b.clone(), scenario)
            } else {
                always_on_schedule(&sol.x, matrix, scenario)
            };
            out.x = sol.x;
            out.quality = Some(sol.q);
            out.milp_objective = Some(sol.objective);
        }
    }
    Ok(out)
}

/// Quality actually requested under `realized` rates, then playback and
/// metrics.
pub fn evaluate(
    alloc: &SchemeAllocation,
    matrix: &RateMatrix,
    realized: &RealizedRates,
    scenario: &Scenario,
    policy: MissPolicy,
) -> Result<(QualityPlan, PlaybackResult, Metrics)> {
    let q = match &alloc.quality {
        Some(q) => q.clone(),
        None => adapt_quality_online(&alloc.x, realized, matrix, &scenario.ladder, &scenario.time),
    };
    let result = simulate_playback(
        &alloc.x,
        &q,
        realized,
        matrix,
        &scenario.ladder,
        &scenario.time,
        scenario.buffer_limit_bits,
        policy,
    );
    let metrics = compute_metrics(&result, &alloc.schedule)?;
    Ok((q, result, metrics))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Error-draw seed of one cell: `splitmix64` folded over the master seed,
/// the user count, the bit pattern of the error variance and the seed index.
/// Schemes and quality targets share draws so they face the same errors.
pub fn derive_seed(master: u64, users: usize, sigma2: f64, index: usize) -> u64 {
    [users as u64, sigma2.to_bits(), index as u64]
        .into_iter()
        .fold(splitmix64(master), |acc, v| splitmix64(acc ^ v))
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    /// Positions for at least the largest user count; generated from the
    /// scenario's highway when absent.
    pub trace: Option<MobilityTrace>,
    pub schemes: Vec<Scheme>,
    pub users: Vec<usize>,
    pub sigma2: Vec<f64>,
    pub l_req: Vec<usize>,
    pub seeds: usize,
    pub force_milp: bool,
    pub settings: SolverSettings,
    pub policy: MissPolicy,
    /// Directory for `metrics.csv` and per-run dumps.
    pub out_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(scenario: Scenario) -> Self {
        let users = vec![scenario.user_count];
        let l_req = vec![scenario.ladder.target_level()];
        Self {
            scenario,
            trace: None,
            schemes: vec![Scheme::Es, Scheme::PgsMinAirAlg, Scheme::PgsMinPowerAlg],
            users,
            sigma2: vec![0.0],
            l_req,
            seeds: 1,
            force_milp: false,
            settings: SolverSettings::default(),
            policy: MissPolicy::default(),
            out_dir: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let empty = [
            ("schemes", self.schemes.is_empty()),
            ("user counts", self.users.is_empty()),
            ("error variances", self.sigma2.is_empty()),
            ("quality targets", self.l_req.is_empty()),
            ("seeds", self.seeds == 0),
        ];
        if let Some((what, _)) = empty.iter().find(|(_, e)| *e) {
            return Err(Error::Experiment(format!("empty list of {what}")));
        }
        if let Some(&s) = self.sigma2.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::Domain { what: "sigma2", value: s });
        }
        if let Some(&l) = self.l_req.iter().find(|&&l| l == 0 || l > self.scenario.ladder.max_level()) {
            return Err(Error::Experiment(format!("quality target {l} outside the ladder")));
        }
        self.scenario.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub scheme: Scheme,
    pub users: usize,
    pub sigma2: f64,
    pub l_req: usize,
    pub seed: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<MetricsRow>,
    pub allocations: Vec<((Scheme, usize, usize), SchemeAllocation)>,
}

fn trace_for(spec: &ExperimentSpec) -> Result<MobilityTrace> {
    let max_users = *spec.users.iter().max().expect("validated");
    let trace = match &spec.trace {
        Some(t) => t.clone(),
        None => {
            let mut scenario = spec.scenario.clone();
            scenario.user_count = max_users;
            generate_highway_trace(&scenario, &scenario.highway)?
        }
    };
    if trace.users() < max_users {
        return Err(Error::Experiment(format!(
            "trace has {} users, sweep asks for {max_users}",
            trace.users()
        )));
    }
    Ok(trace)
}

/// Runs every cell of the sweep. Allocations are computed once per
/// (scheme, users, target) and reused across error draws; results come back
/// in the order scheme, users, sigma2, target, seed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let trace = trace_for(spec)?;

    let mut matrices = Vec::new();
    for &m in &spec.users {
        let matrix = build_rate_matrix(&spec.scenario, &trace.truncated(m))?;
        matrices.push((m, matrix));
    }
    let matrix_of = |m: usize| &matrices.iter().find(|(k, _)| *k == m).expect("built above").1;

    let mut settings = spec.settings.clone();
    if spec.force_milp {
        settings.max_binaries = usize::MAX;
    }
    let units: Vec<(Scheme, usize, usize)> = spec
        .schemes
        .iter()
        .flat_map(|&s| spec.users.iter().flat_map(move |&m| spec.l_req.iter().map(move |&l| (s, m, l))))
        .collect();
    let allocations: Vec<((Scheme, usize, usize), SchemeAllocation)> = units
        .par_iter()
        .map(|&(scheme, m, l)| {
            let mut scenario = spec.scenario.clone();
            scenario.ladder = scenario.ladder.with_target(l)?;
            let alloc = allocate(scheme, matrix_of(m), &scenario, &settings)
                .map_err(|e| Error::Experiment(format!("{scheme} with M={m}, l_req={l}: {e}")))?;
            Ok(((scheme, m, l), alloc))
        })
        .collect::<Result<_>>()?;
    let alloc_of = |key: (Scheme, usize, usize)| &allocations.iter().find(|(k, _)| *k == key).expect("allocated").1;

    let mut cells = Vec::new();
    for &scheme in &spec.schemes {
        for &m in &spec.users {
            for &sigma2 in &spec.sigma2 {
                for &l in &spec.l_req {
                    for seed in 0..spec.seeds {
                        cells.push((scheme, m, sigma2, l, seed));
                    }
                }
            }
        }
    }
    let evaluated: Vec<(MetricsRow, PlaybackResult)> = cells
        .par_iter()
        .map(|&(scheme, m, sigma2, l, seed)| {
            let matrix = matrix_of(m);
            let mut scenario = spec.scenario.clone();
            scenario.ladder = scenario.ladder.with_target(l)?;
            let realized = perturb_rates(
                matrix,
                &scenario,
                sigma2,
                scenario.error.fast_fading,
                derive_seed(spec.scenario.seed, m, sigma2, seed),
            )?;
            let (_, playback, metrics) = evaluate(alloc_of((scheme, m, l)), matrix, &realized, &scenario, spec.policy)?;
            Ok((
                MetricsRow {
                    scheme,
                    users: m,
                    sigma2,
                    l_req: l,
                    seed,
                    metrics,
                },
                playback,
            ))
        })
        .collect::<Result<_>>()?;

    if let Some(dir) = &spec.out_dir {
        write_outputs(dir, &evaluated, &allocations)?;
    }
    Ok(ExperimentOutput {
        rows: evaluated.into_iter().map(|(r, _)| r).collect(),
        allocations,
    })
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn run_dir(dir: &Path, scheme: Scheme, m: usize, l: usize) -> PathBuf {
    dir.join("runs").join(format!("{scheme}_M{m}_L{l}"))
}

fn write_outputs(
    dir: &Path,
    evaluated: &[(MetricsRow, PlaybackResult)],
    allocations: &[((Scheme, usize, usize), SchemeAllocation)],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("metrics.csv");
    let mut w = create(&path)?;
    let io = |e| Error::io(&path, e);
    writeln!(w, "scheme,M,sigma2,l_req,seed,Q_Net,F_Net,P_Net").map_err(io)?;
    for (row, _) in evaluated {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            row.scheme,
            row.users,
            row.sigma2,
            row.l_req,
            row.seed + 1,
            row.metrics.q_net,
            row.metrics.f_net,
            row.metrics.p_net
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;

    for ((scheme, m, l), alloc) in allocations {
        let run = run_dir(dir, *scheme, *m, *l);
        fs::create_dir_all(&run).map_err(|e| Error::io(&run, e))?;
        write_allocation(&run, alloc)?;
    }
    for (row, playback) in evaluated {
        let run = run_dir(dir, row.scheme, row.users, row.l_req);
        let path = run.join(format!("timeline_sigma2_{}_seed_{}.csv", row.sigma2, row.seed + 1));
        let mut w = create(&path)?;
        write_timeline(playback, &mut w).map_err(|e| Error::io(&path, e))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Writes `x.csv`, `q.csv`, `power.csv` and, for the heuristic, `sweep.csv`.
pub fn write_allocation(dir: &Path, alloc: &SchemeAllocation) -> Result<()> {
    let path = dir.join("x.csv");
    let mut w = create(&path)?;
    write_x(&alloc.x, &mut w).map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))?;

    if let Some(q) = &alloc.quality {
        let path = dir.join("q.csv");
        let mut w = create(&path)?;
        write_q(q, &mut w).map_err(|e| Error::io(&path, e))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
    }

    let path = dir.join("power.csv");
    let mut w = create(&path)?;
    write_power(&alloc.schedule, &mut w).map_err(|e| Error::io(&path, e))?;
    w.flush().map_err(|e| Error::io(&path, e))?;

    if !alloc.sweep.is_empty() {
        let path = dir.join("sweep.csv");
        let mut w = create(&path)?;
        let mut body = String::from("y,P_Net,selected\n");
        for (y, p) in &alloc.sweep {
            body.push_str(&format!("{y},{p},{}\n", Some(*y) == alloc.y_star));
        }
        w.write_all(body.as_bytes()).map_err(|e| Error::io(&path, e))?;
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// `user,slot,x` for every user-slot (1-based).
pub fn write_x(x: &AllocationPlan, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "user,slot,x")?;
    for (i, row) in x.x.iter().enumerate() {
        for (n, v) in row.iter().enumerate() {
            writeln!(w, "{},{},{v}", i + 1, n + 1)?;
        }
    }
    Ok(())
}

/// `user,segment,level` for requested segments (1-based).
pub fn write_q(q: &QualityPlan, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "user,segment,level")?;
    for (i, row) in q.levels.iter().enumerate() {
        for (s, &l) in row.iter().enumerate() {
            if l > 0 {
                writeln!(w, "{},{},{l}", i + 1, s + 1)?;
            }
        }
    }
    Ok(())
}

/// `bs,slot,load,power_w,on` (1-based, `on` as 0/1).
pub fn write_power(schedule: &PowerSchedule, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "bs,slot,load,power_w,on")?;
    for k in 0..schedule.bs_count() {
        for n in 0..schedule.slots() {
            writeln!(
                w,
                "{},{},{},{},{}",
                k + 1,
                n + 1,
                schedule.load[k][n],
                schedule.power[k][n],
                u8::from(schedule.on[k][n])
            )?;
        }
    }
    Ok(())
}

/// Reads a `power.csv` back into per-BS per-slot power.
pub fn read_power_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out: Vec<Vec<f64>> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Experiment(format!("malformed power row {rec:?}")))
        };
        let (k, n, p) = (field(0)? as usize, field(1)? as usize, field(3)?);
        if out.len() < k {
            out.resize(k, Vec::new());
        }
        if out[k - 1].len() < n {
            out[k - 1].resize(n, 0.0);
        }
        out[k - 1][n - 1] = p;
    }
    Ok(out)
}

/// Predicted rate matrix for the first `users` users of the scenario's
/// highway.
pub fn highway_matrix(scenario: &Scenario, users: usize) -> Result<RateMatrix> {
    let mut s = scenario.clone();
    s.user_count = users;
    let trace = generate_highway_trace(&s, &s.highway)?;
    build_rate_matrix(&s, &trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_names_roundtrip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert!("gurobi".parse::<Scheme>().is_err());
    }

    #[test]
    fn seeds_ignore_scheme_and_separate_cells() {
        let a = derive_seed(1, 10, 4.0, 0);
        assert_eq!(a, derive_seed(1, 10, 4.0, 0));
        assert_ne!(a, derive_seed(1, 10, 4.0, 1));
        assert_ne!(a, derive_seed(1, 5, 4.0, 0));
        assert_ne!(a, derive_seed(1, 10, 16.0, 0));
        assert_ne!(a, derive_seed(2, 10, 4.0, 0));
    }

    #[test]
    fn empty_axes_are_rejected() {
        let mut spec = ExperimentSpec::new(crate::scenario::default_paper_scenario());
        spec.users.clear();
        assert!(matches!(run_experiment(&spec), Err(Error::Experiment(_))));
    }
}
