//! Best-first branch and bound over LP relaxations.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::model::{MilpModel, Mode, VarTag};
use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus};
use crate::plan::{AllocationPlan, QualityPlan};

pub const INT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_BINARIES: usize = 40;

#[derive(Debug, Clone)]
pub struct MilpOptions {
    pub time_limit: Duration,
    pub max_binaries: usize,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            time_limit: Duration::from_secs(60),
            max_binaries: DEFAULT_MAX_BINARIES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    /// Stopped at the time limit with an incumbent; `bound` brackets the
    /// optimum.
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: MilpStatus,
    pub objective: f64,
    /// Best proven lower bound on the objective.
    pub bound: f64,
    /// Raw column values.
    pub values: Vec<f64>,
    pub x: AllocationPlan,
    pub q: QualityPlan,
    /// `p[bs][slot]` and `b[bs][slot]`; empty unless the model has power
    /// columns.
    pub p: Vec<Vec<f64>>,
    pub b: Vec<Vec<bool>>,
    /// Nodes whose relaxation was split.
    pub branched: usize,
    pub lp_solves: usize,
}

struct Node {
    bound: f64,
    id: usize,
    fixes: Vec<(usize, f64)>,
    values: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap: the smallest bound, then the oldest node, comes out first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

fn with_fixes(base: &LinearProgram, fixes: &[(usize, f64)]) -> LinearProgram {
    let mut lp = base.clone();
    for &(j, v) in fixes {
        lp.lower[j] = v;
        lp.upper[j] = v;
    }
    lp
}

/// Solves with the default binary guard.
pub fn solve_milp(model: &MilpModel, time_limit: Duration) -> Result<MilpSolution> {
    solve_milp_with(
        model,
        &MilpOptions {
            time_limit,
            ..MilpOptions::default()
        },
    )
}

pub fn solve_milp_with(model: &MilpModel, options: &MilpOptions) -> Result<MilpSolution> {
    let free = model.free_binaries();
    if free > options.max_binaries {
        return Err(Error::TooManyBinaries {
            binaries: free,
            limit: options.max_binaries,
        });
    }
    let out = branch_and_bound(&model.lp, &model.binaries, options.time_limit)?;
    Ok(extract(model, out))
}

/// Result of branch and bound over a plain program with binary columns.
#[derive(Debug, Clone)]
pub struct BranchOutcome {
    pub status: MilpStatus,
    pub objective: f64,
    pub bound: f64,
    pub values: Vec<f64>,
    pub branched: usize,
    pub lp_solves: usize,
}

/// Minimizes `lp` with the listed columns restricted to {0, 1}.
pub fn branch_and_bound(lp: &LinearProgram, binaries: &[usize], time_limit: Duration) -> Result<BranchOutcome> {
    let start = Instant::now();
    let mut lp_solves = 1;
    let mut base = lp.clone();
    for &j in binaries {
        base.lower[j] = base.lower[j].max(0.0);
        base.upper[j] = base.upper[j].min(1.0);
    }
    let root = solve_lp(&base)?;
    match root.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(Error::Infeasible),
        LpStatus::Unbounded => return Err(Error::Numerical("relaxation is unbounded".into())),
    }

    let mut heap = BinaryHeap::new();
    let mut next_id = 1;
    heap.push(Node {
        bound: root.objective,
        id: 0,
        fixes: Vec::new(),
        values: root.x,
    });
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut branched = 0;
    let mut timed_out = false;

    let prune = |bound: f64, inc: &Option<(f64, Vec<f64>)>| match inc {
        Some((obj, _)) => bound >= obj - 1e-9 * (1.0 + obj.abs()),
        None => false,
    };

    while let Some(node) = heap.pop() {
        if prune(node.bound, &incumbent) {
            continue;
        }
        if start.elapsed() > time_limit {
            heap.push(node);
            timed_out = true;
            break;
        }
        let pick = binaries
            .iter()
            .copied()
            .filter(|&j| (node.values[j] - node.values[j].round()).abs() > INT_TOL)
            .min_by(|&a, &b| {
                let da = (node.values[a] - 0.5).abs();
                let db = (node.values[b] - 0.5).abs();
                da.total_cmp(&db).then(a.cmp(&b))
            });

        let Some(col) = pick else {
            // integral relaxation: re-solve with binaries pinned to clean values
            let mut fixes = node.fixes.clone();
            fixes.extend(binaries.iter().map(|&j| (j, node.values[j].round())));
            let polished = solve_lp(&with_fixes(&base, &fixes))?;
            lp_solves += 1;
            let (obj, vals) = if polished.status == LpStatus::Optimal {
                (polished.objective, polished.x)
            } else {
                (node.bound, node.values)
            };
            if incumbent.as_ref().is_none_or(|(best, _)| obj < *best) {
                incumbent = Some((obj, vals));
            }
            continue;
        };

        branched += 1;
        for v in [0.0, 1.0] {
            let mut fixes = node.fixes.clone();
            fixes.push((col, v));
            let sol = solve_lp(&with_fixes(&base, &fixes))?;
            lp_solves += 1;
            if sol.status != LpStatus::Optimal || prune(sol.objective, &incumbent) {
                continue;
            }
            heap.push(Node {
                bound: sol.objective.max(node.bound),
                id: next_id,
                fixes,
                values: sol.x,
            });
            next_id += 1;
        }
    }

    let Some((objective, mut values)) = incumbent else {
        return Err(if timed_out { Error::NoIncumbent } else { Error::Infeasible });
    };
    for &j in binaries {
        values[j] = values[j].round();
    }
    let bound = if timed_out {
        heap.iter().map(|n| n.bound).fold(objective, f64::min)
    } else {
        objective
    };
    Ok(BranchOutcome {
        status: if timed_out { MilpStatus::TimeLimit } else { MilpStatus::Optimal },
        objective,
        bound,
        values,
        branched,
        lp_solves,
    })
}

fn extract(model: &MilpModel, out: BranchOutcome) -> MilpSolution {
    let BranchOutcome {
        status,
        objective,
        bound,
        values,
        branched,
        lp_solves,
    } = out;
    let mut x = AllocationPlan::zeros(model.users, model.slots);
    let mut levels = vec![vec![0; model.segments]; model.users];
    let with_power = model.mode == Mode::MinPower;
    let mut p = vec![vec![0.0; if with_power { model.slots } else { 0 }]; model.bs_count];
    let mut b = vec![vec![false; if with_power { model.slots } else { 0 }]; model.bs_count];
    for (j, tag) in model.vars.iter().enumerate() {
        let v = values[j];
        match *tag {
            VarTag::Airtime { user, slot } => x.x[user][slot] = v.clamp(0.0, 1.0),
            VarTag::Quality { user, segment, level } if v > 0.5 => levels[user][segment] = level,
            VarTag::Power { bs, slot } => p[bs][slot] = v,
            VarTag::Awake { bs, slot } => b[bs][slot] = v > 0.5,
            _ => {}
        }
    }
    MilpSolution {
        status,
        objective,
        bound,
        values,
        x,
        q: QualityPlan {
            shortfall: vec![false; model.users],
            levels,
        },
        p,
        b,
        branched,
        lp_solves,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::model::build_model;
    use crate::radio::RateMatrix;
    use crate::scenario::{default_paper_scenario, QualityLadder, Scenario, TimeGrid};

    fn tiny() -> Scenario {
        let mut s = default_paper_scenario();
        s.time = TimeGrid::new(1.0, 6.0, 3.0).unwrap();
        s.ladder = QualityLadder::new(vec![0.25e6, 0.5e6], 2).unwrap();
        s.base_stations[0].n_off = 2;
        s
    }

    #[test]
    fn starved_user_is_infeasible() {
        let s = tiny();
        // level 1 needs 0.75 Mbit per segment; three full slots carry 0.3 Mbit
        let m = RateMatrix::single_cell(vec![vec![1e5; 6]]);
        let model = build_model(Mode::MinAir, &m, &s);
        assert!(matches!(solve_milp(&model, Duration::from_secs(10)), Err(Error::Infeasible)));
    }

    #[test]
    fn integral_relaxation_needs_no_branching() {
        let mut s = tiny();
        s.ladder = QualityLadder::new(vec![0.25e6], 1).unwrap();
        let m = RateMatrix::single_cell(vec![vec![1.5e6; 6]]);
        let model = build_model(Mode::MinAir, &m, &s);
        let sol = solve_milp(&model, Duration::from_secs(10)).unwrap();
        assert_eq!(sol.branched, 0);
        assert_eq!(sol.status, MilpStatus::Optimal);
        // 0.75 Mbit per segment at 1.5 Mbit per slot
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert_eq!(sol.q.levels, vec![vec![1, 1]]);
    }

    #[test]
    fn binary_guard() {
        let s = tiny();
        let m = RateMatrix::single_cell(vec![vec![4e6; 6]; 10]);
        let model = build_model(Mode::MinPower, &m, &s);
        let err = solve_milp(&model, Duration::from_secs(1)).unwrap_err();
        assert!(matches!(err, Error::TooManyBinaries { binaries: 46, limit: 40 }));
        let m = RateMatrix::single_cell(vec![vec![4e6; 6]; 5]);
        let model = build_model(Mode::MinPower, &m, &s);
        let opts = MilpOptions {
            max_binaries: 10,
            ..MilpOptions::default()
        };
        assert!(matches!(solve_milp_with(&model, &opts), Err(Error::TooManyBinaries { .. })));
    }

    #[test]
    fn min_power_solution_is_consistent() {
        let s = tiny();
        let m = RateMatrix::single_cell(vec![vec![4e6, 1e6, 1e6, 3e6, 1e6, 1e6], vec![1e6, 1e6, 5e6, 1e6, 1e6, 2e6]]);
        let model = build_model(Mode::MinPower, &m, &s);
        let sol = solve_milp(&model, Duration::from_secs(30)).unwrap();
        assert!(model.lp.max_violation(&sol.values) < 1e-6);
        let loads = sol.x.bs_loads(&m);
        let bs = &s.base_stations[0];
        for n in 0..6 {
            let want = (bs.pm_w - bs.p0_w) * loads[0][n] + if sol.b[0][n] { bs.p0_w } else { 0.0 };
            assert!((sol.p[0][n] - want).abs() < 1e-6);
        }
        assert!(sol.bound <= sol.objective + 1e-9);
    }
}
