//! Non-predictive allocators and reactive per-segment quality selection.

use crate::plan::{sessions, AllocationPlan, QualityPlan};
use crate::radio::{RateMatrix, RealizedRates};
use crate::scenario::{QualityLadder, Scenario, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineMode {
    EqualShare,
    RateProportional,
}

/// Splits one unit of airtime among users in proportion to `weights`,
/// never giving user `j` more than `caps[j]`; capped users' surplus is
/// shared among the rest.
pub fn water_fill(weights: &[f64], caps: &[f64]) -> Vec<f64> {
    let mut share = vec![0.0; weights.len()];
    let mut open: Vec<usize> = (0..weights.len()).filter(|&j| caps[j] > 0.0 && weights[j] > 0.0).collect();
    let mut budget = 1.0;
    while !open.is_empty() && budget > 1e-15 {
        let total: f64 = open.iter().map(|&j| weights[j]).sum();
        let saturated: Vec<usize> = open
            .iter()
            .copied()
            .filter(|&j| budget * weights[j] / total >= caps[j])
            .collect();
        if saturated.is_empty() {
            for &j in &open {
                share[j] = budget * weights[j] / total;
            }
            break;
        }
        for &j in &saturated {
            share[j] = caps[j];
            budget -= caps[j];
        }
        open.retain(|j| !saturated.contains(j));
    }
    share
}

/// Equal-share or rate-proportional airtime, slot by slot, for users that
/// still have window demand left. `demand[i]` is the bit volume after which
/// user `i` stops being served.
pub fn allocate_baseline(mode: BaselineMode, matrix: &RateMatrix, demand: &[f64]) -> AllocationPlan {
    let mut x = AllocationPlan::zeros(matrix.users(), matrix.slots());
    let mut remaining = demand.to_vec();
    for n in 0..matrix.slots() {
        for users in matrix.assoc.iter().map(|cell| &cell[n]) {
            let users: Vec<usize> = users
                .iter()
                .copied()
                .filter(|&i| matrix.rate(i, n) > 0.0 && remaining[i] > 1e-9)
                .collect();
            if users.is_empty() {
                continue;
            }
            let weights: Vec<f64> = users
                .iter()
                .map(|&i| match mode {
                    BaselineMode::EqualShare => 1.0,
                    BaselineMode::RateProportional => matrix.rate(i, n),
                })
                .collect();
            let caps: Vec<f64> = users.iter().map(|&i| remaining[i] / matrix.rate(i, n)).collect();
            for (&i, a) in users.iter().zip(water_fill(&weights, &caps)) {
                x.x[i][n] = a;
                remaining[i] -= a * matrix.rate(i, n);
            }
        }
    }
    x
}

/// Window demand per user with every requested segment at the top level.
pub fn full_quality_demand(matrix: &RateMatrix, scenario: &Scenario) -> Vec<f64> {
    let top = scenario.segment_bits(scenario.ladder.max_level());
    sessions(matrix, &scenario.time)
        .iter()
        .map(|s| s.len() as f64 * top)
        .collect()
}

/// Reactive quality choice: when a segment's download begins, the bits the
/// user receives in that slot are extrapolated over one segment, and the
/// highest level whose segment fits is picked (level 1 at least).
/// Segments download back to back, so a segment starts in the slot where
/// the previous one completes.
pub fn adapt_quality_online(
    x: &AllocationPlan,
    realized: &RealizedRates,
    matrix: &RateMatrix,
    ladder: &QualityLadder,
    grid: &TimeGrid,
) -> QualityPlan {
    let sess = sessions(matrix, grid);
    let mut plan = QualityPlan::uniform(&sess, grid.segments(), 0);
    let per = grid.slots_per_segment() as f64;
    let seg_s = grid.segment_duration();
    for (i, session) in sess.iter().enumerate() {
        let got: Vec<f64> = (0..grid.slots()).map(|n| x.x[i][n] * realized.rate(i, n)).collect();
        let mut cum = 0.0;
        let mut n = 0;
        let mut needed = 0.0;
        for s in session.segments() {
            // first slot in which this segment receives bits
            while n < got.len() && (got[n] <= 0.0 || cum + got[n] <= needed) {
                cum += got[n];
                n += 1;
            }
            let estimate = if n < got.len() { got[n] * per } else { 0.0 };
            let level = (1..=ladder.max_level())
                .rev()
                .find(|&l| ladder.segment_bits(l, seg_s) <= estimate)
                .unwrap_or(1);
            plan.levels[i][s] = level;
            needed += ladder.segment_bits(level, seg_s);
        }
    }
    plan
}
