//! Decision objects shared by the allocators: the airtime plan, the segment
//! quality plan, and each user's streaming session within the window.

use crate::radio::RateMatrix;
use crate::scenario::{QualityLadder, TimeGrid};

/// Slack, in bits, allowed when checking cumulative delivery against a
/// segment deadline.
pub const DEADLINE_TOL_BITS: f64 = 1.0;

/// Slack on the per-slot airtime budget.
pub const AIRTIME_TOL: f64 = 1e-9;

/// Airtime fractions `x[user][slot]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    pub x: Vec<Vec<f64>>,
}

impl AllocationPlan {
    pub fn zeros(users: usize, slots: usize) -> Self {
        Self {
            x: vec![vec![0.0; slots]; users],
        }
    }

    pub fn users(&self) -> usize {
        self.x.len()
    }

    pub fn slots(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Cumulative bits `R[user][slot]` delivered through `slot` (inclusive)
    /// at the given per-slot rates.
    pub fn cumulative_bits(&self, user: usize, rates: &[f64]) -> Vec<f64> {
        let mut acc = 0.0;
        self.x[user]
            .iter()
            .zip(rates)
            .map(|(x, r)| {
                acc += x * r;
                acc
            })
            .collect()
    }

    /// Per-BS load `sum_{i in U_{k,n}} x[i][n]`.
    pub fn bs_loads(&self, matrix: &RateMatrix) -> Vec<Vec<f64>> {
        matrix
            .assoc
            .iter()
            .map(|slots| {
                slots
                    .iter()
                    .enumerate()
                    .map(|(n, users)| users.iter().map(|&i| self.x[i][n]).sum())
                    .collect()
            })
            .collect()
    }

    /// Sum of all airtime fractions.
    pub fn total_airtime(&self) -> f64 {
        self.x.iter().flatten().sum()
    }

    /// Every BS stays within its airtime budget and `0 <= x <= 1`; no
    /// airtime is given to inactive users.
    pub fn is_feasible(&self, matrix: &RateMatrix) -> bool {
        let bounded = self.x.iter().enumerate().all(|(i, row)| {
            row.iter().enumerate().all(|(n, &v)| {
                (-AIRTIME_TOL..=1.0 + AIRTIME_TOL).contains(&v) && (matrix.is_active(i, n) || v == 0.0)
            })
        });
        bounded
            && self
                .bs_loads(matrix)
                .iter()
                .flatten()
                .all(|&l| l <= 1.0 + AIRTIME_TOL)
    }
}

/// Segments `first..end` (0-based, global grid) that a user requests.
///
/// A user streams from the first segment boundary at or after its arrival
/// until the last segment whose deadline still falls inside its active
/// period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Session {
    pub first: usize,
    pub end: usize,
}

impl Session {
    pub fn full(grid: &TimeGrid) -> Self {
        Self {
            first: 0,
            end: grid.segments(),
        }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.first)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, segment: usize) -> bool {
        (self.first..self.end).contains(&segment)
    }

    pub fn segments(&self) -> std::ops::Range<usize> {
        self.first..self.end.max(self.first)
    }

    /// Requested segments with index `<= segment`.
    pub fn count_through(&self, segment: usize) -> usize {
        if segment < self.first {
            0
        } else {
            (segment + 1).min(self.end).saturating_sub(self.first)
        }
    }
}

pub fn sessions(matrix: &RateMatrix, grid: &TimeGrid) -> Vec<Session> {
    let per = grid.slots_per_segment();
    (0..matrix.users())
        .map(|i| {
            let active: Vec<usize> = (0..matrix.slots()).filter(|&n| matrix.is_active(i, n)).collect();
            match (active.first(), active.last()) {
                (Some(&a), Some(&d)) => {
                    let first = a.div_ceil(per);
                    let end = ((d + 1) / per).min(grid.segments());
                    Session {
                        first,
                        end: end.max(first),
                    }
                }
                _ => Session { first: 0, end: 0 },
            }
        })
        .collect()
}

/// Per-user per-segment quality levels. Level 0 marks a segment outside the
/// user's session; requested segments carry levels `1..=q_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityPlan {
    pub levels: Vec<Vec<usize>>,
    /// Users whose allocation violates a deadline even at level 1.
    pub shortfall: Vec<bool>,
}

impl QualityPlan {
    /// Every requested segment at `level`.
    pub fn uniform(sessions: &[Session], segments: usize, level: usize) -> Self {
        Self {
            levels: sessions
                .iter()
                .map(|sess| (0..segments).map(|s| if sess.contains(s) { level } else { 0 }).collect())
                .collect(),
            shortfall: vec![false; sessions.len()],
        }
    }

    pub fn users(&self) -> usize {
        self.levels.len()
    }
}

/// Bits needed for segments `..=segment` of `levels` (level 0 counts as
/// nothing).
pub fn cumulative_demand(levels: &[usize], segment: usize, ladder: &QualityLadder, grid: &TimeGrid) -> f64 {
    levels[..=segment]
        .iter()
        .filter(|&&l| l > 0)
        .map(|&l| ladder.segment_bits(l, grid.segment_duration()))
        .sum()
}

/// Segment indices whose deadline constraint fails for one user:
/// cumulative demand through `s` exceeds bits delivered by the deadline.
pub fn deadline_violations(
    cumulative_bits: &[f64],
    levels: &[usize],
    ladder: &QualityLadder,
    grid: &TimeGrid,
) -> Vec<usize> {
    let mut demand = 0.0;
    let mut out = Vec::new();
    for (s, &l) in levels.iter().enumerate() {
        if l > 0 {
            demand += ladder.segment_bits(l, grid.segment_duration());
            if demand > cumulative_bits[grid.deadline_slot(s)] + DEADLINE_TOL_BITS {
                out.push(s);
            }
        }
    }
    out
}
