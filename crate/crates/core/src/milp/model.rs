//! Joint airtime, quality and sleep model over the whole window.

use std::fmt;

use crate::lp::{LinearProgram, Sense};
use crate::plan::{sessions, Session};
use crate::radio::RateMatrix;
use crate::scenario::Scenario;

/// Deadline and buffer rows are expressed in Mbit to keep coefficients
/// near unity.
const BITS_PER_UNIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Minimize total BS power with deep sleep.
    MinPower,
    /// Minimize total airtime with every BS awake.
    MinAir,
    /// Maximize the summed quality level over the airtime-feasible set.
    MaxQuality,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::MinPower => "min_power",
            Mode::MinAir => "min_air",
            Mode::MaxQuality => "max_quality",
        })
    }
}

/// What a model column stands for. Indices are 0-based; `level` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarTag {
    Airtime { user: usize, slot: usize },
    Quality { user: usize, segment: usize, level: usize },
    Power { bs: usize, slot: usize },
    Awake { bs: usize, slot: usize },
    OffSwitch { bs: usize, slot: usize },
}

impl VarTag {
    pub fn family(&self) -> &'static str {
        match self {
            VarTag::Airtime { .. } => "x",
            VarTag::Quality { .. } => "q",
            VarTag::Power { .. } => "p",
            VarTag::Awake { .. } => "b",
            VarTag::OffSwitch { .. } => "I",
        }
    }
}

impl fmt::Display for VarTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            VarTag::Airtime { user, slot } => write!(f, "x_{user}_{slot}"),
            VarTag::Quality { user, segment, level } => write!(f, "q_{user}_{segment}_{level}"),
            VarTag::Power { bs, slot } => write!(f, "p_{bs}_{slot}"),
            VarTag::Awake { bs, slot } => write!(f, "b_{bs}_{slot}"),
            VarTag::OffSwitch { bs, slot } => write!(f, "I_{bs}_{slot}"),
        }
    }
}

/// Constraint families, numbered in the order they are usually stated:
/// 3 deadline, 4 one level, 5 target quality, 6 buffer limit, 7 airtime
/// budget, 8 power definition, 9 awake when loaded, 10 off indicator,
/// 11 minimum off time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowTag {
    Deadline { user: usize, segment: usize },
    OneLevel { user: usize, segment: usize },
    TargetQuality { user: usize },
    BufferLimit { user: usize, slot: usize },
    AirtimeBudget { bs: usize, slot: usize },
    PowerDef { bs: usize, slot: usize },
    AwakeWhenLoaded { bs: usize, slot: usize },
    OffIndicator { bs: usize, slot: usize },
    MinOffTime { bs: usize, slot: usize, ahead: usize },
}

impl RowTag {
    pub fn equation(&self) -> u8 {
        match self {
            RowTag::Deadline { .. } => 3,
            RowTag::OneLevel { .. } => 4,
            RowTag::TargetQuality { .. } => 5,
            RowTag::BufferLimit { .. } => 6,
            RowTag::AirtimeBudget { .. } => 7,
            RowTag::PowerDef { .. } => 8,
            RowTag::AwakeWhenLoaded { .. } => 9,
            RowTag::OffIndicator { .. } => 10,
            RowTag::MinOffTime { .. } => 11,
        }
    }
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            RowTag::Deadline { user, segment } => write!(f, "eq3_{user}_{segment}"),
            RowTag::OneLevel { user, segment } => write!(f, "eq4_{user}_{segment}"),
            RowTag::TargetQuality { user } => write!(f, "eq5_{user}"),
            RowTag::BufferLimit { user, slot } => write!(f, "eq6_{user}_{slot}"),
            RowTag::AirtimeBudget { bs, slot } => write!(f, "eq7_{bs}_{slot}"),
            RowTag::PowerDef { bs, slot } => write!(f, "eq8_{bs}_{slot}"),
            RowTag::AwakeWhenLoaded { bs, slot } => write!(f, "eq9_{bs}_{slot}"),
            RowTag::OffIndicator { bs, slot } => write!(f, "eq10_{bs}_{slot}"),
            RowTag::MinOffTime { bs, slot, ahead } => write!(f, "eq11_{bs}_{slot}_{ahead}"),
        }
    }
}

/// A mixed-binary program with tagged columns and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub mode: Mode,
    pub lp: LinearProgram,
    /// Columns restricted to {0, 1}.
    pub binaries: Vec<usize>,
    pub vars: Vec<VarTag>,
    pub rows: Vec<RowTag>,
    pub users: usize,
    pub slots: usize,
    pub segments: usize,
    pub levels: usize,
    pub bs_count: usize,
    pub sessions: Vec<Session>,
}

impl MilpModel {
    pub fn column(&self, tag: VarTag) -> Option<usize> {
        let (m, n, s, q, k) = (self.users, self.slots, self.segments, self.levels, self.bs_count);
        let x_len = m * n;
        let q_len = m * s * q;
        let idx = match tag {
            VarTag::Airtime { user, slot } => user * n + slot,
            VarTag::Quality { user, segment, level } => x_len + (user * s + segment) * q + level - 1,
            VarTag::Power { bs, slot } => x_len + q_len + bs * n + slot,
            VarTag::Awake { bs, slot } => x_len + q_len + k * n + bs * n + slot,
            VarTag::OffSwitch { bs, slot } => x_len + q_len + 2 * k * n + bs * n + slot,
        };
        (self.vars.get(idx) == Some(&tag)).then_some(idx)
    }

    pub fn count(&self, family: &str) -> usize {
        self.vars.iter().filter(|v| v.family() == family).count()
    }

    /// Binaries whose bounds still leave both values open.
    pub fn free_binaries(&self) -> usize {
        self.binaries
            .iter()
            .filter(|&&j| self.lp.upper[j] > self.lp.lower[j])
            .count()
    }
}

/// Builds the model for `mode`.
///
/// Airtime of inactive user-slots and quality binaries of segments outside a
/// user's session are fixed to zero. The target-quality row asks for a mean
/// level of at least the ladder's target over the session. Buffer rows count
/// segment `s` as played out evenly over the segment after its deadline.
pub fn build_model(mode: Mode, matrix: &RateMatrix, scenario: &Scenario) -> MilpModel {
    let grid = &scenario.time;
    let ladder = &scenario.ladder;
    let (m, n_slots, segs, levels, k_count) = (
        matrix.users(),
        grid.slots(),
        grid.segments(),
        ladder.max_level(),
        scenario.bs_count(),
    );
    let per = grid.slots_per_segment();
    let sess = sessions(matrix, grid);
    let seg_units: Vec<f64> = (1..=levels)
        .map(|l| ladder.segment_bits(l, grid.segment_duration()) / BITS_PER_UNIT)
        .collect();

    let mut lp = LinearProgram::new(0);
    let mut vars = Vec::new();
    let mut binaries = Vec::new();
    let air_cost = if mode == Mode::MinAir { 1.0 } else { 0.0 };

    for i in 0..m {
        for n in 0..n_slots {
            let ub = if matrix.is_active(i, n) { 1.0 } else { 0.0 };
            lp.add_var(air_cost, 0.0, ub);
            vars.push(VarTag::Airtime { user: i, slot: n });
        }
    }
    for (i, session) in sess.iter().enumerate() {
        for s in 0..segs {
            for l in 1..=levels {
                let cost = if mode == Mode::MaxQuality { -(l as f64) } else { 0.0 };
                let ub = if session.contains(s) { 1.0 } else { 0.0 };
                binaries.push(lp.add_var(cost, 0.0, ub));
                vars.push(VarTag::Quality {
                    user: i,
                    segment: s,
                    level: l,
                });
            }
        }
    }
    let with_power = mode == Mode::MinPower;
    if with_power {
        for (k, bs) in scenario.base_stations.iter().enumerate() {
            for n in 0..n_slots {
                lp.add_var(1.0, 0.0, bs.pm_w);
                vars.push(VarTag::Power { bs: k, slot: n });
            }
        }
        for k in 0..k_count {
            for n in 0..n_slots {
                binaries.push(lp.add_var(0.0, 0.0, 1.0));
                vars.push(VarTag::Awake { bs: k, slot: n });
            }
        }
        for k in 0..k_count {
            for n in 0..n_slots {
                lp.add_var(0.0, -1.0, 1.0);
                vars.push(VarTag::OffSwitch { bs: k, slot: n });
            }
        }
    }

    let mut model = MilpModel {
        mode,
        lp,
        binaries,
        vars,
        rows: Vec::new(),
        users: m,
        slots: n_slots,
        segments: segs,
        levels,
        bs_count: k_count,
        sessions: sess.clone(),
    };
    let x = |i: usize, n: usize| i * n_slots + n;
    let q = |i: usize, s: usize, l: usize| m * n_slots + (i * segs + s) * levels + l - 1;
    let off = m * n_slots + m * segs * levels;
    let p = |k: usize, n: usize| off + k * n_slots + n;
    let b = |k: usize, n: usize| off + k_count * n_slots + k * n_slots + n;
    let ind = |k: usize, n: usize| off + 2 * k_count * n_slots + k * n_slots + n;

    let mut rows = Vec::new();
    let mut push = |lp: &mut LinearProgram, tag: RowTag, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64| {
        lp.add_constraint(coeffs, sense, rhs);
        rows.push(tag);
    };
    let lp = &mut model.lp;

    for (i, session) in sess.iter().enumerate() {
        for s in session.segments() {
            let mut coeffs: Vec<(usize, f64)> = (0..=grid.deadline_slot(s))
                .filter(|&n| matrix.rate(i, n) > 0.0)
                .map(|n| (x(i, n), matrix.rate(i, n) / BITS_PER_UNIT))
                .collect();
            for s2 in session.first..=s {
                coeffs.extend((1..=levels).map(|l| (q(i, s2, l), -seg_units[l - 1])));
            }
            push(lp, RowTag::Deadline { user: i, segment: s }, coeffs, Sense::Ge, 0.0);
        }
        for s in session.segments() {
            let coeffs = (1..=levels).map(|l| (q(i, s, l), 1.0)).collect();
            push(lp, RowTag::OneLevel { user: i, segment: s }, coeffs, Sense::Eq, 1.0);
        }
        if !session.is_empty() {
            let coeffs = session
                .segments()
                .flat_map(|s| (1..=levels).map(move |l| (q(i, s, l), l as f64)))
                .collect();
            let rhs = (ladder.target_level() * session.len()) as f64;
            push(lp, RowTag::TargetQuality { user: i }, coeffs, Sense::Ge, rhs);
        }
        if let Some(limit) = scenario.buffer_limit_bits {
            for n in 0..n_slots {
                let mut coeffs: Vec<(usize, f64)> = (0..=n)
                    .filter(|&n2| matrix.rate(i, n2) > 0.0)
                    .map(|n2| (x(i, n2), matrix.rate(i, n2) / BITS_PER_UNIT))
                    .collect();
                for s in session.segments() {
                    let played = (n + 1).saturating_sub((s + 1) * per).min(per);
                    if played > 0 {
                        let frac = played as f64 / per as f64;
                        coeffs.extend((1..=levels).map(|l| (q(i, s, l), -seg_units[l - 1] * frac)));
                    }
                }
                if !coeffs.is_empty() {
                    push(
                        lp,
                        RowTag::BufferLimit { user: i, slot: n },
                        coeffs,
                        Sense::Le,
                        limit / BITS_PER_UNIT,
                    );
                }
            }
        }
    }

    for k in 0..k_count {
        for n in 0..n_slots {
            let load: Vec<(usize, f64)> = matrix.assoc[k][n].iter().map(|&i| (x(i, n), 1.0)).collect();
            if !load.is_empty() {
                push(lp, RowTag::AirtimeBudget { bs: k, slot: n }, load, Sense::Le, 1.0);
            }
        }
    }

    if with_power {
        for (k, bs) in scenario.base_stations.iter().enumerate() {
            for n in 0..n_slots {
                let load = matrix.assoc[k][n].iter().map(|&i| x(i, n));
                let mut coeffs: Vec<(usize, f64)> = load.clone().map(|c| (c, bs.pm_w - bs.p0_w)).collect();
                coeffs.push((p(k, n), -1.0));
                coeffs.push((b(k, n), bs.p0_w));
                push(lp, RowTag::PowerDef { bs: k, slot: n }, coeffs, Sense::Eq, 0.0);

                let mut coeffs: Vec<(usize, f64)> = load.map(|c| (c, 1.0)).collect();
                coeffs.push((b(k, n), -1.0));
                push(lp, RowTag::AwakeWhenLoaded { bs: k, slot: n }, coeffs, Sense::Le, 0.0);

                let mut coeffs = vec![(b(k, n), 1.0), (ind(k, n), 1.0)];
                if n > 0 {
                    coeffs.insert(0, (b(k, n - 1), -1.0));
                }
                push(lp, RowTag::OffIndicator { bs: k, slot: n }, coeffs, Sense::Eq, 0.0);
            }
            for n in 0..n_slots {
                for c in 1..=bs.n_off {
                    if n + c < n_slots {
                        push(
                            lp,
                            RowTag::MinOffTime {
                                bs: k,
                                slot: n,
                                ahead: c,
                            },
                            vec![(b(k, n + c), 1.0), (ind(k, n), 1.0)],
                            Sense::Le,
                            1.0,
                        );
                    }
                }
            }
        }
    }
    model.rows = rows;
    model
}
