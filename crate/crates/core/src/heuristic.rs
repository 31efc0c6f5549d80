//! Multi-stage allocation: per-segment airtime minimization, percentile
//! gated prebuffering, a sweep over the percentile, then greedy segment
//! quality planning and sleep extraction.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Sense};
use crate::plan::{deadline_violations, sessions, AllocationPlan, QualityPlan, Session};
use crate::power::{always_on_schedule, extract_sleep_schedule, network_power, PowerSchedule};
use crate::radio::RateMatrix;
use crate::scenario::{QualityLadder, Scenario, TimeGrid};

/// Deficits at or below this many bits count as met.
const DEFICIT_EPS: f64 = 1e-3;
/// Airtime at or below this is treated as exhausted.
const AIR_EPS: f64 = 1e-12;

pub const DEFAULT_BETA: f64 = 100.0;
pub const DEFAULT_Y_VALUES: [u32; 7] = [65, 70, 75, 80, 85, 90, 95];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    MinAir,
    MinPower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinStep {
    Greedy,
    /// Per-segment LP with shortfall weight `beta`.
    Lp { beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicConfig {
    pub objective: Objective,
    pub min_step: MinStep,
    pub y_values: Vec<u32>,
}

impl HeuristicConfig {
    pub fn new(objective: Objective) -> Self {
        Self {
            objective,
            min_step: MinStep::Greedy,
            y_values: DEFAULT_Y_VALUES.to_vec(),
        }
    }

    pub fn with_lp(mut self, beta: f64) -> Self {
        self.min_step = MinStep::Lp { beta };
        self
    }
}

/// Nearest-rank percentile: the `ceil(y/100 * len)`-th smallest value.
pub fn rate_percentile(rates: &[f64], y: f64) -> Result<f64> {
    if rates.is_empty() {
        return Err(Error::Dimension("percentile of an empty list".into()));
    }
    if !(y > 0.0 && y <= 100.0) {
        return Err(Error::Domain { what: "percentile", value: y });
    }
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((y / 100.0 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Ok(sorted[rank - 1])
}

/// Working state of one allocation pass.
#[derive(Debug, Clone)]
pub struct HeuristicState<'a> {
    pub matrix: &'a RateMatrix,
    pub grid: &'a TimeGrid,
    pub x: AllocationPlan,
    /// Remaining airtime `bs_air[bs][slot]`.
    pub bs_air: Vec<Vec<f64>>,
    pub sessions: Vec<Session>,
    /// Bits per segment at the target level.
    pub segment_bits: f64,
    pub buffer_limit: Option<f64>,
    /// `(user, slot)` of every prebuffer grant.
    pub prebuffer_events: Vec<(usize, usize)>,
}

impl<'a> HeuristicState<'a> {
    pub fn new(matrix: &'a RateMatrix, scenario: &'a Scenario) -> Self {
        let grid = &scenario.time;
        Self {
            matrix,
            grid,
            x: AllocationPlan::zeros(matrix.users(), grid.slots()),
            bs_air: vec![vec![1.0; grid.slots()]; matrix.bs_count()],
            sessions: sessions(matrix, grid),
            segment_bits: scenario.segment_bits(scenario.ladder.target_level()),
            buffer_limit: scenario.buffer_limit_bits,
            prebuffer_events: Vec::new(),
        }
    }

    /// Bits delivered to `user` through `slot` (inclusive).
    pub fn cumulative(&self, user: usize, slot: usize) -> f64 {
        (0..=slot).map(|n| self.x.x[user][n] * self.matrix.rate(user, n)).sum()
    }

    /// Cumulative target-level demand through `segment`.
    pub fn demand(&self, user: usize, segment: usize) -> f64 {
        self.sessions[user].count_through(segment) as f64 * self.segment_bits
    }

    /// Bits still missing for `segment` by its deadline.
    pub fn deficit(&self, user: usize, segment: usize) -> f64 {
        self.demand(user, segment) - self.cumulative(user, self.grid.deadline_slot(segment))
    }

    /// Users served by `bs` somewhere in the segment that still miss bits,
    /// largest deficit first, ties to the lower index.
    pub fn priority_users(&self, bs: usize, segment: usize) -> Vec<(usize, f64)> {
        let mut users: Vec<usize> = self
            .grid
            .segment_slots(segment)
            .flat_map(|n| self.matrix.assoc[bs][n].iter().copied())
            .collect();
        users.sort_unstable();
        users.dedup();
        let mut out: Vec<(usize, f64)> = users
            .into_iter()
            .map(|i| (i, self.deficit(i, segment)))
            .filter(|&(_, d)| d > DEFICIT_EPS)
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    fn usable_slots(&self, user: usize, bs: usize, segment: usize) -> impl Iterator<Item = usize> + '_ {
        self.grid.segment_slots(segment).filter(move |&n| {
            self.matrix.serving_bs[user][n] == Some(bs) && self.matrix.rate(user, n) > 0.0
        })
    }

    fn grant(&mut self, user: usize, bs: usize, slot: usize, amount: f64) {
        self.x.x[user][slot] += amount;
        self.bs_air[bs][slot] = (self.bs_air[bs][slot] - amount).max(0.0);
    }

    /// Greedy airtime minimization: each priority user in turn takes its
    /// best-rate slot with spare airtime, repeated until every deficit is
    /// met or the segment has no usable airtime left.
    pub fn airtime_min_greedy(&mut self, bs: usize, segment: usize) {
        loop {
            let priority = self.priority_users(bs, segment);
            if priority.is_empty() {
                return;
            }
            let mut progressed = false;
            for (i, _) in priority {
                let best = self
                    .usable_slots(i, bs, segment)
                    .filter(|&n| self.bs_air[bs][n] > AIR_EPS)
                    .fold(None, |acc: Option<usize>, n| match acc {
                        Some(b) if self.matrix.rate(i, b) >= self.matrix.rate(i, n) => Some(b),
                        _ => Some(n),
                    });
                let Some(n) = best else { continue };
                let deficit = self.deficit(i, segment);
                if deficit <= DEFICIT_EPS {
                    continue;
                }
                let amount = self.bs_air[bs][n].min(deficit / self.matrix.rate(i, n));
                self.grant(i, bs, n, amount);
                progressed = true;
            }
            if !progressed {
                return;
            }
        }
    }

    /// Airtime minimization by LP. Shortfalls enter as fractions of each
    /// user's deficit, weighted so that one unserved bit always costs more
    /// than the airtime needed to carry it at the user's worst usable rate.
    pub fn airtime_min_lp(&mut self, bs: usize, segment: usize, beta: f64) -> Result<()> {
        let priority = self.priority_users(bs, segment);
        if priority.is_empty() {
            return Ok(());
        }
        let mut lp = LinearProgram::new(0);
        let mut cols: Vec<(usize, usize, usize)> = Vec::new();
        let mut slot_rows: std::collections::BTreeMap<usize, Vec<(usize, f64)>> = Default::default();
        for &(i, deficit) in &priority {
            let slots: Vec<usize> = self
                .usable_slots(i, bs, segment)
                .filter(|&n| self.bs_air[bs][n] > AIR_EPS)
                .collect();
            let mut row = Vec::new();
            for &n in &slots {
                let j = lp.add_var(1.0, 0.0, self.bs_air[bs][n].min(1.0));
                cols.push((j, i, n));
                row.push((j, self.matrix.rate(i, n) / deficit));
                slot_rows.entry(n).or_default().push((j, 1.0));
            }
            let worst = slots
                .iter()
                .map(|&n| self.matrix.rate(i, n))
                .fold(f64::INFINITY, f64::min);
            let weight = if worst.is_finite() { beta * deficit / worst } else { beta };
            let y = lp.add_var(weight, 0.0, f64::INFINITY);
            row.push((y, 1.0));
            lp.add_constraint(row, Sense::Ge, 1.0);
        }
        for (n, row) in slot_rows {
            lp.add_constraint(row, Sense::Le, self.bs_air[bs][n]);
        }
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Numerical(format!("segment LP ended {:?}", sol.status)));
        }
        for (j, i, n) in cols {
            let v = sol.x[j].min(self.bs_air[bs][n]);
            if v > 0.0 {
                self.grant(i, bs, n, v);
            }
        }
        Ok(())
    }

    /// Buffered bits of `user` after `slot` when playing its session at the
    /// target level from each segment's deadline on.
    fn buffered(&self, user: usize, slot: usize) -> f64 {
        let per = self.grid.slots_per_segment();
        let played: f64 = self.sessions[user]
            .segments()
            .map(|s| {
                let slots = (slot + 1).saturating_sub((s + 1) * per).min(per);
                self.segment_bits * slots as f64 / per as f64
            })
            .sum();
        self.cumulative(user, slot) - played
    }

    /// Gives a slot's leftover airtime to its best-rate user when that rate
    /// beats the user's `y`-th percentile of its own remaining rates.
    pub fn opportunistic_prebuffer(&mut self, bs: usize, segment: usize, y: f64) {
        let slots = self.grid.slots();
        for n in self.grid.segment_slots(segment) {
            if self.bs_air[bs][n] <= AIR_EPS {
                continue;
            }
            let best = self.matrix.assoc[bs][n]
                .iter()
                .copied()
                .filter(|&i| self.matrix.rate(i, n) > 0.0)
                .fold(None, |acc: Option<usize>, i| match acc {
                    Some(b) if self.matrix.rate(b, n) >= self.matrix.rate(i, n) => Some(b),
                    _ => Some(i),
                });
            let Some(i) = best else { continue };
            let rate = self.matrix.rate(i, n);
            let ahead: Vec<f64> = (n..slots)
                .map(|m| self.matrix.rate(i, m))
                .filter(|&r| r > 0.0)
                .collect();
            let threshold = rate_percentile(&ahead, y).expect("current slot has a positive rate");
            if rate <= threshold {
                continue;
            }
            let total = self.sessions[i].len() as f64 * self.segment_bits;
            let mut room = (total - self.cumulative(i, slots - 1)).max(0.0);
            if let Some(limit) = self.buffer_limit {
                let headroom = (n..slots)
                    .map(|m| limit - self.buffered(i, m))
                    .fold(f64::INFINITY, f64::min);
                room = room.min(headroom.max(0.0));
            }
            let amount = self.bs_air[bs][n].min(room / rate);
            if amount > AIR_EPS {
                self.grant(i, bs, n, amount);
                self.prebuffer_events.push((i, n));
            }
        }
    }

    /// One full pass over segments and base stations at percentile `y`.
    pub fn run(&mut self, y: f64, step: MinStep) -> Result<()> {
        for s in 0..self.grid.segments() {
            for k in 0..self.matrix.bs_count() {
                match step {
                    MinStep::Greedy => self.airtime_min_greedy(k, s),
                    MinStep::Lp { beta } => self.airtime_min_lp(k, s, beta)?,
                }
                self.opportunistic_prebuffer(k, s, y);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct HeuristicOutcome {
    pub x: AllocationPlan,
    pub schedule: PowerSchedule,
    pub y_star: u32,
    /// Network power for each swept percentile.
    pub sweep: Vec<(u32, f64)>,
    pub prebuffer_events: Vec<(usize, usize)>,
}

/// Runs the allocation for every percentile in the config and keeps the
/// one with the lowest network power (ties go to the larger percentile).
pub fn allocate_rates_pgs(matrix: &RateMatrix, scenario: &Scenario, config: &HeuristicConfig) -> Result<HeuristicOutcome> {
    if config.y_values.is_empty() {
        return Err(Error::Experiment("no percentile values to sweep".into()));
    }
    let runs: Vec<(u32, AllocationPlan, PowerSchedule, Vec<(usize, usize)>)> = config
        .y_values
        .par_iter()
        .map(|&y| {
            let mut state = HeuristicState::new(matrix, scenario);
            state.run(y as f64, config.min_step)?;
            let schedule = match config.objective {
                Objective::MinAir => always_on_schedule(&state.x, matrix, scenario),
                Objective::MinPower => extract_sleep_schedule(&state.x, matrix, scenario),
            };
            Ok((y, state.x, schedule, state.prebuffer_events))
        })
        .collect::<Result<_>>()?;
    let sweep: Vec<(u32, f64)> = runs.iter().map(|(y, _, s, _)| (*y, network_power(s))).collect();
    let best = (0..runs.len())
        .min_by(|&a, &b| sweep[a].1.total_cmp(&sweep[b].1).then(sweep[b].0.cmp(&sweep[a].0)))
        .expect("non-empty sweep");
    let (y_star, x, schedule, prebuffer_events) = runs.into_iter().nth(best).expect("index in range");
    Ok(HeuristicOutcome {
        x,
        schedule,
        y_star,
        sweep,
        prebuffer_events,
    })
}

/// Greedy segment quality: walking forward, each requested segment gets the
/// highest level that keeps every deadline from it onwards satisfiable with
/// later segments at their current levels.
pub fn plan_segment_quality(
    x: &AllocationPlan,
    matrix: &RateMatrix,
    ladder: &QualityLadder,
    grid: &TimeGrid,
) -> QualityPlan {
    let sess = sessions(matrix, grid);
    let mut plan = QualityPlan::uniform(&sess, grid.segments(), 1);
    for (i, session) in sess.iter().enumerate() {
        let cum = x.cumulative_bits(i, &matrix.rates[i]);
        for s in session.segments() {
            plan.levels[i][s] = ladder.max_level();
            while plan.levels[i][s] > 1
                && deadline_violations(&cum, &plan.levels[i], ladder, grid)
                    .iter()
                    .any(|&v| v >= s)
            {
                plan.levels[i][s] -= 1;
            }
        }
        plan.shortfall[i] = !deadline_violations(&cum, &plan.levels[i], ladder, grid).is_empty();
    }
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_paper_scenario;
    use proptest::prelude::*;

    fn scenario(slots: usize, segment: f64) -> Scenario {
        let mut s = default_paper_scenario();
        s.time = TimeGrid::new(1.0, slots as f64, segment).unwrap();
        s
    }

    #[test]
    fn percentile_examples() {
        let v: Vec<f64> = (1..=10).map(|k| 10.0 * k as f64).collect();
        assert_eq!(rate_percentile(&v, 70.0).unwrap(), 70.0);
        assert_eq!(rate_percentile(&v, 100.0).unwrap(), 100.0);
        assert_eq!(rate_percentile(&[3.5], 12.0).unwrap(), 3.5);
        assert!(rate_percentile(&[], 50.0).is_err());
        assert!(rate_percentile(&v, 0.0).is_err());
    }

    #[test]
    fn greedy_clears_deficit_in_one_grant() {
        // one 10-slot segment, level-4 demand = 10 Mbit; ask for 5 Mbit instead
        let mut s = scenario(10, 10.0);
        s.ladder = QualityLadder::new(vec![0.5e6], 1).unwrap();
        let mut rates = vec![1e6; 10];
        rates[6] = 2e7;
        let m = RateMatrix::single_cell(vec![rates]);
        let mut st = HeuristicState::new(&m, &s);
        st.airtime_min_greedy(0, 0);
        assert!((st.x.x[0][6] - 0.25).abs() < 1e-12);
        assert_eq!(st.x.x[0].iter().filter(|&&v| v > 0.0).count(), 1);
        assert!(st.deficit(0, 0).abs() < 1e-6);
    }

    #[test]
    fn greedy_leaves_satisfied_users_alone() {
        let s = scenario(10, 10.0);
        let m = RateMatrix::single_cell(vec![vec![1e7; 10]]);
        let mut st = HeuristicState::new(&m, &s);
        st.x.x[0][0] = 1.0;
        let before = st.x.clone();
        st.airtime_min_greedy(0, 0);
        assert_eq!(st.x, before);
    }

    #[test]
    fn equal_deficits_sort_by_index() {
        let s = scenario(10, 10.0);
        let m = RateMatrix::single_cell(vec![vec![1e7; 10]; 3]);
        let st = HeuristicState::new(&m, &s);
        let p = st.priority_users(0, 0);
        assert_eq!(p.iter().map(|u| u.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn lp_step_single_slot_exact() {
        let mut s = scenario(10, 10.0);
        s.ladder = QualityLadder::new(vec![0.3e6], 1).unwrap();
        let mut rates = vec![0.0; 10];
        rates[4] = 1.2e7;
        let m = RateMatrix::single_cell(vec![rates]);
        let mut st = HeuristicState::new(&m, &s);
        st.sessions[0] = Session { first: 0, end: 1 };
        st.airtime_min_lp(0, 0, DEFAULT_BETA).unwrap();
        assert!((st.x.x[0][4] - 3e6 / 1.2e7).abs() < 1e-9);
    }

    #[test]
    fn lp_step_overload_uses_all_airtime() {
        let s = scenario(10, 10.0);
        // demand 10 Mbit each, capacity 10 x 0.5 Mbit in total
        let m = RateMatrix::single_cell(vec![vec![0.5e6; 10]; 2]);
        let mut st = HeuristicState::new(&m, &s);
        st.airtime_min_lp(0, 0, DEFAULT_BETA).unwrap();
        assert!(st.bs_air[0].iter().all(|&a| a < 1e-9));
        assert!(st.deficit(0, 0) > 0.0 && st.deficit(1, 0) > 0.0);
    }

    #[test]
    fn flat_rates_never_prebuffer() {
        let s = scenario(40, 10.0);
        let m = RateMatrix::single_cell(vec![vec![5e6; 40]]);
        for y in [50.0, 65.0, 95.0] {
            let mut st = HeuristicState::new(&m, &s);
            st.run(y, MinStep::Greedy).unwrap();
            assert!(st.prebuffer_events.is_empty());
        }
    }

    #[test]
    fn peak_slot_prebuffers() {
        let s = scenario(40, 10.0);
        let mut rates = vec![3e6; 40];
        rates[2] = 4e7;
        let m = RateMatrix::single_cell(vec![rates]);
        let mut st = HeuristicState::new(&m, &s);
        st.run(95.0, MinStep::Greedy).unwrap();
        assert!(st.prebuffer_events.contains(&(0, 2)));
        // the whole session fits into the peak slot
        assert!((st.x.x[0][2] - 1.0).abs() < 1e-12);
        assert!(st.x.x[0][3..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exhausted_slot_is_skipped() {
        let s = scenario(10, 10.0);
        let mut rates = vec![1e6; 10];
        rates[0] = 5e7;
        let m = RateMatrix::single_cell(vec![rates]);
        let mut st = HeuristicState::new(&m, &s);
        st.bs_air[0][0] = 0.0;
        st.opportunistic_prebuffer(0, 0, 65.0);
        assert!(st.prebuffer_events.is_empty());
    }

    #[test]
    fn no_users_sleeps() {
        let s = scenario(40, 10.0);
        let m = RateMatrix::empty(1, 40);
        let out = allocate_rates_pgs(&m, &s, &HeuristicConfig::new(Objective::MinPower)).unwrap();
        assert_eq!(network_power(&out.schedule), 0.0);
    }

    #[test]
    fn quality_plan_examples() {
        let ladder = QualityLadder::new(vec![0.25e6, 0.5e6], 2).unwrap();
        let g = TimeGrid::new(1.0, 20.0, 10.0).unwrap();
        let m = RateMatrix::single_cell(vec![vec![1.0; 20]]);
        let mut x = AllocationPlan::zeros(1, 20);
        // cumulative bits at slots 10 and 20 (1-based) are 5 and 7.5 Mbit
        let mut m2 = m.clone();
        m2.rates[0][9] = 5e6;
        m2.rates[0][19] = 2.5e6;
        x.x[0][9] = 1.0;
        x.x[0][19] = 1.0;
        let plan = plan_segment_quality(&x, &m2, &ladder, &g);
        assert_eq!(plan.levels[0], vec![2, 1]);
        assert!(!plan.shortfall[0]);

        let plan = plan_segment_quality(&AllocationPlan::zeros(1, 20), &m, &ladder, &g);
        assert_eq!(plan.levels[0], vec![1, 1]);
        assert!(plan.shortfall[0]);

        let full = AllocationPlan { x: vec![vec![1.0; 20]] };
        let mut rich = m.clone();
        rich.rates[0] = vec![1e7; 20];
        assert_eq!(plan_segment_quality(&full, &rich, &ladder, &g).levels[0], vec![2, 2]);
    }

    fn random_matrix(seed: u64, users: usize, slots: usize) -> RateMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rates = (0..users)
            .map(|_| (0..slots).map(|_| rng.random_range(0.3e6..2e7)).collect())
            .collect();
        RateMatrix::single_cell(rates)
    }

    proptest! {
        #[test]
        fn allocations_stay_feasible_and_gated(seed in any::<u64>(), users in 1usize..6, lp in any::<bool>()) {
            let s = scenario(40, 10.0);
            let m = random_matrix(seed, users, 40);
            let step = if lp { MinStep::Lp { beta: DEFAULT_BETA } } else { MinStep::Greedy };
            let mut st = HeuristicState::new(&m, &s);
            st.run(75.0, step).unwrap();
            prop_assert!(st.x.is_feasible(&m));
            for (k, row) in st.bs_air.iter().enumerate() {
                for (n, &air) in row.iter().enumerate() {
                    let load: f64 = m.assoc[k][n].iter().map(|&i| st.x.x[i][n]).sum();
                    prop_assert!((1.0 - load - air).abs() < 1e-9 && air >= -1e-9);
                }
            }
            for &(i, n) in &st.prebuffer_events {
                let ahead: Vec<f64> = m.rates[i][n..].iter().copied().filter(|&r| r > 0.0).collect();
                prop_assert!(m.rate(i, n) > rate_percentile(&ahead, 75.0).unwrap());
            }
        }

        #[test]
        fn met_deficits_give_smooth_plans(seed in any::<u64>(), users in 1usize..5) {
            let s = scenario(40, 10.0);
            let m = random_matrix(seed, users, 40);
            let out = allocate_rates_pgs(&m, &s, &HeuristicConfig::new(Objective::MinPower)).unwrap();
            let mut st = HeuristicState::new(&m, &s);
            st.x = out.x.clone();
            let met = (0..users).all(|i| (0..4).all(|seg| st.deficit(i, seg) <= 1.0));
            let plan = plan_segment_quality(&out.x, &m, &s.ladder, &s.time);
            if met {
                prop_assert!(plan.shortfall.iter().all(|&f| !f));
            }
            // raising any sub-maximal level breaks some deadline at or after it
            for i in 0..users {
                let cum = out.x.cumulative_bits(i, &m.rates[i]);
                for seg in 0..4 {
                    if plan.levels[i][seg] < s.ladder.max_level() {
                        let mut up = plan.levels[i].clone();
                        up[seg] += 1;
                        prop_assert!(deadline_violations(&cum, &up, &s.ladder, &s.time).iter().any(|&v| v >= seg));
                    }
                }
            }
        }
    }
}
