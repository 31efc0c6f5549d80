//! Load-dependent base-station power and deep-sleep scheduling.

use std::fmt;

use crate::error::{Error, Result};
use crate::plan::AllocationPlan;
use crate::radio::RateMatrix;
use crate::scenario::{BaseStation, Scenario};

/// Loads at or below this are treated as idle.
pub const IDLE_LOAD: f64 = 1e-9;

/// Power draw [W] at `load` under the linear model with zero sleep power.
pub fn slot_power(load: f64, p0: f64, pm: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&load) {
        return Err(Error::Domain { what: "load", value: load });
    }
    Ok(if load == 0.0 { 0.0 } else { p0 + (pm - p0) * load })
}

/// Power draw of a BS that is awake: `P0 + (Pm - P0) * load`.
fn awake_power(load: f64, bs: &BaseStation) -> f64 {
    bs.p0_w + (bs.pm_w - bs.p0_w) * load.clamp(0.0, 1.0)
}

/// Per-BS per-slot power, on/off state and load.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSchedule {
    pub power: Vec<Vec<f64>>,
    pub on: Vec<Vec<bool>>,
    pub load: Vec<Vec<f64>>,
}

impl PowerSchedule {
    pub fn bs_count(&self) -> usize {
        self.power.len()
    }

    pub fn slots(&self) -> usize {
        self.power.first().map_or(0, Vec::len)
    }

    /// Builds a schedule from on/off bits: awake slots draw
    /// `P0 + (Pm - P0) * load`, sleeping slots draw nothing.
    pub fn from_bits(load: Vec<Vec<f64>>, on: Vec<Vec<bool>>, scenario: &Scenario) -> Self {
        let power = load
            .iter()
            .zip(&on)
            .zip(&scenario.base_stations)
            .map(|((loads, bits), bs)| {
                loads
                    .iter()
                    .zip(bits)
                    .map(|(&l, &b)| if b { awake_power(l, bs) } else { 0.0 })
                    .collect()
            })
            .collect();
        Self { power, on, load }
    }

    /// Off-transition indicator per slot: `+1` when the BS switches off,
    /// `-1` when it switches on, `0` otherwise, with every BS off before
    /// the first slot.
    pub fn off_indicator(&self) -> Vec<Vec<i8>> {
        self.on
            .iter()
            .map(|bits| {
                let mut prev = false;
                bits.iter()
                    .map(|&b| {
                        let ind = prev as i8 - b as i8;
                        prev = b;
                        ind
                    })
                    .collect()
            })
            .collect()
    }

    pub fn total_energy(&self) -> f64 {
        self.power.iter().flatten().sum()
    }

    /// Checks power/load/state consistency and the minimum-off-time rule.
    pub fn validate(&self, scenario: &Scenario) -> std::result::Result<(), ScheduleViolation> {
        for (k, bs) in scenario.base_stations.iter().enumerate() {
            for n in 0..self.slots() {
                let (p, l, b) = (self.power[k][n], self.load[k][n], self.on[k][n]);
                if l > IDLE_LOAD && !b {
                    return Err(ScheduleViolation::LoadWhileAsleep { bs: k, slot: n });
                }
                let expected = if b { awake_power(l, bs) } else { 0.0 };
                if (p - expected).abs() > 1e-6 {
                    return Err(ScheduleViolation::PowerMismatch {
                        bs: k,
                        slot: n,
                        power: p,
                        expected,
                    });
                }
            }
            let ind = &self.off_indicator()[k];
            for n in 0..self.slots() {
                if ind[n] != 1 {
                    continue;
                }
                for c in 1..=bs.n_off {
                    if n + c < self.slots() && self.on[k][n + c] {
                        return Err(ScheduleViolation::ShortSleep { bs: k, slot: n });
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleViolation {
    LoadWhileAsleep { bs: usize, slot: usize },
    PowerMismatch { bs: usize, slot: usize, power: f64, expected: f64 },
    ShortSleep { bs: usize, slot: usize },
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::LoadWhileAsleep { bs, slot } => write!(f, "BS {bs} carries load while asleep in slot {slot}"),
            Self::PowerMismatch {
                bs,
                slot,
                power,
                expected,
            } => write!(f, "BS {bs} slot {slot}: power {power} W, expected {expected} W"),
            Self::ShortSleep { bs, slot } => {
                write!(f, "BS {bs} wakes up within n_off slots of switching off at slot {slot}")
            }
        }
    }
}

/// Schedule for base stations that never sleep.
pub fn always_on_schedule(x: &AllocationPlan, matrix: &RateMatrix, scenario: &Scenario) -> PowerSchedule {
    let load = x.bs_loads(matrix);
    let on = load.iter().map(|row| vec![true; row.len()]).collect();
    PowerSchedule::from_bits(load, on, scenario)
}

/// Sleep decision for one BS from its per-slot loads.
///
/// Idle stretches become sleep when they are long enough: a leading stretch
/// before the first busy slot `f` (0-based) sleeps when `f >= n_off`, a
/// trailing stretch after the last busy slot sleeps when it spans more than
/// `n_off` slots, and an interior stretch sleeps when it spans more than
/// `n_off` slots, so that a switch-off is followed by `n_off` further off
/// slots. Short stretches stay awake at idle power.
pub fn sleep_bits(loads: &[f64], n_off: usize) -> Vec<bool> {
    let busy: Vec<usize> = (0..loads.len()).filter(|&n| loads[n] > IDLE_LOAD).collect();
    let mut on = vec![true; loads.len()];
    let (Some(&first), Some(&last)) = (busy.first(), busy.last()) else {
        return vec![false; loads.len()];
    };
    if first >= n_off {
        on[..first].iter_mut().for_each(|b| *b = false);
    }
    for w in busy.windows(2) {
        if w[1] - w[0] - 1 > n_off {
            on[w[0] + 1..w[1]].iter_mut().for_each(|b| *b = false);
        }
    }
    if loads.len() - 1 - last > n_off {
        on[last + 1..].iter_mut().for_each(|b| *b = false);
    }
    on
}

/// Deep-sleep schedule implied by an allocation.
pub fn extract_sleep_schedule(x: &AllocationPlan, matrix: &RateMatrix, scenario: &Scenario) -> PowerSchedule {
    let load = x.bs_loads(matrix);
    let on = load
        .iter()
        .zip(&scenario.base_stations)
        .map(|(l, bs)| sleep_bits(l, bs.n_off))
        .collect();
    PowerSchedule::from_bits(load, on, scenario)
}

/// Network power: total energy over all BSs divided by the slot count [W].
pub fn network_power(schedule: &PowerSchedule) -> f64 {
    let slots = schedule.slots();
    if slots == 0 {
        0.0
    } else {
        schedule.total_energy() / slots as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::default_paper_scenario;
    use proptest::prelude::*;

    #[test]
    fn slot_power_values() {
        assert_eq!(slot_power(0.0, 200.0, 1300.0).unwrap(), 0.0);
        assert_eq!(slot_power(1.0, 200.0, 1300.0).unwrap(), 1300.0);
        assert_eq!(slot_power(0.5, 200.0, 1300.0).unwrap(), 750.0);
        assert!(slot_power(1.5, 200.0, 1300.0).is_err());
        assert!(slot_power(-0.1, 200.0, 1300.0).is_err());
    }

    fn scenario(slots: usize) -> Scenario {
        let mut s = default_paper_scenario();
        s.time = crate::scenario::TimeGrid::new(1.0, slots as f64, 1.0).unwrap();
        s
    }

    /// Loads with 1-based busy slots.
    fn loads(slots: usize, busy: impl IntoIterator<Item = usize>) -> Vec<f64> {
        let mut l = vec![0.0; slots];
        for n in busy {
            l[n - 1] = 0.3;
        }
        l
    }

    fn off_ranges(on: &[bool]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut n = 0;
        while n < on.len() {
            if !on[n] {
                let start = n;
                while n < on.len() && !on[n] {
                    n += 1;
                }
                out.push((start + 1, n));
            } else {
                n += 1;
            }
        }
        out
    }

    #[test]
    fn sleeps_around_a_burst() {
        let on = sleep_bits(&loads(40, 15..=20), 10);
        assert_eq!(off_ranges(&on), vec![(1, 14), (21, 40)]);
    }

    #[test]
    fn short_interior_gap_stays_awake() {
        let on = sleep_bits(&loads(40, [10, 15]), 10);
        assert!(on[9..15].iter().all(|&b| b));
        // leading stretch of 9 idle slots is too short; trailing one sleeps
        assert_eq!(off_ranges(&on), vec![(16, 40)]);
    }

    #[test]
    fn all_idle_sleeps_everywhere() {
        let s = scenario(40);
        let m = RateMatrix::single_cell(vec![vec![1e6; 40]]);
        let x = AllocationPlan::zeros(1, 40);
        let sched = extract_sleep_schedule(&x, &m, &s);
        assert!(sched.on[0].iter().all(|&b| !b));
        assert_eq!(network_power(&sched), 0.0);
    }

    #[test]
    fn idle_awake_slots_cost_p0() {
        let s = scenario(40);
        let mut x = AllocationPlan::zeros(1, 40);
        x.x[0][9] = 0.5;
        x.x[0][14] = 0.5;
        let m = RateMatrix::single_cell(vec![vec![1e6; 40]]);
        let sched = extract_sleep_schedule(&x, &m, &s);
        assert_eq!(sched.power[0][12], 200.0);
        assert_eq!(sched.power[0][9], 750.0);
        sched.validate(&s).unwrap();
    }

    #[test]
    fn network_power_averages_over_slots() {
        let s = scenario(10);
        let load = vec![vec![0.5; 10]];
        let sched = PowerSchedule::from_bits(load.clone(), vec![vec![true; 10]], &s);
        assert_eq!(network_power(&sched), 750.0);
        let on = vec![(0..10).map(|n| n < 5).collect()];
        let half: Vec<Vec<f64>> = vec![(0..10).map(|n| if n < 5 { 0.5 } else { 0.0 }).collect()];
        let sched = PowerSchedule::from_bits(half, on, &s);
        assert_eq!(network_power(&sched), 375.0);
    }

    #[test]
    fn off_indicator_tracks_transitions() {
        let s = scenario(5);
        let on = vec![vec![true, true, false, false, true]];
        let sched = PowerSchedule::from_bits(vec![vec![0.0; 5]], on, &s);
        assert_eq!(sched.off_indicator()[0], vec![-1, 0, 1, 0, -1]);
    }

    #[test]
    fn validator_rejects_short_sleep_and_sleeping_load() {
        let mut s = scenario(10);
        s.base_stations[0].n_off = 3;
        let on = vec![vec![true, false, false, true, true, true, true, true, true, true]];
        let sched = PowerSchedule::from_bits(vec![vec![0.0; 10]], on, &s);
        assert!(matches!(sched.validate(&s), Err(ScheduleViolation::ShortSleep { .. })));
        let mut load = vec![vec![0.0; 10]];
        load[0][2] = 0.2;
        let sched = PowerSchedule::from_bits(load, vec![vec![false; 10]], &s);
        assert!(matches!(sched.validate(&s), Err(ScheduleViolation::LoadWhileAsleep { .. })));
    }

    proptest! {
        #[test]
        fn extracted_schedules_are_legal(
            raw in prop::collection::vec(prop_oneof![3 => Just(0.0), 1 => 0.0f64..=1.0], 1..80),
            n_off in 1usize..15,
        ) {
            let mut s = scenario(raw.len());
            s.base_stations[0].n_off = n_off;
            let m = RateMatrix::single_cell(vec![vec![1e6; raw.len()]]);
            let x = AllocationPlan { x: vec![raw.clone()] };
            let sched = extract_sleep_schedule(&x, &m, &s);
            prop_assert!(sched.validate(&s).is_ok(), "{:?}", sched.validate(&s));
            for n in 0..raw.len() {
                if raw[n] > IDLE_LOAD {
                    prop_assert!(sched.on[0][n]);
                    prop_assert!(sched.power[0][n] >= 200.0 && sched.power[0][n] <= 1300.0);
                }
            }
            for (start, end) in off_ranges(&sched.on[0]) {
                prop_assert!(end - start + 1 >= n_off.min(raw.len()));
            }
        }

        #[test]
        fn adding_load_never_lowers_power(
            raw in prop::collection::vec(prop_oneof![3 => Just(0.0), 1 => 0.0f64..=0.5], 1..60),
            slot in 0usize..60,
            extra in 0.01f64..0.5,
        ) {
            let s = scenario(raw.len());
            let m = RateMatrix::single_cell(vec![vec![1e6; raw.len()]]);
            let before = extract_sleep_schedule(&AllocationPlan { x: vec![raw.clone()] }, &m, &s);
            let mut more = raw.clone();
            let slot = slot % raw.len();
            more[slot] += extra;
            let after = extract_sleep_schedule(&AllocationPlan { x: vec![more] }, &m, &s);
            prop_assert!(after.total_energy() >= before.total_energy() - 1e-9);
        }
    }
}
