//! Scenario configuration: base-station layout, power model constants, the
//! slot/segment time grid and the video quality ladder.
//!
//! A scenario is loaded from a strict JSON document (unknown keys are
//! rejected) and validated once; afterwards it is treated as immutable.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mobility::HighwayParams;

/// Relative tolerance used when checking that durations divide evenly.
const DIVISIBILITY_TOL: f64 = 1e-9;

/// Slot and segment bookkeeping for one lookahead window.
///
/// Slots and segments are 0-based internally: slot `n` covers the time
/// interval `[n*tau, (n+1)*tau)` and segment `s` covers slots
/// `s*slots_per_segment .. (s+1)*slots_per_segment`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TimeSpec", into = "TimeSpec")]
pub struct TimeGrid {
    tau: f64,
    window: f64,
    segment: f64,
    slots: usize,
    slots_per_segment: usize,
    segments: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TimeSpec {
    tau_s: f64,
    window_s: f64,
    segment_s: f64,
}

fn exact_ratio(num: f64, den: f64, what: &str) -> Result<usize> {
    let ratio = num / den;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > DIVISIBILITY_TOL * rounded.max(1.0) {
        return Err(Error::InvalidScenario(format!(
            "{what}: {num} is not a positive integer multiple of {den}"
        )));
    }
    Ok(rounded as usize)
}

impl TimeGrid {
    pub fn new(tau: f64, window: f64, segment: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidScenario(format!("slot duration must be > 0, got {tau}")));
        }
        if !(segment.is_finite() && segment >= tau) {
            return Err(Error::InvalidScenario(format!(
                "segment duration {segment} must be at least the slot duration {tau}"
            )));
        }
        if !(window.is_finite() && window >= segment) {
            return Err(Error::InvalidScenario(format!(
                "window {window} must be at least the segment duration {segment}"
            )));
        }
        let slots_per_segment = exact_ratio(segment, tau, "segment duration")?;
        let segments = exact_ratio(window, segment, "window duration")?;
        let slots = exact_ratio(window, tau, "window duration")?;
        if slots != segments * slots_per_segment {
            return Err(Error::InvalidScenario("inconsistent time grid".into()));
        }
        Ok(Self {
            tau,
            window,
            segment,
            slots,
            slots_per_segment,
            segments,
        })
    }

    /// Slot duration [s].
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Lookahead window [s].
    pub fn window(&self) -> f64 {
        self.window
    }

    /// Segment duration [s].
    pub fn segment_duration(&self) -> f64 {
        self.segment
    }

    /// Number of slots in the window.
    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn slots_per_segment(&self) -> usize {
        self.slots_per_segment
    }

    /// Number of segments in the window.
    pub fn segments(&self) -> usize {
        self.segments
    }

    /// Slot range of segment `s`.
    pub fn segment_slots(&self, s: usize) -> std::ops::Range<usize> {
        s * self.slots_per_segment..(s + 1) * self.slots_per_segment
    }

    /// Last slot (inclusive) by which segment `s` must be fully downloaded.
    pub fn deadline_slot(&self, s: usize) -> usize {
        (s + 1) * self.slots_per_segment - 1
    }
}

impl TryFrom<TimeSpec> for TimeGrid {
    type Error = Error;

    fn try_from(spec: TimeSpec) -> Result<Self> {
        TimeGrid::new(spec.tau_s, spec.window_s, spec.segment_s)
    }
}

impl From<TimeGrid> for TimeSpec {
    fn from(grid: TimeGrid) -> Self {
        TimeSpec {
            tau_s: grid.tau,
            window_s: grid.window,
            segment_s: grid.segment,
        }
    }
}

/// Video bitrates per quality level. Levels are 1-based: level `l` maps to
/// `bitrates[l - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LadderSpec", into = "LadderSpec")]
pub struct QualityLadder {
    bitrates: Vec<f64>,
    target: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LadderSpec {
    bitrates_bps: Vec<f64>,
    target_level: usize,
}

impl QualityLadder {
    pub fn new(bitrates: Vec<f64>, target: usize) -> Result<Self> {
        if bitrates.is_empty() {
            return Err(Error::InvalidScenario("quality ladder is empty".into()));
        }
        if bitrates.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidScenario("bitrates must be positive and finite".into()));
        }
        if bitrates.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidScenario(
                "quality ladder bitrates must be strictly increasing".into(),
            ));
        }
        if target < 1 || target > bitrates.len() {
            return Err(Error::InvalidScenario(format!(
                "target level {target} outside 1..={}",
                bitrates.len()
            )));
        }
        Ok(Self { bitrates, target })
    }

    /// Highest quality level.
    pub fn max_level(&self) -> usize {
        self.bitrates.len()
    }

    /// Target average level.
    pub fn target_level(&self) -> usize {
        self.target
    }

    /// Bitrate of `level` (1-based) [bits/s].
    pub fn bitrate(&self, level: usize) -> f64 {
        self.bitrates[level - 1]
    }

    pub fn bitrates(&self) -> &[f64] {
        &self.bitrates
    }

    /// Size in bits of one segment of `segment_s` seconds at `level`.
    pub fn segment_bits(&self, level: usize, segment_s: f64) -> f64 {
        segment_s * self.bitrate(level)
    }

    pub fn with_target(&self, target: usize) -> Result<Self> {
        Self::new(self.bitrates.clone(), target)
    }
}

impl TryFrom<LadderSpec> for QualityLadder {
    type Error = Error;

    fn try_from(spec: LadderSpec) -> Result<Self> {
        QualityLadder::new(spec.bitrates_bps, spec.target_level)
    }
}

impl From<QualityLadder> for LadderSpec {
    fn from(ladder: QualityLadder) -> Self {
        LadderSpec {
            bitrates_bps: ladder.bitrates,
            target_level: ladder.target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseStation {
    pub x_m: f64,
    pub y_m: f64,
    /// Power draw at the smallest non-zero load [W].
    pub p0_w: f64,
    /// Power draw at full load [W].
    pub pm_w: f64,
    /// Deep-sleep power [W]; only zero is supported.
    pub p_sleep_w: f64,
    pub tx_power_dbm: f64,
    pub bandwidth_hz: f64,
    /// Minimum deep-sleep duration [slots].
    pub n_off: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorModel {
    /// Variance of the Gaussian SNR prediction error [dB^2].
    pub sigma2_db2: f64,
    pub fast_fading: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub base_stations: Vec<BaseStation>,
    pub time: TimeGrid,
    pub ladder: QualityLadder,
    #[serde(default = "default_noise_psd")]
    pub noise_psd_dbm_hz: f64,
    #[serde(default = "default_snr_cap")]
    pub snr_cap_db: f64,
    /// Per-user prebuffering limit [bits]; `None` means unbounded.
    #[serde(default)]
    pub buffer_limit_bits: Option<f64>,
    #[serde(default)]
    pub error: ErrorModel,
    #[serde(default)]
    pub seed: u64,
    pub user_count: usize,
    #[serde(default)]
    pub highway: HighwayParams,
}

fn default_noise_psd() -> f64 {
    -174.0
}

fn default_snr_cap() -> f64 {
    20.0
}

/// 40 W expressed in dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts * 1000.0).log10()
}

/// The macro base station used throughout the evaluation: 40 W transmit
/// power, 5 MHz, 200 W / 1300 W power model, 10 s minimum sleep.
pub fn paper_base_station(x_m: f64, y_m: f64) -> BaseStation {
    BaseStation {
        x_m,
        y_m,
        p0_w: 200.0,
        pm_w: 1300.0,
        p_sleep_w: 0.0,
        tx_power_dbm: watts_to_dbm(40.0),
        bandwidth_hz: 5e6,
        n_off: 10,
    }
}

/// Single-cell evaluation scenario: one BS 10 m off the highway, 1 s slots,
/// a 240 s window, 10 s segments and a four-level ladder.
pub fn default_paper_scenario() -> Scenario {
    Scenario {
        base_stations: vec![paper_base_station(0.0, 10.0)],
        time: TimeGrid::new(1.0, 240.0, 10.0).expect("static grid"),
        ladder: QualityLadder::new(vec![0.25e6, 0.5e6, 0.75e6, 1e6], 4).expect("static ladder"),
        noise_psd_dbm_hz: default_noise_psd(),
        snr_cap_db: default_snr_cap(),
        buffer_limit_bits: None,
        error: ErrorModel::default(),
        seed: 1,
        user_count: 10,
        highway: HighwayParams::default(),
    }
}

/// Three-cell highway with 1 km inter-site distance.
pub fn default_highway_scenario() -> Scenario {
    let mut scenario = default_paper_scenario();
    scenario.base_stations = (0..3)
        .map(|k| paper_base_station(1000.0 * k as f64, 10.0))
        .collect();
    scenario.user_count = 20;
    scenario
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text)?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Checks the invariants that span several fields. Grid and ladder
    /// invariants are enforced at construction.
    pub fn validate(&self) -> Result<()> {
        if self.base_stations.is_empty() {
            return Err(Error::InvalidScenario("no base stations".into()));
        }
        for (k, bs) in self.base_stations.iter().enumerate() {
            let finite = [bs.x_m, bs.y_m, bs.p0_w, bs.pm_w, bs.tx_power_dbm, bs.bandwidth_hz]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidScenario(format!("base station {k}: non-finite field")));
            }
            if !(bs.p0_w >= 0.0 && bs.p0_w < bs.pm_w) {
                return Err(Error::InvalidScenario(format!(
                    "base station {k}: need 0 <= P0 < Pm, got P0={} Pm={}",
                    bs.p0_w, bs.pm_w
                )));
            }
            if bs.p_sleep_w != 0.0 {
                return Err(Error::InvalidScenario(format!(
                    "base station {k}: only zero sleep power is supported"
                )));
            }
            if bs.n_off < 1 {
                return Err(Error::InvalidScenario(format!("base station {k}: n_off must be >= 1")));
            }
            if bs.bandwidth_hz <= 0.0 {
                return Err(Error::InvalidScenario(format!("base station {k}: bandwidth must be > 0")));
            }
        }
        if !(self.error.sigma2_db2.is_finite() && self.error.sigma2_db2 >= 0.0) {
            return Err(Error::InvalidScenario("sigma2 must be >= 0".into()));
        }
        if !self.noise_psd_dbm_hz.is_finite() || !self.snr_cap_db.is_finite() {
            return Err(Error::InvalidScenario("noise PSD and SNR cap must be finite".into()));
        }
        if let Some(limit) = self.buffer_limit_bits {
            if !(limit.is_finite() && limit > 0.0) {
                return Err(Error::InvalidScenario("buffer limit must be positive".into()));
            }
        }
        self.highway.validate()?;
        Ok(())
    }

    pub fn bs_count(&self) -> usize {
        self.base_stations.len()
    }

    /// Bits of one segment at `level`.
    pub fn segment_bits(&self, level: usize) -> f64 {
        self.ladder.segment_bits(level, self.time.segment_duration())
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::from_json_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scenario_json(tau: f64, window: f64, segment: f64) -> String {
        let mut value = serde_json::to_value(default_paper_scenario()).unwrap();
        value["time"] = serde_json::json!({"tau_s": tau, "window_s": window, "segment_s": segment});
        value.to_string()
    }

    #[test]
    fn paper_grid_dimensions() {
        let s = Scenario::from_json_str(&scenario_json(1.0, 240.0, 10.0)).unwrap();
        assert_eq!(s.time.slots(), 240);
        assert_eq!(s.time.slots_per_segment(), 10);
        assert_eq!(s.time.segments(), 24);
    }

    #[test]
    fn single_segment_window() {
        let s = Scenario::from_json_str(&scenario_json(1.0, 10.0, 10.0)).unwrap();
        assert_eq!(s.time.slots(), 10);
        assert_eq!(s.time.segments(), 1);
    }

    #[test]
    fn indivisible_window_rejected() {
        let err = Scenario::from_json_str(&scenario_json(1.0, 25.0, 10.0)).unwrap_err();
        assert!(matches!(err, Error::ScenarioParse(_)), "{err}");
        assert!(err.to_string().contains("multiple"), "{err}");
    }

    #[test]
    fn non_increasing_ladder_rejected() {
        let mut value = serde_json::to_value(default_paper_scenario()).unwrap();
        value["ladder"]["bitrates_bps"] = serde_json::json!([0.5e6, 0.5e6, 1e6]);
        assert!(Scenario::from_json_str(&value.to_string()).is_err());
    }

    #[test]
    fn unknown_key_rejected() {
        let mut value = serde_json::to_value(default_paper_scenario()).unwrap();
        value["bandwith"] = serde_json::json!(5e6);
        assert!(Scenario::from_json_str(&value.to_string()).is_err());
    }

    #[test]
    fn paper_defaults() {
        let s = default_paper_scenario();
        assert_eq!(s.ladder.bitrates(), &[0.25e6, 0.5e6, 0.75e6, 1e6]);
        let bs = &s.base_stations[0];
        assert_eq!((bs.p0_w, bs.pm_w), (200.0, 1300.0));
        assert_eq!(bs.n_off, 10);
        assert_eq!(bs.bandwidth_hz, 5e6);
        assert!((bs.tx_power_dbm - 46.0206).abs() < 1e-4);
        assert_eq!((s.time.tau(), s.time.window(), s.time.segment_duration()), (1.0, 240.0, 10.0));
        s.validate().unwrap();
        default_highway_scenario().validate().unwrap();
    }

    #[test]
    fn power_model_invariants_enforced() {
        let mut s = default_paper_scenario();
        s.base_stations[0].p0_w = 1300.0;
        assert!(s.validate().is_err());
        let mut s = default_paper_scenario();
        s.base_stations[0].p_sleep_w = 5.0;
        assert!(s.validate().is_err());
        let mut s = default_paper_scenario();
        s.base_stations[0].n_off = 0;
        assert!(s.validate().is_err());
        let mut s = default_paper_scenario();
        s.error.sigma2_db2 = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn load_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        std::fs::write(&path, default_paper_scenario().to_json_string()).unwrap();
        assert_eq!(load_scenario(&path).unwrap(), default_paper_scenario());
        assert!(matches!(load_scenario(dir.path().join("missing.json")), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn accepted_configs_hold_invariants_and_round_trip(
            tau in prop::sample::select(vec![0.5, 1.0, 2.0, 5.0]),
            per_seg in 1usize..6,
            segs in 1usize..10,
            extra in -1.0f64..1.0,
            rates in prop::collection::vec(1e4f64..1e6, 1..6),
            target in 1usize..6,
            p0 in 0.0f64..500.0,
            dp in -100.0f64..1500.0,
            n_off in 0usize..12,
        ) {
            let mut value = serde_json::to_value(default_paper_scenario()).unwrap();
            let segment = tau * per_seg as f64;
            // occasionally perturb the window off the grid
            let window = segment * segs as f64 + if extra > 0.8 { extra } else { 0.0 };
            value["time"] = serde_json::json!({"tau_s": tau, "window_s": window, "segment_s": segment});
            value["ladder"] = serde_json::json!({"bitrates_bps": rates, "target_level": target});
            value["base_stations"][0]["p0_w"] = serde_json::json!(p0);
            value["base_stations"][0]["pm_w"] = serde_json::json!(p0 + dp);
            value["base_stations"][0]["n_off"] = serde_json::json!(n_off);
            if let Ok(s) = Scenario::from_json_str(&value.to_string()) {
                let g = s.time;
                prop_assert_eq!(g.slots(), g.segments() * g.slots_per_segment());
                prop_assert!((g.slots() as f64 * g.tau() - g.window()).abs() < 1e-6);
                prop_assert!(g.tau() > 0.0 && g.window() >= g.segment_duration());
                prop_assert!(s.ladder.bitrates().windows(2).all(|w| w[0] < w[1]));
                prop_assert!((1..=s.ladder.max_level()).contains(&s.ladder.target_level()));
                for bs in &s.base_stations {
                    prop_assert!(bs.p0_w < bs.pm_w && bs.p_sleep_w == 0.0 && bs.n_off >= 1);
                }
                let again = Scenario::from_json_str(&s.to_json_string()).unwrap();
                prop_assert_eq!(again, s);
            }
        }
    }
}
