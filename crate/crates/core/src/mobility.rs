//! Per-slot user positions.
//!
//! Two sources are supported: a deterministic highway generator (the road
//! is the x-axis, vehicles enter in platoons and drive at constant speed)
//! and CSV traces exported from an external traffic simulator.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{Scenario, TimeGrid};

/// Upper bound on generated vehicle speed [m/s].
pub const MAX_SPEED_MPS: f64 = 40.0;

/// Default distance the road extends beyond the outermost base stations [m].
const DEFAULT_ROAD_MARGIN_M: f64 = 2000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn distance(&self, x: f64, y: f64) -> f64 {
        ((self.x - x).powi(2) + (self.y - y).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HighwayParams {
    pub speed_mps: f64,
    pub group_size: usize,
    pub group_gap_s: f64,
    pub flow_per_s: f64,
    /// Entry point on the x-axis; defaults to 2 km before the first BS.
    pub road_start_m: Option<f64>,
    /// Exit point; defaults to 2 km past the last BS. Vehicles stop here.
    pub road_end_m: Option<f64>,
}

impl Default for HighwayParams {
    fn default() -> Self {
        Self {
            speed_mps: 20.0,
            group_size: 10,
            group_gap_s: 60.0,
            flow_per_s: 1.0,
            road_start_m: None,
            road_end_m: None,
        }
    }
}

impl HighwayParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.speed_mps > 0.0 && self.speed_mps <= MAX_SPEED_MPS) {
            return Err(Error::InvalidScenario(format!(
                "vehicle speed must be in (0, {MAX_SPEED_MPS}] m/s, got {}",
                self.speed_mps
            )));
        }
        if self.group_size < 1 {
            return Err(Error::InvalidScenario("group size must be >= 1".into()));
        }
        if !(self.flow_per_s > 0.0 && self.flow_per_s.is_finite()) {
            return Err(Error::InvalidScenario("flow must be > 0".into()));
        }
        if !(self.group_gap_s >= 0.0 && self.group_gap_s.is_finite()) {
            return Err(Error::InvalidScenario("group gap must be >= 0".into()));
        }
        if let (Some(a), Some(b)) = (self.road_start_m, self.road_end_m) {
            if b <= a {
                return Err(Error::InvalidScenario("road end must lie after road start".into()));
            }
        }
        Ok(())
    }

    /// Arrival time of user `u` (0-based) [s]. A platoon occupies
    /// `group_size / flow` seconds and is followed by `group_gap_s` of empty
    /// road before the next platoon starts.
    pub fn arrival_time(&self, u: usize) -> f64 {
        let group = (u / self.group_size) as f64;
        let within = (u % self.group_size) as f64;
        let platoon = self.group_size as f64 / self.flow_per_s;
        group * (platoon + self.group_gap_s) + within / self.flow_per_s
    }
}

/// Positions for every (user, slot); `None` marks a user that has not yet
/// arrived or has already left.
#[derive(Debug, Clone, PartialEq)]
pub struct MobilityTrace {
    positions: Vec<Vec<Option<Position>>>,
    speeds: Option<Vec<f64>>,
    arrivals: Vec<Option<usize>>,
}

impl MobilityTrace {
    pub fn from_positions(positions: Vec<Vec<Option<Position>>>) -> Self {
        let arrivals = positions
            .iter()
            .map(|row| row.iter().position(Option::is_some))
            .collect();
        Self {
            positions,
            speeds: None,
            arrivals,
        }
    }

    pub fn users(&self) -> usize {
        self.positions.len()
    }

    pub fn slots(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }

    pub fn position(&self, user: usize, slot: usize) -> Option<Position> {
        self.positions[user][slot]
    }

    pub fn positions(&self, user: usize) -> &[Option<Position>] {
        &self.positions[user]
    }

    /// First active slot of `user`, if any.
    pub fn arrival_slot(&self, user: usize) -> Option<usize> {
        self.arrivals[user]
    }

    pub fn speeds(&self) -> Option<&[f64]> {
        self.speeds.as_deref()
    }

    /// Keeps only the first `m` users.
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.users());
        Self {
            positions: self.positions[..m].to_vec(),
            speeds: self.speeds.as_ref().map(|s| s[..m].to_vec()),
            arrivals: self.arrivals[..m].to_vec(),
        }
    }
}

fn road_bounds(scenario: &Scenario, params: &HighwayParams) -> (f64, f64) {
    let xs = scenario.base_stations.iter().map(|b| b.x_m);
    let min_x = xs.clone().fold(f64::INFINITY, f64::min);
    let max_x = xs.fold(f64::NEG_INFINITY, f64::max);
    (
        params.road_start_m.unwrap_or(min_x - DEFAULT_ROAD_MARGIN_M),
        params.road_end_m.unwrap_or(max_x + DEFAULT_ROAD_MARGIN_M),
    )
}

/// Straight-line, constant-speed trajectories for `scenario.user_count`
/// vehicles. Position at slot `n` is the position at time `n * tau`; a
/// vehicle that reaches the end of the road stays there.
pub fn generate_highway_trace(scenario: &Scenario, params: &HighwayParams) -> Result<MobilityTrace> {
    params.validate()?;
    let users = scenario.user_count;
    if users == 0 {
        return Err(Error::InvalidScenario("zero users requested".into()));
    }
    let (start, end) = road_bounds(scenario, params);
    let grid = &scenario.time;
    let positions = (0..users)
        .map(|u| {
            let t0 = params.arrival_time(u);
            (0..grid.slots())
                .map(|n| {
                    let t = n as f64 * grid.tau();
                    // small epsilon so an arrival exactly on a slot boundary counts
                    (t + 1e-9 >= t0).then(|| Position {
                        x: (start + params.speed_mps * (t - t0).max(0.0)).min(end),
                        y: 0.0,
                    })
                })
                .collect::<Vec<_>>()
        })
        .collect::<Vec<_>>();
    let mut trace = MobilityTrace::from_positions(positions);
    trace.speeds = Some(vec![params.speed_mps; users]);
    Ok(trace)
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    slot: i64,
    user_id: String,
    x_m: f64,
    y_m: f64,
}

/// Reads a `slot,user_id,x_m,y_m` CSV (1-based slots). Users are numbered
/// in order of first appearance. Samples missing between a user's first
/// and last row are linearly interpolated.
pub fn load_trace(path: impl AsRef<Path>, grid: &TimeGrid) -> Result<MobilityTrace> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(file, grid)
}

pub fn read_trace(reader: impl std::io::Read, grid: &TimeGrid) -> Result<MobilityTrace> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut samples: Vec<Vec<(usize, Position)>> = Vec::new();
    for row in csv.deserialize() {
        let row: TraceRow = row?;
        if row.slot < 1 || row.slot as usize > grid.slots() {
            return Err(Error::InvalidTrace(format!(
                "slot {} of user {} outside 1..={}",
                row.slot,
                row.user_id,
                grid.slots()
            )));
        }
        if !(row.x_m.is_finite() && row.y_m.is_finite()) {
            return Err(Error::InvalidTrace(format!("non-finite position for user {}", row.user_id)));
        }
        let slot = row.slot as usize - 1;
        let next = index.len();
        let user = *index.entry(row.user_id.clone()).or_insert(next);
        if user == samples.len() {
            samples.push(Vec::new());
        }
        if let Some(&(last, _)) = samples[user].last() {
            if slot <= last {
                return Err(Error::InvalidTrace(format!(
                    "slots of user {} are not strictly increasing ({} after {})",
                    row.user_id,
                    slot + 1,
                    last + 1
                )));
            }
        }
        samples[user].push((slot, Position { x: row.x_m, y: row.y_m }));
    }

    let positions = samples
        .iter()
        .map(|points| {
            let mut row = vec![None; grid.slots()];
            for pair in points.windows(2) {
                let ((a, pa), (b, pb)) = (pair[0], pair[1]);
                for (n, cell) in row.iter_mut().enumerate().take(b).skip(a) {
                    let w = (n - a) as f64 / (b - a) as f64;
                    *cell = Some(Position {
                        x: pa.x + w * (pb.x - pa.x),
                        y: pa.y + w * (pb.y - pa.y),
                    });
                }
            }
            if let Some(&(last, p)) = points.last() {
                row[last] = Some(p);
            }
            row
        })
        .collect();
    Ok(MobilityTrace::from_positions(positions))
}
