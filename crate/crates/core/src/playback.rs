//! Client-side download and playback under realized rates, and the
//! network-level quality, freezing and power metrics.

use std::io::Write;

use crate::error::{Error, Result};
use crate::plan::{sessions, AllocationPlan, QualityPlan, DEADLINE_TOL_BITS};
use crate::power::{network_power, PowerSchedule};
use crate::radio::{RateMatrix, RealizedRates};
use crate::scenario::{QualityLadder, TimeGrid};

/// What the client does when a segment is not complete at its play time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissPolicy {
    /// Play the highest lower level already covered by received bits, or
    /// stall if none is.
    #[default]
    Downgrade,
    /// Always wait for the planned level.
    AlwaysStall,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    /// A segment finished downloading at the given level.
    Complete { segment: usize, level: usize },
    Play { segment: usize, level: usize },
    Downgrade { segment: usize, level: usize },
    Stall { segment: usize },
    /// Received bits that did not fit the buffer or the remaining video.
    Discard { bits: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserPlayback {
    /// Level played for each segment; 0 if not requested or never played.
    pub delivered: Vec<usize>,
    pub requested: usize,
    pub stall_slots: usize,
    pub play_slots: usize,
    pub stall_s: f64,
    pub play_s: f64,
    /// Time from the session start to the first played frame [s].
    pub startup_delay_s: f64,
    /// Buffered bits at the end of each slot of the horizon.
    pub buffer: Vec<f64>,
    pub delivered_bits: f64,
    pub events: Vec<(usize, Event)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaybackResult {
    pub users: Vec<UserPlayback>,
}

/// Simulates every user over `N + N_seg` slots. Segment `s` is due right
/// after its deadline slot, pushed back by any stall so far, and plays for
/// one segment duration.
#[allow(clippy::too_many_arguments)]
pub fn simulate_playback(
    x: &AllocationPlan,
    q: &QualityPlan,
    realized: &RealizedRates,
    matrix: &RateMatrix,
    ladder: &QualityLadder,
    grid: &TimeGrid,
    buffer_limit: Option<f64>,
    policy: MissPolicy,
) -> PlaybackResult {
    let sess = sessions(matrix, grid);
    let users = (0..x.users())
        .map(|i| {
            let bits: Vec<f64> = (0..grid.slots()).map(|n| x.x[i][n] * realized.rate(i, n)).collect();
            simulate_user(&bits, &q.levels[i], sess[i].first, sess[i].end, ladder, grid, buffer_limit, policy)
        })
        .collect();
    PlaybackResult { users }
}

#[allow(clippy::too_many_arguments)]
fn simulate_user(
    bits: &[f64],
    levels: &[usize],
    first: usize,
    end: usize,
    ladder: &QualityLadder,
    grid: &TimeGrid,
    buffer_limit: Option<f64>,
    policy: MissPolicy,
) -> UserPlayback {
    let per = grid.slots_per_segment();
    let horizon = grid.slots() + per;
    let size = |l: usize| ladder.segment_bits(l, grid.segment_duration());
    let mut delivered = vec![0; levels.len()];
    let mut out = UserPlayback {
        delivered: Vec::new(),
        requested: end.saturating_sub(first),
        stall_slots: 0,
        play_slots: 0,
        stall_s: 0.0,
        play_s: 0.0,
        startup_delay_s: 0.0,
        buffer: Vec::with_capacity(horizon),
        delivered_bits: 0.0,
        events: Vec::new(),
    };
    if first >= end {
        out.delivered = delivered;
        out.buffer = vec![0.0; horizon];
        return out;
    }

    // download state: segment being fetched and bits held for it
    let mut fetching = first;
    let mut partial = 0.0;
    let mut kept_levels = levels.to_vec();
    let mut complete = vec![false; levels.len()];
    // playback state
    let mut playing = first;
    let mut play_left = 0;
    let mut stall = 0;
    let mut buffered = 0.0;
    let mut first_play: Option<usize> = None;

    for t in 0..horizon {
        // start the next segment if its time has come
        if play_left == 0 && playing < end && t >= (playing + 1) * per + stall {
            let s = playing;
            let mut level = None;
            if complete[s] {
                level = Some(kept_levels[s]);
            } else if policy == MissPolicy::Downgrade && fetching == s {
                if let Some(l) = (1..kept_levels[s]).rev().find(|&l| size(l) <= partial + DEADLINE_TOL_BITS) {
                    // drop the surplus of the abandoned level
                    let surplus = (partial - size(l)).max(0.0);
                    buffered -= surplus;
                    out.events.push((t, Event::Discard { bits: surplus }));
                    out.events.push((t, Event::Downgrade { segment: s, level: l }));
                    kept_levels[s] = l;
                    complete[s] = true;
                    fetching += 1;
                    partial = 0.0;
                    level = Some(l);
                }
            }
            match level {
                Some(l) => {
                    delivered[s] = l;
                    out.events.push((t, Event::Play { segment: s, level: l }));
                    play_left = per;
                    playing += 1;
                    first_play.get_or_insert(t);
                }
                None => {
                    stall += 1;
                    out.stall_slots += 1;
                    out.events.push((t, Event::Stall { segment: s }));
                }
            }
        }

        // delivery within the slot
        let mut incoming = bits.get(t).copied().unwrap_or(0.0);
        if let Some(limit) = buffer_limit {
            let room = (limit - buffered).max(0.0);
            if incoming > room {
                out.events.push((t, Event::Discard { bits: incoming - room }));
                incoming = room;
            }
        }
        while incoming > 0.0 && fetching < end {
            let need = size(kept_levels[fetching]) - partial;
            let take = incoming.min(need);
            partial += take;
            incoming -= take;
            buffered += take;
            out.delivered_bits += take;
            if partial >= size(kept_levels[fetching]) - DEADLINE_TOL_BITS {
                complete[fetching] = true;
                out.events.push((
                    t,
                    Event::Complete {
                        segment: fetching,
                        level: kept_levels[fetching],
                    },
                ));
                fetching += 1;
                partial = 0.0;
            }
        }
        if incoming > DEADLINE_TOL_BITS {
            out.events.push((t, Event::Discard { bits: incoming }));
        }

        // consumption
        if play_left > 0 {
            let s = playing - 1;
            buffered = (buffered - size(kept_levels[s]) / per as f64).max(0.0);
            play_left -= 1;
            out.play_slots += 1;
        }
        out.buffer.push(buffered);
    }
    let tau = grid.tau();
    out.stall_s = out.stall_slots as f64 * tau;
    out.play_s = out.play_slots as f64 * tau;
    out.startup_delay_s = match first_play {
        Some(t) => (t - first * per) as f64 * tau,
        None => (horizon - first * per) as f64 * tau,
    };
    out.delivered = delivered;
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub q_net: f64,
    /// Percent of playback time spent stalled, averaged over users.
    pub f_net: f64,
    pub p_net: f64,
}

pub fn compute_metrics(results: &PlaybackResult, schedule: &PowerSchedule) -> Result<Metrics> {
    if results.users.is_empty() {
        return Err(Error::Experiment("no users to evaluate".into()));
    }
    let requested: usize = results.users.iter().map(|u| u.requested).sum();
    let levels: usize = results.users.iter().map(|u| u.delivered.iter().sum::<usize>()).sum();
    let fractions: Vec<f64> = results
        .users
        .iter()
        .filter(|u| u.stall_slots + u.play_slots > 0)
        .map(|u| u.stall_slots as f64 / (u.stall_slots + u.play_slots) as f64)
        .collect();
    Ok(Metrics {
        q_net: if requested == 0 { 0.0 } else { levels as f64 / requested as f64 },
        f_net: if fractions.is_empty() {
            0.0
        } else {
            100.0 * fractions.iter().sum::<f64>() / fractions.len() as f64
        },
        p_net: network_power(schedule),
    })
}

/// Writes `user,slot,event,value` rows (1-based user and slot).
pub fn write_timeline(results: &PlaybackResult, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "user,slot,event,value")?;
    for (i, u) in results.users.iter().enumerate() {
        for (t, e) in &u.events {
            let (name, value) = match e {
                Event::Complete { segment, level } => ("complete", format!("{}:{level}", segment + 1)),
                Event::Play { segment, level } => ("play", format!("{}:{level}", segment + 1)),
                Event::Downgrade { segment, level } => ("downgrade", format!("{}:{level}", segment + 1)),
                Event::Stall { segment } => ("stall", format!("{}", segment + 1)),
                Event::Discard { bits } => ("discard", format!("{bits}")),
            };
            writeln!(w, "{},{},{name},{value}", i + 1, t + 1)?;
        }
    }
    Ok(())
}
