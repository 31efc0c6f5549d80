//! Link model: path loss, Shannon rate with SNR clipping, strongest-signal
//! association, and perturbation of predicted rates into realized ones.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::mobility::MobilityTrace;
use crate::scenario::Scenario;

/// Distances below this are clamped before evaluating the path loss [km].
pub const MIN_DISTANCE_KM: f64 = 1e-3;

/// Macro-cell path loss in dB for a distance in km.
pub fn pathloss_db(d_km: f64) -> Result<f64> {
    if !(d_km > 0.0) {
        return Err(Error::Domain {
            what: "distance",
            value: d_km,
        });
    }
    Ok(128.1 + 37.6 * d_km.log10())
}

/// Bits deliverable in one slot of `tau` seconds at full airtime.
pub fn link_rate_bits(snr_db: f64, bandwidth_hz: f64, tau: f64, snr_cap_db: f64) -> f64 {
    let snr = 10f64.powf(snr_db.min(snr_cap_db) / 10.0);
    tau * bandwidth_hz * (1.0 + snr).log2()
}

/// Predicted per-slot rates and the user/BS association.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix {
    /// `rates[user][slot]` in bits; zero for inactive user-slots.
    pub rates: Vec<Vec<f64>>,
    /// Unclipped SNR towards the serving BS [dB]; `-inf` when inactive.
    pub snr_db: Vec<Vec<f64>>,
    pub serving_bs: Vec<Vec<Option<usize>>>,
    /// `assoc[bs][slot]` lists the users served by `bs` in `slot`, ascending.
    pub assoc: Vec<Vec<Vec<usize>>>,
}

impl RateMatrix {
    pub fn users(&self) -> usize {
        self.rates.len()
    }

    pub fn slots(&self) -> usize {
        self.assoc.first().map_or(0, Vec::len)
    }

    pub fn bs_count(&self) -> usize {
        self.assoc.len()
    }

    pub fn rate(&self, user: usize, slot: usize) -> f64 {
        self.rates[user][slot]
    }

    pub fn is_active(&self, user: usize, slot: usize) -> bool {
        self.serving_bs[user][slot].is_some()
    }

    /// An empty matrix (no users) for `bs_count` cells.
    pub fn empty(bs_count: usize, slots: usize) -> Self {
        Self {
            rates: Vec::new(),
            snr_db: Vec::new(),
            serving_bs: Vec::new(),
            assoc: vec![vec![Vec::new(); slots]; bs_count],
        }
    }

    /// Builds a matrix from explicit rates with every active user attached to
    /// `serving[user][slot]`. A `None` entry marks the user inactive and
    /// forces its rate to zero. Mostly useful for constructed test cases.
    pub fn from_parts(
        rates: Vec<Vec<f64>>,
        serving: Vec<Vec<Option<usize>>>,
        bs_count: usize,
    ) -> Result<Self> {
        let slots = rates.first().map_or(0, Vec::len);
        if serving.len() != rates.len() || rates.iter().any(|r| r.len() != slots) {
            return Err(Error::Dimension("rates and serving maps differ in shape".into()));
        }
        let mut assoc = vec![vec![Vec::new(); slots]; bs_count];
        let mut rates = rates;
        for (i, row) in serving.iter().enumerate() {
            if row.len() != slots {
                return Err(Error::Dimension(format!("serving row {i} has {} slots", row.len())));
            }
            for (n, bs) in row.iter().enumerate() {
                match bs {
                    Some(k) if *k < bs_count => assoc[*k][n].push(i),
                    Some(k) => return Err(Error::Dimension(format!("BS index {k} out of range"))),
                    None => rates[i][n] = 0.0,
                }
                if rates[i][n] < 0.0 || !rates[i][n].is_finite() {
                    return Err(Error::Domain {
                        what: "rate",
                        value: rates[i][n],
                    });
                }
            }
        }
        let snr_db = rates
            .iter()
            .zip(&serving)
            .map(|(r, s)| {
                r.iter()
                    .zip(s)
                    .map(|(_, bs)| if bs.is_some() { f64::NAN } else { f64::NEG_INFINITY })
                    .collect()
            })
            .collect();
        Ok(Self {
            rates,
            snr_db,
            serving_bs: serving,
            assoc,
        })
    }

    /// Single-cell matrix in which every user with a positive rate is active.
    pub fn single_cell(rates: Vec<Vec<f64>>) -> Self {
        let serving = rates
            .iter()
            .map(|r| r.iter().map(|&v| (v > 0.0).then_some(0)).collect())
            .collect();
        Self::from_parts(rates, serving, 1).expect("consistent single-cell matrix")
    }

    /// Restricts the matrix to the users in `keep` (in the given order).
    pub fn select_users(&self, keep: &[usize]) -> Self {
        let serving: Vec<Vec<Option<usize>>> = keep.iter().map(|&i| self.serving_bs[i].clone()).collect();
        let mut m = Self::from_parts(
            keep.iter().map(|&i| self.rates[i].clone()).collect(),
            serving,
            self.bs_count(),
        )
        .expect("subset of a valid matrix");
        m.snr_db = keep.iter().map(|&i| self.snr_db[i].clone()).collect();
        m
    }
}

fn noise_dbm(scenario: &Scenario, bandwidth_hz: f64) -> f64 {
    scenario.noise_psd_dbm_hz + 10.0 * bandwidth_hz.log10()
}

/// Predicted rates from future positions. Each active user is served by the
/// BS with the strongest received power (ties go to the lower index).
pub fn build_rate_matrix(scenario: &Scenario, trace: &MobilityTrace) -> Result<RateMatrix> {
    let slots = scenario.time.slots();
    if trace.users() > 0 && trace.slots() != slots {
        return Err(Error::Dimension(format!(
            "trace has {} slots, time grid has {slots}",
            trace.slots()
        )));
    }
    let k_count = scenario.bs_count();
    let mut rates = vec![vec![0.0; slots]; trace.users()];
    let mut snr_db = vec![vec![f64::NEG_INFINITY; slots]; trace.users()];
    let mut serving = vec![vec![None; slots]; trace.users()];
    let mut assoc = vec![vec![Vec::new(); slots]; k_count];

    for i in 0..trace.users() {
        for n in 0..slots {
            let Some(pos) = trace.position(i, n) else { continue };
            let mut best: Option<(usize, f64)> = None;
            for (k, bs) in scenario.base_stations.iter().enumerate() {
                let d_km = (pos.distance(bs.x_m, bs.y_m) / 1000.0).max(MIN_DISTANCE_KM);
                let rx = bs.tx_power_dbm - pathloss_db(d_km)?;
                if best.is_none_or(|(_, b)| rx > b) {
                    best = Some((k, rx));
                }
            }
            let (k, rx) = best.expect("at least one BS");
            let bs = &scenario.base_stations[k];
            let snr = rx - noise_dbm(scenario, bs.bandwidth_hz);
            snr_db[i][n] = snr;
            rates[i][n] = link_rate_bits(snr, bs.bandwidth_hz, scenario.time.tau(), scenario.snr_cap_db);
            serving[i][n] = Some(k);
            assoc[k][n].push(i);
        }
    }
    Ok(RateMatrix {
        rates,
        snr_db,
        serving_bs: serving,
        assoc,
    })
}

/// Rates actually experienced, after prediction error and fading.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedRates {
    pub rates: Vec<Vec<f64>>,
}

impl RealizedRates {
    /// Realized rates equal to the prediction.
    pub fn exact(matrix: &RateMatrix) -> Self {
        Self {
            rates: matrix.rates.clone(),
        }
    }

    pub fn rate(&self, user: usize, slot: usize) -> f64 {
        self.rates[user][slot]
    }
}

/// Stored SNR, or the SNR implied by the rate for matrices built from
/// explicit rates.
fn predicted_snr_db(matrix: &RateMatrix, user: usize, slot: usize, bits_per_unit_snr: f64) -> f64 {
    let snr = matrix.snr_db[user][slot];
    if snr.is_nan() {
        10.0 * (2f64.powf(matrix.rates[user][slot] / bits_per_unit_snr) - 1.0).log10()
    } else {
        snr
    }
}

/// Adds a zero-mean Gaussian error of variance `sigma2` (dB^2) to each
/// active user's predicted SNR and, optionally, a unit-mean exponential
/// power gain (Rayleigh amplitude), then clips and recomputes the rate.
///
/// Draws are taken in row-major (user, slot) order over active cells: one
/// normal sample, then one exponential sample when fading is enabled.
pub fn perturb_rates(
    matrix: &RateMatrix,
    scenario: &Scenario,
    sigma2: f64,
    fast_fading: bool,
    seed: u64,
) -> Result<RealizedRates> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::Domain {
            what: "sigma2",
            value: sigma2,
        });
    }
    if sigma2 == 0.0 && !fast_fading {
        return Ok(RealizedRates::exact(matrix));
    }
    let sigma = sigma2.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rates = matrix.rates.clone();
    for (i, row) in rates.iter_mut().enumerate() {
        for (n, rate) in row.iter_mut().enumerate() {
            let Some(k) = matrix.serving_bs[i][n] else { continue };
            let bs = &scenario.base_stations[k];
            let z: f64 = StandardNormal.sample(&mut rng);
            let mut snr_db = predicted_snr_db(matrix, i, n, bs.bandwidth_hz * scenario.time.tau()) + sigma * z;
            if fast_fading {
                let gain: f64 = Exp1.sample(&mut rng);
                snr_db += 10.0 * gain.log10();
            }
            *rate = link_rate_bits(snr_db, bs.bandwidth_hz, scenario.time.tau(), scenario.snr_cap_db);
        }
    }
    Ok(RealizedRates { rates })
}
