//! Synthetic spatiotemporal field: a desk-scale stand-in for the gridded
//! reanalysis series used in sweeps.
//!
//! Every site mixes one shared smoothed driver with independent local
//! noise. The mixing weight decays exponentially with the site's distance
//! from the origin, sites east of the origin see the driver with a delay
//! (which makes eastward observation points stale), and a fixed annual
//! sinusoid sits on top so the historical-average pipeline has a seasonal
//! trend to remove.

use serde::{Deserialize, Serialize};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::calendar::{datetime_of_slot, SLOTS_PER_YEAR};
use super::series::{SeriesMeta, TimeSeries, Variable};
use super::DataError;
use crate::seed::sub_seed;

/// Cross-shaped lattice around an origin: one latitude band and one
/// longitude band, one site per `step_deg`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub lat_extent_deg: f64,
    pub lon_extent_deg: f64,
    pub step_deg: f64,
}

impl LatticeSpec {
    /// All site coordinates, origin included once, in deterministic order:
    /// the latitude band south to north, then the longitude band west to
    /// east with the origin skipped.
    pub fn sites(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let n_lat = (self.lat_extent_deg / self.step_deg).round() as i64;
        let n_lon = (self.lon_extent_deg / self.step_deg).round() as i64;
        for i in -n_lat..=n_lat {
            out.push((self.origin_lat + i as f64 * self.step_deg, self.origin_lon));
        }
        for j in -n_lon..=n_lon {
            if j == 0 {
                continue;
            }
            out.push((self.origin_lat, self.origin_lon + j as f64 * self.step_deg));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub driver_seed: u64,
    /// Steps of driver delay per degree east of the origin; west is in phase.
    pub lag_per_degree: f64,
    /// e-folding distance of the driver correlation, in degrees.
    pub mixing_length_deg: f64,
    /// Scale of the independent per-site noise component.
    pub noise_level: f64,
    /// Number of 365-day years to generate.
    pub years: usize,
    pub start_year: i32,
    /// Additive level of the annual sinusoid (keeps values positive and
    /// Kelvin-like, which also keeps difference/restore exact in floats).
    pub seasonal_base: f64,
    pub seasonal_amplitude: f64,
    /// AR(1) coefficient of the driver and noise processes, in [0, 1).
    pub smoothing: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            driver_seed: 1,
            lag_per_degree: 0.5,
            mixing_length_deg: 10.0,
            noise_level: 1.0,
            years: 6,
            start_year: 2015,
            seasonal_base: 300.0,
            seasonal_amplitude: 10.0,
            smoothing: 0.95,
        }
    }
}

const AR_WARMUP: usize = 2000;

/// Unit-variance AR(1) sequence with uniform innovations.
fn ar1(seed: u64, coeff: f64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let innovation_scale = (1.0 - coeff * coeff).sqrt() * 3f64.sqrt(); // unit stationary variance
    let mut x = 0.0;
    let mut out = Vec::with_capacity(len);
    for i in 0..AR_WARMUP + len {
        x = coeff * x + innovation_scale * rng.random_range(-1.0..=1.0);
        if i >= AR_WARMUP {
            out.push(x);
        }
    }
    out
}

fn site_seed(driver_seed: u64, lat: f64, lon: f64) -> u64 {
    let key = lat.to_bits().rotate_left(17) ^ lon.to_bits();
    sub_seed(driver_seed ^ key, 101)
}

/// Generate the field for every lattice site. Deterministic given seeds.
///
/// value(s, t) = seasonal(t) + rho(s) * z(t - tau(s))
///             + sqrt(1 - rho(s)^2) * noise_level * eta_s(t)
/// with rho(s) = exp(-dist(s, origin) / mixing_length) and
/// tau(s) = round(lag_per_degree * max(east offset, 0)).
pub fn gen_synthetic(
    grid: &LatticeSpec,
    params: &SyntheticParams,
) -> Result<Vec<TimeSeries>, DataError> {
    if !(params.mixing_length_deg > 0.0) {
        return Err(DataError::InvalidSeries(format!(
            "mixing_length_deg {} must be positive",
            params.mixing_length_deg
        )));
    }
    if !(params.smoothing >= 0.0 && params.smoothing < 1.0) {
        return Err(DataError::InvalidSeries(format!(
            "smoothing {} outside [0, 1)",
            params.smoothing
        )));
    }
    if params.years == 0 {
        return Err(DataError::InvalidSeries("years must be positive".into()));
    }

    let total_steps = params.years * SLOTS_PER_YEAR;
    let max_lag = (params.lag_per_degree * grid.lon_extent_deg.max(0.0)).round() as usize + 1;
    let driver = ar1(sub_seed(params.driver_seed, 1), params.smoothing, total_steps + max_lag);

    let times: Vec<chrono::NaiveDateTime> = (0..total_steps)
        .map(|t| {
            datetime_of_slot(
                params.start_year + (t / SLOTS_PER_YEAR) as i32,
                t % SLOTS_PER_YEAR,
            )
        })
        .collect();
    let seasonal: Vec<f64> = (0..total_steps)
        .map(|t| {
            let phase = (t % SLOTS_PER_YEAR) as f64 / SLOTS_PER_YEAR as f64;
            params.seasonal_base
                - params.seasonal_amplitude * (2.0 * std::f64::consts::PI * phase).cos()
        })
        .collect();

    let mut out = Vec::new();
    for (lat, lon) in grid.sites() {
        let d_lat = lat - grid.origin_lat;
        let d_lon = lon - grid.origin_lon;
        let dist = (d_lat * d_lat + d_lon * d_lon).sqrt();
        let rho = (-dist / params.mixing_length_deg).exp();
        let tau = (params.lag_per_degree * d_lon.max(0.0)).round() as usize;
        let noise_weight = (1.0 - rho * rho).max(0.0).sqrt() * params.noise_level;
        let eta = if noise_weight == 0.0 {
            Vec::new()
        } else {
            ar1(site_seed(params.driver_seed, lat, lon), params.smoothing, total_steps)
        };
        let values: Vec<f64> = (0..total_steps)
            .map(|t| {
                let z = driver[max_lag + t - tau];
                let noise = if noise_weight == 0.0 { 0.0 } else { noise_weight * eta[t] };
                seasonal[t] + rho * z + noise
            })
            .collect();
        let series = TimeSeries::new(
            times.clone(),
            values,
            SeriesMeta {
                lat,
                lon,
                variable: Variable::Synthetic,
                step_hours: 6,
                differenced: false,
            },
        )?;
        out.push(series);
    }
    Ok(out)
}
