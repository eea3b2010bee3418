//! Historical average (slot-wise climatology over the preceding years) and
//! the difference / restore-scale pair built on it.

use std::fs;
use std::path::Path;

use chrono::Datelike;
use serde::{Deserialize, Serialize};

use super::calendar::{slot_of, SLOTS_PER_YEAR};
use super::series::TimeSeries;
use super::DataError;

/// Slot-keyed mean of the preceding `source_years` years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricalAverage {
    averages: Vec<f64>,
    pub source_years: usize,
}

impl HistoricalAverage {
    pub fn new(averages: Vec<f64>, source_years: usize) -> Result<Self, DataError> {
        if averages.len() != SLOTS_PER_YEAR {
            return Err(DataError::InvalidSeries(format!(
                "historical average must have {SLOTS_PER_YEAR} slots, got {}",
                averages.len()
            )));
        }
        if averages.iter().any(|v| !v.is_finite()) {
            return Err(DataError::InvalidSeries("non-finite historical average".into()));
        }
        Ok(Self { averages, source_years })
    }

    /// All-zero averages: differencing against this is the identity, which
    /// is how pre-differenced inputs are carried through the pipeline.
    pub fn zeros() -> Self {
        Self { averages: vec![0.0; SLOTS_PER_YEAR], source_years: 0 }
    }

    pub fn values(&self) -> &[f64] {
        &self.averages
    }

    pub fn at_slot(&self, slot: usize) -> f64 {
        self.averages[slot]
    }

    pub fn is_zero(&self) -> bool {
        self.averages.iter().all(|&v| v == 0.0)
    }

    /// CSV form (`slot,value`, 1460 rows) used for average sidecar files.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut out = String::with_capacity(SLOTS_PER_YEAR * 16);
        out.push_str("slot,value\n");
        for (slot, v) in self.averages.iter().enumerate() {
            out.push_str(&format!("{slot},{v}\n"));
        }
        fs::write(path, out).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
    }

    pub fn load_csv(path: &Path) -> Result<Self, DataError> {
        let text = fs::read_to_string(path)
            .map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
        let mut averages = vec![f64::NAN; SLOTS_PER_YEAR];
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if line.trim() != "slot,value" {
                    return Err(DataError::Schema {
                        path: path.to_path_buf(),
                        msg: format!("expected header slot,value, got {line:?}"),
                    });
                }
                continue;
            }
            let parse = || -> Option<(usize, f64)> {
                let (s, v) = line.split_once(',')?;
                Some((s.trim().parse().ok()?, v.trim().parse().ok()?))
            };
            let (slot, v) = parse().ok_or_else(|| DataError::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                msg: format!("bad row {line:?}"),
            })?;
            if slot >= SLOTS_PER_YEAR {
                return Err(DataError::Parse {
                    path: path.to_path_buf(),
                    row: i + 1,
                    msg: format!("slot {slot} out of range"),
                });
            }
            averages[slot] = v;
        }
        Self::new(averages, 3).map_err(|e| DataError::Schema {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }
}

/// Slot-wise mean over the `window_years` years strictly before `upto_year`.
/// Every slot must be covered in every window year (after leap stripping;
/// Feb 29 rows, if still present, are ignored).
pub fn historical_average(
    series: &TimeSeries,
    window_years: usize,
    upto_year: i32,
) -> Result<HistoricalAverage, DataError> {
    if window_years == 0 {
        return Err(DataError::InsufficientHistory("window_years must be positive".into()));
    }
    let first_year = upto_year - window_years as i32;
    let mut sums = vec![0.0f64; SLOTS_PER_YEAR];
    let mut counts = vec![0usize; SLOTS_PER_YEAR];
    for (t, v) in series.times().iter().zip(series.values()) {
        let year = t.date().year();
        if year < first_year || year >= upto_year {
            continue;
        }
        let Some(slot) = slot_of(*t) else {
            if super::calendar::is_leap_day(t.date()) {
                continue;
            }
            return Err(DataError::Alignment(format!("timestamp {t} off the six-hour grid")));
        };
        sums[slot] += v;
        counts[slot] += 1;
    }
    for (slot, &c) in counts.iter().enumerate() {
        if c != window_years {
            return Err(DataError::InsufficientHistory(format!(
                "slot {slot} covered by {c} of {window_years} years in [{first_year}, {})",
                upto_year
            )));
        }
    }
    let averages = sums.iter().map(|s| s / window_years as f64).collect();
    HistoricalAverage::new(averages, window_years)
}

/// Subtract the slot-matched average from every sample.
pub fn difference(series: &TimeSeries, avg: &HistoricalAverage) -> Result<TimeSeries, DataError> {
    let mut values = Vec::with_capacity(series.len());
    for (t, v) in series.times().iter().zip(series.values()) {
        let slot = slot_of(*t).ok_or_else(|| {
            DataError::Alignment(format!("timestamp {t} has no slot (strip leap days first?)"))
        })?;
        values.push(v - avg.at_slot(slot));
    }
    Ok(series.with_values(values, true))
}

/// Add the slot-matched average back; exact inverse of `difference`.
pub fn restore_scale(series: &TimeSeries, avg: &HistoricalAverage) -> Result<TimeSeries, DataError> {
    let mut values = Vec::with_capacity(series.len());
    for (t, v) in series.times().iter().zip(series.values()) {
        let slot = slot_of(*t).ok_or_else(|| {
            DataError::Alignment(format!("timestamp {t} has no slot (strip leap days first?)"))
        })?;
        values.push(v + avg.at_slot(slot));
    }
    Ok(series.with_values(values, false))
}
