//! Transient / train / test windowing of a paired (observation, target)
//! series for the Year-N experiment: transient = last 300 steps of Year
//! N-2, training = all of Year N-1, test = all of Year N. Each segment is
//! differenced against its own location's historical average computed from
//! the three years strictly before the segment, so no future data leaks in.

use chrono::Datelike;
use nalgebra::DMatrix;

use super::calendar::SLOTS_PER_YEAR;
use super::climatology::{historical_average, HistoricalAverage};
use super::series::{strip_leap_days, TimeSeries};
use super::DataError;

pub const T_TRANS: usize = 300;
pub const T_TRAIN: usize = SLOTS_PER_YEAR;
pub const T_TEST: usize = SLOTS_PER_YEAR;

/// Difference-scale experiment windows plus the averages needed to restore
/// the test period to original scale.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    /// Observation-channel input for the reservoir warm-up.
    pub u_trans: Vec<f64>,
    /// Observation-channel input over the training year; equals row 0 of `y_train`.
    pub u_train: Vec<f64>,
    /// Observation-channel input over the test year; equals row 0 of `y_test`.
    pub u_test: Vec<f64>,
    /// 2 x T_TRAIN targets: row 0 observation point, row 1 target point.
    pub y_train: DMatrix<f64>,
    /// 2 x T_TEST truths on the difference scale.
    pub y_test: DMatrix<f64>,
    /// Test-segment historical average at the observation point.
    pub avg_obs: HistoricalAverage,
    /// Test-segment historical average at the target point.
    pub avg_target: HistoricalAverage,
    pub lengths: (usize, usize, usize),
    /// Within-year slot of the first test step (0 for calendar-year tests).
    pub test_start_slot: usize,
}

/// Extract one full no-leap year in slot order.
fn year_values(series: &TimeSeries, year: i32) -> Result<Vec<f64>, DataError> {
    let mut out = Vec::with_capacity(SLOTS_PER_YEAR);
    for (t, v) in series.times().iter().zip(series.values()) {
        if t.date().year() == year {
            out.push(*v);
        }
    }
    if out.len() != SLOTS_PER_YEAR {
        return Err(DataError::InsufficientHistory(format!(
            "year {year} has {} of {SLOTS_PER_YEAR} steps",
            out.len()
        )));
    }
    Ok(out)
}

/// Difference one whole extracted year against a slot-aligned average.
fn diff_year(values: &[f64], avg: &HistoricalAverage) -> Vec<f64> {
    values.iter().enumerate().map(|(slot, v)| v - avg.at_slot(slot)).collect()
}

/// Build the Year-N split from raw (or pre-differenced) per-location series.
pub fn make_split(
    obs: &TimeSeries,
    target: &TimeSeries,
    year_n: i32,
) -> Result<DatasetSplit, DataError> {
    if obs.meta.step_hours != target.meta.step_hours {
        return Err(DataError::MisalignedSeries(format!(
            "cadence {}h vs {}h",
            obs.meta.step_hours, target.meta.step_hours
        )));
    }
    if obs.meta.differenced != target.meta.differenced {
        return Err(DataError::MisalignedSeries(
            "one series is pre-differenced and the other is not".into(),
        ));
    }
    let obs = strip_leap_days(obs);
    let target = strip_leap_days(target);
    let pre_differenced = obs.meta.differenced;

    // per location: (transient year, train year, test year) difference data
    // plus the test-segment average
    let prepare = |series: &TimeSeries| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, HistoricalAverage), DataError> {
        let trans_raw = year_values(series, year_n - 2)?;
        let train_raw = year_values(series, year_n - 1)?;
        let test_raw = year_values(series, year_n)?;
        if pre_differenced {
            Ok((trans_raw, train_raw, test_raw, HistoricalAverage::zeros()))
        } else {
            let avg_trans = historical_average(series, 3, year_n - 2)?;
            let avg_train = historical_average(series, 3, year_n - 1)?;
            let avg_test = historical_average(series, 3, year_n)?;
            Ok((
                diff_year(&trans_raw, &avg_trans),
                diff_year(&train_raw, &avg_train),
                diff_year(&test_raw, &avg_test),
                avg_test,
            ))
        }
    };

    let (obs_trans, obs_train, obs_test, avg_obs) = prepare(&obs)?;
    let (_tgt_trans, tgt_train, tgt_test, avg_target) = prepare(&target)?;

    let u_trans = obs_trans[SLOTS_PER_YEAR - T_TRANS..].to_vec();
    let y_train = DMatrix::from_fn(2, T_TRAIN, |r, c| if r == 0 { obs_train[c] } else { tgt_train[c] });
    let y_test = DMatrix::from_fn(2, T_TEST, |r, c| if r == 0 { obs_test[c] } else { tgt_test[c] });

    Ok(DatasetSplit {
        u_trans,
        u_train: obs_train,
        u_test: obs_test,
        y_train,
        y_test,
        avg_obs,
        avg_target,
        lengths: (T_TRANS, T_TRAIN, T_TEST),
        test_start_slot: 0,
    })
}
