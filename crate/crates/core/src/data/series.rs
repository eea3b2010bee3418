//! Time series container plus the on-disk format: a `time,value` CSV with
//! a JSON metadata sidecar (`<name>.meta.json`).

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::calendar::is_leap_day;
use super::DataError;

const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    Temp,
    Pres,
    Synthetic,
}

impl std::fmt::Display for Variable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variable::Temp => write!(f, "temp"),
            Variable::Pres => write!(f, "pres"),
            Variable::Synthetic => write!(f, "synthetic"),
        }
    }
}

impl std::str::FromStr for Variable {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "temp" => Ok(Variable::Temp),
            "pres" => Ok(Variable::Pres),
            "synthetic" => Ok(Variable::Synthetic),
            other => Err(format!("unknown variable {other:?}")),
        }
    }
}

/// Sidecar metadata for one per-location series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub lat: f64,
    pub lon: f64,
    pub variable: Variable,
    pub step_hours: u32,
    /// True when the values are already difference data (historical average
    /// subtracted); such series skip the differencing stage.
    pub differenced: bool,
}

/// Uniformly sampled scalar series with location and cadence metadata.
/// Timestamps are stored per row; after leap-day stripping the cadence has
/// 24-hour gaps where Feb 29 used to be.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<NaiveDateTime>,
    values: Vec<f64>,
    pub meta: SeriesMeta,
}

impl TimeSeries {
    pub fn new(
        times: Vec<NaiveDateTime>,
        values: Vec<f64>,
        meta: SeriesMeta,
    ) -> Result<Self, DataError> {
        if times.len() != values.len() {
            return Err(DataError::InvalidSeries(format!(
                "{} timestamps vs {} values",
                times.len(),
                values.len()
            )));
        }
        if times.is_empty() {
            return Err(DataError::InvalidSeries("empty series".into()));
        }
        if meta.step_hours == 0 || 24 % meta.step_hours != 0 {
            return Err(DataError::InvalidSeries(format!(
                "step_hours {} must divide 24",
                meta.step_hours
            )));
        }
        for w in times.windows(2) {
            if w[1] <= w[0] {
                return Err(DataError::InvalidSeries(format!(
                    "timestamps not strictly increasing at {}",
                    w[1]
                )));
            }
        }
        for (t, v) in times.iter().zip(&values) {
            if !v.is_finite() {
                return Err(DataError::InvalidSeries(format!("non-finite value at {t}")));
            }
            if t.hour() % meta.step_hours != 0 || t.minute() != 0 || t.second() != 0 {
                return Err(DataError::InvalidSeries(format!(
                    "timestamp {t} off the {}-hour grid",
                    meta.step_hours
                )));
            }
        }
        Ok(Self { times, values, meta })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn times(&self) -> &[NaiveDateTime] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start_time(&self) -> NaiveDateTime {
        self.times[0]
    }

    /// Same timestamps and metadata, new values.
    pub(crate) fn with_values(&self, values: Vec<f64>, differenced: bool) -> TimeSeries {
        debug_assert_eq!(values.len(), self.values.len());
        TimeSeries {
            times: self.times.clone(),
            values,
            meta: SeriesMeta { differenced, ..self.meta.clone() },
        }
    }
}

/// Remove all four six-hourly slots of every Feb 29. Non-leap data pass
/// through untouched.
pub fn strip_leap_days(series: &TimeSeries) -> TimeSeries {
    let mut times = Vec::with_capacity(series.times.len());
    let mut values = Vec::with_capacity(series.values.len());
    for (t, v) in series.times.iter().zip(&series.values) {
        if !is_leap_day(t.date()) {
            times.push(*t);
            values.push(*v);
        }
    }
    TimeSeries { times, values, meta: series.meta.clone() }
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

/// Load a series from `path` (CSV, header `time,value`) and its `.meta.json`
/// sidecar.
pub fn load_series(path: &Path) -> Result<TimeSeries, DataError> {
    let meta_path = sidecar_path(path);
    let meta_text = fs::read_to_string(&meta_path)
        .map_err(|source| DataError::Io { path: meta_path.clone(), source })?;
    let meta: SeriesMeta = serde_json::from_str(&meta_text)
        .map_err(|e| DataError::Schema { path: meta_path.clone(), msg: e.to_string() })?;

    let file =
        fs::File::open(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    {
        let headers = reader
            .headers()
            .map_err(|e| DataError::Schema { path: path.to_path_buf(), msg: e.to_string() })?;
        if headers.len() != 2 || &headers[0] != "time" || &headers[1] != "value" {
            return Err(DataError::Schema {
                path: path.to_path_buf(),
                msg: format!("expected header time,value, got {headers:?}"),
            });
        }
    }

    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, after the header line
        let record = record.map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            row,
            msg: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                row,
                msg: format!("expected 2 fields, got {}", record.len()),
            });
        }
        let t = NaiveDateTime::parse_from_str(&record[0], TIME_FORMAT).map_err(|e| {
            DataError::Parse {
                path: path.to_path_buf(),
                row,
                msg: format!("bad timestamp {:?}: {e}", &record[0]),
            }
        })?;
        let v: f64 = record[1].parse().map_err(|e| DataError::Parse {
            path: path.to_path_buf(),
            row,
            msg: format!("bad value {:?}: {e}", &record[1]),
        })?;
        if !v.is_finite() {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                row,
                msg: format!("non-finite value {:?}", &record[1]),
            });
        }
        times.push(t);
        values.push(v);
    }
    TimeSeries::new(times, values, meta)
        .map_err(|e| DataError::Schema { path: path.to_path_buf(), msg: e.to_string() })
}

/// Write a series and its sidecar. Values print in shortest round-trip
/// form, so write-then-load is bit-identical.
pub fn write_series(series: &TimeSeries, path: &Path) -> Result<(), DataError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|source| DataError::Io { path: parent.to_path_buf(), source })?;
    }
    let mut out = String::with_capacity(series.len() * 32);
    out.push_str("time,value\n");
    for (t, v) in series.times.iter().zip(&series.values) {
        out.push_str(&format!("{},{}\n", t.format(TIME_FORMAT), v));
    }
    fs::write(path, out).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;

    let meta_path = sidecar_path(path);
    let meta_text = serde_json::to_string_pretty(&series.meta).expect("meta serializes");
    fs::write(&meta_path, meta_text)
        .map_err(|source| DataError::Io { path: meta_path, source })?;
    Ok(())
}

/// `<data_root>/<variable>/<lat>_<lon>.csv` with signed decimal degrees.
pub fn series_path(data_root: &Path, variable: Variable, lat: f64, lon: f64) -> PathBuf {
    data_root.join(variable.to_string()).join(format!("{lat}_{lon}.csv"))
}
