//! Climate series ingestion and preprocessing: CSV loading, leap-day
//! removal, historical-average differencing, experiment window splitting,
//! and a synthetic spatiotemporal field for desk-scale testing.

pub mod calendar;
pub mod climatology;
pub mod series;
pub mod split;
pub mod synthetic;

use std::path::PathBuf;

use thiserror::Error;

pub use calendar::{slot_of, SLOTS_PER_YEAR, STEPS_PER_DAY};
pub use climatology::{difference, historical_average, restore_scale, HistoricalAverage};
pub use series::{load_series, strip_leap_days, write_series, SeriesMeta, TimeSeries, Variable};
pub use split::{make_split, DatasetSplit, T_TEST, T_TRAIN, T_TRANS};
pub use synthetic::{gen_synthetic, LatticeSpec, SyntheticParams};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: row {row}: {msg}")]
    Parse { path: PathBuf, row: usize, msg: String },
    #[error("{path}: {msg}")]
    Schema { path: PathBuf, msg: String },
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error("cannot align timestamp to a within-year slot: {0}")]
    Alignment(String),
    #[error("series are misaligned: {0}")]
    MisalignedSeries(String),
    #[error("invalid series: {0}")]
    InvalidSeries(String),
}
