//! End-to-end experiment orchestration: the JSON experiment config, the
//! per-cell and sweep runners, and the report files they produce.
//!
//! An empty config override (`{}`) reproduces the default protocol: 400-node
//! reservoir, (density, input scaling, spectral radius, ridge beta) =
//! (0.02, 0.2, 0.5, 1.0), transient/train/test = 300/1460/1460 steps, a
//! latitude sweep of +-25 degrees in 1-degree steps, years 2017-2021.

mod report;
mod runner;

pub use report::{
    build_report, load_records_csv, write_analysis_outputs, write_outputs, write_tune_outputs,
    RangeSummary, RegressionPoints, RegressionSummary, ReportOptions, SummaryDocument,
    SweepReport,
};
pub use runner::{
    run_gen_synthetic, run_ingest_check, run_single, run_sweep, run_tune, CellFailure,
    CellOutput, IngestReport,
};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DataError, SyntheticParams, Variable};
use crate::eval::{Location, Method, SweepAxis};
use crate::reservoir::{LeakMode, ReservoirParams};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Reservoir and readout hyperparameters. `li_esn_alpha` and the
/// `dts_log10_*` range only apply to the leaky and distributed-leak
/// variants respectively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsnSettings {
    pub n_reservoir: usize,
    pub density: f64,
    pub input_scaling: f64,
    pub spectral_radius: f64,
    pub ridge_beta: f64,
    pub li_esn_alpha: f64,
    pub dts_log10_min: f64,
    pub dts_log10_max: f64,
}

impl Default for EsnSettings {
    fn default() -> Self {
        Self {
            n_reservoir: 400,
            density: 0.02,
            input_scaling: 0.2,
            spectral_radius: 0.5,
            ridge_beta: 1.0,
            li_esn_alpha: 0.1,
            dts_log10_min: -3.0,
            dts_log10_max: 0.0,
        }
    }
}

/// Grid-search section: value axes plus the calibration cells (offsets
/// along the sweep axis, evaluated for `calibration_years` or the main
/// experiment years when unset).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSettings {
    pub density_values: Vec<f64>,
    pub input_scaling_values: Vec<f64>,
    pub spectral_radius_values: Vec<f64>,
    pub ridge_beta_values: Vec<f64>,
    pub calibration_offsets_deg: Vec<f64>,
    pub calibration_years: Option<Vec<i32>>,
    pub n_seeds: usize,
}

impl Default for TuneSettings {
    fn default() -> Self {
        Self {
            density_values: (1..=10).map(|i| i as f64 / 100.0).collect(),
            input_scaling_values: (1..=20).map(|i| i as f64 * 0.05).collect(),
            spectral_radius_values: (1..=12).map(|i| i as f64 / 10.0).collect(),
            ridge_beta_values: (1..=20).map(|i| i as f64 * 0.05).collect(),
            calibration_offsets_deg: vec![1.0, -10.0, -25.0],
            calibration_years: None,
            n_seeds: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variable: Variable,
    pub target_location: Location,
    pub sweep_axis: SweepAxis,
    /// Sweep half-width: observation points go this many degrees to each side.
    pub sweep_extent_deg: f64,
    pub sweep_step_deg: f64,
    pub years: Vec<i32>,
    pub methods: Vec<Method>,
    pub esn: EsnSettings,
    pub data_root: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Margin on the baseline for the predictable-range threshold.
    pub range_margin: f64,
    /// Only cells within this offset feed the correlation/error regression.
    pub regression_max_offset_deg: f64,
    /// Regress on per-year points instead of per-offset multi-year means.
    pub regression_per_year_points: bool,
    pub synthetic: SyntheticParams,
    pub tune: TuneSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variable: Variable::Temp,
            target_location: Location { lat: 35.0, lon: 139.0 },
            sweep_axis: SweepAxis::Latitude,
            sweep_extent_deg: 25.0,
            sweep_step_deg: 1.0,
            years: (2017..=2021).collect(),
            methods: vec![Method::Esn, Method::Var, Method::HistoricalAverage],
            esn: EsnSettings::default(),
            data_root: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
            seed: 42,
            range_margin: 0.05,
            regression_max_offset_deg: 10.0,
            regression_per_year_points: false,
            synthetic: SyntheticParams::default(),
            tune: TuneSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path)
            .map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| ExperimentError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let err = |msg: String| Err(ExperimentError::Config(msg));
        if !(self.sweep_extent_deg > 0.0) {
            return err(format!("sweep_extent_deg {} must be positive", self.sweep_extent_deg));
        }
        if !(self.sweep_step_deg > 0.0) {
            return err(format!("sweep_step_deg {} must be positive", self.sweep_step_deg));
        }
        if self.years.is_empty() {
            return err("years must be non-empty".into());
        }
        if self.methods.is_empty() {
            return err("methods must be non-empty".into());
        }
        if !(self.range_margin >= 0.0 && self.range_margin < 1.0) {
            return err(format!("range_margin {} outside [0, 1)", self.range_margin));
        }
        for method in &self.methods {
            if let Some(params) = self.reservoir_params_for(*method) {
                params
                    .validate()
                    .map_err(|e| ExperimentError::Config(format!("esn settings: {e}")))?;
            }
        }
        Ok(())
    }

    /// Reservoir parameters for an ESN-family method; None for the
    /// statistical methods.
    pub fn reservoir_params_for(&self, method: Method) -> Option<ReservoirParams> {
        let leak_mode = match method {
            Method::Esn => LeakMode::Uniform { alpha: 1.0 },
            Method::LiEsn => LeakMode::Uniform { alpha: self.esn.li_esn_alpha },
            Method::DtsEsn => LeakMode::Distributed {
                log10_min: self.esn.dts_log10_min,
                log10_max: self.esn.dts_log10_max,
            },
            Method::Var | Method::HistoricalAverage => return None,
        };
        Some(ReservoirParams {
            n_input: 1,
            n_reservoir: self.esn.n_reservoir,
            n_output: 2,
            density: self.esn.density,
            input_scaling: self.esn.input_scaling,
            spectral_radius_target: self.esn.spectral_radius,
            leak_mode,
            seed: self.seed,
        })
    }

    /// Observation-point offsets along the sweep axis, ascending, origin included.
    pub fn offsets(&self) -> Vec<f64> {
        let n = (self.sweep_extent_deg / self.sweep_step_deg).round() as i64;
        (-n..=n).map(|k| k as f64 * self.sweep_step_deg).collect()
    }

    pub fn obs_location(&self, offset_deg: f64) -> Location {
        match self.sweep_axis {
            SweepAxis::Latitude => Location {
                lat: self.target_location.lat + offset_deg,
                lon: self.target_location.lon,
            },
            SweepAxis::Longitude => Location {
                lat: self.target_location.lat,
                lon: self.target_location.lon + offset_deg,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_override_reproduces_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.esn.n_reservoir, 400);
        assert_eq!(
            (cfg.esn.density, cfg.esn.input_scaling, cfg.esn.spectral_radius, cfg.esn.ridge_beta),
            (0.02, 0.2, 0.5, 1.0)
        );
        assert_eq!(cfg.years, vec![2017, 2018, 2019, 2020, 2021]);
    }

    #[test]
    fn unknown_fields_are_config_errors() {
        let r: Result<ExperimentConfig, _> = serde_json::from_str(r#"{"sweep_exten": 10}"#);
        assert!(r.is_err());
    }

    #[test]
    fn offsets_are_symmetric_and_include_origin() {
        let cfg = ExperimentConfig {
            sweep_extent_deg: 3.0,
            sweep_step_deg: 1.5,
            ..Default::default()
        };
        assert_eq!(cfg.offsets(), vec![-3.0, -1.5, 0.0, 1.5, 3.0]);
    }

    #[test]
    fn method_leak_modes() {
        let cfg = ExperimentConfig::default();
        let esn = cfg.reservoir_params_for(Method::Esn).unwrap();
        assert_eq!(esn.leak_mode, LeakMode::Uniform { alpha: 1.0 });
        let li = cfg.reservoir_params_for(Method::LiEsn).unwrap();
        assert_eq!(li.leak_mode, LeakMode::Uniform { alpha: 0.1 });
        let dts = cfg.reservoir_params_for(Method::DtsEsn).unwrap();
        assert_eq!(dts.leak_mode, LeakMode::Distributed { log10_min: -3.0, log10_max: 0.0 });
        assert!(cfg.reservoir_params_for(Method::Var).is_none());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = ExperimentConfig { sweep_extent_deg: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig { years: vec![], ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            esn: EsnSettings { density: 2.0, ..Default::default() },
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
