//! Cell, sweep, tuning, synthetic-generation, and ingest-check runners.
//!
//! Sweep cells are independent (method, offset, year) work items; a failing
//! cell becomes a failure entry instead of aborting the sweep, and diverged
//! VAR runs are recorded as outcomes, not failures.

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{build_report, ReportOptions, SweepReport};
use super::{ExperimentConfig, ExperimentError};
use crate::data::{
    gen_synthetic, load_series, make_split, series::series_path, write_series, DatasetSplit,
    HistoricalAverage, LatticeSpec, TimeSeries, Variable,
};
use crate::eval::{
    historical_average_prediction, nrmse, pearson_correlation, restore_test_prediction,
    test_truth_original, Location, Method, PredictionRecord,
};
use crate::pipeline::{run_esn_on_split, run_var_on_split};
use crate::reservoir::{init_reservoir, Reservoir};
use crate::tune::{grid_search, GridSearchResult, GridSpec};

/// A cell (or one method of a cell) that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    /// None when the whole cell failed before any method ran.
    pub method: Option<Method>,
    pub obs_location: Location,
    pub year: i32,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct CellOutput {
    pub records: Vec<PredictionRecord>,
    pub failures: Vec<CellFailure>,
}

fn dedup_methods(methods: &[Method]) -> Vec<Method> {
    let mut out = Vec::new();
    for &m in methods {
        if !out.contains(&m) {
            out.push(m);
        }
    }
    out
}

fn build_reservoirs(
    cfg: &ExperimentConfig,
    methods: &[Method],
) -> Result<BTreeMap<Method, Reservoir>, ExperimentError> {
    let mut out = BTreeMap::new();
    for &m in methods {
        if let Some(params) = cfg.reservoir_params_for(m) {
            let reservoir = init_reservoir(&params).map_err(|e| {
                ExperimentError::Config(format!("reservoir construction for {m}: {e}"))
            })?;
            out.insert(m, reservoir);
        }
    }
    Ok(out)
}

fn avg_sidecar_path(cfg: &ExperimentConfig, loc: Location, year: i32) -> PathBuf {
    cfg.data_root
        .join(cfg.variable.to_string())
        .join(format!("{}_{}.avg.{}.csv", loc.lat, loc.lon, year))
}

/// Pre-differenced inputs carry zero averages; pick up per-year average
/// sidecar files when provided so the test period can still be restored to
/// the original scale.
fn attach_avg_sidecars(
    cfg: &ExperimentConfig,
    split: &mut DatasetSplit,
    obs_loc: Location,
    year: i32,
) -> Result<(), String> {
    if !split.avg_obs.is_zero() {
        return Ok(());
    }
    for (loc, slot) in [(obs_loc, 0usize), (cfg.target_location, 1usize)] {
        let path = avg_sidecar_path(cfg, loc, year);
        if path.exists() {
            let avg = HistoricalAverage::load_csv(&path).map_err(|e| e.to_string())?;
            if slot == 0 {
                split.avg_obs = avg;
            } else {
                split.avg_target = avg;
            }
        }
    }
    Ok(())
}

fn run_cell(
    cfg: &ExperimentConfig,
    methods: &[Method],
    reservoirs: &BTreeMap<Method, Reservoir>,
    obs_series: &TimeSeries,
    target_series: &TimeSeries,
    obs_loc: Location,
    year: i32,
) -> CellOutput {
    let mut out = CellOutput::default();
    let fail_all = |message: String| {
        let failures = vec![CellFailure { method: None, obs_location: obs_loc, year, message }];
        CellOutput { records: Vec::new(), failures }
    };

    let mut split = match make_split(obs_series, target_series, year) {
        Ok(s) => s,
        Err(e) => return fail_all(e.to_string()),
    };
    if let Err(msg) = attach_avg_sidecars(cfg, &mut split, obs_loc, year) {
        return fail_all(format!("average sidecar: {msg}"));
    }

    let y1_true: Vec<f64> = split.y_test.row(0).iter().copied().collect();
    let y2_true: Vec<f64> = split.y_test.row(1).iter().copied().collect();
    let io_correlation = match pearson_correlation(&y1_true, &y2_true) {
        Ok(r) => r,
        Err(e) => return fail_all(format!("io correlation: {e}")),
    };

    let truth = test_truth_original(&split);
    let mut push_record = |method: Method, nrmse_value: Option<f64>, diverged: bool| {
        debug_assert_eq!(nrmse_value.is_none(), diverged);
        out.records.push(PredictionRecord {
            method,
            obs_location: obs_loc,
            target_location: cfg.target_location,
            year,
            nrmse: nrmse_value,
            io_correlation,
            diverged,
        });
    };
    let mut push_failure = |method: Method, message: String| {
        out.failures.push(CellFailure {
            method: Some(method),
            obs_location: obs_loc,
            year,
            message,
        });
    };

    for &method in methods {
        match method {
            Method::Esn | Method::LiEsn | Method::DtsEsn => {
                let reservoir = &reservoirs[&method];
                let result = run_esn_on_split(reservoir, cfg.esn.ridge_beta, &split)
                    .map_err(|e| e.to_string())
                    .and_then(|run| {
                        let pred = restore_test_prediction(&split, &run.pred_diff);
                        nrmse(&pred, &truth).map_err(|e| e.to_string())
                    });
                match result {
                    Ok(v) => push_record(method, Some(v), false),
                    Err(msg) => push_failure(method, msg),
                }
            }
            Method::Var => match run_var_on_split(&split) {
                Ok(run) if run.prediction.diverged => push_record(method, None, true),
                Ok(run) => {
                    let t_test = run.prediction.y2.len();
                    let pred_diff = DMatrix::from_fn(2, t_test, |r, c| {
                        if r == 0 {
                            run.prediction.y1[c]
                        } else {
                            run.prediction.y2[c]
                        }
                    });
                    let pred = restore_test_prediction(&split, &pred_diff);
                    match nrmse(&pred, &truth) {
                        Ok(v) => push_record(method, Some(v), false),
                        Err(e) => push_failure(method, e.to_string()),
                    }
                }
                Err(e) => push_failure(method, e.to_string()),
            },
            Method::HistoricalAverage => {
                let pred = historical_average_prediction(&split);
                match nrmse(&pred, &truth) {
                    Ok(v) => push_record(method, Some(v), false),
                    Err(e) => push_failure(method, e.to_string()),
                }
            }
        }
    }
    out
}

fn load_target(cfg: &ExperimentConfig) -> Result<TimeSeries, ExperimentError> {
    let path = series_path(
        &cfg.data_root,
        cfg.variable,
        cfg.target_location.lat,
        cfg.target_location.lon,
    );
    Ok(load_series(&path)?)
}

fn same_location(a: Location, b: Location) -> bool {
    a.lat == b.lat && a.lon == b.lon
}

/// Evaluate every configured method for one (observation point, year) cell.
pub fn run_single(
    cfg: &ExperimentConfig,
    obs_location: Location,
    year: i32,
) -> Result<CellOutput, ExperimentError> {
    cfg.validate()?;
    let methods = dedup_methods(&cfg.methods);
    let reservoirs = build_reservoirs(cfg, &methods)?;
    let target_series = load_target(cfg)?;
    let obs_series = if same_location(obs_location, cfg.target_location) {
        target_series.clone()
    } else {
        load_series(&series_path(&cfg.data_root, cfg.variable, obs_location.lat, obs_location.lon))?
    };
    Ok(run_cell(cfg, &methods, &reservoirs, &obs_series, &target_series, obs_location, year))
}

/// Run the full observation-point sweep and assemble the report.
/// Deterministic for a given config, independent of thread count.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepReport, ExperimentError> {
    cfg.validate()?;
    let methods = dedup_methods(&cfg.methods);
    let reservoirs = build_reservoirs(cfg, &methods)?;
    let target_series = load_target(cfg)?;

    let obs_list: Vec<(Location, Result<TimeSeries, String>)> = cfg
        .offsets()
        .into_iter()
        .map(|off| {
            let loc = cfg.obs_location(off);
            let series = if same_location(loc, cfg.target_location) {
                Ok(target_series.clone())
            } else {
                load_series(&series_path(&cfg.data_root, cfg.variable, loc.lat, loc.lon))
                    .map_err(|e| e.to_string())
            };
            (loc, series)
        })
        .collect();

    let mut cells: Vec<(usize, i32)> = Vec::new();
    for idx in 0..obs_list.len() {
        for &year in &cfg.years {
            cells.push((idx, year));
        }
    }

    let outputs: Vec<CellOutput> = cells
        .par_iter()
        .map(|&(idx, year)| {
            let (loc, ref series) = obs_list[idx];
            match series {
                Ok(series) => {
                    run_cell(cfg, &methods, &reservoirs, series, &target_series, loc, year)
                }
                Err(msg) => CellOutput {
                    records: Vec::new(),
                    failures: vec![CellFailure {
                        method: None,
                        obs_location: loc,
                        year,
                        message: msg.clone(),
                    }],
                },
            }
        })
        .collect();

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for mut o in outputs {
        records.append(&mut o.records);
        failures.append(&mut o.failures);
    }
    let opts = ReportOptions {
        axis: cfg.sweep_axis,
        range_margin: cfg.range_margin,
        regression_max_offset_deg: cfg.regression_max_offset_deg,
        regression_per_year_points: cfg.regression_per_year_points,
    };
    Ok(build_report(records, failures, &opts))
}

/// Build the calibration splits and run the hyperparameter grid search.
pub fn run_tune(cfg: &ExperimentConfig) -> Result<GridSearchResult, ExperimentError> {
    cfg.validate()?;
    let target_series = load_target(cfg)?;
    let years = cfg.tune.calibration_years.clone().unwrap_or_else(|| cfg.years.clone());
    if years.is_empty() || cfg.tune.calibration_offsets_deg.is_empty() {
        return Err(ExperimentError::Config(
            "tune needs at least one calibration offset and year".into(),
        ));
    }
    let mut sets = Vec::new();
    for &off in &cfg.tune.calibration_offsets_deg {
        let loc = cfg.obs_location(off);
        let obs = if same_location(loc, cfg.target_location) {
            target_series.clone()
        } else {
            load_series(&series_path(&cfg.data_root, cfg.variable, loc.lat, loc.lon))?
        };
        for &year in &years {
            sets.push(make_split(&obs, &target_series, year)?);
        }
    }
    let base_params = cfg
        .reservoir_params_for(Method::Esn)
        .expect("plain esn always has reservoir params");
    let spec = GridSpec {
        density_values: cfg.tune.density_values.clone(),
        input_scaling_values: cfg.tune.input_scaling_values.clone(),
        spectral_radius_values: cfg.tune.spectral_radius_values.clone(),
        ridge_beta_values: cfg.tune.ridge_beta_values.clone(),
        base_params,
        n_seeds: cfg.tune.n_seeds,
    };
    grid_search(&spec, &sets).map_err(ExperimentError::Config)
}

/// Generate the synthetic field for the config's sweep geometry and write
/// it under `<data_root>/synthetic/`. Returns the number of series written.
pub fn run_gen_synthetic(cfg: &ExperimentConfig) -> Result<usize, ExperimentError> {
    cfg.validate()?;
    let grid = LatticeSpec {
        origin_lat: cfg.target_location.lat,
        origin_lon: cfg.target_location.lon,
        lat_extent_deg: cfg.sweep_extent_deg,
        lon_extent_deg: cfg.sweep_extent_deg,
        step_deg: cfg.sweep_step_deg,
    };
    let series = gen_synthetic(&grid, &cfg.synthetic)?;
    for s in &series {
        let path = series_path(&cfg.data_root, Variable::Synthetic, s.meta.lat, s.meta.lon);
        write_series(s, &path)?;
    }
    Ok(series.len())
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub n_locations: usize,
    pub problems: Vec<(Location, String)>,
}

/// Validate that every file the sweep needs loads and covers its years.
pub fn run_ingest_check(cfg: &ExperimentConfig) -> Result<IngestReport, ExperimentError> {
    cfg.validate()?;
    let mut problems = Vec::new();
    let target_series = match load_target(cfg) {
        Ok(s) => Some(s),
        Err(e) => {
            problems.push((cfg.target_location, e.to_string()));
            None
        }
    };
    let offsets = cfg.offsets();
    if let Some(target_series) = &target_series {
        for &off in &offsets {
            let loc = cfg.obs_location(off);
            let obs = if same_location(loc, cfg.target_location) {
                Ok(target_series.clone())
            } else {
                load_series(&series_path(&cfg.data_root, cfg.variable, loc.lat, loc.lon))
                    .map_err(ExperimentError::from)
            };
            match obs {
                Ok(obs) => {
                    for &year in &cfg.years {
                        if let Err(e) = make_split(&obs, target_series, year) {
                            problems.push((loc, format!("year {year}: {e}")));
                        }
                    }
                }
                Err(e) => problems.push((loc, e.to_string())),
            }
        }
    }
    Ok(IngestReport { n_locations: offsets.len() + 1, problems })
}
