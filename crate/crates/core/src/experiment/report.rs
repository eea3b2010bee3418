//! Report assembly and the output files: `records.csv`, `summary.json`,
//! `regression.json`. Re-running `build_report` on a loaded `records.csv`
//! reproduces the aggregates exactly; there is no hidden state.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::runner::CellFailure;
use super::ExperimentError;
use crate::eval::{
    aggregate, baseline_nrmse, fit_shared_intercept_lines, predictable_range,
    scaled_correlation_curve, sort_records, Location, Method, OffsetSummary, PredictableRange,
    PredictionRecord, SweepAxis,
};

#[derive(Debug, Clone, Copy)]
pub struct ReportOptions {
    pub axis: SweepAxis,
    pub range_margin: f64,
    pub regression_max_offset_deg: f64,
    pub regression_per_year_points: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeSummary {
    pub method: Method,
    pub margin: f64,
    pub baseline_nrmse: f64,
    #[serde(flatten)]
    pub range: PredictableRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSummary {
    pub method_a: Method,
    pub method_b: Method,
    pub slope_a: f64,
    pub slope_b: f64,
    pub intercept: f64,
    pub n_points_a: usize,
    pub n_points_b: usize,
    pub max_offset_deg: f64,
    pub per_year_points: bool,
}

/// The (correlation, NRMSE) points behind the regression, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionPoints {
    pub method_a: Vec<(f64, f64)>,
    pub method_b: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub axis: SweepAxis,
    pub target_location: Option<Location>,
    pub records: Vec<PredictionRecord>,
    pub offsets: Vec<OffsetSummary>,
    /// Scaled (1 - correlation) overlay aligned with `offsets`.
    pub scaled_correlation: Vec<Option<f64>>,
    pub baseline_nrmse: Option<f64>,
    pub predictable_range: Option<RangeSummary>,
    pub regression: Option<RegressionSummary>,
    pub regression_points: Option<RegressionPoints>,
    pub regression_note: Option<String>,
    pub failures: Vec<CellFailure>,
}

/// The learned method whose curve anchors the range and overlay outputs.
fn reference_method(records: &[PredictionRecord]) -> Option<Method> {
    for m in [Method::Esn, Method::LiEsn, Method::DtsEsn] {
        if records.iter().any(|r| r.method == m) {
            return Some(m);
        }
    }
    None
}

/// Assemble every derived output from the flat records.
pub fn build_report(
    mut records: Vec<PredictionRecord>,
    failures: Vec<CellFailure>,
    opts: &ReportOptions,
) -> SweepReport {
    sort_records(&mut records, opts.axis);
    let offsets = aggregate(&records, opts.axis);
    let baseline = baseline_nrmse(&records);
    let target_location = records.first().map(|r| r.target_location);
    let reference = reference_method(&records);

    let predictable = match (baseline, reference) {
        (Some(base), Some(method)) => {
            let points: Vec<(f64, Option<f64>)> = offsets
                .iter()
                .map(|o| {
                    (
                        o.offset_deg,
                        o.methods.get(&method.to_string()).and_then(|s| s.mean_nrmse),
                    )
                })
                .collect();
            predictable_range(&points, base, opts.range_margin).ok().map(|range| RangeSummary {
                method,
                margin: opts.range_margin,
                baseline_nrmse: base,
                range,
            })
        }
        _ => None,
    };

    let scaled = match reference {
        Some(method) => {
            let pairs: Vec<(usize, f64, f64)> = offsets
                .iter()
                .enumerate()
                .filter_map(|(i, o)| {
                    o.methods
                        .get(&method.to_string())
                        .and_then(|s| s.mean_nrmse)
                        .map(|m| (i, o.mean_io_correlation, m))
                })
                .collect();
            let corr: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let reference_curve: Vec<f64> = pairs.iter().map(|p| p.2).collect();
            match scaled_correlation_curve(&corr, &reference_curve) {
                Ok(values) => {
                    let mut out = vec![None; offsets.len()];
                    for ((i, _, _), v) in pairs.iter().zip(values) {
                        out[*i] = Some(v);
                    }
                    out
                }
                Err(_) => vec![None; offsets.len()],
            }
        }
        None => vec![None; offsets.len()],
    };

    let (regression, regression_points, regression_note) =
        build_regression(&records, &offsets, opts);

    SweepReport {
        axis: opts.axis,
        target_location,
        records,
        offsets,
        scaled_correlation: scaled,
        baseline_nrmse: baseline,
        predictable_range: predictable,
        regression,
        regression_points,
        regression_note,
        failures,
    }
}

fn regression_group_points(
    records: &[PredictionRecord],
    offsets: &[OffsetSummary],
    method: Method,
    opts: &ReportOptions,
) -> Vec<(f64, f64)> {
    if opts.regression_per_year_points {
        records
            .iter()
            .filter(|r| r.method == method && !r.diverged)
            .filter(|r| {
                opts.axis.offset_of(r.obs_location, r.target_location).abs()
                    <= opts.regression_max_offset_deg
            })
            .filter_map(|r| r.nrmse.map(|v| (r.io_correlation, v)))
            .collect()
    } else {
        offsets
            .iter()
            .filter(|o| o.offset_deg.abs() <= opts.regression_max_offset_deg)
            .filter_map(|o| {
                o.methods
                    .get(&method.to_string())
                    .and_then(|s| s.mean_nrmse)
                    .map(|m| (o.mean_io_correlation, m))
            })
            .collect()
    }
}

fn build_regression(
    records: &[PredictionRecord],
    offsets: &[OffsetSummary],
    opts: &ReportOptions,
) -> (Option<RegressionSummary>, Option<RegressionPoints>, Option<String>) {
    let method_a = match reference_method(records) {
        Some(m) => m,
        None => return (None, None, Some("no learned-method records".into())),
    };
    let method_b = Method::Var;
    if !records.iter().any(|r| r.method == method_b) {
        return (None, None, Some("no var records".into()));
    }
    let points_a = regression_group_points(records, offsets, method_a, opts);
    let points_b = regression_group_points(records, offsets, method_b, opts);
    match fit_shared_intercept_lines(&points_a, &points_b) {
        Ok((slope_a, slope_b, intercept)) => (
            Some(RegressionSummary {
                method_a,
                method_b,
                slope_a,
                slope_b,
                intercept,
                n_points_a: points_a.len(),
                n_points_b: points_b.len(),
                max_offset_deg: opts.regression_max_offset_deg,
                per_year_points: opts.regression_per_year_points,
            }),
            Some(RegressionPoints { method_a: points_a, method_b: points_b }),
            None,
        ),
        Err(e) => (None, None, Some(e.to_string())),
    }
}

// ---------------------------------------------------------------------------
// file output
// ---------------------------------------------------------------------------

const RECORDS_HEADER: &str =
    "method,offset_deg,obs_lat,obs_lon,target_lat,target_lon,year,nrmse,io_correlation,diverged";

pub fn records_csv_string(records: &[PredictionRecord], axis: SweepAxis) -> String {
    let mut out = String::with_capacity(records.len() * 64 + 128);
    out.push_str(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        let offset = axis.offset_of(r.obs_location, r.target_location);
        let nrmse = r.nrmse.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.method,
            offset,
            r.obs_location.lat,
            r.obs_location.lon,
            r.target_location.lat,
            r.target_location.lon,
            r.year,
            nrmse,
            r.io_correlation,
            r.diverged
        ));
    }
    out
}

/// Parse a records CSV back, inferring the sweep axis from which coordinate
/// varies (latitude when ambiguous).
pub fn load_records_csv(path: &Path) -> Result<(Vec<PredictionRecord>, SweepAxis), ExperimentError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == RECORDS_HEADER => {}
        other => {
            return Err(ExperimentError::Config(format!(
                "{}: unexpected records header {other:?}",
                path.display()
            )))
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(ExperimentError::Config(format!(
                "{}: row {}: expected 10 fields, got {}",
                path.display(),
                i + 2,
                fields.len()
            )));
        }
        let parse_err = |msg: String| {
            ExperimentError::Config(format!("{}: row {}: {msg}", path.display(), i + 2))
        };
        let method: Method =
            fields[0].parse().map_err(|e: String| parse_err(e))?;
        let f = |idx: usize| -> Result<f64, ExperimentError> {
            fields[idx].parse().map_err(|e| parse_err(format!("field {idx}: {e}")))
        };
        let nrmse = if fields[7].is_empty() { None } else { Some(f(7)?) };
        records.push(PredictionRecord {
            method,
            obs_location: Location { lat: f(2)?, lon: f(3)? },
            target_location: Location { lat: f(4)?, lon: f(5)? },
            year: fields[6].parse().map_err(|e| parse_err(format!("year: {e}")))?,
            nrmse,
            io_correlation: f(8)?,
            diverged: fields[9].parse().map_err(|e| parse_err(format!("diverged: {e}")))?,
        });
    }
    let lat_varies = records
        .windows(2)
        .any(|w| w[0].obs_location.lat != w[1].obs_location.lat);
    let axis = if lat_varies { SweepAxis::Latitude } else { SweepAxis::Longitude };
    Ok((records, axis))
}

/// One per-offset entry of `summary.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryOffset {
    #[serde(flatten)]
    pub summary: OffsetSummary,
    pub scaled_correlation: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryDocument {
    pub sweep_axis: SweepAxis,
    pub target_location: Option<Location>,
    pub years: Vec<i32>,
    pub methods: Vec<Method>,
    pub n_records: usize,
    pub baseline_nrmse: Option<f64>,
    pub predictable_range: Option<RangeSummary>,
    pub regression: Option<RegressionSummary>,
    pub regression_note: Option<String>,
    pub offsets: Vec<SummaryOffset>,
    pub failures: Vec<CellFailure>,
}

impl SummaryDocument {
    pub fn from_report(report: &SweepReport) -> Self {
        let mut years: Vec<i32> = report.records.iter().map(|r| r.year).collect();
        years.sort_unstable();
        years.dedup();
        let mut methods: Vec<Method> = report.records.iter().map(|r| r.method).collect();
        methods.sort();
        methods.dedup();
        Self {
            sweep_axis: report.axis,
            target_location: report.target_location,
            years,
            methods,
            n_records: report.records.len(),
            baseline_nrmse: report.baseline_nrmse,
            predictable_range: report.predictable_range.clone(),
            regression: report.regression.clone(),
            regression_note: report.regression_note.clone(),
            offsets: report
                .offsets
                .iter()
                .zip(&report.scaled_correlation)
                .map(|(o, s)| SummaryOffset { summary: o.clone(), scaled_correlation: *s })
                .collect(),
            failures: report.failures.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RegressionDocument {
    regression: Option<RegressionSummary>,
    note: Option<String>,
    points: Option<RegressionPoints>,
}

fn write_text(path: &Path, text: &str) -> Result<(), ExperimentError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|source| ExperimentError::Io { path: parent.to_path_buf(), source })?;
    }
    fs::write(path, text).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })
}

/// Write `summary.json` and `regression.json` into `dir` (the `analyze`
/// outputs; the records file is left untouched).
pub fn write_analysis_outputs(report: &SweepReport, dir: &Path) -> Result<(), ExperimentError> {
    let summary = SummaryDocument::from_report(report);
    let mut summary_json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    summary_json.push('\n');
    write_text(&dir.join("summary.json"), &summary_json)?;
    let regression = RegressionDocument {
        regression: report.regression.clone(),
        note: report.regression_note.clone(),
        points: report.regression_points.clone(),
    };
    let mut regression_json =
        serde_json::to_string_pretty(&regression).expect("regression serializes");
    regression_json.push('\n');
    write_text(&dir.join("regression.json"), &regression_json)?;
    Ok(())
}

/// Write `records.csv`, `summary.json`, and `regression.json` into `dir`.
pub fn write_outputs(report: &SweepReport, dir: &Path) -> Result<(), ExperimentError> {
    write_text(&dir.join("records.csv"), &records_csv_string(&report.records, report.axis))?;
    write_analysis_outputs(report, dir)
}

/// Write `score_table.csv` and `best_params.json` (the `tune` outputs).
pub fn write_tune_outputs(
    result: &crate::tune::GridSearchResult,
    dir: &Path,
) -> Result<(), ExperimentError> {
    let mut table = String::with_capacity(result.table.len() * 64 + 80);
    table.push_str(
        "density,input_scaling,spectral_radius,ridge_beta,mean_nrmse,var_nrmse,n_evals,n_failed\n",
    );
    for row in &result.table {
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.density,
            row.input_scaling,
            row.spectral_radius,
            row.ridge_beta,
            row.mean_nrmse.map(|v| v.to_string()).unwrap_or_default(),
            row.var_nrmse.map(|v| v.to_string()).unwrap_or_default(),
            row.n_evals,
            row.n_failed
        ));
    }
    write_text(&dir.join("score_table.csv"), &table)?;

    // best_params.json merges straight into an experiment config's "esn" section
    let best = match &result.best {
        Some(b) => serde_json::json!({
            "esn": {
                "density": b.density,
                "input_scaling": b.input_scaling,
                "spectral_radius": b.spectral_radius,
                "ridge_beta": b.ridge_beta,
            },
            "mean_nrmse": b.mean_nrmse,
        }),
        None => serde_json::json!({
            "esn": null,
            "note": "every combination failed on every calibration set",
        }),
    };
    let mut best_json = serde_json::to_string_pretty(&best).expect("best params serialize");
    best_json.push('\n');
    write_text(&dir.join("best_params.json"), &best_json)
}
