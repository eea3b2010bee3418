//! NRMSE and correlation metrics, the historical-average baseline, the
//! predictable-range threshold, the shared-intercept correlation/error
//! regression, and the aggregation of sweep records into a report.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{DatasetSplit, SLOTS_PER_YEAR};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("zero variance in {0}; metric undefined")]
    ZeroVariance(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("offsets do not include the target itself (offset 0)")]
    MissingOrigin,
    #[error("regression design is rank deficient: {0}")]
    RankDeficient(String),
    #[error("correlations are constant; scaled curve undefined")]
    DegenerateRange,
}

/// Relative floor below which a variance counts as zero.
const VARIANCE_REL_TOL: f64 = 1e-12;

/// Prediction method tags, in report sort order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Esn,
    LiEsn,
    DtsEsn,
    Var,
    HistoricalAverage,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Esn => "esn",
            Method::LiEsn => "li_esn",
            Method::DtsEsn => "dts_esn",
            Method::Var => "var",
            Method::HistoricalAverage => "historical_average",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "esn" => Ok(Method::Esn),
            "li_esn" => Ok(Method::LiEsn),
            "dts_esn" => Ok(Method::DtsEsn),
            "var" => Ok(Method::Var),
            "historical_average" => Ok(Method::HistoricalAverage),
            other => Err(format!("unknown method {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Latitude,
    Longitude,
}

impl SweepAxis {
    pub fn offset_of(&self, obs: Location, target: Location) -> f64 {
        match self {
            SweepAxis::Latitude => obs.lat - target.lat,
            SweepAxis::Longitude => obs.lon - target.lon,
        }
    }
}

/// One (method, observation point, year) evaluation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub method: Method,
    pub obs_location: Location,
    pub target_location: Location,
    pub year: i32,
    /// Absent exactly when the run diverged.
    pub nrmse: Option<f64>,
    /// Pearson correlation of the true test series (observation vs target
    /// channel), identical across methods of the same cell.
    pub io_correlation: f64,
    pub diverged: bool,
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

/// Normalized root mean squared error over both output components:
/// sqrt(<||target - pred||^2>) / sqrt(<||target - <target>||^2>), averages
/// over the test columns.
pub fn nrmse(pred: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<f64, EvalError> {
    if pred.shape() != target.shape() {
        return Err(EvalError::ShapeMismatch(format!(
            "pred {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let t_len = target.ncols();
    if t_len < 2 {
        return Err(EvalError::TooShort { needed: 2, got: t_len });
    }
    if pred.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite("pred".into()));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::NonFinite("target".into()));
    }
    let n_comp = target.nrows();
    let mut mean = vec![0.0; n_comp];
    for r in 0..n_comp {
        mean[r] = target.row(r).sum() / t_len as f64;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 0..t_len {
        for r in 0..n_comp {
            let e = target[(r, c)] - pred[(r, c)];
            num += e * e;
            let d = target[(r, c)] - mean[r];
            den += d * d;
        }
    }
    num /= t_len as f64;
    den /= t_len as f64;
    let scale = target.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if den.sqrt() <= VARIANCE_REL_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(EvalError::ZeroVariance("target".into()));
    }
    Ok(num.sqrt() / den.sqrt())
}

/// Per-component NRMSE diagnostic (each row normalized by its own variance).
pub fn nrmse_per_component(
    pred: &DMatrix<f64>,
    target: &DMatrix<f64>,
) -> Result<Vec<f64>, EvalError> {
    (0..target.nrows())
        .map(|r| {
            nrmse(
                &DMatrix::from_rows(&[pred.row(r).into_owned()]),
                &DMatrix::from_rows(&[target.row(r).into_owned()]),
            )
        })
        .collect()
}

/// Standard Pearson correlation coefficient.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::ShapeMismatch(format!("{} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(EvalError::TooShort { needed: 2, got: a.len() });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        num += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    let scale_a = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let scale_b = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if va.sqrt() <= VARIANCE_REL_TOL * scale_a * n.sqrt() {
        return Err(EvalError::ZeroVariance("first argument".into()));
    }
    if vb.sqrt() <= VARIANCE_REL_TOL * scale_b * n.sqrt() {
        return Err(EvalError::ZeroVariance("second argument".into()));
    }
    Ok(num / (va.sqrt() * vb.sqrt()))
}

// ---------------------------------------------------------------------------
// baseline and restoration
// ---------------------------------------------------------------------------

/// Historical average at slot `test_start_slot + i` for channel `row`.
fn avg_at(split: &DatasetSplit, row: usize, i: usize) -> f64 {
    let slot = (split.test_start_slot + i) % SLOTS_PER_YEAR;
    match row {
        0 => split.avg_obs.at_slot(slot),
        _ => split.avg_target.at_slot(slot),
    }
}

/// The historical-average prediction on the original scale: zero difference
/// data restored, i.e. the slot-matched average itself. Defines NRMSE_ave.
pub fn historical_average_prediction(split: &DatasetSplit) -> DMatrix<f64> {
    let t_len = split.y_test.ncols();
    DMatrix::from_fn(2, t_len, |r, c| avg_at(split, r, c))
}

/// Restore a difference-scale prediction over the test window to the
/// original scale.
pub fn restore_test_prediction(split: &DatasetSplit, pred_diff: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(pred_diff.nrows(), pred_diff.ncols(), |r, c| {
        pred_diff[(r, c)] + avg_at(split, r, c)
    })
}

/// The true test series on the original scale.
pub fn test_truth_original(split: &DatasetSplit) -> DMatrix<f64> {
    restore_test_prediction(split, &split.y_test)
}

// ---------------------------------------------------------------------------
// predictable range
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictableRange {
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub empty: bool,
}

/// Largest contiguous interval of offsets around 0 whose mean NRMSE stays
/// below (1 - margin) * baseline. `points` must be sorted by offset and
/// include offset 0; a missing mean (all runs diverged) breaks the interval.
pub fn predictable_range(
    points: &[(f64, Option<f64>)],
    baseline: f64,
    margin: f64,
) -> Result<PredictableRange, EvalError> {
    let threshold = (1.0 - margin) * baseline;
    let origin = points
        .iter()
        .position(|&(off, _)| off == 0.0)
        .ok_or(EvalError::MissingOrigin)?;
    let below = |p: &(f64, Option<f64>)| matches!(p.1, Some(v) if v < threshold);
    if !below(&points[origin]) {
        return Ok(PredictableRange { lo_deg: 0.0, hi_deg: 0.0, empty: true });
    }
    let mut hi = origin;
    while hi + 1 < points.len() && below(&points[hi + 1]) {
        hi += 1;
    }
    let mut lo = origin;
    while lo > 0 && below(&points[lo - 1]) {
        lo -= 1;
    }
    Ok(PredictableRange { lo_deg: points[lo].0, hi_deg: points[hi].0, empty: false })
}

// ---------------------------------------------------------------------------
// shared-intercept regression
// ---------------------------------------------------------------------------

/// Least squares over two point clouds with independent slopes and one
/// common intercept: minimize sum_a (y - s_a x - b)^2 + sum_b (y - s_b x - b)^2.
pub fn fit_shared_intercept_lines(
    points_a: &[(f64, f64)],
    points_b: &[(f64, f64)],
) -> Result<(f64, f64, f64), EvalError> {
    if points_a.len() < 2 || points_b.len() < 2 {
        return Err(EvalError::TooShort {
            needed: 2,
            got: points_a.len().min(points_b.len()),
        });
    }
    let x_varies = |pts: &[(f64, f64)]| pts.iter().any(|p| p.0 != pts[0].0);
    if !x_varies(points_a) {
        return Err(EvalError::RankDeficient("all x equal in group a".into()));
    }
    if !x_varies(points_b) {
        return Err(EvalError::RankDeficient("all x equal in group b".into()));
    }

    // normal equations for parameters (s_a, s_b, b)
    let mut g = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for &(x, y) in points_a {
        g[0][0] += x * x;
        g[0][2] += x;
        g[2][0] += x;
        g[2][2] += 1.0;
        rhs[0] += x * y;
        rhs[2] += y;
    }
    for &(x, y) in points_b {
        g[1][1] += x * x;
        g[1][2] += x;
        g[2][1] += x;
        g[2][2] += 1.0;
        rhs[1] += x * y;
        rhs[2] += y;
    }
    let m = nalgebra::Matrix3::from_fn(|r, c| g[r][c]);
    let v = nalgebra::Vector3::new(rhs[0], rhs[1], rhs[2]);
    let svals = m.singular_values();
    if svals.min() <= 1e-12 * svals.max() {
        return Err(EvalError::RankDeficient("normal equations near singular".into()));
    }
    let sol = m.lu().solve(&v).ok_or_else(|| {
        EvalError::RankDeficient("normal equations not solvable".into())
    })?;
    Ok((sol[0], sol[1], sol[2]))
}

// ---------------------------------------------------------------------------
// scaled correlation curve
// ---------------------------------------------------------------------------

/// Affine map of (1 - correlation) range-matched onto the reference NRMSE
/// curve, for overlay plotting.
pub fn scaled_correlation_curve(
    correlations: &[f64],
    reference_nrmse: &[f64],
) -> Result<Vec<f64>, EvalError> {
    if correlations.len() != reference_nrmse.len() {
        return Err(EvalError::ShapeMismatch(format!(
            "{} correlations vs {} reference points",
            correlations.len(),
            reference_nrmse.len()
        )));
    }
    let t: Vec<f64> = correlations.iter().map(|c| 1.0 - c).collect();
    let t_min = t.iter().cloned().fold(f64::INFINITY, f64::min);
    let t_max = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if t_max == t_min {
        return Err(EvalError::DegenerateRange);
    }
    let r_min = reference_nrmse.iter().cloned().fold(f64::INFINITY, f64::min);
    let r_max = reference_nrmse.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = (r_max - r_min) / (t_max - t_min);
    Ok(t.iter().map(|&v| r_min + (v - t_min) * scale).collect())
}

// ---------------------------------------------------------------------------
// aggregation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    /// Mean NRMSE over the non-diverged years; absent when every year diverged.
    pub mean_nrmse: Option<f64>,
    /// Population variance over the same years.
    pub var_nrmse: Option<f64>,
    pub n_years: usize,
    pub n_diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetSummary {
    pub offset_deg: f64,
    pub obs_location: Location,
    pub mean_io_correlation: f64,
    pub methods: BTreeMap<String, MethodStats>,
}

fn offset_key(offset: f64) -> i64 {
    (offset * 1e6).round() as i64
}

/// Deterministic report order: (offset, year, method).
pub fn sort_records(records: &mut [PredictionRecord], axis: SweepAxis) {
    records.sort_by(|a, b| {
        let oa = axis.offset_of(a.obs_location, a.target_location);
        let ob = axis.offset_of(b.obs_location, b.target_location);
        oa.total_cmp(&ob)
            .then(a.year.cmp(&b.year))
            .then(a.method.cmp(&b.method))
    });
}

/// Per-offset aggregates over years, recomputed purely from the records.
/// Diverged records are excluded from means and variances.
pub fn aggregate(records: &[PredictionRecord], axis: SweepAxis) -> Vec<OffsetSummary> {
    let mut grouped: BTreeMap<i64, Vec<&PredictionRecord>> = BTreeMap::new();
    for r in records {
        let off = axis.offset_of(r.obs_location, r.target_location);
        grouped.entry(offset_key(off)).or_default().push(r);
    }
    let mut out = Vec::with_capacity(grouped.len());
    for cell in grouped.values() {
        let offset_deg = axis.offset_of(cell[0].obs_location, cell[0].target_location);
        let mut methods: BTreeMap<String, MethodStats> = BTreeMap::new();
        let mut method_tags: Vec<Method> = cell.iter().map(|r| r.method).collect();
        method_tags.sort();
        method_tags.dedup();
        for m in method_tags {
            let values: Vec<f64> = cell
                .iter()
                .filter(|r| r.method == m)
                .filter_map(|r| r.nrmse)
                .collect();
            let n_years = cell.iter().filter(|r| r.method == m).count();
            let n_diverged = cell.iter().filter(|r| r.method == m && r.diverged).count();
            let (mean, variance) = if values.is_empty() {
                (None, None)
            } else {
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                (Some(mean), Some(var))
            };
            methods.insert(
                m.to_string(),
                MethodStats { mean_nrmse: mean, var_nrmse: variance, n_years, n_diverged },
            );
        }
        // one io_correlation per (offset, year); identical across methods
        let mut by_year: BTreeMap<i32, f64> = BTreeMap::new();
        for r in cell.iter() {
            by_year.insert(r.year, r.io_correlation);
        }
        let mean_io =
            by_year.values().sum::<f64>() / by_year.len().max(1) as f64;
        out.push(OffsetSummary {
            offset_deg,
            obs_location: cell[0].obs_location,
            mean_io_correlation: mean_io,
            methods,
        });
    }
    out
}

/// NRMSE_ave: the mean of the historical-average records' NRMSE (identical
/// across offsets, averaged over years).
pub fn baseline_nrmse(records: &[PredictionRecord]) -> Option<f64> {
    let values: Vec<f64> = records
        .iter()
        .filter(|r| r.method == Method::HistoricalAverage)
        .filter_map(|r| r.nrmse)
        .collect();
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-3.0..3.0))
    }

    #[test]
    fn perfect_prediction_scores_zero() {
        let t = rand_matrix(2, 50, 1);
        assert_eq!(nrmse(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn mean_prediction_scores_one() {
        let t = rand_matrix(2, 64, 2);
        let mean = DMatrix::from_fn(2, 64, |r, _| t.row(r).sum() / 64.0);
        let v = nrmse(&mean, &t).unwrap();
        assert!((v - 1.0).abs() <= 1e-12, "got {v}");
    }

    #[test]
    fn constant_target_is_zero_variance() {
        let t = DMatrix::from_element(2, 10, 0.1);
        let p = DMatrix::zeros(2, 10);
        assert!(matches!(nrmse(&p, &t), Err(EvalError::ZeroVariance(_))));
    }

    #[test]
    fn nrmse_translation_and_scale_invariance() {
        let t = rand_matrix(2, 40, 3);
        let p = rand_matrix(2, 40, 4);
        let base = nrmse(&p, &t).unwrap();
        let shift = |m: &DMatrix<f64>, c: [f64; 2]| {
            DMatrix::from_fn(2, 40, |r, col| m[(r, col)] + c[r])
        };
        let shifted = nrmse(&shift(&p, [5.0, -2.0]), &shift(&t, [5.0, -2.0])).unwrap();
        assert!((shifted - base).abs() < 1e-12);
        let scaled = nrmse(&(&p * 4.0), &(&t * 4.0)).unwrap();
        assert!((scaled - base).abs() < 1e-12);
    }

    #[test]
    fn per_component_diagnostic_matches_single_row_metric() {
        let t = rand_matrix(2, 30, 5);
        let p = rand_matrix(2, 30, 6);
        let per = nrmse_per_component(&p, &t).unwrap();
        assert_eq!(per.len(), 2);
        let row0 = nrmse(
            &DMatrix::from_rows(&[p.row(0).into_owned()]),
            &DMatrix::from_rows(&[t.row(0).into_owned()]),
        )
        .unwrap();
        assert_eq!(per[0], row0);
    }

    #[test]
    fn pearson_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a: Vec<f64> = (0..100).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = pearson_correlation(&a, &a).unwrap();
        assert!((r - 1.0).abs() <= 1e-12);
        let b: Vec<f64> = a.iter().map(|v| -2.0 * v + 7.0).collect();
        let r = pearson_correlation(&a, &b).unwrap();
        assert!((r + 1.0).abs() <= 1e-12);
    }

    #[test]
    fn pearson_of_independent_noise_is_small_and_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a: Vec<f64> = (0..1460).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..1460).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = pearson_correlation(&a, &b).unwrap();
        assert!(r.abs() < 0.1, "independent noise correlated at {r}");
        // direct covariance-formula oracle: E[xy] - E[x]E[y] over sqrt(var*var)
        let n = 1460.0;
        let (sx, sy): (f64, f64) = (a.iter().sum(), b.iter().sum());
        let sxy: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let sxx: f64 = a.iter().map(|x| x * x).sum();
        let syy: f64 = b.iter().map(|y| y * y).sum();
        let oracle = (sxy / n - sx / n * (sy / n))
            / ((sxx / n - (sx / n) * (sx / n)).sqrt() * (syy / n - (sy / n) * (sy / n)).sqrt());
        assert!((r - oracle).abs() < 1e-12);
    }

    #[test]
    fn pearson_invariance_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..200).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = pearson_correlation(&a, &b).unwrap();
        let a2: Vec<f64> = a.iter().map(|v| 3.0 * v + 11.0).collect();
        let r2 = pearson_correlation(&a2, &b).unwrap();
        assert!((r - r2).abs() < 1e-12);
        let neg: Vec<f64> = b.iter().map(|v| -v).collect();
        let r3 = pearson_correlation(&a, &neg).unwrap();
        assert!((r + r3).abs() < 1e-12);
    }

    #[test]
    fn predictable_range_trivial_cases() {
        let all_below: Vec<(f64, Option<f64>)> =
            (-3..=3).map(|o| (o as f64, Some(0.1))).collect();
        let r = predictable_range(&all_below, 1.0, 0.05).unwrap();
        assert_eq!((r.lo_deg, r.hi_deg, r.empty), (-3.0, 3.0, false));

        let all_above: Vec<(f64, Option<f64>)> =
            (-3..=3).map(|o| (o as f64, Some(2.0))).collect();
        let r = predictable_range(&all_above, 1.0, 0.05).unwrap();
        assert!(r.empty);
        assert_eq!((r.lo_deg, r.hi_deg), (0.0, 0.0));
    }

    #[test]
    fn predictable_range_matches_linear_scan_oracle() {
        // monotone NRMSE crossing the threshold between 12 and 13 degrees
        let baseline = 1.0;
        let margin = 0.05;
        let points: Vec<(f64, Option<f64>)> = (-20..=20)
            .map(|o| {
                let off = o as f64;
                // 0.9 at 12 degrees (below the 0.95 threshold), 0.975 at 13
                (off, Some(0.9 * (off.abs() / 12.0).min(2.0)))
            })
            .collect();
        let r = predictable_range(&points, baseline, margin).unwrap();
        // oracle: scan every offset and keep those below the threshold contiguously
        let threshold = (1.0 - margin) * baseline;
        let ok: Vec<f64> = points
            .iter()
            .filter(|(_, v)| matches!(v, Some(x) if *x < threshold))
            .map(|(o, _)| *o)
            .collect();
        assert_eq!(r.lo_deg, *ok.first().unwrap());
        assert_eq!(r.hi_deg, *ok.last().unwrap());
        assert_eq!(r.hi_deg, 12.0);
        assert_eq!(r.lo_deg, -12.0);
    }

    #[test]
    fn missing_mean_breaks_the_interval() {
        let points: Vec<(f64, Option<f64>)> = vec![
            (-2.0, Some(0.1)),
            (-1.0, None),
            (0.0, Some(0.1)),
            (1.0, Some(0.1)),
            (2.0, Some(5.0)),
        ];
        let r = predictable_range(&points, 1.0, 0.05).unwrap();
        assert_eq!((r.lo_deg, r.hi_deg), (0.0, 1.0));
    }

    #[test]
    fn shared_intercept_recovers_noiseless_common_line() {
        let line = |x: f64| -0.5 * x + 1.0;
        let a: Vec<(f64, f64)> = [0.0, 0.3, 0.9].iter().map(|&x| (x, line(x))).collect();
        let b: Vec<(f64, f64)> = [0.1, 0.5, 0.7, 1.0].iter().map(|&x| (x, line(x))).collect();
        let (sa, sb, intercept) = fit_shared_intercept_lines(&a, &b).unwrap();
        assert!((sa + 0.5).abs() < 1e-10);
        assert!((sb + 0.5).abs() < 1e-10);
        assert!((intercept - 1.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_group_is_rank_deficient() {
        let a = vec![(0.0, 1.0), (1.0, 0.5), (2.0, 0.0)];
        let b = vec![(0.7, 0.9), (0.7, 0.9)];
        assert!(matches!(
            fit_shared_intercept_lines(&a, &b),
            Err(EvalError::RankDeficient(_))
        ));
    }

    #[test]
    fn shared_intercept_beats_random_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let a: Vec<(f64, f64)> = (0..20)
            .map(|_| {
                let x = rng.random_range(0.0..1.0);
                (x, -0.8 * x + 0.9 + rng.random_range(-0.1..0.1))
            })
            .collect();
        let b: Vec<(f64, f64)> = (0..20)
            .map(|_| {
                let x = rng.random_range(0.0..1.0);
                (x, -0.4 * x + 0.9 + rng.random_range(-0.1..0.1))
            })
            .collect();
        let (sa, sb, ic) = fit_shared_intercept_lines(&a, &b).unwrap();
        let obj = |sa: f64, sb: f64, ic: f64| {
            a.iter().map(|&(x, y)| (y - sa * x - ic).powi(2)).sum::<f64>()
                + b.iter().map(|&(x, y)| (y - sb * x - ic).powi(2)).sum::<f64>()
        };
        let base = obj(sa, sb, ic);
        for _ in 0..10_000 {
            let p = obj(
                sa + rng.random_range(-0.05..0.05),
                sb + rng.random_range(-0.05..0.05),
                ic + rng.random_range(-0.05..0.05),
            );
            assert!(p >= base - 1e-12);
        }
        // residual gradient at the optimum vanishes
        let eps = 1e-6;
        for (da, db, dc) in [(eps, 0.0, 0.0), (0.0, eps, 0.0), (0.0, 0.0, eps)] {
            let grad = (obj(sa + da, sb + db, ic + dc) - obj(sa - da, sb - db, ic - dc))
                / (2.0 * eps);
            assert!(grad.abs() < 1e-8, "gradient {grad}");
        }
    }

    #[test]
    fn scaled_curve_constant_reference_collapses() {
        let corr = [1.0, 0.8, 0.2];
        let reference = [0.7, 0.7, 0.7];
        let out = scaled_correlation_curve(&corr, &reference).unwrap();
        assert!(out.iter().all(|&v| v == 0.7));
    }

    #[test]
    fn scaled_curve_maps_full_correlation_to_reference_minimum() {
        let corr = [1.0, 0.9, 0.5, 0.1];
        let reference = [0.2, 0.4, 0.8, 1.1];
        let out = scaled_correlation_curve(&corr, &reference).unwrap();
        assert_eq!(out[0], 0.2); // min maps to min exactly
        assert!((out[3] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn scaled_curve_reverses_correlation_ranks() {
        let corr = [0.95, 0.6, 0.8, 0.3, 0.1];
        let reference = [0.1, 0.5, 0.3, 0.8, 1.0];
        let out = scaled_correlation_curve(&corr, &reference).unwrap();
        let rank = |xs: &[f64]| {
            let mut idx: Vec<usize> = (0..xs.len()).collect();
            idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
            let mut r = vec![0usize; xs.len()];
            for (pos, &i) in idx.iter().enumerate() {
                r[i] = pos;
            }
            r
        };
        let rc = rank(&corr);
        let ro = rank(&out);
        for i in 0..corr.len() {
            assert_eq!(rc[i], corr.len() - 1 - ro[i]);
        }
    }

    #[test]
    fn constant_correlations_are_degenerate() {
        assert!(matches!(
            scaled_correlation_curve(&[0.5, 0.5], &[0.1, 0.2]),
            Err(EvalError::DegenerateRange)
        ));
    }

    fn record(method: Method, off: f64, year: i32, nrmse: Option<f64>) -> PredictionRecord {
        PredictionRecord {
            method,
            obs_location: Location { lat: 35.0 + off, lon: 139.0 },
            target_location: Location { lat: 35.0, lon: 139.0 },
            year,
            nrmse,
            io_correlation: 0.5,
            diverged: nrmse.is_none(),
        }
    }

    #[test]
    fn aggregation_excludes_diverged_and_recomputes_from_records() {
        let records = vec![
            record(Method::Var, 1.0, 2019, Some(0.4)),
            record(Method::Var, 1.0, 2020, None),
            record(Method::Var, 1.0, 2021, Some(0.6)),
            record(Method::Esn, 1.0, 2019, Some(0.2)),
            record(Method::Esn, 1.0, 2020, Some(0.3)),
            record(Method::Esn, 1.0, 2021, Some(0.4)),
        ];
        let summary = aggregate(&records, SweepAxis::Latitude);
        assert_eq!(summary.len(), 1);
        let var_stats = &summary[0].methods["var"];
        assert_eq!(var_stats.n_years, 3);
        assert_eq!(var_stats.n_diverged, 1);
        assert!((var_stats.mean_nrmse.unwrap() - 0.5).abs() < 1e-12);
        assert!((var_stats.var_nrmse.unwrap() - 0.01).abs() < 1e-12);
        let esn_stats = &summary[0].methods["esn"];
        assert!((esn_stats.mean_nrmse.unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(esn_stats.n_diverged, 0);
    }

    #[test]
    fn all_diverged_cell_has_no_mean() {
        let records = vec![
            record(Method::Var, 2.0, 2019, None),
            record(Method::Var, 2.0, 2020, None),
        ];
        let summary = aggregate(&records, SweepAxis::Latitude);
        let stats = &summary[0].methods["var"];
        assert_eq!(stats.mean_nrmse, None);
        assert_eq!(stats.n_diverged, 2);
    }

    #[test]
    fn sorting_is_by_offset_year_method() {
        let mut records = vec![
            record(Method::Var, 1.0, 2019, Some(0.1)),
            record(Method::Esn, -1.0, 2020, Some(0.1)),
            record(Method::Esn, 1.0, 2019, Some(0.1)),
            record(Method::Esn, -1.0, 2019, Some(0.1)),
        ];
        sort_records(&mut records, SweepAxis::Latitude);
        let key: Vec<(f64, i32, Method)> = records
            .iter()
            .map(|r| (r.obs_location.lat - 35.0, r.year, r.method))
            .collect();
        assert_eq!(
            key,
            vec![
                (-1.0, 2019, Method::Esn),
                (-1.0, 2020, Method::Esn),
                (1.0, 2019, Method::Esn),
                (1.0, 2019, Method::Var),
            ]
        );
    }

    #[test]
    fn baseline_is_mean_of_historical_average_records() {
        let records = vec![
            record(Method::HistoricalAverage, 0.0, 2019, Some(0.38)),
            record(Method::HistoricalAverage, 0.0, 2020, Some(0.42)),
            record(Method::Esn, 0.0, 2019, Some(0.1)),
        ];
        assert!((baseline_nrmse(&records).unwrap() - 0.4).abs() < 1e-12);
    }
}
