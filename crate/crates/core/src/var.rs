//! Order-1 vector autoregression on the paired (observation, target)
//! series, and the asymmetric closed-loop test recursion.
//!
//! Training regresses y(n) on [y(n-1); 1] by ordinary least squares. At
//! test time the observed channel is fed in as the lagged regressor while
//! the target channel feeds back its own previous prediction; with an
//! unstable fitted coefficient on the fed-back channel the recursion
//! diverges, which is reported as an outcome rather than an error.

use nalgebra::{DMatrix, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Predictions whose magnitude passes this guard are declared diverged and
/// the remaining entries are filled with NaN.
pub const OVERFLOW_GUARD: f64 = 1e12;

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum VarError {
    #[error("need at least 3 training steps, got {0}")]
    InsufficientData(usize),
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("lagged regressors are collinear beyond tolerance; the fit is unidentified")]
    CollinearRegressors,
    #[error("training data must have exactly 2 rows, got {0}")]
    WrongDims(usize),
}

/// Fitted VAR(1): y(n) = phi * y(n-1) + c (noise fixed to zero for prediction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub phi: Matrix2<f64>,
    pub intercept: Vector2<f64>,
    pub order: usize,
    pub dims: usize,
    /// Spectral radius of phi (for order 1 the companion matrix is phi itself).
    pub companion_spectral_radius: f64,
    /// Sum of squared training residuals over both channels.
    pub training_sse: f64,
}

/// Closed-loop test prediction for both channels.
#[derive(Debug, Clone)]
pub struct ClosedLoopPrediction {
    /// One-step predictions of the observed channel (lagged y1 observed,
    /// lagged y2 fed back).
    pub y1: Vec<f64>,
    /// Closed-loop predictions of the unobserved target channel.
    pub y2: Vec<f64>,
    pub diverged: bool,
}

fn spectral_radius_2x2(m: &Matrix2<f64>) -> f64 {
    let tr = m[(0, 0)] + m[(1, 1)];
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        ((tr + s).abs()).max((tr - s).abs()) / 2.0
    } else {
        det.sqrt()
    }
}

/// OLS fit of the VAR(1) coefficients over a 2 x T training matrix.
pub fn fit_var1(train: &DMatrix<f64>) -> Result<VarModel, VarError> {
    if train.nrows() != 2 {
        return Err(VarError::WrongDims(train.nrows()));
    }
    let t_len = train.ncols();
    if t_len < 3 {
        return Err(VarError::InsufficientData(t_len));
    }
    if train.iter().any(|v| !v.is_finite()) {
        return Err(VarError::NonFinite);
    }

    // regressors z(n) = [y1(n-1), y2(n-1), 1], responses y(n)
    let m = t_len - 1;
    let mut z = DMatrix::zeros(3, m);
    let mut y = DMatrix::zeros(2, m);
    for k in 0..m {
        z[(0, k)] = train[(0, k)];
        z[(1, k)] = train[(1, k)];
        z[(2, k)] = 1.0;
        y[(0, k)] = train[(0, k + 1)];
        y[(1, k)] = train[(1, k + 1)];
    }

    let svals = z.transpose().singular_values();
    if svals.min() <= RANK_TOL * svals.max() {
        return Err(VarError::CollinearRegressors);
    }

    let gram = &z * z.transpose(); // 3x3
    let rhs = &z * y.transpose(); // 3x2
    let solved = gram.lu().solve(&rhs).ok_or(VarError::CollinearRegressors)?;
    let b = solved.transpose(); // 2x3 = [phi | c]

    let phi = Matrix2::new(b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]);
    let intercept = Vector2::new(b[(0, 2)], b[(1, 2)]);
    let resid = &y - &b * &z;
    Ok(VarModel {
        phi,
        intercept,
        order: 1,
        dims: 2,
        companion_spectral_radius: spectral_radius_2x2(&phi),
        training_sse: resid.norm_squared(),
    })
}

impl VarModel {
    /// Run the closed-loop recursion over a lagged window of observed y1
    /// values. `y1_lagged[k]` is the observed value one step before the k-th
    /// prediction (so the window starts with the final training-period
    /// observation), and `y2_init` is the final training-period target value.
    pub fn predict_closed_loop_pair(
        &self,
        y1_lagged: &[f64],
        y2_init: f64,
    ) -> ClosedLoopPrediction {
        let t_len = y1_lagged.len();
        let mut y1 = vec![f64::NAN; t_len];
        let mut y2 = vec![f64::NAN; t_len];
        let mut prev2 = y2_init;
        let mut diverged = false;
        for k in 0..t_len {
            let obs_prev = y1_lagged[k];
            let p1 = self.phi[(0, 0)] * obs_prev + self.phi[(0, 1)] * prev2 + self.intercept[0];
            let p2 = self.phi[(1, 0)] * obs_prev + self.phi[(1, 1)] * prev2 + self.intercept[1];
            if !p2.is_finite() || p2.abs() > OVERFLOW_GUARD {
                diverged = true;
                if p2.is_finite() {
                    y1[k] = p1;
                    y2[k] = p2;
                }
                break;
            }
            y1[k] = p1;
            y2[k] = p2;
            prev2 = p2;
        }
        ClosedLoopPrediction { y1, y2, diverged }
    }
}

/// Spec'd target-channel recursion: y2(n) from lagged observed y1 and the
/// fed-back previous y2 prediction. Returns the prediction vector and a
/// divergence flag; after divergence the remaining entries are NaN.
pub fn predict_var_closed_loop(
    model: &VarModel,
    y1_lagged: &[f64],
    y2_init: f64,
) -> (Vec<f64>, bool) {
    let pred = model.predict_closed_loop_pair(y1_lagged, y2_init);
    (pred.y2, pred.diverged)
}
