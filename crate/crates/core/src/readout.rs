//! Ridge-regression training of the linear readout.
//!
//! The readout minimizes (1/T) sum_n ||W x(n) - y_target(n)||^2 plus an
//! unnormalized penalty beta ||W||_F^2. Solving that objective exactly as
//! written puts a beta*T term (not beta) next to the Gram matrix in the
//! closed form W = Y X^T (X X^T + beta T I)^{-1}.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reservoir::ReservoirState;

#[derive(Debug, Error)]
pub enum ReadoutError {
    #[error("states and targets disagree on the number of columns: {states} vs {targets}")]
    LengthMismatch { states: usize, targets: usize },
    #[error("training data must contain at least one column")]
    Empty,
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("ridge_beta must be finite and >= 0, got {0}")]
    InvalidBeta(f64),
    #[error("X X^T is singular with beta = 0; increase beta or provide richer states")]
    SingularSystem,
    #[error("readout shape {rows}x{cols} does not match state length {state_len}")]
    DimensionMismatch { rows: usize, cols: usize, state_len: usize },
}

/// Trained linear map from reservoir state to output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutWeights {
    pub w_out: DMatrix<f64>,
    pub ridge_beta: f64,
    pub train_len: usize,
}

impl ReadoutWeights {
    /// y(n) = W_out x(n); plain matrix-vector product, no bias.
    pub fn readout(&self, state: &ReservoirState) -> Result<DVector<f64>, ReadoutError> {
        if self.w_out.ncols() != state.x.len() {
            return Err(ReadoutError::DimensionMismatch {
                rows: self.w_out.nrows(),
                cols: self.w_out.ncols(),
                state_len: state.x.len(),
            });
        }
        Ok(&self.w_out * &state.x)
    }

    /// Apply to a whole state matrix (one state per column).
    pub fn readout_matrix(&self, states: &DMatrix<f64>) -> Result<DMatrix<f64>, ReadoutError> {
        if self.w_out.ncols() != states.nrows() {
            return Err(ReadoutError::DimensionMismatch {
                rows: self.w_out.nrows(),
                cols: self.w_out.ncols(),
                state_len: states.nrows(),
            });
        }
        Ok(&self.w_out * states)
    }
}

/// Fit the readout on post-transient states (N_x x T) against targets
/// (N_y x T). Returns the unique minimizer of the regularized objective.
pub fn fit_readout(
    states: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    ridge_beta: f64,
) -> Result<ReadoutWeights, ReadoutError> {
    if states.ncols() != targets.ncols() {
        return Err(ReadoutError::LengthMismatch {
            states: states.ncols(),
            targets: targets.ncols(),
        });
    }
    let t_len = states.ncols();
    if t_len == 0 {
        return Err(ReadoutError::Empty);
    }
    if !(ridge_beta >= 0.0) || !ridge_beta.is_finite() {
        return Err(ReadoutError::InvalidBeta(ridge_beta));
    }
    if states.iter().any(|v| !v.is_finite()) || targets.iter().any(|v| !v.is_finite()) {
        return Err(ReadoutError::NonFinite);
    }

    let n_x = states.nrows();
    let mut gram = states * states.transpose();
    let shift = ridge_beta * t_len as f64;
    for i in 0..n_x {
        gram[(i, i)] += shift;
    }
    if ridge_beta == 0.0 {
        // Cholesky alone can slide through a numerically rank-deficient Gram
        // matrix on tiny positive pivots, so check conditioning explicitly.
        let svals = gram.clone().singular_values();
        let (max, min) = (svals.max(), svals.min());
        if min <= 1e-12 * max {
            return Err(ReadoutError::SingularSystem);
        }
    }
    // Y X^T G^{-1} via a symmetric factorization: solve G Z = X Y^T, W = Z^T.
    let chol = gram.cholesky().ok_or(ReadoutError::SingularSystem)?;
    let rhs = states * targets.transpose(); // N_x x N_y
    let solved = chol.solve(&rhs);
    Ok(ReadoutWeights { w_out: solved.transpose(), ridge_beta, train_len: t_len })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent oracle: Gauss-Jordan inversion of the regularized Gram
    /// matrix, assembled entry by entry.
    fn fit_oracle(states: &DMatrix<f64>, targets: &DMatrix<f64>, beta: f64) -> DMatrix<f64> {
        let n = states.nrows();
        let t = states.ncols() as f64;
        let mut g = vec![vec![0.0f64; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..states.ncols() {
                    acc += states[(i, k)] * states[(j, k)];
                }
                g[i][j] = acc + if i == j { beta * t } else { 0.0 };
            }
        }
        let g_inv = invert_gauss_jordan(g);
        let n_y = targets.nrows();
        let mut yxt = vec![vec![0.0f64; n]; n_y];
        for r in 0..n_y {
            for c in 0..n {
                let mut acc = 0.0;
                for k in 0..states.ncols() {
                    acc += targets[(r, k)] * states[(c, k)];
                }
                yxt[r][c] = acc;
            }
        }
        DMatrix::from_fn(n_y, n, |r, c| {
            (0..n).map(|k| yxt[r][k] * g_inv[k][c]).sum()
        })
    }

    fn invert_gauss_jordan(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let n = a.len();
        let mut inv = vec![vec![0.0; n]; n];
        for (i, row) in inv.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&r1, &r2| a[r1][col].abs().partial_cmp(&a[r2][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot_row);
            inv.swap(col, pivot_row);
            let pivot = a[col][col];
            assert!(pivot.abs() > 1e-300, "singular oracle matrix");
            for j in 0..n {
                a[col][j] /= pivot;
                inv[col][j] /= pivot;
            }
            for r in 0..n {
                if r != col {
                    let f = a[r][col];
                    for j in 0..n {
                        a[r][j] -= f * a[col][j];
                        inv[r][j] -= f * inv[col][j];
                    }
                }
            }
        }
        inv
    }

    fn objective(w: &DMatrix<f64>, x: &DMatrix<f64>, y: &DMatrix<f64>, beta: f64) -> f64 {
        let resid = w * x - y;
        resid.norm_squared() / x.ncols() as f64 + beta * w.norm_squared()
    }

    #[test]
    fn scalar_regression_is_exact() {
        let states = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let targets = DMatrix::from_row_slice(1, 3, &[2.0, 4.0, 6.0]);
        let w = fit_readout(&states, &targets, 0.0).unwrap();
        assert!((w.w_out[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn huge_beta_shrinks_weights_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let states = DMatrix::from_fn(6, 30, |_, _| rng.random_range(-1.0..1.0));
        let targets = DMatrix::from_fn(2, 30, |_, _| rng.random_range(-1.0..1.0));
        let w = fit_readout(&states, &targets, 1e12).unwrap();
        assert!(w.w_out.norm() < 1e-6);
    }

    #[test]
    fn matches_independent_normal_equations_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let states = DMatrix::from_fn(8, 40, |_, _| rng.random_range(-1.0..1.0));
        let targets = DMatrix::from_fn(2, 40, |_, _| rng.random_range(-2.0..2.0));
        let w = fit_readout(&states, &targets, 0.5).unwrap();
        let oracle = fit_oracle(&states, &targets, 0.5);
        let rel = (&w.w_out - &oracle).norm() / oracle.norm();
        assert!(rel < 1e-8, "relative error {rel}");
    }

    #[test]
    fn perturbing_any_entry_does_not_improve_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let states = DMatrix::from_fn(5, 20, |_, _| rng.random_range(-1.0..1.0));
            let targets = DMatrix::from_fn(2, 20, |_, _| rng.random_range(-1.0..1.0));
            let beta = rng.random_range(0.01..2.0);
            let w = fit_readout(&states, &targets, beta).unwrap();
            let base = objective(&w.w_out, &states, &targets, beta);
            for r in 0..2 {
                for c in 0..5 {
                    for delta in [1e-4, -1e-4] {
                        let mut w2 = w.w_out.clone();
                        w2[(r, c)] += delta;
                        assert!(objective(&w2, &states, &targets, beta) >= base);
                    }
                }
            }
        }
    }

    #[test]
    fn shrinkage_is_monotone_in_beta() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let states = DMatrix::from_fn(6, 25, |_, _| rng.random_range(-1.0..1.0));
        let targets = DMatrix::from_fn(2, 25, |_, _| rng.random_range(-1.0..1.0));
        let betas = [0.0, 0.01, 0.1, 1.0, 10.0, 100.0];
        let norms: Vec<f64> = betas
            .iter()
            .map(|&b| fit_readout(&states, &targets, b).unwrap().w_out.norm())
            .collect();
        for pair in norms.windows(2) {
            assert!(pair[0] >= pair[1] - 1e-12, "norms {norms:?}");
        }
    }

    #[test]
    fn square_full_rank_interpolates_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let n = 8;
        let states = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let targets = DMatrix::from_fn(2, n, |_, _| rng.random_range(-1.0..1.0));
        let w = fit_readout(&states, &targets, 0.0).unwrap();
        let resid = (&w.w_out * &states - &targets).norm();
        assert!(resid < 1e-8, "residual {resid}");
    }

    #[test]
    fn rank_deficient_without_ridge_is_an_error() {
        // more rows than columns: X X^T cannot be full rank
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let states = DMatrix::from_fn(10, 4, |_, _| rng.random_range(-1.0..1.0));
        let targets = DMatrix::from_fn(2, 4, |_, _| rng.random_range(-1.0..1.0));
        assert!(matches!(fit_readout(&states, &targets, 0.0), Err(ReadoutError::SingularSystem)));
        // the same system solves fine with a positive ridge
        assert!(fit_readout(&states, &targets, 0.5).is_ok());
    }

    #[test]
    fn non_finite_inputs_are_rejected() {
        let states = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        let targets = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        assert!(matches!(fit_readout(&states, &targets, 1.0), Err(ReadoutError::NonFinite)));
    }

    #[test]
    fn readout_applies_weights() {
        let w = ReadoutWeights {
            w_out: DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.5, 0.0, -0.5]),
            ridge_beta: 0.0,
            train_len: 1,
        };
        let state = ReservoirState { x: nalgebra::dvector![2.0, 3.0, 4.0], step_index: 0 };
        let y = w.readout(&state).unwrap();
        assert_eq!(y[0], 3.0);
        assert_eq!(y[1], 0.5 * 2.0 - 0.5 * 4.0);
        let bad = ReservoirState { x: nalgebra::dvector![1.0, 2.0], step_index: 0 };
        assert!(w.readout(&bad).is_err());
    }

    #[test]
    fn one_hot_row_selects_node() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let mut w_out = DMatrix::zeros(1, 5);
        w_out[(0, 3)] = 1.0;
        let w = ReadoutWeights { w_out, ridge_beta: 0.0, train_len: 1 };
        let state = ReservoirState { x: x.clone(), step_index: 0 };
        assert_eq!(w.readout(&state).unwrap()[0], x[3]);
    }

    #[test]
    fn random_readout_matches_hand_dot_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w_out = DMatrix::from_fn(2, 5, |_, _| rng.random_range(-1.0..1.0));
        let x = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let w = ReadoutWeights { w_out: w_out.clone(), ridge_beta: 0.0, train_len: 1 };
        let y = w.readout(&ReservoirState { x: x.clone(), step_index: 0 }).unwrap();
        for r in 0..2 {
            let mut acc = 0.0;
            for c in 0..5 {
                acc += w_out[(r, c)] * x[c];
            }
            assert!((y[r] - acc).abs() < 1e-14);
        }
    }
}
