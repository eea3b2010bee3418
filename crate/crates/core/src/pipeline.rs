//! The prediction pipeline over one dataset split, shared by the sweep
//! runner and the hyperparameter search.
//!
//! The reservoir is driven continuously: the state at the end of the
//! transient period seeds the training run and the end-of-training state
//! seeds the test run. Training states over the transient period are
//! discarded; the readout sees only training-year states. At test time the
//! reservoir consumes only the observation channel.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::data::DatasetSplit;
use crate::eval::{nrmse, restore_test_prediction, test_truth_original, EvalError};
use crate::readout::{fit_readout, ReadoutError, ReadoutWeights};
use crate::reservoir::{init_reservoir, Reservoir, ReservoirError, ReservoirParams, ReservoirState};
use crate::var::{fit_var1, ClosedLoopPrediction, VarError, VarModel};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Reservoir(#[from] ReservoirError),
    #[error(transparent)]
    Readout(#[from] ReadoutError),
    #[error(transparent)]
    Var(#[from] VarError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn row_matrix(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(1, values.len(), values)
}

/// Difference-scale ESN prediction over the test window.
pub struct EsnRun {
    pub pred_diff: DMatrix<f64>,
    pub readout: ReadoutWeights,
}

/// Warm up, train, and test one reservoir over a split.
pub fn run_esn_on_split(
    reservoir: &Reservoir,
    ridge_beta: f64,
    split: &DatasetSplit,
) -> Result<EsnRun, PipelineError> {
    let mut state = ReservoirState::zero(reservoir.n_reservoir());
    reservoir.run(&mut state, &row_matrix(&split.u_trans))?;
    let train_states = reservoir.run(&mut state, &row_matrix(&split.u_train))?;
    let readout = fit_readout(&train_states, &split.y_train, ridge_beta)?;
    let test_states = reservoir.run(&mut state, &row_matrix(&split.u_test))?;
    let pred_diff = readout.readout_matrix(&test_states)?;
    Ok(EsnRun { pred_diff, readout })
}

/// Original-scale NRMSE of one ESN configuration on one split; the scalar
/// objective used by the grid search.
pub fn esn_nrmse_on_split(
    params: &ReservoirParams,
    ridge_beta: f64,
    split: &DatasetSplit,
) -> Result<f64, PipelineError> {
    let reservoir = init_reservoir(params)?;
    let run = run_esn_on_split(&reservoir, ridge_beta, split)?;
    let pred = restore_test_prediction(split, &run.pred_diff);
    let truth = test_truth_original(split);
    Ok(nrmse(&pred, &truth)?)
}

/// VAR fit plus closed-loop test prediction on the difference scale.
pub struct VarRun {
    pub model: VarModel,
    pub prediction: ClosedLoopPrediction,
}

pub fn run_var_on_split(split: &DatasetSplit) -> Result<VarRun, PipelineError> {
    let model = fit_var1(&split.y_train)?;
    let t_test = split.u_test.len();
    // lagged observed window: last training observation, then the first
    // T_test - 1 observed test values
    let mut lagged = Vec::with_capacity(t_test);
    lagged.push(*split.u_train.last().expect("non-empty training input"));
    lagged.extend_from_slice(&split.u_test[..t_test - 1]);
    let y2_init = split.y_train[(1, split.y_train.ncols() - 1)];
    let prediction = model.predict_closed_loop_pair(&lagged, y2_init);
    Ok(VarRun { model, prediction })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_split, SeriesMeta, TimeSeries, Variable};
    use crate::data::calendar::{datetime_of_slot, SLOTS_PER_YEAR};
    use crate::reservoir::LeakMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn series(seed: u64, years: usize, start: i32) -> TimeSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for y in 0..years {
            for slot in 0..SLOTS_PER_YEAR {
                times.push(datetime_of_slot(start + y as i32, slot));
                let seasonal =
                    300.0 - 10.0 * (2.0 * std::f64::consts::PI * slot as f64 / 1460.0).cos();
                values.push(seasonal + rng.random_range(-1.0..1.0));
            }
        }
        TimeSeries::new(
            times,
            values,
            SeriesMeta {
                lat: 0.0,
                lon: 0.0,
                variable: Variable::Synthetic,
                step_hours: 6,
                differenced: false,
            },
        )
        .unwrap()
    }

    fn params(n: usize) -> ReservoirParams {
        ReservoirParams {
            n_input: 1,
            n_reservoir: n,
            n_output: 2,
            density: 0.1,
            input_scaling: 0.2,
            spectral_radius_target: 0.5,
            leak_mode: LeakMode::Uniform { alpha: 1.0 },
            seed: 3,
        }
    }

    #[test]
    fn esn_self_prediction_beats_baseline_by_far() {
        // obs == target: the reservoir sees the test answer for channel 1
        let s = series(1, 6, 2015);
        let split = make_split(&s, &s, 2020).unwrap();
        let v = esn_nrmse_on_split(&params(100), 0.01, &split).unwrap();
        let baseline = {
            let pred = crate::eval::historical_average_prediction(&split);
            let truth = test_truth_original(&split);
            nrmse(&pred, &truth).unwrap()
        };
        assert!(v < 0.5 * baseline, "self-prediction NRMSE {v} vs baseline {baseline}");
    }

    #[test]
    fn test_phase_consumes_only_the_observation_channel() {
        // corrupting the stored target test values must not change the
        // prediction, only the reported error
        let obs = series(2, 6, 2015);
        let tgt = series(3, 6, 2015);
        let split = make_split(&obs, &tgt, 2020).unwrap();
        let reservoir = init_reservoir(&params(60)).unwrap();
        let run_a = run_esn_on_split(&reservoir, 0.5, &split).unwrap();
        let mut corrupted = split.clone();
        for c in 0..corrupted.y_test.ncols() {
            corrupted.y_test[(1, c)] = 9999.0;
        }
        let run_b = run_esn_on_split(&reservoir, 0.5, &corrupted).unwrap();
        assert_eq!(run_a.pred_diff, run_b.pred_diff);
    }

    #[test]
    fn var_lagged_window_starts_at_the_last_training_step() {
        let obs = series(4, 6, 2015);
        let tgt = series(5, 6, 2015);
        let split = make_split(&obs, &tgt, 2020).unwrap();
        let run = run_var_on_split(&split).unwrap();
        assert!(!run.prediction.diverged);
        // first prediction must use (last train y1, last train y2)
        let expect = run.model.phi[(1, 0)] * split.u_train[split.u_train.len() - 1]
            + run.model.phi[(1, 1)] * split.y_train[(1, split.y_train.ncols() - 1)]
            + run.model.intercept[1];
        assert_eq!(run.prediction.y2[0], expect);
        assert_eq!(run.prediction.y2.len(), split.u_test.len());
    }
}
