//! Prediction of an unobserved climate time series at a remote target
//! location from a series observed elsewhere.
//!
//! The crate provides an echo state network (fixed random reservoir plus a
//! ridge-trained linear readout), a VAR(1) statistical baseline with the
//! asymmetric closed-loop test recursion, the climate data pipeline
//! (leap-day removal, 3-year historical-average differencing, window
//! splitting), NRMSE/correlation evaluation, hyperparameter grid search,
//! and the sweep experiment runner behind the `climacast` CLI.

pub mod data;
pub mod eval;
pub mod experiment;
pub mod model;
pub mod pipeline;
pub mod readout;
pub mod reservoir;
pub mod sparse;
pub mod tune;
pub mod var;

pub(crate) mod seed;

pub use readout::{fit_readout, ReadoutError, ReadoutWeights};
pub use reservoir::{
    init_reservoir, LeakMode, Reservoir, ReservoirError, ReservoirParams, ReservoirState,
};
pub use var::{fit_var1, predict_var_closed_loop, VarError, VarModel};
