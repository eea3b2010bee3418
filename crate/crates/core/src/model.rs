//! Versioned JSON document holding a reservoir and, optionally, its trained
//! readout, for reproducibility audits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::readout::ReadoutWeights;
use crate::reservoir::{Reservoir, ReservoirError, ReservoirParams};
use crate::sparse::SparseMatrix;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("unsupported model document version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed model document: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("inconsistent model document: {0}")]
    Inconsistent(#[from] ReservoirError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReservoirDocument {
    pub params: ReservoirParams,
    /// Row-major n_reservoir x n_input input weights.
    pub w_in: Vec<f64>,
    /// Recurrent matrix as a coordinate list.
    pub w: SparseMatrix,
    pub leak_rates: Vec<f64>,
    pub measured_spectral_radius: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelDocument {
    pub version: u32,
    pub reservoir: ReservoirDocument,
    pub readout: Option<ReadoutWeights>,
}

impl ModelDocument {
    pub fn new(reservoir: &Reservoir, readout: Option<ReadoutWeights>) -> Self {
        let params = reservoir.params().clone();
        let w_in: Vec<f64> = (0..params.n_reservoir)
            .flat_map(|r| (0..params.n_input).map(move |c| (r, c)))
            .map(|(r, c)| reservoir.w_in()[(r, c)])
            .collect();
        Self {
            version: MODEL_FORMAT_VERSION,
            reservoir: ReservoirDocument {
                w_in,
                w: reservoir.w().clone(),
                leak_rates: reservoir.leak_rates().iter().copied().collect(),
                measured_spectral_radius: reservoir.measured_spectral_radius(),
                params,
            },
            readout,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ModelIoError> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(ModelIoError::UnsupportedVersion(doc.version));
        }
        Ok(doc)
    }

    pub fn reservoir(&self) -> Result<Reservoir, ModelIoError> {
        let d = &self.reservoir;
        let n = d.params.n_reservoir;
        let m = d.params.n_input;
        if d.w_in.len() != n * m {
            return Err(ModelIoError::Inconsistent(ReservoirError::DimensionMismatch {
                expected: n * m,
                got: d.w_in.len(),
            }));
        }
        let w_in = DMatrix::from_fn(n, m, |r, c| d.w_in[r * m + c]);
        let reservoir = Reservoir::from_parts(
            w_in,
            d.w.clone(),
            DVector::from_vec(d.leak_rates.clone()),
            d.measured_spectral_radius,
            d.params.clone(),
        )?;
        Ok(reservoir)
    }
}
