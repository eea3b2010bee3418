//! Fixed random reservoirs and their state dynamics.
//!
//! A reservoir is a sparse random recurrent matrix rescaled to a target
//! spectral radius, a dense input matrix, and per-node leak rates. With all
//! leak rates at 1 the update is the standard tanh echo state network; a
//! uniform leak in (0,1) gives the leaky-integrator variant, and per-node
//! log-uniform leaks give the distributed-timescale variant. Construction
//! is deterministic in (params, seed) and the reservoir is immutable
//! afterwards.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as index_sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::sub_seed;
use crate::sparse::SparseMatrix;

const SEED_STREAM_W: u64 = 1;
const SEED_STREAM_W_IN: u64 = 2;
const SEED_STREAM_LEAK: u64 = 3;
const SEED_STREAM_POWER: u64 = 4;

/// Convergence tolerance for the spectral-radius power iteration.
const POWER_TOL: f64 = 1e-10;
/// Consecutive converged iterations required before accepting the estimate.
const POWER_STABLE_ITERS: usize = 4;
const POWER_MAX_ITERS: usize = 100_000;

#[derive(Debug, Error)]
pub enum ReservoirError {
    #[error("invalid reservoir parameters: {0}")]
    InvalidParams(String),
    #[error("unscaled reservoir matrix has spectral radius 0 (seed {seed}); reseed")]
    DegenerateReservoir { seed: u64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Leak-rate configuration for the reservoir nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LeakMode {
    /// One leak rate shared by every node; 1.0 recovers the plain ESN.
    Uniform { alpha: f64 },
    /// Per-node leak rates drawn log-uniformly from [10^log10_min, 10^log10_max].
    Distributed { log10_min: f64, log10_max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirParams {
    pub n_input: usize,
    pub n_reservoir: usize,
    pub n_output: usize,
    /// Fraction of structurally nonzero recurrent entries, in (0, 1].
    pub density: f64,
    /// Input weights are drawn uniformly from [-input_scaling, +input_scaling].
    pub input_scaling: f64,
    /// The recurrent matrix is rescaled so its spectral radius hits this value.
    pub spectral_radius_target: f64,
    pub leak_mode: LeakMode,
    pub seed: u64,
}

impl ReservoirParams {
    pub fn validate(&self) -> Result<(), ReservoirError> {
        let err = |msg: String| Err(ReservoirError::InvalidParams(msg));
        if self.n_reservoir == 0 || self.n_input == 0 || self.n_output == 0 {
            return err("node counts must be positive".into());
        }
        if self.n_reservoir < self.n_input {
            return err(format!(
                "n_reservoir ({}) must be >= n_input ({})",
                self.n_reservoir, self.n_input
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return err(format!("density {} outside (0, 1]", self.density));
        }
        if !(self.input_scaling >= 0.0) || !self.input_scaling.is_finite() {
            return err(format!("input_scaling {} must be finite and >= 0", self.input_scaling));
        }
        if !(self.spectral_radius_target >= 0.0) || !self.spectral_radius_target.is_finite() {
            return err(format!(
                "spectral_radius_target {} must be finite and >= 0",
                self.spectral_radius_target
            ));
        }
        match self.leak_mode {
            LeakMode::Uniform { alpha } => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return err(format!("leak rate {alpha} outside (0, 1]"));
                }
            }
            LeakMode::Distributed { log10_min, log10_max } => {
                if !(log10_min <= log10_max && log10_max <= 0.0) || !log10_min.is_finite() {
                    return err(format!(
                        "distributed leak range [{log10_min}, {log10_max}] must satisfy min <= max <= 0"
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Immutable reservoir: fixed weights, fixed leak rates.
#[derive(Debug, Clone, PartialEq)]
pub struct Reservoir {
    w_in: DMatrix<f64>,
    w: SparseMatrix,
    leak_rates: DVector<f64>,
    measured_spectral_radius: f64,
    params: ReservoirParams,
}

/// Reservoir activation vector at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState {
    pub x: DVector<f64>,
    pub step_index: usize,
}

impl ReservoirState {
    pub fn zero(n_reservoir: usize) -> Self {
        Self { x: DVector::zeros(n_reservoir), step_index: 0 }
    }
}

/// Construct a reservoir from validated parameters.
///
/// The recurrent matrix gets exactly round(density * n^2) structural
/// nonzeros at positions sampled without replacement, values uniform on
/// [-1, 1], then a global rescale to the target spectral radius. Input
/// weights are uniform on [-input_scaling, +input_scaling]. Every random
/// component draws from its own sub-seed of `params.seed`.
pub fn init_reservoir(params: &ReservoirParams) -> Result<Reservoir, ReservoirError> {
    params.validate()?;
    let n = params.n_reservoir;

    let mut rng_w = ChaCha8Rng::seed_from_u64(sub_seed(params.seed, SEED_STREAM_W));
    let nnz = (params.density * (n * n) as f64).round() as usize;
    let mut positions = index_sample(&mut rng_w, n * n, nnz).into_vec();
    positions.sort_unstable();
    let entries: Vec<(u32, u32, f64)> = positions
        .into_iter()
        .map(|p| ((p / n) as u32, (p % n) as u32, rng_w.random_range(-1.0..=1.0)))
        .collect();
    let mut w = SparseMatrix::from_coo(n, n, entries);

    let mut rng_in = ChaCha8Rng::seed_from_u64(sub_seed(params.seed, SEED_STREAM_W_IN));
    let gamma = params.input_scaling;
    let w_in = DMatrix::from_fn(n, params.n_input, |_, _| {
        if gamma == 0.0 {
            0.0
        } else {
            rng_in.random_range(-gamma..=gamma)
        }
    });

    let mut rng_leak = ChaCha8Rng::seed_from_u64(sub_seed(params.seed, SEED_STREAM_LEAK));
    let leak_rates = match params.leak_mode {
        LeakMode::Uniform { alpha } => DVector::from_element(n, alpha),
        LeakMode::Distributed { log10_min, log10_max } => DVector::from_fn(n, |_, _| {
            let u: f64 = rng_leak.random();
            10f64.powf(log10_min + (log10_max - log10_min) * u)
        }),
    };

    let power_seed = sub_seed(params.seed, SEED_STREAM_POWER);
    let pre_radius = estimate_spectral_radius(&w, power_seed);
    let measured_spectral_radius = if params.spectral_radius_target == 0.0 {
        w.scale(0.0);
        0.0
    } else if pre_radius < 1e-300 {
        return Err(ReservoirError::DegenerateReservoir { seed: params.seed });
    } else {
        w.scale(params.spectral_radius_target / pre_radius);
        estimate_spectral_radius(&w, power_seed)
    };

    Ok(Reservoir { w_in, w, leak_rates, measured_spectral_radius, params: params.clone() })
}

impl Reservoir {
    /// Reassemble a reservoir from stored parts, validating shapes.
    pub(crate) fn from_parts(
        w_in: DMatrix<f64>,
        w: SparseMatrix,
        leak_rates: DVector<f64>,
        measured_spectral_radius: f64,
        params: ReservoirParams,
    ) -> Result<Self, ReservoirError> {
        params.validate()?;
        let n = params.n_reservoir;
        if w_in.shape() != (n, params.n_input) {
            return Err(ReservoirError::DimensionMismatch { expected: n, got: w_in.nrows() });
        }
        if w.n_rows() != n || w.n_cols() != n {
            return Err(ReservoirError::DimensionMismatch { expected: n, got: w.n_rows() });
        }
        if leak_rates.len() != n {
            return Err(ReservoirError::DimensionMismatch { expected: n, got: leak_rates.len() });
        }
        Ok(Self { w_in, w, leak_rates, measured_spectral_radius, params })
    }

    pub fn params(&self) -> &ReservoirParams {
        &self.params
    }

    pub fn w_in(&self) -> &DMatrix<f64> {
        &self.w_in
    }

    pub fn w(&self) -> &SparseMatrix {
        &self.w
    }

    pub fn leak_rates(&self) -> &DVector<f64> {
        &self.leak_rates
    }

    pub fn measured_spectral_radius(&self) -> f64 {
        self.measured_spectral_radius
    }

    pub fn n_reservoir(&self) -> usize {
        self.params.n_reservoir
    }

    /// One update: x(n) = (1-a) . x(n-1) + a . tanh(W_in u(n) + W x(n-1)),
    /// elementwise in the leak vector a. With all leaks at 1 this is exactly
    /// the plain ESN update.
    pub fn step(
        &self,
        state: &ReservoirState,
        input: &[f64],
    ) -> Result<ReservoirState, ReservoirError> {
        if input.len() != self.params.n_input {
            return Err(ReservoirError::DimensionMismatch {
                expected: self.params.n_input,
                got: input.len(),
            });
        }
        if state.x.len() != self.params.n_reservoir {
            return Err(ReservoirError::DimensionMismatch {
                expected: self.params.n_reservoir,
                got: state.x.len(),
            });
        }
        let n = self.params.n_reservoir;
        let mut pre = vec![0.0; n];
        self.w.mul_vec_into(state.x.as_slice(), &mut pre);
        for (i, p) in pre.iter_mut().enumerate() {
            let mut drive = 0.0;
            for (j, &u) in input.iter().enumerate() {
                drive += self.w_in[(i, j)] * u;
            }
            *p += drive;
        }
        let x = DVector::from_fn(n, |i, _| {
            let a = self.leak_rates[i];
            (1.0 - a) * state.x[i] + a * pre[i].tanh()
        });
        Ok(ReservoirState { x, step_index: state.step_index + 1 })
    }

    /// Drive the reservoir over `inputs` (one column per step), advancing
    /// `state` in place. Column t of the result is the state after consuming
    /// inputs[..=t]; identical to repeated `step` calls.
    pub fn run(
        &self,
        state: &mut ReservoirState,
        inputs: &DMatrix<f64>,
    ) -> Result<DMatrix<f64>, ReservoirError> {
        if inputs.nrows() != self.params.n_input && inputs.ncols() > 0 {
            return Err(ReservoirError::DimensionMismatch {
                expected: self.params.n_input,
                got: inputs.nrows(),
            });
        }
        let t_len = inputs.ncols();
        let mut states = DMatrix::zeros(self.params.n_reservoir, t_len);
        for t in 0..t_len {
            let col: Vec<f64> = inputs.column(t).iter().copied().collect();
            *state = self.step(state, &col)?;
            states.set_column(t, &state.x);
        }
        Ok(states)
    }
}

/// Estimate max |eigenvalue| with a seeded two-column subspace power
/// iteration (the block handles complex conjugate pairs, which plain power
/// iteration cannot track on nonsymmetric matrices). Deterministic in
/// (matrix, seed). Structurally nilpotent matrices (acyclic connectivity)
/// return exactly 0 without iterating.
pub fn estimate_spectral_radius(w: &SparseMatrix, seed: u64) -> f64 {
    let n = w.n_rows();
    if n == 0 || w.nnz() == 0 {
        return 0.0;
    }
    if is_structurally_acyclic(w) {
        return 0.0;
    }
    let block = 2.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rng: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        DVector::from_vec(v)
    };

    let mut q: Vec<DVector<f64>> = Vec::with_capacity(block);
    for _ in 0..block {
        q.push(draw(&mut rng));
    }
    orthonormalize(&mut q, &mut rng, &mut draw);

    let mut estimate = 0.0;
    let mut stable = 0usize;
    for _ in 0..POWER_MAX_ITERS {
        let z: Vec<DVector<f64>> = q
            .iter()
            .map(|qi| {
                let mut out = vec![0.0; n];
                w.mul_vec_into(qi.as_slice(), &mut out);
                DVector::from_vec(out)
            })
            .collect();

        if z.iter().all(|zi| zi.norm() < 1e-300) {
            return 0.0; // nilpotent-by-chance pattern: iterates vanish exactly
        }

        // Rayleigh projection M = Q^T W Q, then its largest eigenvalue modulus.
        let next = if block == 2 {
            let m = [
                [q[0].dot(&z[0]), q[0].dot(&z[1])],
                [q[1].dot(&z[0]), q[1].dot(&z[1])],
            ];
            max_abs_eig_2x2(m[0][0], m[0][1], m[1][0], m[1][1])
        } else {
            q[0].dot(&z[0]).abs()
        };

        if (next - estimate).abs() <= POWER_TOL * next.max(1.0) {
            stable += 1;
            if stable >= POWER_STABLE_ITERS {
                return next;
            }
        } else {
            stable = 0;
        }
        estimate = next;

        q = z;
        orthonormalize(&mut q, &mut rng, &mut draw);
    }
    estimate
}

fn orthonormalize(
    q: &mut [DVector<f64>],
    rng: &mut ChaCha8Rng,
    draw: &mut impl FnMut(&mut ChaCha8Rng) -> DVector<f64>,
) {
    for i in 0..q.len() {
        loop {
            for j in 0..i {
                let proj = q[j].dot(&q[i]);
                let qj = q[j].clone();
                q[i].axpy(-proj, &qj, 1.0);
            }
            let norm = q[i].norm();
            if norm > 1e-300 {
                q[i] /= norm;
                break;
            }
            q[i] = draw(rng); // collapsed direction: replace and retry
        }
    }
}

/// Kahn's algorithm on the sparsity digraph. An acyclic pattern is
/// nilpotent for any values, so its spectral radius is exactly 0; a cyclic
/// pattern with continuous random values has positive radius almost surely.
fn is_structurally_acyclic(w: &SparseMatrix) -> bool {
    let n = w.n_rows();
    let coo = w.to_coo();
    let mut out_edges: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut in_degree = vec![0usize; n];
    for &(r, c, _) in &coo {
        out_edges[c as usize].push(r); // edge from source node c to target r
        in_degree[r as usize] += 1;
    }
    let mut queue: Vec<u32> = (0..n as u32).filter(|&i| in_degree[i as usize] == 0).collect();
    let mut removed = 0usize;
    while let Some(node) = queue.pop() {
        removed += 1;
        for &next in &out_edges[node as usize] {
            in_degree[next as usize] -= 1;
            if in_degree[next as usize] == 0 {
                queue.push(next);
            }
        }
    }
    removed == n
}

fn max_abs_eig_2x2(a: f64, b: f64, c: f64, d: f64) -> f64 {
    let tr = a + d;
    let det = a * d - b * c;
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let s = disc.sqrt();
        ((tr + s).abs()).max((tr - s).abs()) / 2.0
    } else {
        det.sqrt() // complex pair: |lambda|^2 = det
    }
}
