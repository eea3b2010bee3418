//! Deterministic derivation of sub-seeds from one master seed.
//!
//! Each random component (reservoir matrix, input matrix, leak rates,
//! power-iteration start, synthetic noise per site, ...) draws from its own
//! stream so that changing one draw never perturbs the others.

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the sub-seed for `stream` from `master`.
pub(crate) fn sub_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}
