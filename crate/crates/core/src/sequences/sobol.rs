//! Base-2 Sobol' points with optional Owen nested uniform scrambling.

use super::directions::DirectionNumberTable;
use super::{PointSet, SamplerKind, SequenceError};
use crate::rng::mix64;

/// Binary digits emitted per coordinate.
pub const OUTPUT_BITS: u32 = 53;
const OUTPUT_SCALE: f64 = 1.0 / (1u64 << OUTPUT_BITS) as f64;

/// Largest supported point count.
pub const MAX_POINTS: u64 = 1 << 32;

/// First `n` points of the Sobol' sequence in Gray-code order.
///
/// With `scramble_seed` set, each coordinate is Owen-scrambled
/// independently; point 0 is included in both modes.
pub fn sobol_points(
    n: usize,
    d: usize,
    scramble_seed: Option<u64>,
) -> Result<PointSet, SequenceError> {
    let table = DirectionNumberTable::embedded();
    if n == 0 || d == 0 {
        return Err(SequenceError::Empty { n, d });
    }
    if !n.is_power_of_two() || n as u64 > MAX_POINTS {
        return Err(SequenceError::NotPowerOfTwo { n });
    }
    if d > table.max_dim() {
        return Err(SequenceError::DimensionTooLarge { d, max: table.max_dim() });
    }

    let mut points = vec![0.0; n * d];
    for j in 0..d {
        let v = table.directions(j);
        let mut x = 0u32;
        for i in 0..n {
            if i > 0 {
                x ^= v[i.trailing_zeros() as usize];
            }
            points[i * d + j] = match scramble_seed {
                Some(seed) => owen_scramble(x, seed, j as u64) as f64 * OUTPUT_SCALE,
                None => f64::from(x) * (1.0 / 4_294_967_296.0),
            };
        }
    }

    let (sampler, seed) = match scramble_seed {
        Some(seed) => (SamplerKind::SobolScrambled, seed),
        None => (SamplerKind::Sobol, 0),
    };
    Ok(PointSet::from_parts(points, n, d, sampler, seed))
}

/// Nested uniform scramble of one coordinate.
///
/// Digit `k` is flipped by a bit drawn from a hash of
/// `(seed, coordinate, k, first k original digits)`, which is exactly a
/// random binary permutation attached to each node of the digit tree. The
/// result holds 53 scrambled digits; digits past the 32nd of the input are
/// zero before scrambling.
pub fn owen_scramble(x: u32, seed: u64, coordinate: u64) -> u64 {
    let digits = u64::from(x) << 32;
    let key = mix64(seed ^ mix64(coordinate.wrapping_add(0x6A09_E667_F3BC_C909)));
    let mut out = 0u64;
    for k in 0..OUTPUT_BITS {
        let prefix = if k == 0 { 0 } else { digits >> (64 - k) };
        // The sentinel bit makes (k, prefix) pairs distinct.
        let node = prefix | (1u64 << k);
        let flip = mix64(key ^ node.wrapping_mul(0x9E37_79B9_7F4A_7C15)) >> 63;
        let digit = (digits >> (63 - k)) & 1;
        out |= (digit ^ flip) << (OUTPUT_BITS - 1 - k);
    }
    out
}
