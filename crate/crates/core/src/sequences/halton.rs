use rand::Rng;

use super::{PointSet, SamplerKind, SequenceError};
use crate::rng;

/// Halton dimensions are limited to the first 64 primes.
pub const MAX_HALTON_DIM: usize = 64;

const PRIMES: [u64; MAX_HALTON_DIM] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191,
    193, 197, 199, 211, 223, 227, 229, 233, 239, 241, 251, 257, 263, 269, 271, 277, 281, 283, 293,
    307, 311,
];

/// Digit-reversed fraction of `index` in `base`.
///
/// # Panics
///
/// Panics if `base < 2`.
pub fn radical_inverse(index: u64, base: u64) -> f64 {
    assert!(base >= 2, "radical inverse needs base >= 2, got {base}");
    let inv_base = 1.0 / base as f64;
    let mut remaining = index;
    let mut scale = inv_base;
    let mut result = 0.0;
    while remaining > 0 {
        result += (remaining % base) as f64 * scale;
        remaining /= base;
        scale *= inv_base;
    }
    below_one(result)
}

/// Halton points, 1-based index `i` for row `i - 1`.
///
/// `shift_seed` adds a per-coordinate uniform shift modulo 1.
pub fn halton_points(
    n: usize,
    d: usize,
    shift_seed: Option<u64>,
) -> Result<PointSet, SequenceError> {
    if n == 0 || d == 0 {
        return Err(SequenceError::Empty { n, d });
    }
    if d > MAX_HALTON_DIM {
        return Err(SequenceError::DimensionTooLarge { d, max: MAX_HALTON_DIM });
    }
    let shifts: Vec<f64> = match shift_seed {
        Some(seed) => {
            let mut stream = rng::stream(seed);
            (0..d).map(|_| stream.gen::<f64>()).collect()
        }
        None => vec![0.0; d],
    };
    let mut points = Vec::with_capacity(n * d);
    for i in 1..=n as u64 {
        for (j, &shift) in shifts.iter().enumerate() {
            points.push(shift_mod_one(radical_inverse(i, PRIMES[j]), shift));
        }
    }
    let (sampler, seed) = match shift_seed {
        Some(seed) => (SamplerKind::HaltonShifted, seed),
        None => (SamplerKind::Halton, 0),
    };
    Ok(PointSet::from_parts(points, n, d, sampler, seed))
}

/// `(x + shift) mod 1`, kept in `[0, 1)`.
pub fn shift_mod_one(x: f64, shift: f64) -> f64 {
    let y = x + shift;
    let y = if y >= 1.0 { y - 1.0 } else { y };
    below_one(y.max(0.0))
}

fn below_one(x: f64) -> f64 {
    if x < 1.0 {
        x
    } else {
        1.0 - f64::EPSILON / 2.0
    }
}
