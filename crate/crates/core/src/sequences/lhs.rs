use rand::seq::SliceRandom;
use rand::Rng;

use super::{PointSet, SamplerKind};
use crate::rng;

/// Latin hypercube sample: in every coordinate each stratum
/// `[k/n, (k+1)/n)` holds exactly one point.
///
/// # Panics
///
/// Panics if `n` or `d` is zero.
pub fn lhs_points(seed: u64, n: usize, d: usize) -> PointSet {
    assert!(n > 0 && d > 0, "lhs_points needs n >= 1 and d >= 1");
    let mut stream = rng::stream(seed);
    let mut points = vec![0.0; n * d];
    let mut strata: Vec<usize> = (0..n).collect();
    let width = 1.0 / n as f64;
    for j in 0..d {
        strata.shuffle(&mut stream);
        for (i, &k) in strata.iter().enumerate() {
            let u: f64 = stream.gen();
            points[i * d + j] = in_stratum((k as f64 + u) * width, k, n);
        }
    }
    PointSet::from_parts(points, n, d, SamplerKind::Lhs, seed)
}

// Rounding can push (k + u)/n across a stratum boundary.
fn in_stratum(mut x: f64, k: usize, n: usize) -> f64 {
    while x >= 1.0 || (x * n as f64).floor() as usize > k {
        x = f64::from_bits(x.to_bits() - 1);
    }
    while ((x * n as f64).floor() as usize) < k {
        x = f64::from_bits(x.to_bits() + 1);
    }
    x
}
