//! Point sets in the unit cube: Monte Carlo, Sobol' (plain and Owen
//! scrambled), Halton (plain and randomly shifted) and Latin hypercube.
//!
//! Every generator is a pure function of its arguments, so equal inputs give
//! bit-identical points.

mod directions;
mod halton;
mod lhs;
mod sobol;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

pub use directions::{DirectionNumberTable, PolynomialEntry, DIRECTION_BITS};
pub use halton::{halton_points, radical_inverse, shift_mod_one, MAX_HALTON_DIM};
pub use lhs::lhs_points;
pub use sobol::{owen_scramble, sobol_points, MAX_POINTS as MAX_SOBOL_POINTS, OUTPUT_BITS};

use crate::rng;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SequenceError {
    #[error("dimension {d} exceeds the supported maximum of {max}")]
    DimensionTooLarge { d: usize, max: usize },
    #[error("Sobol' nets need a power-of-two point count up to 2^32, got {n}; other sizes break the net balance")]
    NotPowerOfTwo { n: usize },
    #[error("point sets need n >= 1 and d >= 1 (got n = {n}, d = {d})")]
    Empty { n: usize, d: usize },
    #[error("direction-number table, line {line}: {reason}")]
    Table { line: usize, reason: String },
    #[error("unknown sampler `{0}`")]
    UnknownSampler(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Mc,
    Sobol,
    SobolScrambled,
    Halton,
    HaltonShifted,
    Lhs,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 6] = [
        SamplerKind::Mc,
        SamplerKind::Sobol,
        SamplerKind::SobolScrambled,
        SamplerKind::Halton,
        SamplerKind::HaltonShifted,
        SamplerKind::Lhs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Mc => "mc",
            SamplerKind::Sobol => "sobol",
            SamplerKind::SobolScrambled => "sobol-scrambled",
            SamplerKind::Halton => "halton",
            SamplerKind::HaltonShifted => "halton-shifted",
            SamplerKind::Lhs => "lhs",
        }
    }

    /// Whether the point set changes with the seed.
    pub fn is_randomized(self) -> bool {
        !matches!(self, SamplerKind::Sobol | SamplerKind::Halton)
    }

    pub fn is_sobol(self) -> bool {
        matches!(self, SamplerKind::Sobol | SamplerKind::SobolScrambled)
    }

    /// Generate `n` points in dimension `d`. Deterministic kinds ignore `seed`.
    pub fn generate(self, n: usize, d: usize, seed: u64) -> Result<PointSet, SequenceError> {
        if n == 0 || d == 0 {
            return Err(SequenceError::Empty { n, d });
        }
        match self {
            SamplerKind::Mc => Ok(mc_points(seed, n, d)),
            SamplerKind::Sobol => sobol_points(n, d, None),
            SamplerKind::SobolScrambled => sobol_points(n, d, Some(seed)),
            SamplerKind::Halton => halton_points(n, d, None),
            SamplerKind::HaltonShifted => halton_points(n, d, Some(seed)),
            SamplerKind::Lhs => Ok(lhs_points(seed, n, d)),
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = SequenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s.trim().to_ascii_lowercase().as_str() {
            "mc" | "monte-carlo" => SamplerKind::Mc,
            "sobol" => SamplerKind::Sobol,
            "sobol-scrambled" | "scrambled-sobol" | "rqmc" => SamplerKind::SobolScrambled,
            "halton" => SamplerKind::Halton,
            "halton-shifted" => SamplerKind::HaltonShifted,
            "lhs" => SamplerKind::Lhs,
            _ => return Err(SequenceError::UnknownSampler(s.to_string())),
        };
        Ok(kind)
    }
}

/// An immutable `n x d` row-major matrix of points in `[0, 1)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<f64>,
    n: usize,
    d: usize,
    sampler: SamplerKind,
    seed: u64,
}

impl PointSet {
    pub(crate) fn from_parts(
        points: Vec<f64>,
        n: usize,
        d: usize,
        sampler: SamplerKind,
        seed: u64,
    ) -> Self {
        debug_assert_eq!(points.len(), n * d);
        debug_assert!(points.iter().all(|&x| (0.0..1.0).contains(&x)));
        Self { points, n, d, sampler, seed }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sampler(&self) -> SamplerKind {
        self.sampler
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn scrambled(&self) -> bool {
        self.sampler == SamplerKind::SobolScrambled
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.d)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }
}

/// `n x d` independent uniform draws from a seeded ChaCha stream.
///
/// # Panics
///
/// Panics if `n` or `d` is zero.
pub fn mc_points(seed: u64, n: usize, d: usize) -> PointSet {
    assert!(n > 0 && d > 0, "mc_points needs n >= 1 and d >= 1");
    let mut stream = rng::stream(seed);
    let points = (0..n * d).map(|_| stream.gen::<f64>()).collect();
    PointSet::from_parts(points, n, d, SamplerKind::Mc, seed)
}

/// True when every dyadic cell `[j/2^m, (j+1)/2^m)` of coordinate `coord`
/// holds exactly `n / 2^m` points.
pub fn dyadic_stratified(points: &PointSet, coord: usize, m: u32) -> bool {
    let cells = 1usize << m;
    if !points.n().is_multiple_of(cells) {
        return false;
    }
    let mut counts = vec![0usize; cells];
    for row in points.rows() {
        counts[dyadic_cell(row[coord], m)] += 1;
    }
    counts.iter().all(|&c| c == points.n() / cells)
}

/// Counts of points in the elementary intervals of shape
/// `2^-k1 x 2^-k2` over coordinates `(a, b)`, indexed `cell_a * 2^k2 + cell_b`.
pub fn elementary_counts(points: &PointSet, a: usize, b: usize, k1: u32, k2: u32) -> Vec<usize> {
    let mut counts = vec![0usize; 1 << (k1 + k2)];
    for row in points.rows() {
        counts[(dyadic_cell(row[a], k1) << k2) | dyadic_cell(row[b], k2)] += 1;
    }
    counts
}

/// Smallest `t` such that the 2-D projection on `(a, b)` of a `2^m`-point
/// set is a `(t, m, 2)`-net in base 2.
pub fn projection_t_value(points: &PointSet, a: usize, b: usize) -> Option<u32> {
    let n = points.n();
    if !n.is_power_of_two() {
        return None;
    }
    let m = n.trailing_zeros();
    (0..=m).find(|&t| {
        let k = m - t;
        (0..=k).all(|k1| {
            let expected = n >> k;
            elementary_counts(points, a, b, k1, k - k1).iter().all(|&c| c == expected)
        })
    })
}

#[inline]
fn dyadic_cell(x: f64, m: u32) -> usize {
    (x * (1u64 << m) as f64) as usize
}
