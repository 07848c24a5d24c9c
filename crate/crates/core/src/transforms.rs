//! Maps from uniform points to the model sample spaces: Gaussian vectors
//! (Cholesky or PCA loading), the affine uniform model and the two-stage
//! `(T, v, e)` tuple.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::linalg::{dot, Matrix};
use crate::sequences::PointSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("inverse normal CDF is defined on (0, 1), got {0}")]
    Domain(f64),
    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive semidefinite (eigenvalue {0:e})")]
    NotPositiveSemidefinite(f64),
    #[error("Jacobi eigensolver did not converge within {0} sweeps")]
    NoConvergence(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown factorization `{0}`")]
    UnknownFactorization(String),
}

/// Smallest input fed to the inverse CDF in place of an exact 0.
pub const UNIT_FLOOR: f64 = 1.0 / 9_007_199_254_740_992.0;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Inverse of the standard normal CDF (Wichura's AS 241, PPND16).
///
/// Relative accuracy is about 1e-16 over the whole open interval.
pub fn norm_inv_cdf(u: f64) -> Result<f64, TransformError> {
    if !(u > 0.0 && u < 1.0) {
        return Err(TransformError::Domain(u));
    }
    Ok(ppnd16(u))
}

#[allow(clippy::excessive_precision)]
fn ppnd16(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608_0,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083_0e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061_0e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561_0e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_90,
        5.769_497_221_460_691_405_50,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_70e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_40e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_40,
        6.897_673_349_851_000_045_50e-1,
        1.481_039_764_274_800_745_90e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946_00e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_20,
        5.463_784_911_164_114_369_90,
        1.784_826_539_917_291_335_80,
        2.965_605_718_285_048_912_30e-1,
        2.653_218_952_657_612_309_30e-2,
        1.242_660_947_388_078_438_60e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_90e-1,
        1.369_298_809_227_358_053_10e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591_00e-4,
        1.846_318_317_510_054_681_80e-5,
        1.421_511_758_316_445_888_70e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    fn ratio(num: &[f64; 8], den: &[f64; 8], x: f64) -> f64 {
        let horner = |c: &[f64; 8]| c.iter().rev().fold(0.0, |acc, &k| acc * x + k);
        horner(num) / horner(den)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * ratio(&A, &B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 { ratio(&C, &D, r - 1.6) } else { ratio(&E, &F, r - 5.0) };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Lower-triangular `L` with `L L^T = sigma`.
pub fn cholesky_factor(sigma: &Matrix) -> Result<Matrix, TransformError> {
    if !sigma.is_square() {
        return Err(TransformError::Shape(format!(
            "covariance is {}x{}",
            sigma.rows(),
            sigma.cols()
        )));
    }
    let n = sigma.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let pivot = sigma[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if pivot.is_nan() || pivot <= 0.0 {
            return Err(TransformError::NotPositiveDefinite { index: j, pivot });
        }
        let diag = pivot.sqrt();
        l[(j, j)] = diag;
        for i in j + 1..n {
            let s = sigma[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
            l[(i, j)] = s / diag;
        }
    }
    Ok(l)
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as columns; each eigenvector's largest-magnitude entry is
/// made positive.
pub fn symmetric_eigen(sigma: &Matrix) -> Result<(Vec<f64>, Matrix), TransformError> {
    if !sigma.is_symmetric() {
        return Err(TransformError::NotSymmetric);
    }
    let n = sigma.rows();
    let mut a = sigma.clone();
    let mut v = Matrix::identity(n);
    let threshold = JACOBI_TOL * sigma.frobenius();

    let off_norm = |a: &Matrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&a) > threshold {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(TransformError::NoConvergence(JACOBI_MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        let mut vec = v.column(src);
        let pivot = vec.iter().copied().fold(0.0, |m: f64, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            vec.iter_mut().for_each(|x| *x = -*x);
        }
        for (k, x) in vec.into_iter().enumerate() {
            vectors[(k, col)] = x;
        }
    }
    Ok((values, vectors))
}

/// PCA square root of a covariance: eigenvectors scaled by the square root of
/// their eigenvalue, largest variance first.
pub fn pca_factor(sigma: &Matrix) -> Result<Matrix, TransformError> {
    let (values, vectors) = symmetric_eigen(sigma)?;
    let floor = -PSD_TOL * sigma.trace().abs().max(f64::MIN_POSITIVE);
    let n = sigma.rows();
    let mut loading = Matrix::zeros(n, n);
    for (j, &lambda) in values.iter().enumerate() {
        if lambda < floor {
            return Err(TransformError::NotPositiveSemidefinite(lambda));
        }
        let scale = lambda.max(0.0).sqrt();
        for i in 0..n {
            loading[(i, j)] = vectors[(i, j)] * scale;
        }
    }
    Ok(loading)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Factorization {
    #[default]
    Cholesky,
    Pca,
}

impl Factorization {
    pub fn name(self) -> &'static str {
        match self {
            Factorization::Cholesky => "cholesky",
            Factorization::Pca => "pca",
        }
    }
}

impl fmt::Display for Factorization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Factorization {
    type Err = TransformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cholesky" => Ok(Factorization::Cholesky),
            "pca" => Ok(Factorization::Pca),
            _ => Err(TransformError::UnknownFactorization(s.to_string())),
        }
    }
}

/// A multivariate normal law together with the loading matrix that maps
/// standard normal coordinates onto it.
#[derive(Debug, Clone)]
pub struct GaussianSpec {
    mu: Vec<f64>,
    sigma: Matrix,
    factorization: Factorization,
    loading: Matrix,
}

impl GaussianSpec {
    pub fn new(
        mu: Vec<f64>,
        sigma: Matrix,
        factorization: Factorization,
    ) -> Result<Self, TransformError> {
        if !sigma.is_square() || sigma.rows() != mu.len() {
            return Err(TransformError::Shape(format!(
                "mean has length {}, covariance is {}x{}",
                mu.len(),
                sigma.rows(),
                sigma.cols()
            )));
        }
        if !sigma.is_symmetric() {
            return Err(TransformError::NotSymmetric);
        }
        let pca = pca_factor(&sigma)?;
        let loading = match factorization {
            Factorization::Cholesky => cholesky_factor(&sigma)?,
            Factorization::Pca => pca,
        };
        Ok(Self { mu, sigma, factorization, loading })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    pub fn factorization(&self) -> Factorization {
        self.factorization
    }

    pub fn loading(&self) -> &Matrix {
        &self.loading
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Row `i` of the result is `mu + L * Phi^-1(u_i)`; exact zeros are clamped
/// to 2^-53 first.
pub fn gaussian_transform(points: &PointSet, spec: &GaussianSpec) -> Result<Matrix, TransformError> {
    let d = spec.dim();
    if points.d() != d {
        return Err(TransformError::Shape(format!(
            "points have dimension {}, distribution has {d}",
            points.d()
        )));
    }
    let mut out = Matrix::zeros(points.n(), d);
    let mut z = vec![0.0; d];
    for (i, row) in points.rows().enumerate() {
        for (zj, &u) in z.iter_mut().zip(row) {
            *zj = ppnd16(u.max(UNIT_FLOOR));
        }
        let dest = out.row_mut(i);
        for (k, value) in dest.iter_mut().enumerate() {
            *value = spec.mu[k] + dot(spec.loading.row(k), &z);
        }
    }
    Ok(out)
}

/// Row `i` of the result is `mu + sqrt(12) * q * (u_i - 1/2)`, so each row has
/// mean `mu` and covariance `q q^T`.
pub fn uniform_affine_transform(
    points: &PointSet,
    mu: &[f64],
    q: &Matrix,
) -> Result<Matrix, TransformError> {
    let d = mu.len();
    if points.d() != q.cols() || q.rows() != d {
        return Err(TransformError::Shape(format!(
            "points have dimension {}, q is {}x{}, mean has length {d}",
            points.d(),
            q.rows(),
            q.cols()
        )));
    }
    let scale = 12f64.sqrt();
    let mut out = Matrix::zeros(points.n(), d);
    let mut zeta = vec![0.0; points.d()];
    for (i, row) in points.rows().enumerate() {
        for (z, &u) in zeta.iter_mut().zip(row) {
            *z = u - 0.5;
        }
        for (k, value) in out.row_mut(i).iter_mut().enumerate() {
            *value = mu[k] + scale * dot(q.row(k), &zeta);
        }
    }
    Ok(out)
}

pub const T_RANGE: (f64, f64) = (0.5, 1.0);
pub const V_RANGE: (f64, f64) = (50.0, 100.0);
pub const E_RANGE: (f64, f64) = (2.0, 4.0);

/// One realization of the second-stage data: technology matrix `t` (m x d),
/// demand `v` and unit recourse cost `e`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageTuple {
    pub t: Matrix,
    pub v: Vec<f64>,
    pub e: Vec<f64>,
}

impl TwoStageTuple {
    pub fn m(&self) -> usize {
        self.v.len()
    }

    pub fn d(&self) -> usize {
        self.t.cols()
    }

    pub fn in_ranges(&self) -> bool {
        let within = |x: f64, (lo, hi): (f64, f64)| (lo..=hi).contains(&x);
        self.t.as_slice().iter().all(|&x| within(x, T_RANGE))
            && self.v.iter().all(|&x| within(x, V_RANGE))
            && self.e.iter().all(|&x| within(x, E_RANGE))
    }
}

/// Split a uniform vector of length `m*d + 2m` into `(T, v, e)`, mapping each
/// block affinely onto its range. `T` is filled row-major.
pub fn reshape_two_stage(point: &[f64], d: usize, m: usize) -> Result<TwoStageTuple, TransformError> {
    let expected = m * d + 2 * m;
    if point.len() != expected {
        return Err(TransformError::Shape(format!(
            "two-stage point needs {expected} coordinates (m = {m}, d = {d}), got {}",
            point.len()
        )));
    }
    let affine = |u: f64, (lo, hi): (f64, f64)| lo + (hi - lo) * u;
    let (t_block, rest) = point.split_at(m * d);
    let (v_block, e_block) = rest.split_at(m);
    Ok(TwoStageTuple {
        t: Matrix::from_row_major(m, d, t_block.iter().map(|&u| affine(u, T_RANGE)).collect()),
        v: v_block.iter().map(|&u| affine(u, V_RANGE)).collect(),
        e: e_block.iter().map(|&u| affine(u, E_RANGE)).collect(),
    })
}
