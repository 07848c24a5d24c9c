//! Independent oracles shared by the integration tests and the acceptance
//! suite. None of them call the code paths they are used to check.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use riskqmc::linalg::Matrix;
use riskqmc::lp::{LpProblem, Relation};
use riskqmc::transforms::TwoStageTuple;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `min_t t + E[(V - t)^+] / (1 - beta)` over the atoms plus a uniform grid
/// of `grid` points between the extreme atoms. The objective is piecewise
/// linear with kinks at the atoms, so the grid minimum is the true minimum.
pub fn ru_grid_cvar(atoms: &[f64], weights: &[f64], beta: f64, grid: usize) -> f64 {
    let objective = |t: f64| {
        let tail: f64 = atoms.iter().zip(weights).map(|(a, w)| w * (a - t).max(0.0)).sum();
        t + tail / (1.0 - beta)
    };
    let lo = atoms.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = atoms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut best = atoms.iter().map(|&a| objective(a)).fold(f64::INFINITY, f64::min);
    for k in 0..=grid {
        let t = lo + (hi - lo) * k as f64 / grid as f64;
        best = best.min(objective(t));
    }
    best
}

fn phi(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Composite Simpson rule with `n` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// Standard normal CDF by quadrature of the density over the nearer tail,
/// which keeps full relative accuracy far from the center.
pub fn normal_cdf(z: f64) -> f64 {
    let lower_tail = |z: f64| simpson(phi, z - 12.0, z, 20_000);
    if z < 0.0 {
        lower_tail(z)
    } else {
        1.0 - lower_tail(-z)
    }
}

/// Standard normal quantile by bisection on [`normal_cdf`].
pub fn normal_quantile(u: f64) -> f64 {
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `int_{z_beta}^inf z phi(z) dz / (1 - beta)`, the CVaR of `N(0, 1)`.
pub fn normal_tail_cvar(beta: f64) -> f64 {
    let z = normal_quantile(beta);
    simpson(|t| t * phi(t), z, z + 40.0, 200_000) / (1.0 - beta)
}

/// Solve the linear system `a x = b` by Gaussian elimination; `None` when
/// (numerically) singular.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(p, c);
        b.swap(p, c);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            let (top, bottom) = a.split_at_mut(r);
            for (x, &y) in bottom[0][c..].iter_mut().zip(&top[c][c..]) {
                *x -= f * y;
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Every choice of `n` tight constraints among rows and bounds.
fn combinations(k: usize, n: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, k: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for i in start..k {
            cur.push(i);
            rec(i + 1, k, n, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, k, n, &mut Vec::new(), &mut out);
    out
}

/// Minimum of a bounded LP by enumerating all basic solutions: every set of
/// `n` linearly independent tight constraints (rows or finite bounds) is
/// solved and kept when feasible. `None` when no vertex is feasible.
pub fn vertex_enumeration(lp: &LpProblem) -> Option<(f64, Vec<f64>)> {
    let n = lp.num_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = lp.rows.iter().cloned().zip(lp.rhs.iter().copied()).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        if lp.lower[j].is_finite() {
            planes.push((e.clone(), lp.lower[j]));
        }
        if lp.upper[j].is_finite() {
            planes.push((e, lp.upper[j]));
        }
    }
    let feasible = |x: &[f64]| {
        let tol = 1e-9;
        let rows_ok = lp.rows.iter().zip(&lp.relations).zip(&lp.rhs).all(|((r, rel), b)| {
            let v: f64 = r.iter().zip(x).map(|(a, x)| a * x).sum();
            match rel {
                Relation::Le => v <= b + tol,
                Relation::Ge => v >= b - tol,
                Relation::Eq => (v - b).abs() <= tol,
            }
        });
        rows_ok && x.iter().enumerate().all(|(j, &v)| v >= lp.lower[j] - tol && v <= lp.upper[j] + tol)
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for set in combinations(planes.len(), n) {
        let a = set.iter().map(|&i| planes[i].0.clone()).collect();
        let b = set.iter().map(|&i| planes[i].1).collect();
        let Some(x) = solve_dense(a, b) else { continue };
        if !feasible(&x) {
            continue;
        }
        let value: f64 = lp.objective.iter().zip(&x).map(|(c, x)| c * x).sum();
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, x));
        }
    }
    best
}

/// Random LP with `n <= 6` variables in `[0, 10]` and `m <= 6` rows of mixed
/// relations.
pub fn random_bounded_lp(r: &mut impl Rng) -> LpProblem {
    let n = r.gen_range(1..=6);
    let m = r.gen_range(1..=6);
    let mut lp = LpProblem::new((0..n).map(|_| r.gen_range(-5.0..5.0)).collect());
    for j in 0..n {
        lp.set_bounds(j, 0.0, 10.0);
    }
    for _ in 0..m {
        let row: Vec<f64> = (0..n).map(|_| r.gen_range(-3.0..3.0)).collect();
        let rel = match r.gen_range(0..5) {
            0 => Relation::Eq,
            1 | 2 => Relation::Ge,
            _ => Relation::Le,
        };
        lp.add_row(row, rel, r.gen_range(-4.0..8.0));
    }
    lp
}

/// `min e^T y` subject to `y >= v - T x`, `y >= 0`, written as an LP.
pub fn recourse_lp(x: &[f64], tuple: &TwoStageTuple) -> LpProblem {
    let m = tuple.m();
    let mut lp = LpProblem::new(tuple.e.clone());
    for j in 0..m {
        let mut row = vec![0.0; m];
        row[j] = 1.0;
        let tx: f64 = tuple.t.row(j).iter().zip(x).map(|(a, b)| a * b).sum();
        lp.add_row(row, Relation::Ge, tuple.v[j] - tx);
    }
    lp
}

/// Random `(T, v, e)` tuple with `T` possibly outside the generator ranges so
/// that both the active and the slack branch of the recourse occur.
pub fn random_tuple(r: &mut impl Rng, d: usize, m: usize) -> TwoStageTuple {
    let t = Matrix::from_row_major(m, d, (0..m * d).map(|_| r.gen_range(0.0..2.0)).collect());
    TwoStageTuple {
        t,
        v: (0..m).map(|_| r.gen_range(0.0..3.0)).collect(),
        e: (0..m).map(|_| r.gen_range(0.0..4.0)).collect(),
    }
}

/// Random SPD matrix `Q Q^T + eps I`.
pub fn random_spd(r: &mut impl Rng, d: usize) -> Matrix {
    let q = Matrix::from_row_major(d, d, (0..d * d).map(|_| r.gen_range(-1.0..1.0)).collect());
    let mut s = q.gram();
    for i in 0..d {
        let v = s[(i, i)] + 0.1;
        s.row_mut(i)[i] = v;
    }
    s
}

/// Sample covariance with population normalization.
pub fn sample_covariance(samples: &Matrix) -> Matrix {
    let (n, d) = (samples.rows(), samples.cols());
    let mean: Vec<f64> = (0..d).map(|j| samples.column(j).iter().sum::<f64>() / n as f64).collect();
    let mut cov = vec![0.0; d * d];
    for i in 0..n {
        let row = samples.row(i);
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += (row[a] - mean[a]) * (row[b] - mean[b]);
            }
        }
    }
    Matrix::from_row_major(d, d, cov.into_iter().map(|c| c / n as f64).collect())
}

/// `true` when the `n = 2^m` values occupy every cell `[k/n, (k+1)/n)` once.
pub fn one_per_dyadic_cell(values: &[f64], m: u32) -> bool {
    let n = 1usize << m;
    if values.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &v in values {
        let cell = (v * n as f64).floor();
        if !(0.0..n as f64).contains(&cell) {
            return false;
        }
        let cell = cell as usize;
        if seen[cell] {
            return false;
        }
        seen[cell] = true;
    }
    true
}
