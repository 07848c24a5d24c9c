//! Kelley's cutting-plane method for convex functions over a polytope.

use thiserror::Error;

use super::{solve_lp, LpError, LpProblem, LpStatus, Relation};

/// A convex function with a subgradient oracle.
pub trait ConvexOracle {
    /// Value and one subgradient at `x`.
    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>);
}

impl<F> ConvexOracle for F
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    fn evaluate(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KelleyOptions {
    /// Stop once `best value - lower bound <= tol`.
    pub tol: f64,
    /// Cap on master LP solves.
    pub max_iters: usize,
}

impl Default for KelleyOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iters: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KelleyResult {
    /// Best evaluated value; an upper bound on the minimum.
    pub value: f64,
    pub point: Vec<f64>,
    /// Last master LP value; a lower bound on the minimum.
    pub lower_bound: f64,
    /// Master LP values in iteration order.
    pub lower_bounds: Vec<f64>,
    pub iterations: usize,
}

impl KelleyResult {
    pub fn gap(&self) -> f64 {
        self.value - self.lower_bound
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KelleyError {
    #[error("LP status infeasible: the feasible region is empty")]
    EmptyPolytope,
    #[error("LP status unbounded: the feasible region must be bounded")]
    Unbounded,
    #[error("no convergence after {iterations} cuts (gap {gap:e})")]
    MaxIterations { iterations: usize, gap: f64, best: Box<KelleyResult> },
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Minimize `oracle` over the feasible region of `polytope` (its objective is
/// ignored).
///
/// Each master LP minimizes `eta` over the polytope subject to every cut
/// `eta >= f(x_k) + g_k^T (x - x_k)` collected so far. The master value is a
/// lower bound and the best evaluated point an upper bound; iteration stops
/// when they are within `tol`.
pub fn kelley_minimize<O: ConvexOracle + ?Sized>(
    oracle: &O,
    polytope: &LpProblem,
    options: KelleyOptions,
) -> Result<KelleyResult, KelleyError> {
    let n = polytope.num_vars();

    let mut feasibility = polytope.clone();
    feasibility.objective = vec![0.0; n];
    let start = solve_lp(&feasibility)?;
    match start.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Err(KelleyError::EmptyPolytope),
        LpStatus::Unbounded => return Err(KelleyError::Unbounded),
    }

    let mut master = LpProblem::new([vec![0.0; n], vec![1.0]].concat());
    for ((row, &rel), &rhs) in polytope.rows.iter().zip(&polytope.relations).zip(&polytope.rhs) {
        master.add_row([row.as_slice(), &[0.0]].concat(), rel, rhs);
    }
    for j in 0..n {
        master.set_bounds(j, polytope.lower[j], polytope.upper[j]);
    }
    master.set_free(n);

    let mut best_point = start.point;
    let (mut best_value, grad) = oracle.evaluate(&best_point);
    add_cut(&mut master, &best_point, best_value, &grad);

    let mut lower_bounds = Vec::new();
    loop {
        let sol = solve_lp(&master)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(KelleyError::EmptyPolytope),
            LpStatus::Unbounded => return Err(KelleyError::Unbounded),
        }
        let lower = sol.point[n];
        lower_bounds.push(lower);
        let x = &sol.point[..n];
        let (value, grad) = oracle.evaluate(x);
        if value < best_value {
            best_value = value;
            best_point = x.to_vec();
        }

        let result = || KelleyResult {
            value: best_value,
            point: best_point.clone(),
            lower_bound: lower,
            lower_bounds: lower_bounds.clone(),
            iterations: lower_bounds.len(),
        };
        let gap = best_value - lower;
        if gap <= options.tol {
            return Ok(result());
        }
        if lower_bounds.len() >= options.max_iters {
            return Err(KelleyError::MaxIterations {
                iterations: lower_bounds.len(),
                gap,
                best: Box::new(result()),
            });
        }
        add_cut(&mut master, x, value, &grad);
    }
}

/// `eta - g^T x >= f(x_k) - g^T x_k`.
fn add_cut(master: &mut LpProblem, at: &[f64], value: f64, grad: &[f64]) {
    let n = at.len();
    let mut row: Vec<f64> = grad.iter().map(|g| -g).collect();
    row.push(1.0);
    let linear = grad.iter().zip(at).map(|(g, x)| g * x).sum::<f64>();
    let mut rhs = value - linear;
    // Positively homogeneous functions give `f(x_k) = g^T x_k`; keep their
    // cuts through the origin instead of off by a rounding error.
    if rhs.abs() <= 8.0 * f64::EPSILON * (value.abs() + linear.abs()) {
        rhs = 0.0;
    }
    debug_assert_eq!(row.len(), n + 1);
    master.add_row(row, Relation::Ge, rhs);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simplex_polytope(n: usize) -> LpProblem {
        let mut p = LpProblem::new(vec![0.0; n]);
        p.add_row(vec![1.0; n], Relation::Eq, 1.0);
        p
    }

    #[test]
    fn linear_oracle_one_iteration() {
        let c = [0.4, -0.3, 0.1];
        let oracle = |x: &[f64]| (c.iter().zip(x).map(|(a, b)| a * b).sum(), c.to_vec());
        let res = kelley_minimize(&oracle, &simplex_polytope(3), KelleyOptions::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert!((res.value + 0.3).abs() < 1e-12);
    }

    #[test]
    fn euclidean_norm_on_simplex() {
        let oracle = |x: &[f64]| {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            (norm, x.iter().map(|v| v / norm).collect())
        };
        let res = kelley_minimize(&oracle, &simplex_polytope(2), KelleyOptions::default()).unwrap();
        assert!((res.value - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-7);
        assert!((res.point[0] - 0.5).abs() < 1e-3);
        assert!(res.gap() <= 1e-7);
        for w in res.lower_bounds.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
    }

    #[test]
    fn empty_and_unbounded() {
        let oracle = |x: &[f64]| (x[0], vec![1.0]);
        let mut empty = LpProblem::new(vec![0.0]);
        empty.add_row(vec![1.0], Relation::Le, -1.0);
        assert_eq!(
            kelley_minimize(&oracle, &empty, KelleyOptions::default()).unwrap_err(),
            KelleyError::EmptyPolytope
        );
        let mut open = LpProblem::new(vec![0.0]);
        open.set_free(0);
        assert_eq!(
            kelley_minimize(&oracle, &open, KelleyOptions::default()).unwrap_err(),
            KelleyError::Unbounded
        );
    }

    #[test]
    fn iteration_cap_reports_gap() {
        let oracle = |x: &[f64]| {
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            (norm, x.iter().map(|v| v / norm).collect())
        };
        let opts = KelleyOptions { tol: 1e-14, max_iters: 3 };
        match kelley_minimize(&oracle, &simplex_polytope(3), opts) {
            Err(KelleyError::MaxIterations { iterations, gap, best }) => {
                assert_eq!(iterations, 3);
                assert!(gap > 0.0);
                assert_eq!(best.lower_bounds.len(), 3);
            }
            other => panic!("expected iteration cap, got {other:?}"),
        }
    }
}
