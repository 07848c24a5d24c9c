//! Rockafellar-Uryasev LP reformulations of the sample-based problems.

use super::{LpProblem, Relation};
use crate::linalg::Matrix;
use crate::transforms::TwoStageTuple;

/// Column layout of [`build_portfolio_lp`]: `x` (d), `t`, `u` (N).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PortfolioLpLayout {
    pub d: usize,
    pub n: usize,
}

impl PortfolioLpLayout {
    pub fn x(&self) -> std::ops::Range<usize> {
        0..self.d
    }

    pub fn t(&self) -> usize {
        self.d
    }

    pub fn u(&self, i: usize) -> usize {
        self.d + 1 + i
    }

    pub fn num_vars(&self) -> usize {
        self.d + 1 + self.n
    }
}

/// `min t + sum(u_i) / ((1 - beta) N)` subject to `u_i >= -xi_i^T x - t`,
/// `u >= 0`, `sum(x) = 1`, `mu^T x >= r_target`, `x >= 0`, `t` free.
///
/// `samples` holds one realization of the return vector per row.
pub fn build_portfolio_lp(
    samples: &Matrix,
    mu: &[f64],
    r_target: f64,
    beta: f64,
) -> (LpProblem, PortfolioLpLayout) {
    let (n, d) = (samples.rows(), samples.cols());
    assert_eq!(mu.len(), d, "mean vector does not match the sample dimension");
    assert!(beta > 0.0 && beta < 1.0, "beta must lie in (0, 1)");
    let layout = PortfolioLpLayout { d, n };
    let weight = 1.0 / ((1.0 - beta) * n as f64);

    let mut objective = vec![0.0; layout.num_vars()];
    objective[layout.t()] = 1.0;
    for i in 0..n {
        objective[layout.u(i)] = weight;
    }
    let mut lp = LpProblem::new(objective);
    lp.set_free(layout.t());

    for i in 0..n {
        let mut row = vec![0.0; layout.num_vars()];
        row[..d].copy_from_slice(samples.row(i));
        row[layout.t()] = 1.0;
        row[layout.u(i)] = 1.0;
        lp.add_row(row, Relation::Ge, 0.0);
    }
    let mut budget = vec![0.0; layout.num_vars()];
    budget[..d].iter_mut().for_each(|v| *v = 1.0);
    lp.add_row(budget, Relation::Eq, 1.0);
    let mut target = vec![0.0; layout.num_vars()];
    target[..d].copy_from_slice(mu);
    lp.add_row(target, Relation::Ge, r_target);
    (lp, layout)
}

/// Column layout of [`build_two_stage_lp`]: `x` (d), `t`, `u` (N), then
/// `y_i` (m each).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TwoStageLpLayout {
    pub d: usize,
    pub m: usize,
    pub n: usize,
}

impl TwoStageLpLayout {
    pub fn x(&self) -> std::ops::Range<usize> {
        0..self.d
    }

    pub fn t(&self) -> usize {
        self.d
    }

    pub fn u(&self, i: usize) -> usize {
        self.d + 1 + i
    }

    pub fn y(&self, i: usize, j: usize) -> usize {
        self.d + 1 + self.n + i * self.m + j
    }

    pub fn num_vars(&self) -> usize {
        self.d + 1 + self.n * (1 + self.m)
    }
}

/// `min c^T x + t + sum(u_i) / ((1 - beta) N)` subject to
/// `y_i >= v_i - T_i x`, `u_i >= e_i^T y_i - t`, `y, u >= 0`, `x in [0, 1]^d`.
pub fn build_two_stage_lp(
    tuples: &[TwoStageTuple],
    c: &[f64],
    beta: f64,
) -> (LpProblem, TwoStageLpLayout) {
    assert!(!tuples.is_empty(), "need at least one scenario");
    assert!(beta > 0.0 && beta < 1.0, "beta must lie in (0, 1)");
    let d = c.len();
    let m = tuples[0].m();
    assert!(
        tuples.iter().all(|s| s.d() == d && s.m() == m),
        "scenario shapes do not match the first-stage cost"
    );
    let n = tuples.len();
    let layout = TwoStageLpLayout { d, m, n };
    let weight = 1.0 / ((1.0 - beta) * n as f64);

    let mut objective = vec![0.0; layout.num_vars()];
    objective[..d].copy_from_slice(c);
    objective[layout.t()] = 1.0;
    for i in 0..n {
        objective[layout.u(i)] = weight;
    }
    let mut lp = LpProblem::new(objective);
    lp.set_free(layout.t());
    for j in layout.x() {
        lp.set_bounds(j, 0.0, 1.0);
    }

    for (i, s) in tuples.iter().enumerate() {
        for j in 0..m {
            let mut row = vec![0.0; layout.num_vars()];
            row[..d].copy_from_slice(s.t.row(j));
            row[layout.y(i, j)] = 1.0;
            lp.add_row(row, Relation::Ge, s.v[j]);
        }
        let mut row = vec![0.0; layout.num_vars()];
        row[layout.u(i)] = 1.0;
        row[layout.t()] = 1.0;
        for j in 0..m {
            row[layout.y(i, j)] = -s.e[j];
        }
        lp.add_row(row, Relation::Ge, 0.0);
    }
    (lp, layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::{solve_lp, LpStatus};

    #[test]
    fn one_asset_single_sample() {
        let samples = Matrix::from_rows(&[vec![1.3]]);
        let (lp, layout) = build_portfolio_lp(&samples, &[1.1], 1.0, 0.5);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(layout.num_vars(), 3);
        assert!((sol.value + 1.3).abs() < 1e-12);
    }

    #[test]
    fn one_asset_two_samples() {
        // CVaR_0.5 of the losses {-1, -3} is the worse half: -1.
        let samples = Matrix::from_rows(&[vec![1.0], vec![3.0]]);
        let (lp, _) = build_portfolio_lp(&samples, &[2.0], 1.0, 0.5);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn unreachable_target_is_infeasible() {
        let samples = Matrix::from_rows(&[vec![1.0, 1.1]]);
        let (lp, _) = build_portfolio_lp(&samples, &[1.0, 1.1], 1.25, 0.9);
        assert_eq!(solve_lp(&lp).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn two_stage_layout() {
        let tuple = TwoStageTuple {
            t: Matrix::from_rows(&[vec![0.5, 1.0], vec![0.75, 0.5]]),
            v: vec![60.0, 70.0],
            e: vec![2.0, 3.0],
        };
        let (lp, layout) = build_two_stage_lp(&[tuple.clone(), tuple], &[0.1, 0.2], 0.5);
        assert_eq!(layout.num_vars(), 2 + 1 + 2 * 3);
        assert_eq!(lp.num_rows(), 2 * 3);
        assert_eq!(layout.y(1, 1), 8);
    }
}
