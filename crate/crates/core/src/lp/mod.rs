//! Linear programming: problem representation, a dense two-phase revised
//! simplex solver, LP builders for the CVaR reformulations, and Kelley's
//! cutting-plane method.

mod builders;
mod kelley;
mod simplex;

use thiserror::Error;

pub use builders::{build_portfolio_lp, build_two_stage_lp, PortfolioLpLayout, TwoStageLpLayout};
pub use kelley::{kelley_minimize, ConvexOracle, KelleyError, KelleyOptions, KelleyResult};
pub use simplex::{solve_lp, MAX_ITERATIONS};

/// Feasibility tolerance for reported optimal points.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed LP: {0}")]
    Shape(String),
    #[error("simplex iteration cap of {0} exceeded")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// `minimize c^T x` subject to row constraints and per-variable bounds.
///
/// Variables default to `[0, +inf)`. Lower bounds may be `-inf` and upper
/// bounds `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub relations: Vec<Relation>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LpProblem {
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            rows: Vec::new(),
            relations: Vec::new(),
            rhs: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_row(&mut self, coefficients: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        self.rows.push(coefficients);
        self.relations.push(relation);
        self.rhs.push(rhs);
        self
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> &mut Self {
        self.lower[var] = lower;
        self.upper[var] = upper;
        self
    }

    pub fn set_free(&mut self, var: usize) -> &mut Self {
        self.set_bounds(var, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        let m = self.rows.len();
        if self.relations.len() != m || self.rhs.len() != m {
            return Err(LpError::Shape(format!(
                "{m} rows, {} relations, {} right-hand sides",
                self.relations.len(),
                self.rhs.len()
            )));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Shape("bound vectors do not match the objective".into()));
        }
        if let Some(i) = self.rows.iter().position(|r| r.len() != n) {
            return Err(LpError::Shape(format!("row {i} has {} coefficients, expected {n}", self.rows[i].len())));
        }
        let finite = |v: &f64| v.is_finite();
        if !self.objective.iter().all(finite)
            || !self.rhs.iter().all(finite)
            || !self.rows.iter().flatten().all(finite)
        {
            return Err(LpError::Shape("non-finite coefficient".into()));
        }
        if self.lower.iter().any(|&l| l.is_nan() || l == f64::INFINITY)
            || self.upper.iter().any(|&u| u.is_nan() || u == f64::NEG_INFINITY)
        {
            return Err(LpError::Shape("invalid variable bound".into()));
        }
        Ok(())
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for ((row, rel), &b) in self.rows.iter().zip(&self.relations).zip(&self.rhs) {
            let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match rel {
                Relation::Le => lhs - b,
                Relation::Ge => b - lhs,
                Relation::Eq => (lhs - b).abs(),
            };
            worst = worst.max(v);
        }
        for ((&v, &lo), &hi) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(lo - v).max(v - hi);
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl std::fmt::Display for LpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective at `point`; `NaN` unless optimal.
    pub value: f64,
    pub point: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}
