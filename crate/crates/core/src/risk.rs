//! Empirical distributions and the law-invariant functionals evaluated on
//! them: expectation, CVaR and the quantile-space Wasserstein distance.

use std::fmt;

use thiserror::Error;

use crate::transforms::{norm_inv_cdf, norm_pdf};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiskError {
    #[error("empirical distribution needs at least one atom")]
    Empty,
    #[error("quantile level must lie in (0, 1), got {0}")]
    QuantileDomain(f64),
    #[error("CVaR level must lie in [0, 1), got {0}")]
    BetaDomain(f64),
    #[error("Wasserstein order must be >= 1, got {0}")]
    Order(f64),
    #[error("invalid weights: {0}")]
    Weights(String),
    #[error("atoms must be finite")]
    NonFinite,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Finitely supported law with atoms sorted ascending.
///
/// Cumulative weights are cached; the last one is exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl EmpiricalDistribution {
    /// Equal-weight law on `values`, duplicates kept.
    pub fn from_values(values: &[f64]) -> Result<Self, RiskError> {
        if values.is_empty() {
            return Err(RiskError::Empty);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RiskError::NonFinite);
        }
        let mut atoms = values.to_vec();
        atoms.sort_by(f64::total_cmp);
        let n = atoms.len();
        let w = 1.0 / n as f64;
        let cumulative = (1..=n).map(|k| k as f64 / n as f64).collect();
        Ok(Self { atoms, weights: vec![w; n], cumulative })
    }

    /// Weighted law. Pairs are sorted by atom; weights must be nonnegative and
    /// sum to one within 1e-12.
    pub fn new(atoms: &[f64], weights: &[f64]) -> Result<Self, RiskError> {
        if atoms.is_empty() {
            return Err(RiskError::Empty);
        }
        if atoms.len() != weights.len() {
            return Err(RiskError::Weights(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(RiskError::NonFinite);
        }
        if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(RiskError::Weights("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(RiskError::Weights(format!("weights sum to {total}")));
        }
        let mut pairs: Vec<(f64, f64)> = atoms.iter().copied().zip(weights.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (atoms, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let mut acc = 0.0;
        let mut cumulative: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        *cumulative.last_mut().expect("nonempty") = 1.0;
        Ok(Self { atoms, weights, cumulative })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `F(atom_k)` for each sorted atom.
    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// Index of the atom returned by `quantile(t)`.
    fn quantile_index(&self, t: f64) -> usize {
        let k = self.cumulative.partition_point(|&c| c < t);
        k.min(self.atoms.len() - 1)
    }

    /// `H(t) = inf { z : F(z) >= t }`.
    pub fn quantile(&self, t: f64) -> Result<f64, RiskError> {
        if !(t > 0.0 && t < 1.0) {
            return Err(RiskError::QuantileDomain(t));
        }
        Ok(self.atoms[self.quantile_index(t)])
    }

    pub fn expectation(&self) -> f64 {
        self.atoms.iter().zip(&self.weights).map(|(a, w)| a * w).sum()
    }

    /// CVaR at level `beta`: `q + E[(Z - q)^+] / (1 - beta)` with `q = H(beta)`,
    /// the mean when `beta = 0`.
    pub fn cvar(&self, beta: f64) -> Result<f64, RiskError> {
        if !(0.0..1.0).contains(&beta) {
            return Err(RiskError::BetaDomain(beta));
        }
        if beta == 0.0 {
            return Ok(self.expectation());
        }
        let k = self.quantile_index(beta);
        let q = self.atoms[k];
        let excess: f64 = self.atoms[k + 1..]
            .iter()
            .zip(&self.weights[k + 1..])
            .map(|(a, w)| w * (a - q).max(0.0))
            .sum();
        Ok(q + excess / (1.0 - beta))
    }

    /// `(int_0^1 |H_self(t) - H_other(t)|^p dt)^(1/p)`, integrated exactly over
    /// the merged breakpoints of both quantile functions.
    pub fn wasserstein(&self, other: &EmpiricalDistribution, p: f64) -> Result<f64, RiskError> {
        if !p.is_finite() || p < 1.0 {
            return Err(RiskError::Order(p));
        }
        let (mut i, mut j) = (0, 0);
        let mut left = 0.0;
        let mut total = 0.0;
        while i < self.len() && j < other.len() {
            let right = self.cumulative[i].min(other.cumulative[j]);
            let gap = (self.atoms[i] - other.atoms[j]).abs();
            if right > left {
                total += (right - left) * gap.powf(p);
                left = right;
            }
            if self.cumulative[i] <= right {
                i += 1;
            }
            if other.cumulative[j] <= right {
                j += 1;
            }
        }
        Ok(total.powf(1.0 / p))
    }
}

/// Maximizing weights of the dual form `CVaR_beta(L) = max { p^T L }` over
/// `0 <= p_i <= 1 / ((1 - beta) N)`, `sum(p) = 1`, for equal-weight losses.
///
/// `sum(p_i * losses_i)` equals the empirical CVaR, and for losses that are
/// convex in a decision vector, `sum(p_i * grad L_i)` is a subgradient of the
/// CVaR. Ties at the value-at-risk are broken by index.
pub fn cvar_tail_weights(losses: &[f64], beta: f64) -> Result<Vec<f64>, RiskError> {
    if losses.is_empty() {
        return Err(RiskError::Empty);
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(RiskError::BetaDomain(beta));
    }
    let n = losses.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| losses[b].total_cmp(&losses[a]).then(a.cmp(&b)));
    let cap = 1.0 / ((1.0 - beta) * n as f64);
    let mut weights = vec![0.0; n];
    let mut remaining = 1.0;
    for i in order {
        if remaining <= 0.0 {
            break;
        }
        let w = cap.min(remaining);
        weights[i] = w;
        remaining -= w;
    }
    Ok(weights)
}

pub fn empirical_from_values(values: &[f64]) -> Result<EmpiricalDistribution, RiskError> {
    EmpiricalDistribution::from_values(values)
}

pub fn quantile(dist: &EmpiricalDistribution, t: f64) -> Result<f64, RiskError> {
    dist.quantile(t)
}

pub fn cvar(dist: &EmpiricalDistribution, beta: f64) -> Result<f64, RiskError> {
    dist.cvar(beta)
}

pub fn expectation(dist: &EmpiricalDistribution) -> f64 {
    dist.expectation()
}

pub fn wasserstein_p(
    a: &EmpiricalDistribution,
    b: &EmpiricalDistribution,
    p: f64,
) -> Result<f64, RiskError> {
    a.wasserstein(b, p)
}

/// `phi(Phi^-1(beta)) / (1 - beta)`: CVaR of a standard normal at level `beta`.
pub fn normal_cvar_factor(beta: f64) -> Result<f64, RiskError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(RiskError::BetaDomain(beta));
    }
    let z = norm_inv_cdf(beta).map_err(|_| RiskError::BetaDomain(beta))?;
    Ok(norm_pdf(z) / (1.0 - beta))
}

/// CVaR of `N(mu, sigma^2)` at level `beta`.
pub fn cvar_normal_closed_form(mu: f64, sigma: f64, beta: f64) -> Result<f64, RiskError> {
    Ok(mu + sigma * normal_cvar_factor(beta)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RiskKind {
    Expectation,
    CVaR,
}

/// A law-invariant functional; `beta` is ignored for the expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskSpec {
    kind: RiskKind,
    beta: f64,
}

impl RiskSpec {
    pub fn expectation() -> Self {
        Self { kind: RiskKind::Expectation, beta: 0.0 }
    }

    pub fn cvar(beta: f64) -> Result<Self, RiskError> {
        if !(0.0..1.0).contains(&beta) {
            return Err(RiskError::BetaDomain(beta));
        }
        Ok(Self { kind: RiskKind::CVaR, beta })
    }

    pub fn kind(&self) -> RiskKind {
        self.kind
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn evaluate(&self, dist: &EmpiricalDistribution) -> f64 {
        match self.kind {
            RiskKind::Expectation => dist.expectation(),
            RiskKind::CVaR => dist.cvar(self.beta).expect("beta validated at construction"),
        }
    }
}

impl fmt::Display for RiskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            RiskKind::Expectation => write!(f, "E"),
            RiskKind::CVaR => write!(f, "CVaR_{}", self.beta),
        }
    }
}
