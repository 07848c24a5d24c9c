//! Problem instances (CVaR portfolio selection and the two-stage recourse
//! model), closed-form recourse, the exact Gaussian reference value and the
//! sample-based optimal values.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::linalg::{dot, Matrix};
use crate::lp::{kelley_minimize, KelleyError, KelleyOptions, LpProblem, Relation};
use crate::risk::{cvar_tail_weights, normal_cvar_factor, EmpiricalDistribution, RiskError};
use crate::rng::{self, mix64};
use crate::sequences::{SamplerKind, SequenceError};
use crate::transforms::{
    gaussian_transform, reshape_two_stage, uniform_affine_transform, Factorization, GaussianSpec,
    TransformError, TwoStageTuple,
};

/// Target return used when none is given.
pub const DEFAULT_R_TARGET: f64 = 1.05;
pub const MU_RANGE: (f64, f64) = (0.9, 1.2);
pub const Q_RANGE: (f64, f64) = (0.0, 0.1);
const MAX_RETRIES: usize = 100;

/// Cutting-plane settings for sample-based problems. The objective is
/// polyhedral, so the method terminates at the exact optimum well within the
/// cap.
pub const SAMPLE_KELLEY: KelleyOptions = KelleyOptions { tol: 1e-10, max_iters: 5_000 };

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("infeasible: no instance with max(mu) >= {r_target} after {retries} draws")]
    Infeasible { r_target: f64, retries: usize },
    #[error("beta must lie in (0, 1), got {0}")]
    Beta(f64),
    #[error("invalid instance: {0}")]
    Invalid(String),
    #[error("{0} is not available for this model")]
    Unsupported(&'static str),
    #[error("optimization failed: {0}")]
    Optimization(#[from] KelleyError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error("instance record: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PortfolioModel {
    /// `xi ~ N(mu, Q Q^T)`.
    Normal,
    /// `xi = mu + sqrt(12) Q zeta`, `zeta ~ U[-1/2, 1/2]^d`.
    UniformAffine,
}

impl PortfolioModel {
    pub fn name(self) -> &'static str {
        match self {
            PortfolioModel::Normal => "normal",
            PortfolioModel::UniformAffine => "uniform",
        }
    }
}

impl fmt::Display for PortfolioModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PortfolioModel {
    type Err = ProblemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(PortfolioModel::Normal),
            "uniform" | "uniform-affine" => Ok(PortfolioModel::UniformAffine),
            other => Err(ProblemError::Parse(format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioInstance {
    pub seed: u64,
    pub d: usize,
    pub mu: Vec<f64>,
    pub q: Matrix,
    pub sigma: Matrix,
    pub r_target: f64,
    pub beta: f64,
    pub model: PortfolioModel,
}

fn check_beta(beta: f64) -> Result<(), ProblemError> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(ProblemError::Beta(beta))
    }
}

fn uniform_in(stream: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * stream.gen::<f64>()
}

/// Draw `mu ~ U[0.9, 1.2]^d` and `Q ~ U[0, 0.1]^(d x d)`, set `Sigma = Q Q^T`,
/// redrawing until `max(mu) >= r_target`.
pub fn gen_portfolio_instance(
    seed: u64,
    d: usize,
    beta: f64,
    r_target: f64,
    model: PortfolioModel,
) -> Result<PortfolioInstance, ProblemError> {
    check_beta(beta)?;
    if d == 0 {
        return Err(ProblemError::Invalid("d must be at least 1".into()));
    }
    let mut stream = rng::stream(seed);
    for _ in 0..MAX_RETRIES {
        let mu: Vec<f64> = (0..d).map(|_| uniform_in(&mut stream, MU_RANGE)).collect();
        let q_data = (0..d * d).map(|_| uniform_in(&mut stream, Q_RANGE)).collect();
        if mu.iter().copied().fold(f64::NEG_INFINITY, f64::max) < r_target {
            continue;
        }
        let q = Matrix::from_row_major(d, d, q_data);
        let sigma = q.gram();
        return Ok(PortfolioInstance { seed, d, mu, q, sigma, r_target, beta, model });
    }
    Err(ProblemError::Infeasible { r_target, retries: MAX_RETRIES })
}

impl PortfolioInstance {
    /// Feasible set `{x >= 0, sum(x) = 1, mu^T x >= R}` as LP rows.
    pub fn feasible_region(&self) -> LpProblem {
        let mut lp = LpProblem::new(vec![0.0; self.d]);
        lp.add_row(vec![1.0; self.d], Relation::Eq, 1.0);
        lp.add_row(self.mu.clone(), Relation::Ge, self.r_target);
        lp
    }

    pub fn is_feasible(&self, x: &[f64]) -> bool {
        self.feasible_region().max_violation(x) <= 1e-9
    }

    /// Scenario matrix (one return vector per row) for the given points.
    pub fn scenarios(
        &self,
        sampler: SamplerKind,
        factorization: Factorization,
        n: usize,
        seed: u64,
    ) -> Result<Matrix, ProblemError> {
        let points = sampler.generate(n, self.d, seed)?;
        let samples = match self.model {
            PortfolioModel::Normal => {
                let spec = GaussianSpec::new(self.mu.clone(), self.sigma.clone(), factorization)?;
                gaussian_transform(&points, &spec)?
            }
            PortfolioModel::UniformAffine => uniform_affine_transform(&points, &self.mu, &self.q)?,
        };
        Ok(samples)
    }

    /// Exact `CVaR_beta(-xi^T x)` under the normal model.
    pub fn normal_cvar(&self, x: &[f64]) -> Result<f64, ProblemError> {
        let var = dot(x, &self.sigma.matvec(x)).max(0.0);
        Ok(-dot(&self.mu, x) + normal_cvar_factor(self.beta)? * var.sqrt())
    }

    pub fn to_record(&self) -> String {
        let mut rec = Record::new("portfolio");
        rec.put("seed", self.seed);
        rec.put("model", self.model);
        rec.put("d", self.d);
        rec.put("beta", fmt_f64(self.beta));
        rec.put("r_target", fmt_f64(self.r_target));
        rec.put("mu", fmt_vec(&self.mu));
        rec.put("q", fmt_vec(self.q.as_slice()));
        rec.put("sigma", fmt_vec(self.sigma.as_slice()));
        rec.finish()
    }

    pub fn from_record(text: &str) -> Result<Self, ProblemError> {
        let rec = Record::parse(text, "portfolio")?;
        let d: usize = rec.get("d")?;
        let mu = rec.get_vec("mu", d)?;
        let q = Matrix::from_row_major(d, d, rec.get_vec("q", d * d)?);
        let sigma = Matrix::from_row_major(d, d, rec.get_vec("sigma", d * d)?);
        let inst = PortfolioInstance {
            seed: rec.get("seed")?,
            d,
            mu,
            q,
            sigma,
            r_target: rec.get("r_target")?,
            beta: rec.get("beta")?,
            model: rec.get("model")?,
        };
        check_beta(inst.beta)?;
        Ok(inst)
    }

    pub fn fingerprint(&self) -> u64 {
        fingerprint(&self.to_record())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageInstance {
    pub seed: u64,
    pub d: usize,
    pub m: usize,
    pub c: Vec<f64>,
    pub beta: f64,
}

/// Draw `c ~ U[0, 1]^d`.
pub fn gen_two_stage_instance(
    seed: u64,
    d: usize,
    m: usize,
    beta: f64,
) -> Result<TwoStageInstance, ProblemError> {
    check_beta(beta)?;
    if d == 0 || m == 0 {
        return Err(ProblemError::Invalid("d and m must be at least 1".into()));
    }
    let mut stream = rng::stream(seed);
    let c = (0..d).map(|_| stream.gen::<f64>()).collect();
    Ok(TwoStageInstance { seed, d, m, c, beta })
}

impl TwoStageInstance {
    /// Dimension of the uniform vector behind one `(T, v, e)` realization.
    pub fn scenario_dim(&self) -> usize {
        self.m * self.d + 2 * self.m
    }

    pub fn feasible_region(&self) -> LpProblem {
        let mut lp = LpProblem::new(vec![0.0; self.d]);
        for j in 0..self.d {
            lp.set_bounds(j, 0.0, 1.0);
        }
        lp
    }

    pub fn scenarios(
        &self,
        sampler: SamplerKind,
        n: usize,
        seed: u64,
    ) -> Result<Vec<TwoStageTuple>, ProblemError> {
        let points = sampler.generate(n, self.scenario_dim(), seed)?;
        points
            .rows()
            .map(|row| reshape_two_stage(row, self.d, self.m).map_err(ProblemError::from))
            .collect()
    }

    pub fn to_record(&self) -> String {
        let mut rec = Record::new("two-stage");
        rec.put("seed", self.seed);
        rec.put("d", self.d);
        rec.put("m", self.m);
        rec.put("beta", fmt_f64(self.beta));
        rec.put("c", fmt_vec(&self.c));
        rec.finish()
    }

    pub fn from_record(text: &str) -> Result<Self, ProblemError> {
        let rec = Record::parse(text, "two-stage")?;
        let d: usize = rec.get("d")?;
        let inst = TwoStageInstance {
            seed: rec.get("seed")?,
            d,
            m: rec.get("m")?,
            c: rec.get_vec("c", d)?,
            beta: rec.get("beta")?,
        };
        check_beta(inst.beta)?;
        Ok(inst)
    }

    pub fn fingerprint(&self) -> u64 {
        fingerprint(&self.to_record())
    }
}

/// `min { y^T e : y >= v - T x, y >= 0 } = sum_j e_j * max(v_j - (T x)_j, 0)`.
pub fn recourse_value(x: &[f64], tuple: &TwoStageTuple) -> f64 {
    (0..tuple.m())
        .map(|j| tuple.e[j] * (tuple.v[j] - dot(tuple.t.row(j), x)).max(0.0))
        .sum()
}

/// One subgradient of [`recourse_value`] in `x`.
pub fn recourse_subgradient(x: &[f64], tuple: &TwoStageTuple) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    for j in 0..tuple.m() {
        let row = tuple.t.row(j);
        if tuple.v[j] - dot(row, x) > 0.0 {
            for (gk, &t) in g.iter_mut().zip(row) {
                *gk -= tuple.e[j] * t;
            }
        }
    }
    g
}

/// Exact optimum of the normal-model portfolio problem,
/// `min -mu^T x + kappa(beta) sqrt(x^T Sigma x)` over the feasible set, by
/// Kelley's method with gap `tol`.
pub fn exact_portfolio_normal(instance: &PortfolioInstance, tol: f64) -> Result<OptimalValue, ProblemError> {
    if instance.model != PortfolioModel::Normal {
        return Err(ProblemError::Unsupported("the exact reference"));
    }
    let kappa = normal_cvar_factor(instance.beta)?;
    let oracle = |x: &[f64]| {
        let sx = instance.sigma.matvec(x);
        let var = dot(x, &sx).max(0.0);
        let sd = var.sqrt();
        let value = -dot(&instance.mu, x) + kappa * sd;
        let grad = if sd > 0.0 {
            instance.mu.iter().zip(&sx).map(|(m, s)| -m + kappa * s / sd).collect()
        } else {
            instance.mu.iter().map(|m| -m).collect()
        };
        (value, grad)
    };
    let options = KelleyOptions { tol, ..KelleyOptions::default() };
    let res = kelley_minimize(&oracle, &instance.feasible_region(), options)?;
    Ok(OptimalValue { value: res.value, point: res.point, cuts: res.iterations })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalValue {
    pub value: f64,
    pub point: Vec<f64>,
    /// Master problems solved by the cutting-plane method.
    pub cuts: usize,
}

/// `min_x CVaR_beta` of the empirical portfolio loss `-xi_i^T x`.
///
/// Solved by Kelley's method on the exact empirical CVaR, whose subgradient
/// comes from the dual tail weights. This is the same optimization as the
/// LP from [`crate::lp::build_portfolio_lp`] with `t` and `u` eliminated.
pub fn solve_portfolio_saa(
    samples: &Matrix,
    instance: &PortfolioInstance,
) -> Result<OptimalValue, ProblemError> {
    let beta = instance.beta;
    let n = samples.rows();
    let oracle = |x: &[f64]| {
        let losses: Vec<f64> = (0..n).map(|i| -dot(samples.row(i), x)).collect();
        let weights = cvar_tail_weights(&losses, beta).expect("validated beta and nonempty");
        let value = EmpiricalDistribution::from_values(&losses)
            .and_then(|dist| dist.cvar(beta))
            .unwrap_or(f64::NAN);
        let mut grad = vec![0.0; x.len()];
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                for (g, &xi) in grad.iter_mut().zip(samples.row(i)) {
                    *g -= w * xi;
                }
            }
        }
        (value, grad)
    };
    let res = kelley_minimize(&oracle, &instance.feasible_region(), SAMPLE_KELLEY)?;
    Ok(OptimalValue { value: res.value, point: res.point, cuts: res.iterations })
}

/// `min_x c^T x + CVaR_beta(Q(x, xi_i))` over `[0, 1]^d`, the LP from
/// [`crate::lp::build_two_stage_lp`] with `t`, `u` and `y` eliminated.
pub fn solve_two_stage_saa(
    tuples: &[TwoStageTuple],
    instance: &TwoStageInstance,
) -> Result<OptimalValue, ProblemError> {
    if tuples.is_empty() {
        return Err(ProblemError::Risk(RiskError::Empty));
    }
    let beta = instance.beta;
    let oracle = |x: &[f64]| {
        let losses: Vec<f64> = tuples.iter().map(|s| recourse_value(x, s)).collect();
        let weights = cvar_tail_weights(&losses, beta).expect("validated beta and nonempty");
        let tail = EmpiricalDistribution::from_values(&losses)
            .and_then(|dist| dist.cvar(beta))
            .unwrap_or(f64::NAN);
        let mut grad = instance.c.clone();
        for (s, &w) in tuples.iter().zip(&weights) {
            if w > 0.0 {
                for (g, r) in grad.iter_mut().zip(recourse_subgradient(x, s)) {
                    *g += w * r;
                }
            }
        }
        (dot(&instance.c, x) + tail, grad)
    };
    let res = kelley_minimize(&oracle, &instance.feasible_region(), SAMPLE_KELLEY)?;
    Ok(OptimalValue { value: res.value, point: res.point, cuts: res.iterations })
}

/// Either problem family.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    Portfolio(PortfolioInstance),
    TwoStage(TwoStageInstance),
}

impl Instance {
    pub fn beta(&self) -> f64 {
        match self {
            Instance::Portfolio(p) => p.beta,
            Instance::TwoStage(t) => t.beta,
        }
    }

    pub fn fingerprint(&self) -> u64 {
        match self {
            Instance::Portfolio(p) => p.fingerprint(),
            Instance::TwoStage(t) => t.fingerprint(),
        }
    }

    pub fn to_record(&self) -> String {
        match self {
            Instance::Portfolio(p) => p.to_record(),
            Instance::TwoStage(t) => t.to_record(),
        }
    }
}

/// Sample-based optimal value with `n` points from `sampler`, seeded by
/// `rep_seed`. The factorization only affects the normal portfolio model.
pub fn sample_based_optimal_value(
    instance: &Instance,
    sampler: SamplerKind,
    factorization: Factorization,
    n: usize,
    rep_seed: u64,
) -> Result<OptimalValue, ProblemError> {
    match instance {
        Instance::Portfolio(p) => {
            let samples = p.scenarios(sampler, factorization, n, rep_seed)?;
            solve_portfolio_saa(&samples, p)
        }
        Instance::TwoStage(t) => {
            let tuples = t.scenarios(sampler, n, rep_seed)?;
            solve_two_stage_saa(&tuples, t)
        }
    }
}

fn fingerprint(text: &str) -> u64 {
    text.bytes().fold(0xCBF2_9CE4_8422_2325, |h, b| mix64(h ^ u64::from(b)))
}

fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(",")
}

/// Flat `key = value` record with a `kind` line first.
struct Record {
    lines: Vec<String>,
}

impl Record {
    fn new(kind: &str) -> Self {
        Self { lines: vec![format!("kind = {kind}")] }
    }

    fn put(&mut self, key: &str, value: impl fmt::Display) {
        self.lines.push(format!("{key} = {value}"));
    }

    fn finish(self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }

    fn parse(text: &str, kind: &str) -> Result<ParsedRecord, ProblemError> {
        let mut map = BTreeMap::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| ProblemError::Parse(format!("expected `key = value`, got `{line}`")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        match map.get("kind") {
            Some(k) if k == kind => Ok(ParsedRecord { map }),
            other => Err(ProblemError::Parse(format!("expected kind `{kind}`, got {other:?}"))),
        }
    }
}

struct ParsedRecord {
    map: BTreeMap<String, String>,
}

impl ParsedRecord {
    fn raw(&self, key: &str) -> Result<&str, ProblemError> {
        self.map
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| ProblemError::Parse(format!("missing key `{key}`")))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T, ProblemError> {
        let raw = self.raw(key)?;
        raw.parse().map_err(|_| ProblemError::Parse(format!("bad value for `{key}`: `{raw}`")))
    }

    fn get_vec(&self, key: &str, len: usize) -> Result<Vec<f64>, ProblemError> {
        let raw = self.raw(key)?;
        let v: Vec<f64> = raw
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| ProblemError::Parse(format!("bad list for `{key}`")))?;
        if v.len() != len {
            return Err(ProblemError::Parse(format!("`{key}` has {} entries, expected {len}", v.len())));
        }
        Ok(v)
    }
}
