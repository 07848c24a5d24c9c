//! Library results against independent oracles.

mod common;

use common::*;
use rand::Rng;

use riskqmc::linalg::Matrix;
use riskqmc::lp::{build_portfolio_lp, build_two_stage_lp, kelley_minimize, solve_lp, KelleyOptions, LpStatus, Relation, LpProblem};
use riskqmc::problems::*;
use riskqmc::risk::{cvar_normal_closed_form, EmpiricalDistribution};
use riskqmc::sequences::SamplerKind;
use riskqmc::transforms::{norm_inv_cdf, Factorization};

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut r = rng(101);
    let (mut optimal, mut infeasible) = (0, 0);
    for case in 0..100 {
        let lp = random_bounded_lp(&mut r);
        let sol = solve_lp(&lp).unwrap();
        match vertex_enumeration(&lp) {
            Some((value, _)) => {
                assert_eq!(sol.status, LpStatus::Optimal, "case {case}");
                assert!((sol.value - value).abs() <= 1e-8, "case {case}: {} vs {value}", sol.value);
                assert!(lp.max_violation(&sol.point) <= 1e-8);
                assert!((lp.objective_value(&sol.point) - sol.value).abs() <= 1e-12);
                optimal += 1;
            }
            None => {
                assert_eq!(sol.status, LpStatus::Infeasible, "case {case}");
                infeasible += 1;
            }
        }
    }
    assert!(optimal >= 30 && infeasible >= 5, "{optimal} optimal, {infeasible} infeasible");
}

#[test]
fn recourse_matches_inner_lp() {
    let mut r = rng(202);
    let mut active = 0;
    for _ in 0..500 {
        let (d, m) = (r.gen_range(1..=4), r.gen_range(1..=4));
        let tuple = random_tuple(&mut r, d, m);
        let x: Vec<f64> = (0..d).map(|_| r.gen::<f64>()).collect();
        let lp = solve_lp(&recourse_lp(&x, &tuple)).unwrap();
        let closed = recourse_value(&x, &tuple);
        assert!((lp.value - closed).abs() <= 1e-9, "{} vs {closed}", lp.value);
        active += usize::from(closed > 0.0);
    }
    assert!(active > 100);
}

#[test]
fn recourse_examples_against_inner_lp() {
    let t = TwoStageTupleBuilder::identity(2);
    let a = t.with(vec![1.0, 2.0], vec![1.0, 1.0]);
    assert!((solve_lp(&recourse_lp(&[1.0, 1.0], &a)).unwrap().value - 1.0).abs() < 1e-12);
    let b = t.with(vec![3.0, 3.0], vec![2.0, 2.0]);
    assert!((solve_lp(&recourse_lp(&[0.0, 0.0], &b)).unwrap().value - 12.0).abs() < 1e-12);
}

struct TwoStageTupleBuilder(usize);

impl TwoStageTupleBuilder {
    fn identity(m: usize) -> Self {
        Self(m)
    }

    fn with(&self, v: Vec<f64>, e: Vec<f64>) -> riskqmc::transforms::TwoStageTuple {
        riskqmc::transforms::TwoStageTuple { t: Matrix::identity(self.0), v, e }
    }
}

#[test]
fn cvar_matches_rockafellar_uryasev_grid() {
    let mut r = rng(303);
    for case in 0..200 {
        let n = r.gen_range(1..=20);
        let atoms: Vec<f64> = (0..n).map(|_| (r.gen_range(-50..50) as f64) / 8.0).collect();
        let raw: Vec<f64> = (0..n).map(|_| r.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = if case % 2 == 0 { vec![1.0 / n as f64; n] } else { raw.iter().map(|w| w / total).collect() };
        let beta = match case % 4 {
            0 => 0.5,
            1 => 0.75,
            _ => r.gen_range(0.01..0.99),
        };
        let dist = EmpiricalDistribution::new(&atoms, &weights).unwrap();
        let got = dist.cvar(beta).unwrap();
        let oracle = ru_grid_cvar(&atoms, &weights, beta, 20_000);
        assert!((got - oracle).abs() <= 1e-9, "case {case}: {got} vs {oracle}");
    }
}

#[test]
fn cvar_small_examples_against_grid() {
    let atoms = [1.0, 2.0, 3.0, 4.0];
    let w = [0.25; 4];
    assert!((ru_grid_cvar(&atoms, &w, 0.75, 1000) - 4.0).abs() < 1e-12);
    assert!((ru_grid_cvar(&atoms, &w, 0.5, 1000) - 3.5).abs() < 1e-12);
    let dist = EmpiricalDistribution::from_values(&atoms).unwrap();
    assert_eq!(dist.cvar(0.75).unwrap(), 4.0);
    assert_eq!(dist.cvar(0.5).unwrap(), 3.5);
}

#[test]
fn gaussian_cvar_against_tail_integral() {
    for (beta, expect) in [(0.95, 2.06271), (0.5, 0.79788)] {
        let oracle = normal_tail_cvar(beta);
        assert!((oracle - expect).abs() < 1e-5, "oracle {oracle}");
        let closed = cvar_normal_closed_form(0.0, 1.0, beta).unwrap();
        assert!((closed - oracle).abs() < 1e-9, "{closed} vs {oracle}");
    }
    assert!((cvar_normal_closed_form(1.5, 2.0, 0.9).unwrap() - (1.5 + 2.0 * normal_tail_cvar(0.9))).abs() < 1e-8);
}

#[test]
fn inverse_cdf_against_bisection() {
    for u in [1e-8, 0.001, 0.02425, 0.3, 0.5, 0.8, 0.975, 0.999_999] {
        let z = norm_inv_cdf(u).unwrap();
        let oracle = normal_quantile(u);
        assert!((z - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "{u}: {z} vs {oracle}");
    }
    assert!((norm_inv_cdf(0.975).unwrap() - 1.95996398).abs() < 1e-8);
}

fn portfolio(seed: u64, d: usize, beta: f64, r_target: f64, model: PortfolioModel) -> PortfolioInstance {
    gen_portfolio_instance(seed, d, beta, r_target, model).unwrap()
}

#[test]
fn portfolio_saa_matches_full_lp() {
    for (seed, d, n, model) in [
        (1, 3, 16, PortfolioModel::Normal),
        (2, 5, 32, PortfolioModel::Normal),
        (3, 4, 64, PortfolioModel::UniformAffine),
        (4, 2, 8, PortfolioModel::UniformAffine),
        (5, 6, 50, PortfolioModel::Normal),
    ] {
        let inst = portfolio(seed, d, 0.9, 1.0, model);
        let samples = inst.scenarios(SamplerKind::Mc, Factorization::Cholesky, n, seed).unwrap();
        let (lp, layout) = build_portfolio_lp(&samples, &inst.mu, inst.r_target, inst.beta);
        let full = solve_lp(&lp).unwrap();
        assert!(full.is_optimal());
        let cut = solve_portfolio_saa(&samples, &inst).unwrap();
        assert!((cut.value - full.value).abs() <= 1e-8, "seed {seed}: {} vs {}", cut.value, full.value);
        // The LP's x attains the same empirical CVaR.
        let x = &full.point[layout.x()];
        let losses: Vec<f64> = (0..n).map(|i| -samples.row(i).iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).collect();
        let at_x = EmpiricalDistribution::from_values(&losses).unwrap().cvar(inst.beta).unwrap();
        assert!((at_x - full.value).abs() <= 1e-8);
    }
}

#[test]
fn two_stage_saa_matches_full_lp() {
    for (seed, d, m, n) in [(1, 2, 2, 8), (2, 3, 2, 16), (3, 1, 1, 12), (4, 3, 3, 10)] {
        let inst = gen_two_stage_instance(seed, d, m, 0.8).unwrap();
        let tuples = inst.scenarios(SamplerKind::Mc, n, seed).unwrap();
        let (lp, _) = build_two_stage_lp(&tuples, &inst.c, inst.beta);
        let full = solve_lp(&lp).unwrap();
        let cut = solve_two_stage_saa(&tuples, &inst).unwrap();
        assert!((cut.value - full.value).abs() <= 1e-7 * full.value.abs().max(1.0), "{} vs {}", cut.value, full.value);
    }
}

/// Scenarios where `T x` can exceed `v`, so the optimum is interior.
#[test]
fn two_stage_saa_with_interior_optimum() {
    let mut r = rng(404);
    for _ in 0..5 {
        let (d, m, n) = (2, 2, 8);
        let tuples: Vec<_> = (0..n).map(|_| random_tuple(&mut r, d, m)).collect();
        let inst = TwoStageInstance { seed: 0, d, m, c: vec![r.gen::<f64>(), r.gen::<f64>()], beta: 0.7 };
        let (lp, _) = build_two_stage_lp(&tuples, &inst.c, inst.beta);
        let full = solve_lp(&lp).unwrap();
        let cut = solve_two_stage_saa(&tuples, &inst).unwrap();
        assert!((cut.value - full.value).abs() <= 1e-8, "{} vs {}", cut.value, full.value);
    }
}

/// Dense grid over the simplex, filtered by the return target.
fn simplex_grid_min(inst: &PortfolioInstance, samples: &Matrix, step: usize) -> f64 {
    let mut best = f64::INFINITY;
    for a in 0..=step {
        for b in 0..=step - a {
            let x = [a as f64 / step as f64, b as f64 / step as f64, (step - a - b) as f64 / step as f64];
            if inst.mu.iter().zip(&x).map(|(m, x)| m * x).sum::<f64>() < inst.r_target {
                continue;
            }
            let losses: Vec<f64> =
                (0..samples.rows()).map(|i| -samples.row(i).iter().zip(&x).map(|(s, x)| s * x).sum::<f64>()).collect();
            best = best.min(EmpiricalDistribution::from_values(&losses).unwrap().cvar(inst.beta).unwrap());
        }
    }
    best
}

#[test]
fn portfolio_lp_against_simplex_grid() {
    let inst = portfolio(8, 3, 0.9, 1.0, PortfolioModel::Normal);
    let samples = inst.scenarios(SamplerKind::Mc, Factorization::Cholesky, 16, 5).unwrap();
    let (lp, _) = build_portfolio_lp(&samples, &inst.mu, inst.r_target, inst.beta);
    let value = solve_lp(&lp).unwrap().value;
    let grid = simplex_grid_min(&inst, &samples, 400);
    assert!(value <= grid + 1e-12 && grid - value <= 1e-3, "{value} vs grid {grid}");
}

#[test]
fn two_stage_lp_against_box_grid() {
    let inst = gen_two_stage_instance(9, 2, 2, 0.9).unwrap();
    let tuples = inst.scenarios(SamplerKind::Mc, 8, 2).unwrap();
    let (lp, _) = build_two_stage_lp(&tuples, &inst.c, inst.beta);
    let value = solve_lp(&lp).unwrap().value;
    let mut grid = f64::INFINITY;
    for a in 0..=64 {
        for b in 0..=64 {
            let x = [a as f64 / 64.0, b as f64 / 64.0];
            let losses: Vec<f64> = tuples.iter().map(|t| recourse_value(&x, t)).collect();
            let f = inst.c[0] * x[0] + inst.c[1] * x[1]
                + EmpiricalDistribution::from_values(&losses).unwrap().cvar(inst.beta).unwrap();
            grid = grid.min(f);
        }
    }
    assert!(value <= grid + 1e-9 && grid - value <= 1e-2, "{value} vs grid {grid}");
}

#[test]
fn exact_reference_against_grid() {
    let inst = portfolio(3, 3, 0.9, 1.0, PortfolioModel::Normal);
    let exact = exact_portfolio_normal(&inst, 1e-9).unwrap();
    let mut grid = f64::INFINITY;
    let step = 600;
    for a in 0..=step {
        for b in 0..=step - a {
            let x = [a as f64 / step as f64, b as f64 / step as f64, (step - a - b) as f64 / step as f64];
            if inst.is_feasible(&x) {
                grid = grid.min(inst.normal_cvar(&x).unwrap());
            }
        }
    }
    assert!(exact.value <= grid + 1e-9 && grid - exact.value <= 1e-4, "{} vs {grid}", exact.value);
}

#[test]
fn exact_symmetric_pair_against_grid() {
    let s: f64 = 0.01;
    let inst = PortfolioInstance {
        seed: 0,
        d: 2,
        mu: vec![1.0, 1.0],
        q: Matrix::diag(&[s.sqrt(), s.sqrt()]),
        sigma: Matrix::diag(&[s, s]),
        r_target: 0.95,
        beta: 0.95,
        model: PortfolioModel::Normal,
    };
    let grid = (0..=1000)
        .map(|k| {
            let a = k as f64 / 1000.0;
            inst.normal_cvar(&[a, 1.0 - a]).unwrap()
        })
        .fold(f64::INFINITY, f64::min);
    let closed = -1.0 + cvar_normal_closed_form(0.0, 1.0, 0.95).unwrap() * (s / 2.0).sqrt();
    assert!((grid - closed).abs() < 1e-12);
    let exact = exact_portfolio_normal(&inst, 1e-7).unwrap();
    assert!((exact.value - closed).abs() <= 1e-7);
}

#[test]
fn kelley_norm_against_grid() {
    let mut simplex = LpProblem::new(vec![0.0; 2]);
    simplex.add_row(vec![1.0, 1.0], Relation::Eq, 1.0);
    let f = |x: &[f64]| {
        let n = (x[0] * x[0] + x[1] * x[1]).sqrt();
        (n, vec![x[0] / n, x[1] / n])
    };
    let res = kelley_minimize(&f, &simplex, KelleyOptions::default()).unwrap();
    let grid = (0..=10_000)
        .map(|k| {
            let a = k as f64 / 10_000.0;
            (a * a + (1.0 - a) * (1.0 - a)).sqrt()
        })
        .fold(f64::INFINITY, f64::min);
    assert!((res.value - grid).abs() <= 1e-7);
    assert!((res.value - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-7);
}

#[test]
fn high_n_reference_close_to_exact() {
    use riskqmc::experiments::{reference_value, ExperimentConfig, ReferenceMode};
    let exact_cfg = ExperimentConfig { d: 3, ..ExperimentConfig::default() };
    let exact = reference_value(&exact_cfg).unwrap();
    let high = ExperimentConfig {
        reference: ReferenceMode::HighN { exponent: 14, replications: 100 },
        ..exact_cfg
    };
    let approx = reference_value(&high).unwrap();
    assert!((approx - exact).abs() < 2e-3, "{approx} vs {exact}");
}

#[test]
fn high_n_reference_improves_with_exponent() {
    use riskqmc::experiments::{reference_value, ExperimentConfig, ReferenceMode};
    for master_seed in 1..=3 {
        let base = ExperimentConfig { master_seed, ..ExperimentConfig::default() };
        let exact = reference_value(&base).unwrap();
        let at = |exponent| {
            let cfg = ExperimentConfig {
                reference: ReferenceMode::HighN { exponent, replications: 20 },
                ..base.clone()
            };
            reference_value(&cfg).unwrap()
        };
        let (r8, r14) = (at(8), at(14));
        assert!((r14 - exact).abs() < (r8 - exact).abs(), "seed {master_seed}: {r8} {r14} {exact}");
    }
}

#[test]
fn exact_not_above_sample_based_plus_noise() {
    let inst = portfolio(4, 3, 0.9, 1.05, PortfolioModel::Normal);
    let exact = exact_portfolio_normal(&inst, 1e-7).unwrap().value;
    let wrapped = Instance::Portfolio(inst);
    let values: Vec<f64> = (0..10)
        .map(|s| sample_based_optimal_value(&wrapped, SamplerKind::SobolScrambled, Factorization::Pca, 1 << 12, s).unwrap().value)
        .collect();
    let mean = values.iter().sum::<f64>() / 10.0;
    assert!((mean - exact).abs() < 2e-3, "{mean} vs {exact}");
}
