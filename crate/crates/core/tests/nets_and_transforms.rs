mod common;

use common::*;

use riskqmc::linalg::Matrix;
use riskqmc::problems::{gen_portfolio_instance, PortfolioModel};
use riskqmc::risk::EmpiricalDistribution;
use riskqmc::sequences::*;
use riskqmc::transforms::*;

#[test]
fn sobol_one_point_per_dyadic_cell() {
    for m in 0..=12u32 {
        let n = 1usize << m;
        for scramble in [None, Some(3), Some(0xDEAD_BEEF)] {
            let ps = sobol_points(n, 10, scramble).unwrap();
            for j in 0..10 {
                assert!(one_per_dyadic_cell(&ps.column(j), m), "m={m} coord={j} scramble={scramble:?}");
            }
        }
    }
}

#[test]
fn two_dimensional_t_values_survive_scrambling() {
    let dims = 6;
    for m in [6u32, 8, 10] {
        let plain = sobol_points(1 << m, dims, None).unwrap();
        for a in 0..dims {
            for b in a + 1..dims {
                let t = projection_t_value(&plain, a, b).expect("power-of-two size");
                for seed in [1, 2] {
                    let scrambled = sobol_points(1 << m, dims, Some(seed)).unwrap();
                    assert_eq!(projection_t_value(&scrambled, a, b), Some(t), "m={m} pair=({a},{b})");
                }
                // Every elementary interval of volume 2^(t - m) holds 2^t points.
                let k = m - t;
                for k1 in 0..=k {
                    let counts = elementary_counts(&plain, a, b, k1, k - k1);
                    assert!(counts.iter().all(|&c| c == 1 << t));
                }
            }
        }
    }
    // The first two coordinates form a (0, 2)-sequence.
    for m in 1..=12 {
        assert_eq!(projection_t_value(&sobol_points(1 << m, 2, None).unwrap(), 0, 1), Some(0));
    }
}

#[test]
fn scrambled_marginal_means() {
    let ps = sobol_points(1 << 12, 5, Some(3)).unwrap();
    let bound = 3.0 / (12.0 * 4096.0f64).sqrt();
    for j in 0..5 {
        let mean = ps.column(j).iter().sum::<f64>() / 4096.0;
        assert!((mean - 0.5).abs() < bound, "coord {j}: {mean}");
    }
}

#[test]
fn inverse_cdf_strictly_increasing_on_fine_grid() {
    let mut prev = f64::NEG_INFINITY;
    for k in 1..100_000 {
        let z = norm_inv_cdf(k as f64 / 100_000.0).unwrap();
        assert!(z > prev, "k={k}");
        prev = z;
    }
}

#[test]
fn factorizations_reconstruct_random_spd() {
    let mut r = rng(17);
    for case in 0..100 {
        let d = 1 + case % 10;
        let sigma = random_spd(&mut r, d);
        let scale = sigma.frobenius();
        let l = cholesky_factor(&sigma).unwrap();
        assert!(l.matmul(&l.transpose()).sub(&sigma).frobenius() <= 1e-12 * scale.max(1.0));
        let p = pca_factor(&sigma).unwrap();
        assert!(p.matmul(&p.transpose()).sub(&sigma).frobenius() <= 1e-10 * scale.max(1.0));
        // Columns come in descending norm order (the eigenvalues).
        let norms: Vec<f64> = (0..d).map(|j| p.column(j).iter().map(|v| v * v).sum()).collect();
        assert!(norms.windows(2).all(|w| w[0] >= w[1] - 1e-12));
    }
}

fn covariance_error(samples: &Matrix, sigma: &Matrix) -> f64 {
    sample_covariance(samples).sub(sigma).frobenius() / sigma.frobenius()
}

#[test]
fn gaussian_covariance_converges() {
    let mut r = rng(23);
    for d in [2, 3, 5] {
        let sigma = random_spd(&mut r, d);
        for f in [Factorization::Cholesky, Factorization::Pca] {
            let spec = GaussianSpec::new(vec![0.5; d], sigma.clone(), f).unwrap();
            for (m, tol) in [(14u32, 0.05), (16, 0.02)] {
                for sampler in [SamplerKind::Mc, SamplerKind::SobolScrambled] {
                    let pts = sampler.generate(1 << m, d, 5).unwrap();
                    let err = covariance_error(&gaussian_transform(&pts, &spec).unwrap(), &sigma);
                    assert!(err < tol, "d={d} {f} {sampler} 2^{m}: {err}");
                }
            }
        }
    }
}

#[test]
fn gaussian_covariance_matches_independent_mc() {
    // A second, independent MC stream has the same covariance up to
    // sampling error, and both are close to sigma.
    let mut r = rng(29);
    let sigma = random_spd(&mut r, 3);
    let spec = GaussianSpec::new(vec![0.0; 3], sigma.clone(), Factorization::Cholesky).unwrap();
    let a = gaussian_transform(&mc_points(1, 1 << 14, 3), &spec).unwrap();
    let b = gaussian_transform(&mc_points(2, 1 << 14, 3), &spec).unwrap();
    let gap = sample_covariance(&a).sub(&sample_covariance(&b)).frobenius() / sigma.frobenius();
    assert!(gap < 0.05 && covariance_error(&a, &sigma) < 0.05);
}

#[test]
fn center_point_is_the_mean_for_both_factorizations() {
    let mut r = rng(31);
    let sigma = random_spd(&mut r, 4);
    let mu = vec![1.0, -2.0, 0.25, 3.0];
    for f in [Factorization::Cholesky, Factorization::Pca] {
        let spec = GaussianSpec::new(mu.clone(), sigma.clone(), f).unwrap();
        // The second unscrambled Sobol' point is (1/2, ..., 1/2).
        let half = sobol_points(2, 4, None).unwrap();
        assert!(half.row(1).iter().all(|&u| u == 0.5));
        let out = gaussian_transform(&half, &spec).unwrap();
        assert_eq!(out.row(1), mu.as_slice());
    }
}

#[test]
fn uniform_affine_covariance() {
    let inst = gen_portfolio_instance(5, 4, 0.9, 1.0, PortfolioModel::UniformAffine).unwrap();
    let samples = uniform_affine_transform(&mc_points(9, 1 << 14, 4), &inst.mu, &inst.q).unwrap();
    assert!(covariance_error(&samples, &inst.sigma) < 0.05);
}

#[test]
fn empirical_normal_cvar_consistency() {
    let spec = GaussianSpec::new(vec![0.0], Matrix::identity(1), Factorization::Cholesky).unwrap();
    let target = 2.0627128075074256;
    for sampler in SamplerKind::ALL {
        for seed in 0..5 {
            let err = |m: u32| {
                let pts = sampler.generate(1 << m, 1, seed).unwrap();
                let z = gaussian_transform(&pts, &spec).unwrap();
                (EmpiricalDistribution::from_values(z.as_slice()).unwrap().cvar(0.95).unwrap() - target).abs()
            };
            assert!(err(14) < err(6), "{sampler} seed {seed}");
        }
    }
}
