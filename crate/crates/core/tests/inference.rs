mod common;

use common::rational_dataset;
use monoloc::estimators::{EstimatorSpec, SearchConfig};
use monoloc::inference::{
    asymptotic_covariance_oracle, bootstrap_m_of_n_at, bootstrap_wild_at, chi2_quantile, default_m,
    mammen_weight, mix64, normal_ellipsoid, WildWeights,
};
use monoloc::simulation::ScenarioConfig;
use monoloc::Direction;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Regularized lower incomplete gamma P(a, x) by its power series.
fn lower_gamma_p(a: f64, x: f64) -> f64 {
    let mut term = 1.0 / a;
    let mut sum = term;
    for k in 1..10_000 {
        term *= x / (a + k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    let ln_gamma_a = statrs::function::gamma::ln_gamma(a);
    (sum.ln() + a * x.ln() - x - ln_gamma_a).exp()
}

#[test]
fn chi_square_quantiles_invert_the_series_cdf() {
    for dof in 1..=3 {
        for level in [0.5, 0.9, 0.95, 0.99] {
            let q = chi2_quantile(dof, level);
            let p = lower_gamma_p(dof as f64 / 2.0, q / 2.0);
            assert!((p - level).abs() < 1e-10, "dof {dof} level {level}: {p}");
        }
    }
}

#[test]
fn mammen_weights_match_three_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 1_000_000;
    let (mut m1, mut m2, mut m3) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let w = mammen_weight(&mut rng);
        m1 += w;
        m2 += w * w;
        m3 += w * w * w;
    }
    let n = n as f64;
    // sd of the sample mean of w^k is below 2.2 / sqrt(n) for k <= 3
    let tol = 5.0 * 2.2 / n.sqrt();
    assert!((m1 / n).abs() < tol);
    assert!((m2 / n - 1.0).abs() < tol);
    assert!((m3 / n - 1.0).abs() < tol);
}

#[test]
fn m_of_n_matches_explicit_double_loop() {
    // the LSE never reports non-convergence, so every replicate is kept
    let data = rational_dataset(50, [0.2, -0.1], 0.1, 4);
    let spec = EstimatorSpec::lse(Direction::NonIncreasing, SearchConfig::light());
    let center = spec.run(&data).unwrap();
    let (m, b, seed) = (30, 16, 77);
    let summary = bootstrap_m_of_n_at(&data, &spec, &center, m, b, seed).unwrap();

    let mut reps = Vec::new();
    for r in 0..b {
        let s = mix64(seed, r as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..data.len())).collect();
        let est = spec.run_with(&data.select(&idx), &spec.config.clone().with_seed(s)).unwrap();
        reps.push(est.converged.then_some(est.theta));
    }
    assert_eq!(summary.replicates, reps);

    let ok: Vec<&Vec<f64>> = reps.iter().flatten().collect();
    let k = ok.len() as f64;
    let mean: Vec<f64> = (0..2).map(|j| ok.iter().map(|t| t[j]).sum::<f64>() / k).collect();
    for i in 0..2 {
        for j in 0..2 {
            let c: f64 = ok.iter().map(|t| (t[i] - mean[i]) * (t[j] - mean[j])).sum::<f64>() / (k - 1.0)
                * m as f64
                / data.len() as f64;
            assert!((summary.covariance[i][j] - c).abs() <= 1e-15 * (1.0 + c.abs()));
        }
    }
    assert_eq!(summary.center, center.theta);
}

#[test]
fn m_of_n_is_thread_count_independent() {
    let data = rational_dataset(300, [0.0, 0.0], 0.1, 8);
    let spec = EstimatorSpec::ssce(Direction::NonIncreasing, SearchConfig::light());
    let center = spec.run(&data).unwrap();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| bootstrap_m_of_n_at(&data, &spec, &center, default_m(300), 12, 5).unwrap())
    };
    assert_eq!(run(1).replicates, run(3).replicates);
}

#[test]
fn unit_wild_weights_reproduce_the_fit() {
    let data = rational_dataset(80, [0.3, 0.3], 0.1, 2);
    let spec = EstimatorSpec::ssce(Direction::NonIncreasing, SearchConfig::light());
    let center = spec.run(&data).unwrap();
    let s = bootstrap_wild_at(&data, &spec, &center, 5, 1, WildWeights::Constant(1.0)).unwrap();
    for r in s.successful() {
        assert_eq!(r, &center.theta);
    }
    assert!(s.covariance.iter().flatten().all(|&c| c == 0.0));
}

#[test]
fn ellipsoid_radius_and_membership() {
    let cov = vec![vec![4.0, 0.0], vec![0.0, 1.0]];
    let e = normal_ellipsoid(&[1.0, -1.0], &cov, 0.9);
    let r = chi2_quantile(2, 0.9).sqrt();
    assert!(e.contains(&[1.0 + 2.0 * r * 0.999, -1.0]));
    assert!(!e.contains(&[1.0 + 2.0 * r * 1.001, -1.0]));
    assert!(e.contains(&[1.0, -1.0 + r * 0.999]));
    assert!(!e.contains(&[1.0, -1.0 + r * 1.001]));
}

#[test]
fn default_m_is_floor_of_power() {
    for n in [10usize, 100, 600, 1200, 5000] {
        assert_eq!(default_m(n), (n as f64).powf(0.875).floor() as usize);
    }
}

#[test]
fn oracle_agrees_with_itself_at_doubled_size() {
    let truth = ScenarioConfig::single_example(1000).truth();
    let a = asymptotic_covariance_oracle(&truth, 100_000, 1).unwrap();
    let b = asymptotic_covariance_oracle(&truth, 200_000, 2).unwrap();
    let se = (a.limit_se[0][0].powi(2) + b.limit_se[0][0].powi(2)).sqrt();
    assert!((a.limit[0][0] - b.limit[0][0]).abs() < 4.0 * se, "{} vs {}", a.limit[0][0], b.limit[0][0]);
    assert!(b.limit_se[0][0] < a.limit_se[0][0]);
    // the Jacobian of the expected score is twice A
    for i in 0..2 {
        for j in 0..2 {
            assert_eq!(a.jacobian[i][j], 2.0 * a.a[i][j]);
        }
    }
    // isotropic design: the limit is close to a multiple of the identity
    assert!((b.limit[0][0] - b.limit[1][1]).abs() < 4.0 * se);
    assert!((b.limit[0][0] - 0.75).abs() < 0.05);
}
