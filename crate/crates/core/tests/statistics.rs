//! Monte-Carlo checks of the estimators' first moments and the honest
//! rejection rate. Tolerances are a few standard errors.

use robust_degree::graph::{degrees, generate_er};
use robust_degree::harness::{failure_rates, run_experiment, ExperimentConfig, Guarantee, GraphSource};
use robust_degree::protocols::{
    check_aggregate, default_assignment, honest_check_bundle, honest_naive_bundle, naive_counts,
    tau_threshold, CheckedProtocol, Mode, Protocol,
};
use robust_degree::randomizers::rho_from_eps;
use robust_degree::RandomSource;

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

#[test]
fn check_estimator_unbiased() {
    let n = 80;
    let g = generate_er(n, 0.3, &mut RandomSource::new(1)).unwrap();
    let rho = rho_from_eps(1.5).unwrap();
    let trials = 300;
    let mut per_user = vec![Vec::with_capacity(trials); n];
    for t in 0..trials {
        let b = honest_check_bundle(&g, rho, &RandomSource::new(100 + t as u64));
        let (_, stats) = check_aggregate(&b, rho, f64::INFINITY).unwrap();
        for (i, &e) in stats.rr_estimate.unwrap().iter().enumerate() {
            per_user[i].push(e);
        }
    }
    let degs = degrees(&g);
    let ok = (0..n)
        .filter(|&i| {
            let (mean, se) = mean_se(&per_user[i]);
            (mean - degs[i] as f64).abs() <= 4.0 * se
        })
        .count();
    assert!(ok as f64 >= 0.95 * n as f64, "{ok}/{n}");
}

#[test]
fn naive_count_identity() {
    // E[r1] = (1 - 2 rho) d + rho (n - 1)
    let n = 60;
    let g = generate_er(n, 0.4, &mut RandomSource::new(2)).unwrap();
    let rho = rho_from_eps(0.8).unwrap();
    let a = default_assignment(n).unwrap();
    let trials = 400;
    let mut per_user = vec![Vec::with_capacity(trials); n];
    for t in 0..trials {
        let b = honest_naive_bundle(&g, &a, rho, &RandomSource::new(500 + t as u64));
        for (i, r) in naive_counts(&b, &a).unwrap().into_iter().enumerate() {
            per_user[i].push(r as f64);
        }
    }
    let degs = degrees(&g);
    let ok = (0..n)
        .filter(|&i| {
            let (mean, se) = mean_se(&per_user[i]);
            let want = (1.0 - 2.0 * rho) * degs[i] as f64 + rho * (n - 1) as f64;
            (mean - want).abs() <= 4.0 * se
        })
        .count();
    assert!(ok as f64 >= 0.95 * n as f64, "{ok}/{n}");
}

#[test]
fn honest_rejection_rate_below_delta() {
    let delta = 0.05;
    let mut c = ExperimentConfig::new(GraphSource::Er { n: 150, p: 0.3 }, Protocol::Check, Some(1.0), 9);
    c.delta = delta;
    c.trials = 300;
    let r = run_experiment(&c).unwrap();
    let rate = failure_rates(&r, f64::INFINITY, Guarantee::Correctness).unwrap();
    let sigma = (delta * (1.0 - delta) / 300.0).sqrt();
    assert!(rate <= delta + 3.0 * sigma, "{rate}");
}

#[test]
fn tau_covers_r01_spread() {
    // the honest r01 deviation exceeds tau in well under delta of draws
    let n = 200;
    let g = generate_er(n, 0.2, &mut RandomSource::new(3)).unwrap();
    let rho = rho_from_eps(1.0).unwrap();
    let tau = tau_threshold(Mode::Response, CheckedProtocol::Check, n, 0, rho, 0.05);
    let mut over = 0usize;
    let mut total = 0usize;
    for t in 0..50 {
        let b = honest_check_bundle(&g, rho, &RandomSource::new(t));
        let (est, _) = check_aggregate(&b, rho, tau).unwrap();
        over += est.bottom_count();
        total += n;
    }
    assert!((over as f64 / total as f64) < 0.05);
}
