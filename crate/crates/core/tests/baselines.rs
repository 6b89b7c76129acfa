mod common;

use common::{random_sigma, simplex_point};
use ksum_core::baselines::{self, StrategySpec};
use ksum_core::qp::SolverSettings;
use ksum_oracles::{qp_active_set_enumeration, DenseQp};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn on_simplex(x: &DVector<f64>) -> bool {
    (x.sum() - 1.0).abs() <= 1e-10 && x.iter().all(|v| *v >= 0.0)
}

#[test]
fn risk_contributions_are_equal() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20 {
        let sigma = random_sigma(&mut rng, 5);
        let x = baselines::risk_parity(&sigma).unwrap();
        assert!(on_simplex(&x));
        let rc = x.component_mul(&(&sigma * &x));
        let mean = rc.mean();
        let spread = rc.iter().map(|c| (c / mean - 1.0).abs()).fold(0.0, f64::max);
        assert!(spread <= 1e-8, "relative spread {spread}");
    }
}

#[test]
fn most_diversified_beats_random_portfolios() {
    let settings = SolverSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let sigma = random_sigma(&mut rng, 6);
        let x = baselines::most_diversified(&sigma, &settings).unwrap();
        assert!(on_simplex(&x));
        let best = baselines::diversification_ratio(&sigma, &x);
        for _ in 0..10_000 {
            let p = simplex_point(&mut rng, 6);
            assert!(baselines::diversification_ratio(&sigma, &p) <= best + 1e-9);
        }
    }
}

#[test]
fn mv_esg_matches_enumeration() {
    let settings = SolverSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for trial in 0..15 {
        let n = 5;
        let sigma = random_sigma(&mut rng, n);
        let mu = DVector::from_fn(n, |_, _| rng.random_range(0.0..0.001));
        let esg = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        // targets strictly inside the attainable ranges
        let mu_bar = mu.min() + rng.random_range(0.0..0.6) * (mu.max() - mu.min());
        let eta_bar = esg.min() + rng.random_range(0.0..0.4) * (esg.max() - esg.min());
        let x = baselines::mv_esg(&sigma, &mu, &esg, mu_bar, eta_bar, &settings);
        let extra_a = DMatrix::from_fn(2, n, |i, j| if i == 0 { -mu[j] } else { -esg[j] });
        let extra_b = DVector::from_vec(vec![-mu_bar, -eta_bar]);
        let dense = DenseQp::on_simplex(&sigma * 2.0, DVector::zeros(n), extra_a, extra_b);
        match qp_active_set_enumeration(&dense) {
            Some(reference) => {
                let x = x.unwrap();
                assert!((&x - reference).amax() < 1e-6, "trial {trial}");
            }
            None => assert!(x.is_err(), "trial {trial}: oracle found no feasible point"),
        }
    }
}

#[test]
fn mv_esg_targets_follow_profile_rule() {
    let settings = SolverSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sigma = random_sigma(&mut rng, 6);
    let mu = DVector::from_fn(6, |_, _| rng.random_range(0.0..0.001));
    let esg = DVector::from_fn(6, |_, _| rng.random_range(0.0..1.0));
    let mut last = f64::NEG_INFINITY;
    for alpha in [0.0, 0.25, 0.5, 0.75] {
        let (mu_bar, eta_bar) = baselines::mv_esg_targets(&sigma, &mu, &esg, alpha, 0.4, &settings).unwrap();
        assert!(mu_bar >= last);
        last = mu_bar;
        assert!((0.0..=1.0).contains(&eta_bar));
        let x = baselines::mv_esg(&sigma, &mu, &esg, mu_bar, eta_bar, &settings).unwrap();
        assert!(mu.dot(&x) >= mu_bar - 1e-8 && esg.dot(&x) >= eta_bar - 1e-8);
    }
}

#[test]
fn gminv_has_the_lowest_variance() {
    let settings = SolverSettings::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let n = 8;
        let sigma = random_sigma(&mut rng, n);
        let mu = DVector::from_fn(n, |_, _| rng.random_range(0.0..0.001));
        let esg = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        let var = |x: &DVector<f64>| x.dot(&(&sigma * x));
        let g = var(&baselines::gmin_v(&sigma, &settings).unwrap());
        let others = [
            baselines::equally_weighted(n).unwrap(),
            baselines::risk_parity(&sigma).unwrap(),
            baselines::most_diversified(&sigma, &settings).unwrap(),
            baselines::mv_esg(&sigma, &mu, &esg, mu.mean(), esg.mean(), &settings).unwrap(),
        ];
        for x in &others {
            assert!(on_simplex(x));
            assert!(g <= var(x) + 1e-12);
        }
    }
}

#[test]
fn roster_labels_are_unique_and_valid() {
    let roster = StrategySpec::roster(&[1, 2, 3, 4]);
    let mut labels: Vec<String> = roster.iter().map(StrategySpec::label).collect();
    assert!(roster.iter().all(|s| s.validate().is_ok()));
    assert!(labels.contains(&"Sust_1_1Worst".to_string()));
    assert!(labels.contains(&"Sust_4".to_string()));
    let n = labels.len();
    labels.sort();
    labels.dedup();
    assert_eq!(labels.len(), n);
}

#[test]
fn spec_round_trips_through_json() {
    let spec = StrategySpec::KWorst {
        k: 2,
        alpha: 0.5,
        fraction: 0.4,
    };
    let text = serde_json::to_string(&spec).unwrap();
    assert_eq!(serde_json::from_str::<StrategySpec>(&text).unwrap(), spec);
    let mv: StrategySpec = serde_json::from_str(r#"{"kind":"MV-ESG","agency":"AG2","alpha":0.25}"#).unwrap();
    assert_eq!(mv.label(), "Sust_2_AG2");
}
