use chrono::NaiveDate;
use ksum_core::backtest::{self, align_scores, BacktestConfig, WindowOutcome};
use ksum_core::baselines::StrategySpec;
use ksum_core::scores::{AgencyMeta, NormalizeOptions, Orientation, ScoreHistory, ScorePanel};
use ksum_core::synth::{self, SynthConfig, SynthMarket};
use ksum_core::Error;
use nalgebra::DMatrix;

fn market(n_assets: usize, n_dates: usize, seed: u64) -> SynthMarket {
    synth::generate(&SynthConfig {
        n_assets,
        n_dates,
        n_agencies: 3,
        panel_interval: 63,
        seed,
        ..SynthConfig::default()
    })
    .unwrap()
}

fn config(strategies: Vec<StrategySpec>, in_sample: usize, period: usize) -> BacktestConfig {
    BacktestConfig {
        in_sample_length: in_sample,
        rebalance_period: period,
        ..BacktestConfig::new(strategies)
    }
}

fn mixed_roster() -> Vec<StrategySpec> {
    vec![
        StrategySpec::GMinV,
        StrategySpec::EqualWeighted,
        StrategySpec::RiskParity,
        StrategySpec::MostDiversified,
        StrategySpec::MvEsg {
            agency: None,
            alpha: 0.25,
            fraction: 0.4,
        },
        StrategySpec::KWorst {
            k: 2,
            alpha: 0.5,
            fraction: 0.4,
        },
    ]
}

#[test]
fn equal_weight_returns_are_cross_sectional_means() {
    let m = market(6, 260, 1);
    let report = backtest::run(&m.data, &m.scores, &config(vec![StrategySpec::EqualWeighted], 120, 21)).unwrap();
    let ew = report.strategy("EW").unwrap();
    let returns = m.data.returns();
    assert_eq!(ew.returns.len(), returns.nrows() - 120);
    for (i, r) in ew.returns.iter().enumerate() {
        let row = returns.row(120 + i);
        assert!((r - row.mean()).abs() < 1e-15);
    }
}

#[test]
fn single_window_covers_one_holding_period() {
    let m = market(5, 141, 2);
    let report = backtest::run(&m.data, &m.scores, &config(mixed_roster(), 120, 20)).unwrap();
    assert_eq!(report.rebalance_dates.len(), 1);
    assert_eq!(report.dates.len(), 20);
    for run in &report.strategies {
        assert_eq!(run.returns.len(), 20);
        assert_eq!(run.weights.len(), 1);
    }
    let short = market(5, 140, 2);
    let err = backtest::run(&short.data, &short.scores, &config(mixed_roster(), 120, 20)).unwrap_err();
    assert!(matches!(err, Error::InsufficientData(_)));
}

#[test]
fn weights_stay_on_the_simplex_and_wealth_compounds() {
    let m = market(8, 400, 3);
    let report = backtest::run(&m.data, &m.scores, &config(mixed_roster(), 200, 21)).unwrap();
    assert_eq!(report.n_failures(), 0);
    for run in &report.strategies {
        for x in &run.weights {
            assert!((x.sum() - 1.0).abs() <= 1e-10, "{}", run.label);
            assert!(x.iter().all(|v| *v >= 0.0), "{}", run.label);
        }
        assert_eq!(run.wealth[0], 1.0);
        for t in 1..run.wealth.len() {
            assert_eq!(run.wealth[t], run.wealth[t - 1] * (1.0 + run.returns[t - 1]));
        }
        assert!(run.diagnostics.iter().all(|d| d.outcome == WindowOutcome::Solved));
    }
}

#[test]
fn runs_are_deterministic() {
    let m = market(8, 330, 4);
    let cfg = config(mixed_roster(), 200, 21);
    let a = backtest::run(&m.data, &m.scores, &cfg).unwrap();
    let b = backtest::run(&m.data, &m.scores, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn splitting_at_a_rebalance_reproduces_the_full_run() {
    let m = market(6, 400, 5);
    let (l_in, h) = (150, 21);
    let cfg = config(mixed_roster(), l_in, h);
    let full = backtest::run(&m.data, &m.scores, &cfg).unwrap();
    // first part ends after four holding periods
    let cut = l_in + 4 * h;
    let first = backtest::run(&m.data.slice(0..cut + 1).unwrap(), &m.scores, &cfg).unwrap();
    let second = backtest::run(&m.data.slice(cut - l_in..m.data.n_dates()).unwrap(), &m.scores, &cfg).unwrap();
    for (s, run) in full.strategies.iter().enumerate() {
        let mut joined = first.strategies[s].returns.clone();
        joined.extend_from_slice(&second.strategies[s].returns);
        assert_eq!(joined, run.returns, "{}", run.label);
        let mut weights = first.strategies[s].weights.clone();
        weights.extend_from_slice(&second.strategies[s].weights);
        assert_eq!(weights, run.weights, "{}", run.label);
    }
    let mut dates = first.rebalance_dates.clone();
    dates.extend_from_slice(&second.rebalance_dates);
    assert_eq!(dates, full.rebalance_dates);
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn panel(value: f64) -> ScorePanel {
    let meta = vec![AgencyMeta {
        id: "A".into(),
        range_min: 0.0,
        range_max: 100.0,
        orientation: Orientation::GreenerIsHigher,
    }];
    let ids = vec!["X".into(), "Y".into(), "Z".into()];
    ScorePanel::new(meta, ids, DMatrix::from_row_slice(1, 3, &[value, 20.0, 100.0])).unwrap()
}

#[test]
fn scores_carry_forward_to_rebalance_dates() {
    let history = ScoreHistory::new(vec![(date(2020, 1, 1), panel(0.0)), (date(2020, 2, 1), panel(50.0))]).unwrap();
    let ids = ["X".to_string(), "Y".to_string(), "Z".to_string()];
    let at = |d| align_scores(&history, d, &ids, None, NormalizeOptions::default());
    let jan = at(date(2020, 1, 15)).unwrap();
    assert_eq!(jan.s.as_slice(), &[1.0, 0.8, 0.0]);
    // inclusive on the panel date itself
    let feb = at(date(2020, 2, 1)).unwrap();
    assert_eq!(feb, at(date(2020, 12, 31)).unwrap());
    assert_ne!(feb, jan);
    assert!(matches!(at(date(2019, 12, 31)), Err(Error::Config(_))));

    // a yearly panel serves every monthly rebalance
    let yearly = ScoreHistory::new(vec![(date(2020, 1, 1), panel(25.0))]).unwrap();
    let first = align_scores(&yearly, date(2020, 1, 31), &ids, None, NormalizeOptions::default()).unwrap();
    for month in 2..=12 {
        let p = align_scores(&yearly, date(2020, month, 28), &ids, None, NormalizeOptions::default()).unwrap();
        assert_eq!(p, first);
    }
}

#[test]
fn roster_is_checked_against_the_panel() {
    let m = market(5, 200, 6);
    let too_many = config(
        vec![StrategySpec::KWorst {
            k: 4,
            alpha: 0.0,
            fraction: 0.4,
        }],
        100,
        21,
    );
    assert!(matches!(backtest::run(&m.data, &m.scores, &too_many), Err(Error::Config(_))));
    let unknown = config(
        vec![StrategySpec::MvEsg {
            agency: Some("nobody".into()),
            alpha: 0.0,
            fraction: 0.4,
        }],
        100,
        21,
    );
    assert!(matches!(backtest::run(&m.data, &m.scores, &unknown), Err(Error::Config(_))));
    let duplicate = config(vec![StrategySpec::GMinV, StrategySpec::GMinV], 100, 21);
    assert!(matches!(backtest::run(&m.data, &m.scores, &duplicate), Err(Error::Config(_))));
}

fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

#[test]
fn gminv_is_usually_calmer_than_equal_weight() {
    let cfg = config(vec![StrategySpec::GMinV, StrategySpec::EqualWeighted], 500, 21);
    let mut wins = 0;
    for seed in 0..50 {
        let m = market(5, 700, 100 + seed);
        let report = backtest::run(&m.data, &m.scores, &cfg).unwrap();
        let g = variance(&report.strategy("GMinV").unwrap().returns);
        let e = variance(&report.strategy("EW").unwrap().returns);
        if g <= e {
            wins += 1;
        }
    }
    assert!(wins >= 40, "GMinV calmer in {wins} of 50 trials");
}

#[test]
fn report_directory_has_one_file_pair_per_strategy() {
    let m = market(5, 200, 7);
    let report = backtest::run(&m.data, &m.scores, &config(mixed_roster(), 100, 21)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    report.write_dir(dir.path()).unwrap();
    for run in &report.strategies {
        let returns = std::fs::read_to_string(dir.path().join(format!("returns_{}.csv", run.label))).unwrap();
        assert_eq!(returns.lines().count(), run.returns.len() + 1);
        assert!(returns.starts_with("date,return,wealth,benchmark"));
        let weights = std::fs::read_to_string(dir.path().join(format!("weights_{}.csv", run.label))).unwrap();
        assert_eq!(weights.lines().count(), run.weights.len() + 1);
    }
    assert!(dir.path().join("diagnostics.csv").exists());
}
