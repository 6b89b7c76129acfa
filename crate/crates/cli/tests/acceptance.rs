//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if any
//! blocking criterion fails. Criterion 10 is reported only.

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use ksum_cli::{cmd_backtest, cmd_synth, RunConfig};
use ksum_core::backtest::{self, align_scores, BacktestConfig};
use ksum_core::baselines::StrategySpec;
use ksum_core::data::estimate_moments;
use ksum_core::frontier::{self, PointStatus};
use ksum_core::ksum::{self, KsumInstance};
use ksum_core::metrics::{self, MetricTable};
use ksum_core::qp::{check_kkt, solve, Bounds, QpProblem, SolverSettings};
use ksum_core::scores::NormalizeOptions;
use ksum_core::synth::{self, SynthConfig};
use ksum_oracles as oracle;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {:.1?}, limit {:?}", t, limit))
}

fn random_sigma(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n + 3, n, |_, _| rng.random_range(-0.01..0.01));
    let market = DVector::from_fn(n, |_, _| rng.random_range(0.002..0.01));
    a.tr_mul(&a) + &market * market.transpose() + DMatrix::from_fn(n, n, |i, j| if i == j { 1e-5 } else { 0.0 })
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, k: usize) -> KsumInstance {
    let sigma = random_sigma(rng, n);
    let mu = DVector::from_fn(n, |_, _| rng.random_range(-0.0002..0.001));
    let s = DMatrix::from_fn(m, n, |_, _| rng.random_range(0.0..1.0));
    KsumInstance::new(sigma, mu, s, k).unwrap()
}

fn simplex_point(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let e = DVector::from_fn(n, |_, _| -rng.random_range(1e-12..1.0_f64).ln());
    let s = e.sum();
    e / s
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let mut worst = 0.0f64;
    let mut checks = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=20);
        let m = rng.random_range(1..=6);
        let inst = random_instance(&mut rng, n, m, 1);
        let x = simplex_point(&mut rng, n);
        let scores: Vec<f64> = (0..m)
            .map(|i| (0..n).map(|j| inst.s()[(i, j)] * x[j]).sum())
            .collect();
        for k in 1..=m {
            let dual = ksum::kworst_dual_value(&inst.with_k(k).unwrap(), &x).unwrap();
            for reference in [oracle::top_k_sum(&scores, k), oracle::top_k_sum_by_subsets(&scores, k)] {
                worst = worst.max((dual - reference).abs());
            }
            checks += 1;
        }
    }
    ensure(worst <= 1e-12, || format!("max error {worst:e}"))?;
    within_time(start, Duration::from_secs(10))?;
    Ok(format!("{checks} (instance, k) pairs, max error {worst:.1e}, {:.2?}", start.elapsed()))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1002);
    let settings = SolverSettings::default();
    let (mut worst_x, mut worst_kkt) = (0.0f64, 0.0f64);
    for case in 0..200 {
        let d = rng.random_range(2..=10);
        let extra = rng.random_range(0..=3);
        let a = DMatrix::from_fn(d + 2, d, |_, _| rng.random_range(-1.0..1.0));
        let p = a.tr_mul(&a) + DMatrix::identity(d, d) * 0.05;
        let q = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let ea = DMatrix::from_fn(extra, d, |_, _| rng.random_range(-1.0..1.0));
        let bary = DVector::from_element(d, 1.0 / d as f64);
        let eb = DVector::from_fn(extra, |i, _| ea.row(i).transpose().dot(&bary) + rng.random_range(0.0..0.3));
        let problem = QpProblem::new(p.clone(), q.clone())
            .with_equalities(DMatrix::from_element(1, d, 1.0), DVector::from_element(1, 1.0))
            .with_inequalities(ea.clone(), eb.clone())
            .with_bounds(Bounds::nonnegative(d));
        let sol = solve(&problem, &settings).map_err(|e| format!("case {case}: {e}"))?;
        ensure(sol.is_optimal(), || format!("case {case}: {:?}", sol.status))?;
        let reference = oracle::qp_active_set_enumeration(&oracle::DenseQp::on_simplex(p, q, ea, eb))
            .ok_or_else(|| format!("case {case}: oracle found no point"))?;
        worst_x = worst_x.max((&sol.y_star - reference).amax());
        worst_kkt = worst_kkt.max(check_kkt(&problem, &sol).max());
    }
    ensure(worst_x <= 1e-6, || format!("max weight error {worst_x:e}"))?;
    ensure(worst_kkt <= 1e-8, || format!("max KKT residual {worst_kkt:e}"))?;
    within_time(start, Duration::from_secs(60))?;
    Ok(format!("200 QPs, max error {worst_x:.1e}, max KKT {worst_kkt:.1e}, {:.2?}", start.elapsed()))
}

fn model7_objective(inst: &KsumInstance, x: &DVector<f64>) -> f64 {
    inst.variance(x) - inst.expected_return(x) + ksum::kworst_oracle(inst, x).unwrap()
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1003);
    let settings = SolverSettings::default();
    let step = 0.005;
    let grid = oracle::simplex_grid_3(step);
    let mut worst_gap = f64::NEG_INFINITY;
    for trial in 0..50 {
        let m = rng.random_range(1..=6);
        let k = rng.random_range(1..=m);
        let inst = random_instance(&mut rng, 3, m, k);
        let sol = solve(&ksum::build_single_objective(&inst), &settings).map_err(|e| format!("trial {trial}: {e}"))?;
        ensure(sol.is_optimal(), || format!("trial {trial}: {:?}", sol.status))?;
        let x = ksum::clean_weights(&inst.layout().split(&sol.y_star).0);
        let found = model7_objective(&inst, &x);
        let best = grid
            .iter()
            .map(|g| model7_objective(&inst, &DVector::from_row_slice(g)))
            .fold(f64::INFINITY, f64::min);
        // one lattice step moves at most two coordinates by `step`
        let resolution = (2.0 * inst.sigma().amax() + inst.mu().amax() + k as f64) * 2.0 * step;
        ensure(found <= best + 1e-9, || format!("trial {trial}: {found} above grid minimum {best}"))?;
        ensure(best - found <= resolution, || format!("trial {trial}: grid gap beyond resolution"))?;
        worst_gap = worst_gap.max(found - best);
    }
    within_time(start, Duration::from_secs(120))?;
    Ok(format!("50 instances, solver minus grid at most {worst_gap:.1e}, {:.2?}", start.elapsed()))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1004);
    let settings = SolverSettings::default();
    let (mut verified, mut drawn) = (0, 0);
    let (mut worst_g, mut worst_v) = (0.0f64, 0.0f64);
    while verified < 20 {
        drawn += 1;
        ensure(drawn <= 2000, || "could not draw 20 instances with mu_minV >= mu_minScore".into())?;
        let m = rng.random_range(1..=5);
        let k = rng.random_range(1..=m);
        let inst = random_instance(&mut rng, 8, m, k);
        let range = frontier::compute_mu_range(&inst, &settings).map_err(|e| e.to_string())?;
        // the GMinV identity holds when GMinV itself sets the return floor
        if range.mu_min_v < range.mu_min_score {
            continue;
        }
        let surface = frontier::trace_surface(&inst, 5, 5, &settings).map_err(|e| e.to_string())?;
        let g = surface.gminv_gap().ok_or("GMinV corner not solved")?;
        let v = surface.max_return_row_gap(&inst).ok_or("max-return row not solved")?;
        worst_g = worst_g.max(g);
        worst_v = worst_v.max(v);
        verified += 1;
    }
    ensure(worst_g <= 1e-6, || format!("GMinV gap {worst_g:e}"))?;
    ensure(worst_v <= 1e-6, || format!("max-return vertex gap {worst_v:e}"))?;
    Ok(format!("20 instances ({drawn} drawn), GMinV gap {worst_g:.1e}, vertex gap {worst_v:.1e}"))
}

/// Minimum variance on the simplex with `mu' x >= mu_bar` and `a x <= b`, by enumeration.
fn oracle_min_variance(sigma: &DMatrix<f64>, mu: &DVector<f64>, mu_bar: Option<f64>, a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = mu.len();
    let floor = usize::from(mu_bar.is_some());
    let mut extra_a = DMatrix::zeros(a.nrows() + floor, n);
    let mut extra_b = DVector::zeros(a.nrows() + floor);
    if let Some(mb) = mu_bar {
        for j in 0..n {
            extra_a[(0, j)] = -mu[j];
        }
        extra_b[0] = -mb;
    }
    for i in 0..a.nrows() {
        for j in 0..n {
            extra_a[(i + floor, j)] = a[(i, j)];
        }
        extra_b[i + floor] = b[i];
    }
    oracle::qp_active_set_enumeration(&oracle::DenseQp::on_simplex(sigma * 2.0, DVector::zeros(n), extra_a, extra_b))
}

fn no_caps(n: usize) -> (DMatrix<f64>, DVector<f64>) {
    (DMatrix::zeros(0, n), DVector::zeros(0))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1005);
    let settings = SolverSettings::default();
    let (mut worst_var, mut worst_score) = (0.0f64, 0.0f64);
    for trial in 0..10 {
        let m = rng.random_range(2..=4);
        let inst = random_instance(&mut rng, 6, m, 1 + trial % m);
        let surface = frontier::trace_surface(&inst, 10, 10, &settings).map_err(|e| e.to_string())?;
        let mut last_var = f64::NEG_INFINITY;
        for row in &surface.rows {
            for w in row.points.windows(2) {
                ensure(w[0].status == PointStatus::Optimal && w[1].status == PointStatus::Optimal, || {
                    format!("trial {trial}: point at mu {} failed", row.mu_bar)
                })?;
                ensure(w[1].variance <= w[0].variance + 1e-8, || format!("trial {trial}: variance rises along a row"))?;
            }
            // the loosest cap of each row lies on the mean-variance frontier
            let cell = row.points.last().ok_or("empty row")?;
            let (a, b) = no_caps(6);
            let mv = oracle_min_variance(inst.sigma(), inst.mu(), Some(row.mu_bar), &a, &b).ok_or("oracle infeasible")?;
            let mv_var = inst.variance(&mv);
            worst_var = worst_var.max((cell.variance - mv_var).abs() / mv_var);
            worst_score = worst_score.max((cell.kworst_score - ksum::kworst_oracle(&inst, &mv).unwrap()).abs());
            ensure(mv_var >= last_var - 1e-12, || format!("trial {trial}: frontier variance falls with mu"))?;
            ensure(cell.variance >= last_var - 1e-8, || format!("trial {trial}: surface variance falls with mu"))?;
            last_var = mv_var;
        }
    }
    ensure(worst_var <= 1e-6, || format!("relative variance gap to the frontier {worst_var:e}"))?;
    ensure(worst_score <= 1e-6, || format!("score gap to the frontier {worst_score:e}"))?;
    Ok(format!("10 surfaces of 10x10, frontier gaps: variance {worst_var:.1e} relative, score {worst_score:.1e}"))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1006);
    let settings = SolverSettings::default();
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let m = rng.random_range(1..=4);
        let inst = random_instance(&mut rng, 6, m, 1 + trial % m);
        // daily variances are small, so lambda_1 is drawn large enough to matter
        let lambda = [rng.random_range(100.0..2000.0), rng.random_range(0.1..2.0), rng.random_range(0.001..0.05)];
        let sol = solve(&ksum::build_scalarized(&inst, lambda).map_err(|e| e.to_string())?, &settings).map_err(|e| e.to_string())?;
        ensure(sol.is_optimal(), || format!("trial {trial}: scalarized {:?}", sol.status))?;
        let x = inst.layout().split(&sol.y_star).0;
        let mu_bar = inst.expected_return(&x);
        let gamma_bar = ksum::kworst_oracle(&inst, &x).unwrap();
        let eps = solve(&ksum::build_epsilon_constraint(&inst, mu_bar - 1e-12, gamma_bar + 1e-12), &settings).map_err(|e| e.to_string())?;
        ensure(eps.is_optimal(), || format!("trial {trial}: epsilon-constraint {:?}", eps.status))?;
        let xe = inst.layout().split(&eps.y_star).0;
        worst = worst.max((inst.variance(&xe) - inst.variance(&x)).abs());
    }
    ensure(worst <= 1e-6, || format!("variance gap {worst:e}"))?;
    Ok(format!("50 lambda draws, variance gap {worst:.1e}"))
}

/// `min t` over the simplex with `a x <= t` and an optional return floor.
fn oracle_min_max_score(a: &DMatrix<f64>, mu: &DVector<f64>, mu_bar: Option<f64>) -> Option<(f64, DVector<f64>)> {
    let n = mu.len();
    let r = a.nrows();
    let floor = usize::from(mu_bar.is_some());
    let mut a_in = DMatrix::zeros(n + r + floor, n + 1);
    let mut b_in = DVector::zeros(n + r + floor);
    for j in 0..n {
        a_in[(j, j)] = -1.0;
    }
    for i in 0..r {
        for j in 0..n {
            a_in[(n + i, j)] = a[(i, j)];
        }
        a_in[(n + i, n)] = -1.0;
    }
    if let Some(mb) = mu_bar {
        for j in 0..n {
            a_in[(n + r, j)] = -mu[j];
        }
        b_in[n + r] = -mb;
    }
    let mut a_eq = DMatrix::zeros(1, n + 1);
    for j in 0..n {
        a_eq[(0, j)] = 1.0;
    }
    let c = DVector::from_fn(n + 1, |j, _| if j == n { 1.0 } else { 0.0 });
    let (t, y) = oracle::lp_vertex_enumeration(&c, &a_eq, &DVector::from_element(1, 1.0), &a_in, &b_in)?;
    Some((t, y.rows(0, n).into_owned()))
}

/// Target-based weights computed from scratch: return range, score range
/// and the capped minimum-variance portfolio, all by enumeration, with the
/// score of `x` taken as `max_i a_i' x`.
fn oracle_profile_weights(sigma: &DMatrix<f64>, mu: &DVector<f64>, a: &DMatrix<f64>, alpha: f64) -> Option<DVector<f64>> {
    let n = mu.len();
    let (none_a, none_b) = no_caps(n);
    let score = |x: &DVector<f64>| (a * x).max();
    let gmv = oracle_min_variance(sigma, mu, None, &none_a, &none_b)?;
    let (_, x_score) = oracle_min_max_score(a, mu, None)?;
    let mu_max = mu.max();
    let mu_min = mu.dot(&gmv).max(mu.dot(&x_score)).min(mu_max);
    let mu_bar = if alpha == 0.0 { mu_min } else { mu_min + alpha * (mu_max - mu_min) };
    let (t, x_low) = oracle_min_max_score(a, mu, Some(mu_bar))?;
    let x_var = oracle_min_variance(sigma, mu, Some(mu_bar), &none_a, &none_b)?;
    let gamma_max = score(&x_var);
    let gamma_min = t.max(score(&x_low)).min(gamma_max);
    let gamma_bar = gamma_min + frontier::DEFAULT_GAMMA_FRACTION * (gamma_max - gamma_min);
    oracle_min_variance(sigma, mu, Some(mu_bar), a, &DVector::from_element(a.nrows(), gamma_bar))
}

fn criterion_7() -> Outcome {
    let settings = SolverSettings::default();
    let (l_in, h, m, n) = (150, 21, 3, 6);
    let mut roster = Vec::new();
    for k in [1, m] {
        for alpha in frontier::PROFILE_ALPHAS {
            roster.push(StrategySpec::KWorst {
                k,
                alpha,
                fraction: frontier::DEFAULT_GAMMA_FRACTION,
            });
        }
    }
    let config = BacktestConfig {
        in_sample_length: l_in,
        rebalance_period: h,
        solver: settings,
        ..BacktestConfig::new(roster.clone())
    };
    let (mut windows, mut worst) = (0, 0.0f64);
    for seed in 0..4 {
        let market = synth::generate(&SynthConfig {
            n_assets: n,
            n_dates: l_in + 5 * h + 1,
            n_agencies: m,
            seed: 700 + seed,
            ..SynthConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let report = backtest::run(&market.data, &market.scores, &config).map_err(|e| e.to_string())?;
        let t_ret = market.data.returns().nrows();
        for (w, q) in (l_in..t_ret).step_by(h).enumerate() {
            let est = estimate_moments(&market.data, q - l_in..q).map_err(|e| e.to_string())?;
            let panel = align_scores(&market.scores, market.data.dates()[q], market.data.asset_ids(), None, NormalizeOptions::default())
                .map_err(|e| e.to_string())?;
            // k = 1 caps every agency row; k = m caps the row of agency totals
            let per_agency = panel.s.clone();
            let total = DMatrix::from_fn(1, n, |_, j| panel.s.column(j).sum());
            for spec in &roster {
                let StrategySpec::KWorst { k, alpha, .. } = *spec else { unreachable!() };
                let a = if k == 1 { &per_agency } else { &total };
                let reference = oracle_profile_weights(&est.sigma, &est.mu, a, alpha)
                    .ok_or_else(|| format!("seed {seed} window {w}: oracle infeasible"))?;
                let run = report.strategy(&spec.label()).ok_or("missing strategy")?;
                worst = worst.max((&run.weights[w] - &reference).amax());
            }
            windows += 1;
        }
    }
    ensure(windows >= 20, || format!("only {windows} windows"))?;
    ensure(worst <= 1e-6, || format!("max weight difference {worst:e}"))?;
    Ok(format!("{windows} windows x 4 profiles for k = 1 and k = m, max weight difference {worst:.1e}"))
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1008);
    let series = |rng: &mut ChaCha8Rng, len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-0.03..0.035)).collect() };
    for case in 0..200 {
        let len = rng.random_range(10..=100);
        let r = series(&mut rng, len);
        let index = series(&mut rng, len);
        let wealth = backtest::wealth_path(&r);
        let diff: Vec<f64> = r.iter().zip(&index).map(|(a, b)| a - b).collect();
        let (alpha, _) = oracle::ols(&index, &r);
        let checks = [
            ("ExpRet", close(metrics::exp_ret(&r).unwrap(), oracle::mean(&r))),
            ("Vol", close(metrics::vol(&r).unwrap(), oracle::sample_std(&r))),
            ("Sharpe", close(metrics::sharpe(&r).unwrap(), oracle::mean(&r) / oracle::sample_std(&r))),
            ("MDD", metrics::max_drawdown(&wealth).unwrap() == oracle::max_drawdown_pairs(&wealth)),
            ("Ulcer", close(metrics::ulcer(&wealth).unwrap(), oracle::ulcer_rescan(&wealth))),
            ("Rachev10", close(metrics::rachev10(&r).unwrap(), oracle::rachev_by_sort(&r, 0.1))),
            ("AlphaJ", (metrics::jensen_alpha(&r, &index).unwrap() - alpha).abs() <= 1e-12),
            ("InfoRatio", close(metrics::info_ratio(&r, &index).unwrap(), oracle::mean(&diff) / oracle::sample_std(&diff))),
            ("VaR5", metrics::var5(&r).unwrap() == oracle::var_by_sort(&r, 0.05)),
            ("Omega", close(metrics::omega(&r).unwrap(), oracle::omega_by_parts(&r))),
        ];
        for (name, ok) in checks {
            ensure(ok, || format!("case {case}: {name} disagrees with its oracle"))?;
        }
        let q = rng.random_range(1..12);
        let n = rng.random_range(2..9);
        let history: Vec<Vec<f64>> = (0..q)
            .map(|_| {
                let raw: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.4) { 0.0 } else { rng.random_range(0.0..1.0) }).collect();
                let s: f64 = raw.iter().sum::<f64>().max(1e-300);
                raw.iter().map(|v| v / s).collect()
            })
            .collect();
        let weights: Vec<DVector<f64>> = history.iter().map(|h| DVector::from_row_slice(h)).collect();
        ensure(close(metrics::rebalance_turnover(&weights).unwrap(), oracle::turnover_loop(&history)), || format!("case {case}: Turn"))?;
        let count: usize = history.iter().map(|h| h.iter().filter(|v| **v > 1e-6).count()).sum();
        ensure(metrics::avg_holdings(&weights, 1e-6).unwrap() == count as f64 / q as f64, || format!("case {case}: ave #"))?;
    }
    let hand = [0.01, -0.02, 0.03, -0.01, 0.02, -0.01];
    ensure((metrics::omega(&hand).unwrap() - 1.5).abs() <= 1e-12, || "hand omega".into())?;
    for path in 0..1000 {
        let len = rng.random_range(1..200);
        let wealth = backtest::wealth_path(&series(&mut rng, len));
        ensure(metrics::max_drawdown(&wealth).unwrap() == oracle::max_drawdown_pairs(&wealth), || format!("MDD path {path}"))?;
    }
    let market = synth::generate(&SynthConfig {
        n_assets: 6,
        n_dates: 400,
        n_agencies: 2,
        seed: 1008,
        ..SynthConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let config = BacktestConfig {
        in_sample_length: 150,
        ..BacktestConfig::new(vec![StrategySpec::EqualWeighted])
    };
    let report = backtest::run(&market.data, &market.scores, &config).map_err(|e| e.to_string())?;
    let turn = MetricTable::from_report(&report, 63).row("EW").and_then(|r| r.turn);
    ensure(turn == Some(0.0), || format!("EW turnover {turn:?}"))?;
    Ok("200 series x 12 measures, 1000 MDD paths, EW turnover exactly 0".into())
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let data_dir = tmp.path().join("data");
    let mut config = RunConfig {
        prices: Some(data_dir.join("prices.csv")),
        scores: Some(data_dir.join("scores.csv")),
        agency_meta: Some(data_dir.join("agencies.csv")),
        index: Some(data_dir.join("index.csv")),
        synth: SynthConfig {
            n_assets: 50,
            n_dates: 1500,
            n_agencies: 4,
            seed: 2024,
            ..SynthConfig::default()
        },
        output_dir: data_dir.clone(),
        ..RunConfig::default()
    };
    config.backtest.ks = vec![1, 2, 3, 4];
    cmd_synth(&config).map_err(|e| e.to_string())?;
    let mut failures = Vec::new();
    for name in ["one", "two"] {
        config.output_dir = tmp.path().join(name);
        let outcome = cmd_backtest(&config).map_err(|e| e.to_string())?;
        failures.push(outcome.partial_failure);
    }
    let one = dir_bytes(&tmp.path().join("one"));
    let two = dir_bytes(&tmp.path().join("two"));
    let n_strategies = config.strategies().len();
    ensure(n_strategies == 24, || format!("roster has {n_strategies} strategies"))?;
    ensure(one.len() == 2 * n_strategies + 10, || format!("{} output files", one.len()))?;
    ensure(one == two, || "outputs differ between runs".into())?;
    within_time(start, Duration::from_secs(600))?;
    let diagnostics = String::from_utf8_lossy(&one.iter().find(|(n, _)| n == "diagnostics.csv").unwrap().1).into_owned();
    let carried = diagnostics.lines().skip(1).filter(|l| !l.contains(",solved,")).count();
    Ok(format!(
        "{} files byte-identical, {n_strategies} strategies, {carried} unsolved windows, {:.1?}",
        one.len(),
        start.elapsed()
    ))
}

fn criterion_10() -> Outcome {
    let (l_in, h) = (300, 21);
    let mut roster = vec![];
    for alpha in frontier::PROFILE_ALPHAS {
        roster.push(StrategySpec::MvEsg {
            agency: None,
            alpha,
            fraction: frontier::DEFAULT_GAMMA_FRACTION,
        });
        for k in [2, 3] {
            roster.push(StrategySpec::KWorst {
                k,
                alpha,
                fraction: frontier::DEFAULT_GAMMA_FRACTION,
            });
        }
    }
    let config = BacktestConfig {
        in_sample_length: l_in,
        rebalance_period: h,
        ..BacktestConfig::new(roster)
    };
    let mut wins = 0;
    for seed in 0..50 {
        let market = synth::generate(&SynthConfig {
            n_assets: 15,
            n_dates: 800,
            n_agencies: 4,
            disagreement: 0.8,
            seed: 5000 + seed,
            ..SynthConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let report = backtest::run(&market.data, &market.scores, &config).map_err(|e| e.to_string())?;
        let mean_sharpe = |kworst: bool| {
            let v: Vec<f64> = report
                .strategies
                .iter()
                .filter(|s| matches!(s.spec, StrategySpec::KWorst { .. }) == kworst)
                .filter_map(|s| metrics::sharpe(&s.returns))
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        if mean_sharpe(true) >= mean_sharpe(false) {
            wins += 1;
        }
    }
    let share = wins as f64 / 50.0;
    ensure(share >= 0.6, || format!("k-worst mean Sharpe >= MV-ESG in {wins} of 50 trials"))?;
    Ok(format!("k-worst mean Sharpe >= MV-ESG in {wins} of 50 trials"))
}

fn run(name: &str, f: fn() -> Outcome) -> Outcome {
    let start = Instant::now();
    let result = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into());
        Err(format!("panicked: {msg}"))
    });
    log_line(name, &result, start.elapsed());
    result
}

fn log_line(name: &str, result: &Outcome, t: Duration) {
    match result {
        Ok(msg) => println!("PASS  {name}: {msg} [{t:.1?}]"),
        Err(msg) => println!("FAIL  {name}: {msg} [{t:.1?}]"),
    }
}

#[test]
fn acceptance() {
    let blocking: [(&str, fn() -> Outcome); 9] = [
        ("criterion 1, k-worst duality", criterion_1),
        ("criterion 2, QP solver soundness", criterion_2),
        ("criterion 3, single-objective global optimality", criterion_3),
        ("criterion 4, frontier endpoint identities", criterion_4),
        ("criterion 5, frontier monotonicity", criterion_5),
        ("criterion 6, scalarization bridge", criterion_6),
        ("criterion 7, special-k identities", criterion_7),
        ("criterion 8, metrics oracle suite", criterion_8),
        ("criterion 9, end-to-end determinism", criterion_9),
    ];
    let failed: Vec<&str> = blocking
        .iter()
        .filter_map(|(name, f)| run(name, *f).err().map(|_| *name))
        .collect();
    let _ = run("criterion 10, qualitative replication (non-blocking)", criterion_10);
    assert!(failed.is_empty(), "failed: {failed:?}");
}
