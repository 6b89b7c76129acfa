//! Slow, obviously-correct reference computations for tests.
//!
//! Nothing here shares code with `ksum-core`; each routine follows the
//! textbook definition by brute force.

use nalgebra::{DMatrix, DVector};

/// Dense QP data for the enumeration oracles. Inequalities read `a_in y <= b_in`
/// and must include any variable bounds.
#[derive(Debug, Clone)]
pub struct DenseQp {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
}

impl DenseQp {
    pub fn objective(&self, y: &DVector<f64>) -> f64 {
        0.5 * y.dot(&(&self.p * y)) + self.q.dot(y)
    }

    /// Minimization over the probability simplex with optional extra rows.
    pub fn on_simplex(p: DMatrix<f64>, q: DVector<f64>, extra_a: DMatrix<f64>, extra_b: DVector<f64>) -> Self {
        let d = q.len();
        let g = extra_a.nrows();
        let mut a_in = DMatrix::zeros(g + d, d);
        let mut b_in = DVector::zeros(g + d);
        for i in 0..g {
            for j in 0..d {
                a_in[(i, j)] = extra_a[(i, j)];
            }
            b_in[i] = extra_b[i];
        }
        for j in 0..d {
            a_in[(g + j, j)] = -1.0;
        }
        Self {
            p,
            q,
            a_eq: DMatrix::from_element(1, d, 1.0),
            b_eq: DVector::from_element(1, 1.0),
            a_in,
            b_in,
        }
    }
}

fn subsets(g: usize, max_size: usize) -> impl Iterator<Item = Vec<usize>> {
    (0u64..(1u64 << g))
        .filter(move |mask| (mask.count_ones() as usize) <= max_size)
        .map(move |mask| (0..g).filter(|i| mask & (1 << i) != 0).collect())
}

/// Strictly convex QP by active-set enumeration: for every candidate active
/// set solve the KKT equalities, keep the primal-dual feasible point.
pub fn qp_active_set_enumeration(qp: &DenseQp) -> Option<DVector<f64>> {
    let d = qp.q.len();
    let e = qp.a_eq.nrows();
    let g = qp.a_in.nrows();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for active in subsets(g, d) {
        let k = e + active.len();
        let size = d + k;
        let mut m = DMatrix::zeros(size, size);
        let mut rhs = DVector::zeros(size);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = qp.p[(i, j)];
            }
            rhs[i] = -qp.q[i];
        }
        for r in 0..e {
            for j in 0..d {
                m[(d + r, j)] = qp.a_eq[(r, j)];
                m[(j, d + r)] = qp.a_eq[(r, j)];
            }
            rhs[d + r] = qp.b_eq[r];
        }
        for (r, &i) in active.iter().enumerate() {
            for j in 0..d {
                m[(d + e + r, j)] = qp.a_in[(i, j)];
                m[(j, d + e + r)] = qp.a_in[(i, j)];
            }
            rhs[d + e + r] = qp.b_in[i];
        }
        let Some(sol) = m.lu().solve(&rhs) else { continue };
        if sol.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let y = sol.rows(0, d).into_owned();
        let primal_ok = (0..g).all(|i| qp.a_in.row(i).transpose().dot(&y) <= qp.b_in[i] + 1e-9)
            && (0..e).all(|i| (qp.a_eq.row(i).transpose().dot(&y) - qp.b_eq[i]).abs() <= 1e-9);
        let dual_ok = (0..active.len()).all(|r| sol[d + e + r] >= -1e-9);
        if primal_ok && dual_ok {
            let f = qp.objective(&y);
            if best.as_ref().map_or(true, |(bf, _)| f < *bf) {
                best = Some((f, y));
            }
        }
    }
    best.map(|(_, y)| y)
}

/// Linear program `min c'y` by enumerating basic solutions.
pub fn lp_vertex_enumeration(c: &DVector<f64>, a_eq: &DMatrix<f64>, b_eq: &DVector<f64>, a_in: &DMatrix<f64>, b_in: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
    let d = c.len();
    let e = a_eq.nrows();
    let g = a_in.nrows();
    let need = d.checked_sub(e)?;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for active in subsets(g, need).filter(|s| s.len() == need) {
        let mut m = DMatrix::zeros(d, d);
        let mut rhs = DVector::zeros(d);
        for r in 0..e {
            for j in 0..d {
                m[(r, j)] = a_eq[(r, j)];
            }
            rhs[r] = b_eq[r];
        }
        for (r, &i) in active.iter().enumerate() {
            for j in 0..d {
                m[(e + r, j)] = a_in[(i, j)];
            }
            rhs[e + r] = b_in[i];
        }
        let Some(y) = m.lu().solve(&rhs) else { continue };
        if y.iter().any(|v| !v.is_finite()) {
            continue;
        }
        let feasible = (0..g).all(|i| a_in.row(i).transpose().dot(&y) <= b_in[i] + 1e-9);
        if feasible {
            let f = c.dot(&y);
            if best.as_ref().map_or(true, |(bf, _)| f < *bf) {
                best = Some((f, y));
            }
        }
    }
    best
}

/// All points of the 2-simplex on a lattice of the given step.
pub fn simplex_grid_3(step: f64) -> Vec<[f64; 3]> {
    let n = (1.0 / step).round() as usize;
    let mut out = Vec::with_capacity((n + 1) * (n + 2) / 2);
    for i in 0..=n {
        for j in 0..=(n - i) {
            let a = i as f64 / n as f64;
            let b = j as f64 / n as f64;
            out.push([a, b, (1.0 - a - b).max(0.0)]);
        }
    }
    out
}

/// Sum of the `k` largest values, by full sort.
pub fn top_k_sum(values: &[f64], k: usize) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v.iter().take(k).sum()
}

/// Sum of `top_k` over all size-`k` subsets, by enumeration of subsets.
pub fn top_k_sum_by_subsets(values: &[f64], k: usize) -> f64 {
    let m = values.len();
    subsets(m, k)
        .filter(|s| s.len() == k)
        .map(|s| s.iter().map(|&i| values[i]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Largest relative peak-to-trough loss over all ordered pairs (as a value <= 0).
pub fn max_drawdown_pairs(wealth: &[f64]) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..wealth.len() {
        for j in i..wealth.len() {
            worst = worst.min((wealth[j] - wealth[i]) / wealth[i]);
        }
    }
    worst
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (denominator `n - 1`).
pub fn sample_std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

/// Ordinary least-squares fit `y = a + b x` via the normal equations.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len();
    let design = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { x[i] });
    let target = DVector::from_column_slice(y);
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * target;
    let coef = xtx.lu().solve(&xty).expect("regressor has variance");
    (coef[0], coef[1])
}

/// Pearson correlation written out term by term.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let ma = mean(a);
    let mb = mean(b);
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..a.len() {
        num += (a[i] - ma) * (b[i] - mb);
        da += (a[i] - ma).powi(2);
        db += (b[i] - mb).powi(2);
    }
    num / (da * db).sqrt()
}

/// Root mean square of `(W_t - peak_t) / peak_t`, peaks found by rescanning the prefix.
pub fn ulcer_rescan(wealth: &[f64]) -> f64 {
    let mut ss = 0.0;
    for t in 0..wealth.len() {
        let peak = wealth[..=t].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        ss += ((wealth[t] - peak) / peak).powi(2);
    }
    (ss / wealth.len() as f64).sqrt()
}

/// Best-tail mean over worst-tail mean magnitude, `ceil(eps L)` observations per tail.
pub fn rachev_by_sort(returns: &[f64], eps: f64) -> f64 {
    let mut v = returns.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail = (eps * v.len() as f64).ceil() as usize;
    let worst = mean(&v[..tail]);
    let best = mean(&v[v.len() - tail..]);
    best / -worst
}

/// The `(floor(eps L) + 1)`-th largest loss.
pub fn var_by_sort(returns: &[f64], eps: f64) -> f64 {
    let mut losses: Vec<f64> = returns.iter().map(|r| -r).collect();
    losses.sort_by(|a, b| b.partial_cmp(a).unwrap());
    losses[(eps * returns.len() as f64).floor() as usize]
}

/// Average gain over average loss magnitude at threshold zero.
pub fn omega_by_parts(returns: &[f64]) -> f64 {
    let mut gain = 0.0;
    let mut loss = 0.0;
    for r in returns {
        if *r > 0.0 {
            gain += r;
        } else {
            loss -= r;
        }
    }
    gain / loss
}

/// Turnover over rebalances `q = 1..Q` with the initial portfolio equal to the first.
pub fn turnover_loop(weights: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for q in 0..weights.len() {
        let prev = if q == 0 { &weights[0] } else { &weights[q - 1] };
        for j in 0..weights[q].len() {
            total += (weights[q][j] - prev[j]).abs();
        }
    }
    total / weights.len() as f64
}
