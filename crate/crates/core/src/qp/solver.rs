use nalgebra::{DMatrix, DVector};

use super::kkt::{residuals, KktResiduals};
use super::{Bounds, QpProblem, QpSolution, SolveStatus, SolverSettings};
use crate::error::Result;

/// Solves a convex QP.
///
/// Invalid problem data (shapes, asymmetric or indefinite `P`) is an
/// error; infeasibility and non-convergence are reported through
/// [`QpSolution::status`].
pub fn solve(problem: &QpProblem, settings: &SolverSettings) -> Result<QpSolution> {
    problem.validate()?;
    Ok(solve_validated(problem, settings, true))
}

fn solve_validated(problem: &QpProblem, settings: &SolverSettings, allow_phase_one: bool) -> QpSolution {
    let scaled = Scaled::new(problem);
    let outcome = interior_point(&scaled, problem, settings);
    let best = outcome.best;
    if outcome.converged {
        return best.into_solution(problem, SolveStatus::Optimal, outcome.iterations);
    }
    if allow_phase_one {
        if let Some(cert) = phase_one(&scaled, problem, settings) {
            return cert.into_solution(problem, SolveStatus::Infeasible, outcome.iterations);
        }
    }
    best.into_solution(problem, SolveStatus::MaxIterations, outcome.iterations)
}

/// Row- and cost-scaled copy of the problem with bounds folded into `G y <= h`.
struct Scaled {
    p: DMatrix<f64>,
    q: DVector<f64>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
    g_rows: Vec<Vec<(usize, f64)>>,
    cost_scale: f64,
    eq_scale: Vec<f64>,
    in_scale: Vec<f64>,
    /// Number of leading rows of `g` that come from `A_in`.
    n_general: usize,
    /// Variable and side (`true` = upper) of each trailing bound row.
    bound_rows: Vec<(usize, bool)>,
}

impl Scaled {
    fn new(problem: &QpProblem) -> Self {
        let d = problem.dim();
        let cost_norm = problem.p.amax().max(problem.q.amax());
        let cost_scale = if cost_norm > 0.0 { 1.0 / cost_norm } else { 1.0 };

        let row_norm = |m: &DMatrix<f64>, i: usize| {
            let n = m.row(i).amax();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        };

        let e = problem.a_eq.nrows();
        let eq_scale: Vec<f64> = (0..e).map(|i| row_norm(&problem.a_eq, i)).collect();
        let a = DMatrix::from_fn(e, d, |i, j| problem.a_eq[(i, j)] / eq_scale[i]);
        let b = DVector::from_fn(e, |i, _| problem.b_eq[i] / eq_scale[i]);

        let mut bound_rows = Vec::new();
        if let Some(Bounds { lower, upper }) = &problem.bounds {
            for j in 0..d {
                if lower[j].is_finite() {
                    bound_rows.push((j, false));
                }
                if upper[j].is_finite() {
                    bound_rows.push((j, true));
                }
            }
        }
        let n_general = problem.a_in.nrows();
        let g_total = n_general + bound_rows.len();
        let mut in_scale = Vec::with_capacity(g_total);
        let mut g = DMatrix::zeros(g_total, d);
        let mut h = DVector::zeros(g_total);
        for i in 0..n_general {
            let s = row_norm(&problem.a_in, i);
            in_scale.push(s);
            for j in 0..d {
                g[(i, j)] = problem.a_in[(i, j)] / s;
            }
            h[i] = problem.b_in[i] / s;
        }
        for (r, &(j, upper)) in bound_rows.iter().enumerate() {
            let i = n_general + r;
            let bounds = problem.bounds.as_ref().expect("bound rows imply bounds");
            in_scale.push(1.0);
            if upper {
                g[(i, j)] = 1.0;
                h[i] = bounds.upper[j];
            } else {
                g[(i, j)] = -1.0;
                h[i] = -bounds.lower[j];
            }
        }
        let g_rows = (0..g_total)
            .map(|i| (0..d).filter_map(|j| (g[(i, j)] != 0.0).then(|| (j, g[(i, j)]))).collect())
            .collect();

        Self {
            p: &problem.p * cost_scale,
            q: &problem.q * cost_scale,
            a,
            b,
            g,
            h,
            g_rows,
            cost_scale,
            eq_scale,
            in_scale,
            n_general,
            bound_rows,
        }
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.q.len(), self.a.nrows(), self.g.nrows())
    }

    /// Maps scaled multipliers back to the caller's convention.
    fn unscale(&self, lam: &DVector<f64>, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let d = self.q.len();
        let dual_eq = DVector::from_fn(lam.len(), |i, _| lam[i] / (self.cost_scale * self.eq_scale[i]));
        let dual_in = DVector::from_fn(self.n_general, |i, _| z[i] / (self.cost_scale * self.in_scale[i]));
        let mut dual_bounds = DVector::zeros(d);
        for (r, &(j, upper)) in self.bound_rows.iter().enumerate() {
            let v = z[self.n_general + r] / self.cost_scale;
            if upper {
                dual_bounds[j] += v;
            } else {
                dual_bounds[j] -= v;
            }
        }
        (dual_eq, dual_in, dual_bounds)
    }

    fn candidate(
        &self,
        problem: &QpProblem,
        settings: &SolverSettings,
        y: &DVector<f64>,
        lam: &DVector<f64>,
        z: &DVector<f64>,
        polished: bool,
    ) -> Candidate {
        let (dual_eq, dual_in, dual_bounds) = self.unscale(lam, z);
        let res = residuals(problem, y, &dual_eq, &dual_in, &dual_bounds);
        Candidate {
            merit: merit(&res, settings),
            y: y.clone(),
            dual_eq,
            dual_in,
            dual_bounds,
            res,
            polished,
        }
    }
}

fn merit(res: &KktResiduals, settings: &SolverSettings) -> f64 {
    (res.primal / settings.tol_feas)
        .max(res.stationarity / settings.tol_opt)
        .max(res.dual / settings.tol_opt)
        .max(res.complementarity / settings.tol_opt)
}

#[derive(Debug, Clone)]
struct Candidate {
    y: DVector<f64>,
    dual_eq: DVector<f64>,
    dual_in: DVector<f64>,
    dual_bounds: DVector<f64>,
    res: KktResiduals,
    merit: f64,
    polished: bool,
}

impl Candidate {
    fn into_solution(self, problem: &QpProblem, status: SolveStatus, iterations: usize) -> QpSolution {
        QpSolution {
            objective: problem.objective(&self.y),
            y_star: self.y,
            dual_eq: self.dual_eq,
            dual_in: self.dual_in,
            dual_bounds: self.dual_bounds,
            status,
            kkt_residuals: self.res,
            iterations,
            polished: self.polished,
        }
    }
}

struct Outcome {
    best: Candidate,
    converged: bool,
    iterations: usize,
}

const REGULARIZATION: f64 = 1e-10;
const STALL_WINDOW: usize = 30;
const POLISH_MERIT: f64 = 1e4;
const MAX_POLISH_SWAPS: usize = 50;

fn interior_point(sc: &Scaled, problem: &QpProblem, settings: &SolverSettings) -> Outcome {
    let (d, e, g) = sc.dims();

    // Starting point: regularized least-squares fit of the constraints.
    let mut h0 = sc.p.clone();
    for row in &sc.g_rows {
        add_outer(&mut h0, row, 1.0);
    }
    let rhs_y = -&sc.q + sc.g.tr_mul(&sc.h);
    let (mut y, mut lam) = solve_reduced(&h0, &sc.a, &rhs_y, &sc.b)
        .unwrap_or_else(|| (DVector::zeros(d), DVector::zeros(e)));
    let gy = &sc.g * &y;
    let mut s = DVector::from_fn(g, |i, _| (sc.h[i] - gy[i]).max(1.0));
    let mut z = DVector::from_element(g, 1.0);

    let mut best = sc.candidate(problem, settings, &y, &lam, &z, false);
    let mut last_improvement = 0usize;
    let mut reference_merit = best.merit;
    let max_iter = settings.max_iterations.max(1);

    for iter in 0..max_iter {
        let current = sc.candidate(problem, settings, &y, &lam, &z, false);
        if current.merit < best.merit {
            best = current.clone();
        }
        if best.merit < 0.5 * reference_merit {
            reference_merit = best.merit;
            last_improvement = iter;
        }
        if current.merit <= 1.0 {
            let finished = match settings.polish.then(|| polish(sc, problem, settings, &y, &s, &z)).flatten() {
                Some(p) if p.merit <= current.merit => p,
                _ => current,
            };
            return Outcome {
                best: finished,
                converged: true,
                iterations: iter,
            };
        }
        if settings.polish && current.merit <= POLISH_MERIT {
            if let Some(p) = polish(sc, problem, settings, &y, &s, &z) {
                return Outcome {
                    best: p,
                    converged: true,
                    iterations: iter,
                };
            }
        }
        if iter - last_improvement > STALL_WINDOW || likely_infeasible(sc, &lam, &z) {
            // Feasible sets without interior stall the iterates; the active-set
            // corrections can still land on them.
            if settings.polish {
                if let Some(p) = polish(sc, problem, settings, &y, &s, &z) {
                    return Outcome {
                        best: p,
                        converged: true,
                        iterations: iter,
                    };
                }
            }
            return Outcome {
                best,
                converged: false,
                iterations: iter,
            };
        }

        let r_d = &sc.p * &y + &sc.q + sc.a.tr_mul(&lam) + sc.g.tr_mul(&z);
        let r_e = &sc.a * &y - &sc.b;
        let r_g = &sc.g * &y + &s - &sc.h;
        let mu = if g > 0 { s.dot(&z) / g as f64 } else { 0.0 };

        let w = z.component_div(&s);
        let mut hmat = sc.p.clone();
        for (i, row) in sc.g_rows.iter().enumerate() {
            add_outer(&mut hmat, row, w[i]);
        }
        let Some(newton) = NewtonSystem::factor(&hmat, &sc.a) else {
            return Outcome {
                best,
                converged: false,
                iterations: iter,
            };
        };

        let direction = |r_c: &DVector<f64>| {
            let t = (r_c + z.component_mul(&r_g)).component_div(&s);
            let rhs1 = -&r_d - sc.g.tr_mul(&t);
            let rhs2 = -&r_e;
            let (dy, dl) = newton.solve(&rhs1, &rhs2);
            let ds = -&r_g - &sc.g * &dy;
            let dz = (r_c - z.component_mul(&ds)).component_div(&s);
            (dy, dl, ds, dz)
        };

        let rc_aff = -s.component_mul(&z);
        let (dy_a, dl_a, ds_a, dz_a) = direction(&rc_aff);
        let (dy, dl, ds, dz) = if g > 0 {
            let alpha_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a)).min(1.0);
            let mu_aff = (&s + &ds_a * alpha_aff).dot(&(&z + &dz_a * alpha_aff)) / g as f64;
            let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };
            let rc = &rc_aff - ds_a.component_mul(&dz_a) + DVector::from_element(g, sigma * mu);
            direction(&rc)
        } else {
            (dy_a, dl_a, ds_a, dz_a)
        };

        let alpha = if g > 0 {
            let a_max = max_step(&s, &ds).min(max_step(&z, &dz));
            (0.99 * a_max).min(1.0)
        } else {
            1.0
        };
        y += &dy * alpha;
        lam += &dl * alpha;
        s += &ds * alpha;
        z += &dz * alpha;
        // keep strictly interior
        for v in s.iter_mut().chain(z.iter_mut()) {
            if *v < 1e-300 {
                *v = 1e-300;
            }
        }
    }

    Outcome {
        best,
        converged: false,
        iterations: max_iter,
    }
}

fn add_outer(h: &mut DMatrix<f64>, row: &[(usize, f64)], weight: f64) {
    for &(j, gj) in row {
        let wj = weight * gj;
        for &(k, gk) in row {
            h[(j, k)] += wj * gk;
        }
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

/// Large multipliers that nearly cancel with a negative dual objective
/// hint at a Farkas certificate; phase one decides.
fn likely_infeasible(sc: &Scaled, lam: &DVector<f64>, z: &DVector<f64>) -> bool {
    let norm = lam.amax().max(z.amax());
    if norm < 1e8 {
        return false;
    }
    let combo = sc.a.tr_mul(lam) + sc.g.tr_mul(z);
    let gap = sc.b.dot(lam) + sc.h.dot(z);
    combo.amax() <= 1e-6 * norm && gap < -1e-6 * norm
}

/// Factorization of the reduced Newton matrix `[[H + dI, A'], [A, -dI]]`.
struct NewtonSystem {
    exact: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    d: usize,
}

impl NewtonSystem {
    fn factor(h: &DMatrix<f64>, a: &DMatrix<f64>) -> Option<Self> {
        let d = h.nrows();
        let e = a.nrows();
        let mut exact = DMatrix::zeros(d + e, d + e);
        exact.view_mut((0, 0), (d, d)).copy_from(h);
        exact.view_mut((d, 0), (e, d)).copy_from(a);
        exact.view_mut((0, d), (d, e)).copy_from(&a.transpose());
        // The primal shift follows the magnitude of `h`, which grows like z/s near the
        // boundary; the equality shift must not, or the equality rows get drowned out.
        let scale = h.amax().max(1.0);
        let (mut reg_p, mut reg_d) = (REGULARIZATION * scale, REGULARIZATION);
        for _ in 0..6 {
            let mut k = exact.clone();
            for i in 0..d {
                k[(i, i)] += reg_p;
            }
            for i in d..d + e {
                k[(i, i)] -= reg_d;
            }
            let lu = k.lu();
            if lu.is_invertible() {
                return Some(Self { exact, lu, d });
            }
            reg_p *= 100.0;
            reg_d *= 100.0;
        }
        None
    }

    fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let d = self.d;
        let mut rhs = DVector::zeros(r1.len() + r2.len());
        rhs.rows_mut(0, d).copy_from(r1);
        rhs.rows_mut(d, r2.len()).copy_from(r2);
        let mut sol = self.lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(rhs.len()));
        for _ in 0..10 {
            let resid = &rhs - &self.exact * &sol;
            if resid.amax() <= 1e-15 * rhs.amax() {
                break;
            }
            if let Some(corr) = self.lu.solve(&resid) {
                sol += corr;
            }
        }
        (sol.rows(0, d).into_owned(), sol.rows(d, r2.len()).into_owned())
    }
}

fn solve_reduced(
    h: &DMatrix<f64>,
    a: &DMatrix<f64>,
    r1: &DVector<f64>,
    r2: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let mut hr = h.clone();
    for i in 0..hr.nrows() {
        hr[(i, i)] += 1e-8;
    }
    NewtonSystem::factor(&hr, a).map(|sys| sys.solve(r1, r2))
}

/// Solves the equality-constrained KKT system on the estimated active set.
fn polish(
    sc: &Scaled,
    problem: &QpProblem,
    settings: &SolverSettings,
    y: &DVector<f64>,
    s: &DVector<f64>,
    z: &DVector<f64>,
) -> Option<Candidate> {
    let (_, _, g) = sc.dims();
    let by_ratio: Vec<usize> = (0..g).filter(|&i| s[i] < z[i]).collect();
    let by_slack: Vec<usize> = (0..g).filter(|&i| s[i] < z[i] || s[i] < 1e-7).collect();
    let mut tried: Vec<Vec<usize>> = Vec::new();
    for start in [by_ratio, by_slack] {
        let mut active = start;
        // Primal-dual active-set corrections for degenerate guesses.
        for _ in 0..=g.min(MAX_POLISH_SWAPS) {
            if tried.contains(&active) {
                break;
            }
            tried.push(active.clone());
            let Some((cand, z_active, slack)) = polish_on(sc, problem, settings, &active, y) else {
                break;
            };
            if cand.merit <= 1.0 {
                return Some(cand);
            }
            let worst_dual = z_active
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .filter(|(_, v)| **v < -settings.tol_opt * sc.cost_scale);
            let worst_primal = (0..g)
                .filter(|i| !active.contains(i))
                .max_by(|&a, &b| slack[a].total_cmp(&slack[b]))
                .filter(|&i| slack[i] > settings.tol_feas);
            if let Some(i) = worst_primal {
                let pos = active.partition_point(|&a| a < i);
                active.insert(pos, i);
            } else if let Some((r, _)) = worst_dual {
                active.remove(r);
            } else {
                break;
            }
        }
    }
    None
}

fn polish_on(
    sc: &Scaled,
    problem: &QpProblem,
    settings: &SolverSettings,
    active: &[usize],
    y_start: &DVector<f64>,
) -> Option<(Candidate, DVector<f64>, DVector<f64>)> {
    let (d, e, g) = sc.dims();
    let na = active.len();
    let size = d + e + na;
    let mut exact = DMatrix::zeros(size, size);
    exact.view_mut((0, 0), (d, d)).copy_from(&sc.p);
    for i in 0..e {
        for j in 0..d {
            exact[(d + i, j)] = sc.a[(i, j)];
            exact[(j, d + i)] = sc.a[(i, j)];
        }
    }
    for (r, &i) in active.iter().enumerate() {
        for &(j, v) in &sc.g_rows[i] {
            exact[(d + e + r, j)] = v;
            exact[(j, d + e + r)] = v;
        }
    }
    let mut rhs = DVector::zeros(size);
    rhs.rows_mut(0, d).copy_from(&(-&sc.q));
    rhs.rows_mut(d, e).copy_from(&sc.b);
    for (r, &i) in active.iter().enumerate() {
        rhs[d + e + r] = sc.h[i];
    }

    let delta = 1e-9;
    let mut k = exact.clone();
    for i in 0..size {
        k[(i, i)] += if i < d { delta } else { -delta };
    }
    let lu = k.lu();
    // Proximal right-hand side keeps free directions near the interior iterate.
    let mut prox = rhs.clone();
    for i in 0..d {
        prox[i] += delta * y_start[i];
    }
    let mut sol = lu.solve(&prox)?;
    for _ in 0..10 {
        let resid = &rhs - &exact * &sol;
        if resid.amax() < 1e-15 {
            break;
        }
        sol += lu.solve(&resid)?;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }

    let y = sol.rows(0, d).into_owned();
    let lam = sol.rows(d, e).into_owned();
    let mut z = DVector::zeros(g);
    for (r, &i) in active.iter().enumerate() {
        z[i] = sol[d + e + r];
    }
    let z_active = DVector::from_fn(na, |r, _| sol[d + e + r]);
    let slack = &sc.g * &y - &sc.h;
    Some((sc.candidate(problem, settings, &y, &lam, &z, true), z_active, slack))
}

/// Minimizes the largest scaled constraint violation. Returns the
/// least-violation point and its Farkas multipliers when the problem is
/// infeasible beyond `tol_feas`.
fn phase_one(sc: &Scaled, problem: &QpProblem, settings: &SolverSettings) -> Option<Candidate> {
    let (d, e, g) = sc.dims();
    let dim = d + 1;
    let rows = 2 * e + g;
    let mut a_in = DMatrix::zeros(rows, dim);
    let mut b_in = DVector::zeros(rows);
    for i in 0..e {
        for j in 0..d {
            a_in[(2 * i, j)] = sc.a[(i, j)];
            a_in[(2 * i + 1, j)] = -sc.a[(i, j)];
        }
        a_in[(2 * i, d)] = -1.0;
        a_in[(2 * i + 1, d)] = -1.0;
        b_in[2 * i] = sc.b[i];
        b_in[2 * i + 1] = -sc.b[i];
    }
    for i in 0..g {
        for j in 0..d {
            a_in[(2 * e + i, j)] = sc.g[(i, j)];
        }
        a_in[(2 * e + i, d)] = -1.0;
        b_in[2 * e + i] = sc.h[i];
    }
    let mut q = DVector::zeros(dim);
    q[d] = 1.0;
    let mut lower = vec![f64::NEG_INFINITY; dim];
    lower[d] = 0.0;
    let aux = QpProblem::new(DMatrix::zeros(dim, dim), q)
        .with_inequalities(a_in, b_in)
        .with_bounds(Bounds {
            lower,
            upper: vec![f64::INFINITY; dim],
        });
    let sol = solve_validated(&aux, settings, false);

    let y = sol.y_star.rows(0, d).into_owned();
    let violation = residuals(
        problem,
        &y,
        &DVector::zeros(0),
        &DVector::zeros(0),
        &DVector::zeros(0),
    )
    .primal;
    if violation <= settings.tol_feas {
        return None;
    }
    // Phase-one multipliers on the scaled rows are a certificate for the
    // scaled system; undo the row scaling only (no cost scaling applies).
    let lam = DVector::from_fn(e, |i, _| sol.dual_in[2 * i] - sol.dual_in[2 * i + 1]);
    let zs = DVector::from_fn(g, |i, _| sol.dual_in[2 * e + i]);
    let dual_eq = DVector::from_fn(e, |i, _| lam[i] / sc.eq_scale[i]);
    let dual_in = DVector::from_fn(sc.n_general, |i, _| zs[i] / sc.in_scale[i]);
    let mut dual_bounds = DVector::zeros(d);
    for (r, &(j, upper)) in sc.bound_rows.iter().enumerate() {
        let v = zs[sc.n_general + r];
        if upper {
            dual_bounds[j] += v;
        } else {
            dual_bounds[j] -= v;
        }
    }
    let res = residuals(problem, &y, &dual_eq, &dual_in, &dual_bounds);
    Some(Candidate {
        merit: merit(&res, settings),
        y,
        dual_eq,
        dual_in,
        dual_bounds,
        res,
        polished: false,
    })
}
