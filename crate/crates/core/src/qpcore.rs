//! Dense solvers for fixed-parameter problems.
//!
//! [`solve_qp`] is a primal active-set method for strictly convex QPs
//! `min 1/2 z'Hz + f'z  s.t.  Gz <= b`, started from a feasible point found
//! by a phase-1 LP. [`solve_lp`] is a two-phase tableau simplex used both
//! for that phase 1 and for the polyhedral queries of the explicit solver.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{dim_check, Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    /// Iteration cap reached.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    /// One multiplier per inequality row, zero outside the active set.
    pub lambda: DVector<f64>,
    /// Sorted indices of the final working set.
    pub active_set: Vec<usize>,
    pub status: QpStatus,
    pub iterations: usize,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    /// Relative tolerance for feasibility and multiplier signs.
    pub tol: f64,
    /// Defaults to `50 * (decisions + constraints)`.
    pub max_iter: Option<usize>,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: None }
    }
}

/// Solves `min 1/2 z'Hz + f'z  s.t.  Gz <= b` for positive definite `H`.
pub fn solve_qp(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    g: &DMatrix<f64>,
    b: &DVector<f64>,
) -> Result<QpSolution> {
    solve_qp_with(h, f, g, b, &QpOptions::default())
}

pub fn solve_qp_with(
    h: &DMatrix<f64>,
    f: &DVector<f64>,
    g: &DMatrix<f64>,
    b: &DVector<f64>,
    opts: &QpOptions,
) -> Result<QpSolution> {
    let n = h.nrows();
    let q = g.nrows();
    dim_check(h.is_square() && f.len() == n, || {
        format!("H is {}x{} and f has length {}", h.nrows(), h.ncols(), f.len())
    })?;
    dim_check(g.ncols() == n && b.len() == q, || {
        format!("G is {}x{} and b has length {}", g.nrows(), g.ncols(), b.len())
    })?;
    if !linalg::is_positive_definite(h, None) {
        return Err(Error::NotStrictlyConvex("QP Hessian is not positive definite".into()));
    }
    let chol = Cholesky::new(linalg::symmetrize(h))
        .ok_or_else(|| Error::NotStrictlyConvex("Cholesky factorisation failed".into()))?;
    let scale = 1.0 + linalg::max_abs_vec(b) + linalg::max_abs_vec(f);
    let feas_tol = opts.tol * scale;
    let max_iter = opts.max_iter.unwrap_or(50 * (n + q).max(1));

    let z_free = -chol.solve(f);
    let violated = |z: &DVector<f64>| (0..q).any(|i| g.row(i).dot(&z.transpose()) > b[i] + feas_tol);
    if !violated(&z_free) {
        return Ok(QpSolution {
            z: z_free,
            lambda: DVector::zeros(q),
            active_set: Vec::new(),
            status: QpStatus::Optimal,
            iterations: 0,
        });
    }

    let mut z = match phase_one(g, b, feas_tol) {
        Some(z) => z,
        None => {
            return Ok(QpSolution {
                z: DVector::zeros(n),
                lambda: DVector::zeros(q),
                active_set: Vec::new(),
                status: QpStatus::Infeasible,
                iterations: 0,
            })
        }
    };

    let mut working: Vec<usize> = Vec::new();
    for it in 0..max_iter {
        let grad = h * &z + f;
        let (p, lam) = match eqp_step(&chol, g, &working, &grad) {
            Some(s) => s,
            None => break,
        };
        let step_scale = 1.0 + z.norm();
        if p.norm() <= 1e-13 * step_scale {
            // Stationary on the working set: drop the most negative multiplier.
            let lam_tol = opts.tol * (1.0 + grad.norm());
            let mut worst: Option<(usize, f64)> = None;
            for (k, &l) in lam.iter().enumerate() {
                if l < -lam_tol && worst.is_none_or(|(_, w)| l < w) {
                    worst = Some((k, l));
                }
            }
            match worst {
                None => return Ok(finish(&chol, g, b, f, working, it + 1)),
                Some((k, _)) => {
                    working.remove(k);
                }
            }
            continue;
        }

        let mut alpha = 1.0;
        let mut blocking = None;
        for i in 0..q {
            if working.contains(&i) {
                continue;
            }
            let gp = g.row(i).dot(&p.transpose());
            if gp > 1e-14 * (1.0 + p.norm()) {
                let slack = (b[i] - g.row(i).dot(&z.transpose())).max(0.0);
                let t = slack / gp;
                if t < alpha {
                    alpha = t;
                    blocking = Some(i);
                }
            }
        }
        z += &p * alpha;
        if let Some(i) = blocking {
            working.push(i);
            working.sort_unstable();
        }
    }
    let mut out = finish(&chol, g, b, f, working, max_iter);
    out.status = QpStatus::Degenerate;
    Ok(out)
}

/// Equality-constrained step on the working set. Returns the step and the
/// working-set multipliers, or `None` if the working rows are dependent.
fn eqp_step(
    chol: &Cholesky<f64, Dyn>,
    g: &DMatrix<f64>,
    working: &[usize],
    grad: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let hinv_g = chol.solve(grad);
    if working.is_empty() {
        return Some((-hinv_g, DVector::zeros(0)));
    }
    let gw = g.select_rows(working);
    let hinv_gwt = chol.solve(&gw.transpose());
    let s = &gw * &hinv_gwt;
    let lam = -s.lu().solve(&(&gw * &hinv_g))?;
    let p = -(hinv_g + hinv_gwt * &lam);
    Some((p, lam))
}

/// Re-solves the KKT system on the final working set so the returned point
/// sits exactly on its active constraints.
fn finish(
    chol: &Cholesky<f64, Dyn>,
    g: &DMatrix<f64>,
    b: &DVector<f64>,
    f: &DVector<f64>,
    working: Vec<usize>,
    iterations: usize,
) -> QpSolution {
    let q = g.nrows();
    let mut lambda = DVector::zeros(q);
    let z = if working.is_empty() {
        -chol.solve(f)
    } else {
        let gw = g.select_rows(&working);
        let bw = DVector::from_iterator(working.len(), working.iter().map(|&i| b[i]));
        let hinv_gwt = chol.solve(&gw.transpose());
        let s = &gw * &hinv_gwt;
        let rhs = -(&gw * chol.solve(f) + bw);
        match s.lu().solve(&rhs) {
            Some(lam) => {
                for (k, &i) in working.iter().enumerate() {
                    lambda[i] = lam[k];
                }
                -chol.solve(&(f + gw.transpose() * lam))
            }
            None => -chol.solve(f),
        }
    };
    QpSolution { z, lambda, active_set: working, status: QpStatus::Optimal, iterations }
}

/// Feasible point of `Gz <= b`, or `None` if the set is empty.
fn phase_one(g: &DMatrix<f64>, b: &DVector<f64>, feas_tol: f64) -> Option<DVector<f64>> {
    // min t  s.t.  Gz - t <= b,  -t <= 0
    let (q, n) = g.shape();
    let mut a = DMatrix::zeros(q + 1, n + 1);
    a.view_mut((0, 0), (q, n)).copy_from(g);
    for i in 0..q {
        a[(i, n)] = -1.0;
    }
    a[(q, n)] = -1.0;
    let mut rhs = DVector::zeros(q + 1);
    rhs.rows_mut(0, q).copy_from(b);
    let mut c = DVector::zeros(n + 1);
    c[n] = 1.0;
    let sol = solve_lp(&c, &a, &rhs);
    if sol.status != LpStatus::Optimal || sol.value > feas_tol {
        return None;
    }
    Some(sol.x.rows(0, n).into_owned())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration cap reached even with Bland's rule.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: DVector<f64>,
    pub value: f64,
}

/// Minimises `c'x` over `Gx <= d` with `x` free.
pub fn solve_lp(c: &DVector<f64>, g: &DMatrix<f64>, d: &DVector<f64>) -> LpSolution {
    Simplex::new(c, g, d).solve()
}

const PIVOT_TOL: f64 = 1e-11;
const DEGENERATE_SWITCH: usize = 30;

/// Tableau over `[x+ | x- | slack | artificial]` with one row per constraint.
struct Simplex<'a> {
    c: &'a DVector<f64>,
    g: &'a DMatrix<f64>,
    d: &'a DVector<f64>,
    rows: usize,
    n: usize,
    tab: DMatrix<f64>,
    basis: Vec<usize>,
    n_art: usize,
}

impl<'a> Simplex<'a> {
    fn new(c: &'a DVector<f64>, g: &'a DMatrix<f64>, d: &'a DVector<f64>) -> Self {
        let (rows, n) = g.shape();
        let n_art = d.iter().filter(|&&v| v < 0.0).count();
        let cols = 2 * n + rows + n_art;
        let mut tab = DMatrix::zeros(rows, cols + 1);
        let mut basis = vec![0; rows];
        let mut art = 0;
        for i in 0..rows {
            let sign = if d[i] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                tab[(i, j)] = sign * g[(i, j)];
                tab[(i, n + j)] = -sign * g[(i, j)];
            }
            tab[(i, 2 * n + i)] = sign;
            tab[(i, cols)] = sign * d[i];
            if d[i] < 0.0 {
                let col = 2 * n + rows + art;
                tab[(i, col)] = 1.0;
                basis[i] = col;
                art += 1;
            } else {
                basis[i] = 2 * n + i;
            }
        }
        Self { c, g, d, rows, n, tab, basis, n_art }
    }

    fn n_cols(&self) -> usize {
        self.tab.ncols() - 1
    }

    fn solve(mut self) -> LpSolution {
        let n = self.n;
        let real_cols = 2 * n + self.rows;
        let fail = |status| LpSolution { status, x: DVector::zeros(n), value: f64::NAN };

        if self.n_art > 0 {
            let mut cost = DVector::zeros(self.n_cols());
            for j in real_cols..self.n_cols() {
                cost[j] = 1.0;
            }
            match self.optimize(&cost, self.n_cols()) {
                LpStatus::Optimal => {}
                LpStatus::Unbounded => return fail(LpStatus::Infeasible),
                s => return fail(s),
            }
            let infeas: f64 = (0..self.rows)
                .filter(|&i| self.basis[i] >= real_cols)
                .map(|i| self.tab[(i, self.n_cols())])
                .sum();
            let scale = 1.0 + linalg::max_abs_vec(self.d);
            if infeas > 1e-9 * scale {
                return fail(LpStatus::Infeasible);
            }
            self.drive_out_artificials(real_cols);
        }

        let mut cost = DVector::zeros(self.n_cols());
        for j in 0..n {
            cost[j] = self.c[j];
            cost[n + j] = -self.c[j];
        }
        match self.optimize(&cost, real_cols) {
            LpStatus::Optimal => {}
            s => return fail(s),
        }
        let x = self.extract();
        let value = self.c.dot(&x);
        LpSolution { status: LpStatus::Optimal, x, value }
    }

    /// Runs simplex iterations for `cost`, entering only columns `< allowed`.
    fn optimize(&mut self, cost: &DVector<f64>, allowed: usize) -> LpStatus {
        let cols = self.n_cols();
        let cap = 50 * (self.rows + cols).max(10);
        let cost_scale = 1.0 + linalg::max_abs_vec(cost);
        let mut degenerate_run = 0;
        for _ in 0..cap {
            // Reduced costs from the current basis.
            let mut reduced = cost.rows(0, cols).into_owned();
            for i in 0..self.rows {
                let cb = cost[self.basis[i]];
                if cb != 0.0 {
                    for j in 0..cols {
                        reduced[j] -= cb * self.tab[(i, j)];
                    }
                }
            }
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            let tol = 1e-11 * cost_scale;
            let mut enter = None;
            let mut best = -tol;
            for j in 0..allowed {
                if self.basis.contains(&j) {
                    continue;
                }
                if reduced[j] < -tol {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if reduced[j] < best {
                        best = reduced[j];
                        enter = Some(j);
                    }
                }
            }
            let Some(j) = enter else {
                return LpStatus::Optimal;
            };

            let rhs_col = cols;
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.tab[(i, j)];
                if a > PIVOT_TOL {
                    let ratio = self.tab[(i, rhs_col)].max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some((k, r)) => {
                            ratio < r - 1e-14 || (ratio <= r + 1e-14 && self.basis[i] < self.basis[k])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return LpStatus::Unbounded;
            };
            if ratio <= 1e-14 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, j);
        }
        LpStatus::Degenerate
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let piv = self.tab[(r, j)];
        let width = self.tab.ncols();
        for k in 0..width {
            self.tab[(r, k)] /= piv;
        }
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let factor = self.tab[(i, j)];
            if factor != 0.0 {
                for k in 0..width {
                    let v = self.tab[(r, k)];
                    self.tab[(i, k)] -= factor * v;
                }
            }
        }
        self.basis[r] = j;
    }

    fn drive_out_artificials(&mut self, real_cols: usize) {
        for i in 0..self.rows {
            if self.basis[i] < real_cols {
                continue;
            }
            if let Some(j) = (0..real_cols)
                .filter(|j| !self.basis.contains(j))
                .find(|&j| self.tab[(i, j)].abs() > 1e-9)
            {
                self.pivot(i, j);
            }
            // Otherwise the row is redundant; its artificial stays basic at zero
            // and phase 2 never enters artificial columns.
        }
    }

    /// Primal point from the final basis, refined by solving the basic
    /// system against the original data.
    fn extract(&self) -> DVector<f64> {
        let n = self.n;
        let cols = self.n_cols();
        let mut full = DVector::zeros(cols);
        for i in 0..self.rows {
            full[self.basis[i]] = self.tab[(i, cols)];
        }
        let x: DVector<f64> = DVector::from_fn(n, |j, _| full[j] - full[n + j]);
        self.refine(x)
    }

    fn refine(&self, x: DVector<f64>) -> DVector<f64> {
        // Constraints whose slack is nonbasic are tight at the vertex; if they
        // pin x down, re-solve them directly to shed tableau round-off.
        let n = self.n;
        let tight: Vec<usize> = (0..self.rows)
            .filter(|&i| !self.basis.contains(&(2 * n + i)))
            .collect();
        if tight.len() < n || n == 0 {
            return x;
        }
        let gt = self.g.select_rows(&tight);
        let dt = DVector::from_iterator(tight.len(), tight.iter().map(|&i| self.d[i]));
        if linalg::rank(&gt, None) < n {
            return x;
        }
        let refined = linalg::pseudoinverse(&gt, None) * &dt;
        let scale = 1.0 + x.norm();
        if (&refined - &x).norm() <= 1e-6 * scale {
            refined
        } else {
            x
        }
    }
}

/// Largest ball `{x : ||x - center|| <= radius}` inside `Ax <= b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevBall {
    pub center: DVector<f64>,
    pub radius: f64,
}

/// Chebyshev ball of `{x : Ax <= b}` with the radius capped at `radius_cap`.
/// Returns `None` when the set is empty.
pub fn chebyshev_ball(a: &DMatrix<f64>, b: &DVector<f64>, radius_cap: f64) -> Option<ChebyshevBall> {
    let (q, n) = a.shape();
    let mut lp_a = DMatrix::zeros(q + 1, n + 1);
    lp_a.view_mut((0, 0), (q, n)).copy_from(a);
    for i in 0..q {
        lp_a[(i, n)] = a.row(i).norm();
    }
    lp_a[(q, n)] = 1.0;
    let mut lp_b = DVector::zeros(q + 1);
    lp_b.rows_mut(0, q).copy_from(b);
    lp_b[q] = radius_cap;
    let mut c = DVector::zeros(n + 1);
    c[n] = -1.0;
    let sol = solve_lp(&c, &lp_a, &lp_b);
    match sol.status {
        LpStatus::Optimal => Some(ChebyshevBall {
            center: sol.x.rows(0, n).into_owned(),
            radius: sol.x[n],
        }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m(r: usize, c: usize, xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, xs)
    }
    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn unconstrained_minimum() {
        let s = solve_qp(&DMatrix::identity(2, 2), &v(&[-1.0, 0.0]), &DMatrix::zeros(0, 2), &v(&[]))
            .unwrap();
        assert!(s.is_optimal());
        assert_relative_eq!(s.z, v(&[1.0, 0.0]));
    }

    #[test]
    fn rejects_indefinite_hessian() {
        let h = m(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(solve_qp(&h, &v(&[0.0, 0.0]), &DMatrix::zeros(0, 2), &v(&[])).is_err());
    }

    #[test]
    fn single_active_bound() {
        // min 1/2 |z|^2 - 2 z1  s.t.  z1 <= 1
        let s = solve_qp(&DMatrix::identity(2, 2), &v(&[-2.0, 0.0]), &m(1, 2, &[1.0, 0.0]), &v(&[1.0]))
            .unwrap();
        assert_relative_eq!(s.z, v(&[1.0, 0.0]), epsilon = 1e-12);
        assert_relative_eq!(s.lambda[0], 1.0, epsilon = 1e-12);
        assert_eq!(s.active_set, vec![0]);
    }

    #[test]
    fn infeasible_qp() {
        let g = m(2, 1, &[1.0, -1.0]);
        let s = solve_qp(&DMatrix::identity(1, 1), &v(&[0.0]), &g, &v(&[-1.0, -1.0])).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
    }

    #[test]
    fn lp_box() {
        let g = m(2, 1, &[1.0, -1.0]);
        let s = solve_lp(&v(&[1.0]), &g, &v(&[1.0, 1.0]));
        assert_eq!(s.status, LpStatus::Optimal);
        assert_relative_eq!(s.value, -1.0);
        assert_relative_eq!(s.x[0], -1.0);
    }

    #[test]
    fn lp_empty_box() {
        let g = m(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let s = solve_lp(&v(&[0.0, 0.0]), &g, &v(&[-1.0, -1.0]));
        assert_eq!(s.status, LpStatus::Infeasible);
    }

    #[test]
    fn lp_unbounded() {
        let g = m(1, 1, &[1.0]);
        assert_eq!(solve_lp(&v(&[1.0]), &g, &v(&[1.0])).status, LpStatus::Unbounded);
    }

    #[test]
    fn chebyshev_of_unit_square() {
        let a = m(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        let ball = chebyshev_ball(&a, &v(&[1.0, 1.0, 1.0, 1.0]), 1e6).unwrap();
        assert_relative_eq!(ball.radius, 1.0, epsilon = 1e-12);
        assert_relative_eq!(ball.center, v(&[0.0, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn lp_with_degenerate_vertex() {
        // Several constraints meet at the optimum (0, 0).
        let g = m(4, 2, &[-1.0, 0.0, 0.0, -1.0, -1.0, -1.0, -2.0, -1.0]);
        let s = solve_lp(&v(&[1.0, 1.0]), &g, &v(&[0.0, 0.0, 0.0, 0.0]));
        assert_eq!(s.status, LpStatus::Optimal);
        assert_relative_eq!(s.value, 0.0, epsilon = 1e-12);
    }
}
