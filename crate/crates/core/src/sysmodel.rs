//! Discrete-time LTI models and the structural matrices built from them.
//!
//! Signals over a horizon are stacked time-major: `u = (u(0); u(1); ...)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{dim_check, Error, Result};
use crate::linalg;

/// `x(k+1) = A x(k) + B u(k)`, `y(k) = C x(k) + D u(k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl SystemModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        let p = c.nrows();
        if n == 0 || m == 0 || p == 0 {
            return Err(Error::Dimension("n, m and p must all be at least 1".into()));
        }
        dim_check(a.ncols() == n, || format!("A is {}x{}, expected square", n, a.ncols()))?;
        dim_check(b.nrows() == n, || format!("B has {} rows, expected {}", b.nrows(), n))?;
        dim_check(c.ncols() == n, || format!("C has {} columns, expected {}", c.ncols(), n))?;
        dim_check(d.shape() == (p, m), || {
            format!("D is {}x{}, expected {}x{}", d.nrows(), d.ncols(), p, m)
        })?;
        Ok(Self { a, b, c, d })
    }

    /// Scalar system, handy for single-state examples.
    pub fn scalar(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, c),
            DMatrix::from_element(1, 1, d),
        )
        .expect("scalar model is consistent")
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    /// State dimension.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    /// Input dimension.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }
    /// Output dimension.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    /// One step: returns `(x(k+1), y(k))`.
    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (&self.a * x + &self.b * u, &self.c * x + &self.d * u)
    }

    /// Simulates from `x0` under the stacked input `u` and returns the stacked outputs.
    pub fn simulate(&self, x0: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.simulate_states(x0, u)?.1)
    }

    /// Like [`simulate`](Self::simulate) but also returns the final state.
    pub fn simulate_states(
        &self,
        x0: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let (n, m, p) = (self.n(), self.m(), self.p());
        dim_check(x0.len() == n, || format!("x0 has length {}, expected {}", x0.len(), n))?;
        dim_check(u.len().is_multiple_of(m), || {
            format!("stacked input length {} is not a multiple of m = {}", u.len(), m)
        })?;
        let steps = u.len() / m;
        let mut y = DVector::zeros(p * steps);
        let mut x = x0.clone();
        for k in 0..steps {
            let uk = u.rows(k * m, m).into_owned();
            let (xn, yk) = self.step(&x, &uk);
            y.rows_mut(k * p, p).copy_from(&yk);
            x = xn;
        }
        Ok((x, y))
    }

    /// `O_N = (C; CA; ...; CA^(N-1))`.
    pub fn observability_matrix(&self, horizon: usize) -> Result<DMatrix<f64>> {
        if horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        let (n, p) = (self.n(), self.p());
        let mut o = DMatrix::zeros(p * horizon, n);
        let mut ca = self.c.clone();
        for k in 0..horizon {
            o.view_mut((k * p, 0), (p, n)).copy_from(&ca);
            ca = &ca * &self.a;
        }
        Ok(o)
    }

    /// `[B, AB, ..., A^(depth-1) B]`
    pub fn controllability_matrix(&self, depth: usize) -> DMatrix<f64> {
        let (n, m) = (self.n(), self.m());
        let mut out = DMatrix::zeros(n, m * depth);
        let mut block = self.b.clone();
        for k in 0..depth {
            out.view_mut((0, k * m), (n, m)).copy_from(&block);
            block = &self.a * block;
        }
        out
    }

    /// Lower block-triangular impulse-response matrix `T_N` with `D` on the
    /// diagonal and `C A^(k-1) B` on the k-th block subdiagonal.
    pub fn toeplitz_matrix(&self, horizon: usize) -> Result<DMatrix<f64>> {
        if horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        let (m, p) = (self.m(), self.p());
        let mut markov = Vec::with_capacity(horizon);
        markov.push(self.d.clone());
        let mut ak_b = self.b.clone();
        for _ in 1..horizon {
            markov.push(&self.c * &ak_b);
            ak_b = &self.a * &ak_b;
        }
        let mut t = DMatrix::zeros(p * horizon, m * horizon);
        for i in 0..horizon {
            for j in 0..=i {
                t.view_mut((i * p, j * m), (p, m)).copy_from(&markov[i - j]);
            }
        }
        Ok(t)
    }

    /// Smallest depth `N <= max_depth` with `rank(O_N) = n`.
    pub fn observability_index(&self, max_depth: usize, tol_rank: Option<f64>) -> Option<usize> {
        (1..=max_depth).find(|&k| {
            self.observability_matrix(k)
                .map(|o| linalg::rank(&o, tol_rank) == self.n())
                .unwrap_or(false)
        })
    }

    /// Maps a past window `xi = (u_p; y_p)` of depth `n_p` onto the current state.
    ///
    /// `Gamma = ( [A^(Np-1)B ... B] - A^Np O+ T  |  A^Np O+ )` with `O = O_Np`,
    /// `T = T_Np`. `O+` is the left inverse of `O`, evaluated through the SVD.
    pub fn gamma_matrix(&self, n_p: usize, tol_rank: Option<f64>) -> Result<DMatrix<f64>> {
        let (n, m, p) = (self.n(), self.m(), self.p());
        let o = self.observability_matrix(n_p)?;
        let r = linalg::rank(&o, tol_rank);
        if r < n {
            return Err(Error::Unobservable { depth: n_p, rank: r, n });
        }
        let t = self.toeplitz_matrix(n_p)?;
        let o_pinv = linalg::pseudoinverse(&o, tol_rank);
        let a_np = self.a.pow(n_p as u32);

        // Reachability row (A^(Np-1) B, ..., A B, B).
        let mut reach = DMatrix::zeros(n, m * n_p);
        let mut ak_b = self.b.clone();
        for j in (0..n_p).rev() {
            reach.view_mut((0, j * m), (n, m)).copy_from(&ak_b);
            ak_b = &self.a * &ak_b;
        }

        let a_opinv = &a_np * &o_pinv;
        let mut gamma = DMatrix::zeros(n, (m + p) * n_p);
        gamma
            .view_mut((0, 0), (n, m * n_p))
            .copy_from(&(reach - &a_opinv * &t));
        gamma.view_mut((0, m * n_p), (n, p * n_p)).copy_from(&a_opinv);
        Ok(gamma)
    }

    /// `x0 = Gamma xi`.
    pub fn reconstruct_initial_state(
        &self,
        n_p: usize,
        xi: &DVector<f64>,
        tol_rank: Option<f64>,
    ) -> Result<DVector<f64>> {
        let gamma = self.gamma_matrix(n_p, tol_rank)?;
        dim_check(xi.len() == gamma.ncols(), || {
            format!("past window has length {}, expected {}", xi.len(), gamma.ncols())
        })?;
        Ok(gamma * xi)
    }

    /// `true` iff `||y - O_N x0 - T_N u||_inf <= tol`.
    pub fn is_consistent(
        &self,
        x0: &DVector<f64>,
        u: &DVector<f64>,
        y: &DVector<f64>,
        tol: f64,
    ) -> Result<bool> {
        let (m, p) = (self.m(), self.p());
        dim_check(u.len().is_multiple_of(m) && y.len().is_multiple_of(p) && u.len() / m == y.len() / p, || {
            format!("input length {} and output length {} disagree", u.len(), y.len())
        })?;
        dim_check(x0.len() == self.n(), || format!("x0 has length {}", x0.len()))?;
        let steps = u.len() / m;
        if steps == 0 {
            return Ok(true);
        }
        let pred = self.observability_matrix(steps)? * x0 + self.toeplitz_matrix(steps)? * u;
        Ok(linalg::max_abs_vec(&(y - pred)) <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example1() -> SystemModel {
        SystemModel::scalar(1.2, 1.0, 1.0, 1.0)
    }

    fn double_integrator() -> SystemModel {
        SystemModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.5, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap()
    }

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn controllability_of_double_integrator() {
        let m = SystemModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 1, &[0.5, 1.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        assert_eq!(m.controllability_matrix(2), DMatrix::from_row_slice(2, 2, &[0.5, 1.5, 1.0, 1.0]));
    }

    #[test]
    fn simulate_example1_data() {
        let y = example1()
            .simulate(&v(&[0.5]), &v(&[-0.6, 0.0, 0.0, 0.0, 0.5, 0.5, 1.0]))
            .unwrap();
        let expected = v(&[-0.1, 0.0, 0.0, 0.0, 0.5, 1.0, 2.1]);
        assert_relative_eq!(y, expected, epsilon = 1e-12);
    }

    #[test]
    fn simulate_zero_and_double_integrator() {
        let y = example1().simulate(&v(&[0.0]), &DVector::zeros(4)).unwrap();
        assert!(y.iter().all(|&x| x == 0.0));
        let y = double_integrator().simulate(&v(&[0.0, 0.0]), &v(&[1.0])).unwrap();
        assert_eq!(y, v(&[0.0]));
    }

    #[test]
    fn simulate_rejects_bad_dimensions() {
        assert!(matches!(
            double_integrator().simulate(&v(&[0.0]), &v(&[1.0])),
            Err(Error::Dimension(_))
        ));
        let bad = SystemModel::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(3, 1),
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 1),
        );
        assert!(bad.is_err());
    }

    #[test]
    fn observability_examples() {
        let m = example1();
        assert_eq!(m.observability_matrix(1).unwrap(), DMatrix::from_element(1, 1, 1.0));
        assert_relative_eq!(
            m.observability_matrix(2).unwrap(),
            DMatrix::from_column_slice(2, 1, &[1.0, 1.2])
        );
        assert!(m.observability_matrix(0).is_err());
        let eye = SystemModel::new(
            DMatrix::from_row_slice(2, 2, &[0.3, 1.0, 0.0, 0.7]),
            DMatrix::from_element(2, 1, 1.0),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        assert_eq!(eye.observability_matrix(1).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn toeplitz_examples() {
        assert_eq!(
            example1().toeplitz_matrix(2).unwrap(),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 1.0])
        );
        assert_eq!(
            double_integrator().toeplitz_matrix(2).unwrap(),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0])
        );
        let silent = SystemModel::scalar(0.9, 0.0, 1.0, 0.0);
        assert!(silent.toeplitz_matrix(3).unwrap().iter().all(|&x| x == 0.0));
        assert!(silent.toeplitz_matrix(0).is_err());
    }

    #[test]
    fn gamma_examples() {
        let g = example1().gamma_matrix(1, None).unwrap();
        assert_relative_eq!(g, DMatrix::from_row_slice(1, 2, &[-0.2, 1.2]), epsilon = 1e-12);

        let hold = SystemModel::new(
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        let g = hold.gamma_matrix(1, None).unwrap();
        assert_relative_eq!(g.columns(0, 1).into_owned(), DMatrix::zeros(2, 1));
        assert_relative_eq!(g.columns(1, 2).into_owned(), DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn gamma_rejects_unobservable_depth() {
        assert!(matches!(
            double_integrator().gamma_matrix(1, None),
            Err(Error::Unobservable { depth: 1, rank: 1, n: 2 })
        ));
        assert_eq!(double_integrator().observability_index(5, None), Some(2));
    }

    #[test]
    fn gamma_reproduces_simulated_state_example1() {
        // The last sample (u(6), y(6)) as a depth-1 window yields x(7).
        let m = example1();
        let u = v(&[-0.6, 0.0, 0.0, 0.0, 0.5, 0.5, 1.0]);
        let (x7, y) = m.simulate_states(&v(&[0.5]), &u).unwrap();
        let xi = v(&[u[6], y[6]]);
        let x = m.reconstruct_initial_state(1, &xi, None).unwrap();
        assert_relative_eq!(x, x7, epsilon = 1e-12);
        assert_relative_eq!(x[0], 2.32, epsilon = 1e-12);
        assert_eq!(m.reconstruct_initial_state(1, &v(&[0.0, 0.0]), None).unwrap(), v(&[0.0]));
    }

    #[test]
    fn gamma_reconstructs_double_integrator_state() {
        let m = double_integrator();
        let x_start = v(&[0.7, -1.3]);
        let up = v(&[0.25, -0.5]);
        let (x_now, yp) = m.simulate_states(&x_start, &up).unwrap();
        let xi = v(&[up[0], up[1], yp[0], yp[1]]);
        let x = m.reconstruct_initial_state(2, &xi, None).unwrap();
        assert_relative_eq!(x, x_now, epsilon = 1e-9);
    }

    #[test]
    fn consistency_checks() {
        let m = example1();
        let u = v(&[-0.6, 0.0, 0.0, 0.0, 0.5, 0.5, 1.0]);
        let mut y = v(&[-0.1, 0.0, 0.0, 0.0, 0.5, 1.0, 2.1]);
        assert!(m.is_consistent(&v(&[0.5]), &u, &y, 1e-9).unwrap());
        y[3] += 1.0;
        assert!(!m.is_consistent(&v(&[0.5]), &u, &y, 1e-9).unwrap());
        let z = DVector::zeros(3);
        assert!(m.is_consistent(&v(&[0.0]), &z, &z, 1e-9).unwrap());
    }
}
