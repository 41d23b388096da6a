//! Construction of the predictive-control QPs.
//!
//! Four problems share the parametric form
//! `min 1/2 z'Hz + theta'F'z  s.t.  Gz <= E theta + d`:
//!
//! * the condensed model-based problem in `u_f` with parameter `x0`,
//! * the raw data-driven problem in `a` with the equality `W_p a = xi`,
//! * the equality-free problem in `alpha`, `a = W_p+ xi + V_p alpha`,
//! * the reduced problem in `beta`, `alpha = K_f beta`, of size `m N_f`.
//!
//! The last one is strictly convex and carries the same explicit
//! complexity as the model-based problem.

use nalgebra::{DMatrix, DVector};

use crate::datamat::HankelPartition;
use crate::error::{dim_check, Error, Result};
use crate::linalg;
use crate::sysmodel::SystemModel;

pub use crate::linalg::{nullspace_basis, pseudoinverse};

/// Polyhedral input and output sets `M_u u <= v_u`, `M_y y <= v_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub m_u: DMatrix<f64>,
    pub v_u: DVector<f64>,
    pub m_y: DMatrix<f64>,
    pub v_y: DVector<f64>,
}

impl ConstraintSet {
    pub fn new(
        m_u: DMatrix<f64>,
        v_u: DVector<f64>,
        m_y: DMatrix<f64>,
        v_y: DVector<f64>,
    ) -> Result<Self> {
        dim_check(m_u.nrows() == v_u.len(), || {
            format!("M_u has {} rows but v_u has length {}", m_u.nrows(), v_u.len())
        })?;
        dim_check(m_y.nrows() == v_y.len(), || {
            format!("M_y has {} rows but v_y has length {}", m_y.nrows(), v_y.len())
        })?;
        Ok(Self { m_u, v_u, m_y, v_y })
    }

    /// Componentwise bounds `|u_i| <= u_max[i]`, `|y_i| <= y_max[i]`.
    pub fn boxes(u_max: &[f64], y_max: &[f64]) -> Self {
        let (mu, vu) = box_rows(u_max);
        let (my, vy) = box_rows(y_max);
        Self { m_u: mu, v_u: vu, m_y: my, v_y: vy }
    }

    pub fn m(&self) -> usize {
        self.m_u.ncols()
    }
    pub fn p(&self) -> usize {
        self.m_y.ncols()
    }

    /// Stacked right-hand side `(v_u; ...; v_u; v_y; ...; v_y)` over `n_f` steps.
    pub fn stacked_rhs(&self, n_f: usize) -> DVector<f64> {
        let vu = linalg::repeat_vector(&self.v_u, n_f);
        let vy = linalg::repeat_vector(&self.v_y, n_f);
        let mut d = DVector::zeros(vu.len() + vy.len());
        d.rows_mut(0, vu.len()).copy_from(&vu);
        d.rows_mut(vu.len(), vy.len()).copy_from(&vy);
        d
    }

    /// Total number of stacked inequality rows over `n_f` steps.
    pub fn stacked_rows(&self, n_f: usize) -> usize {
        (self.v_u.len() + self.v_y.len()) * n_f
    }

    pub fn input_ok(&self, u: &DVector<f64>, tol: f64) -> bool {
        (&self.m_u * u - &self.v_u).iter().all(|&r| r <= tol)
    }

    pub fn output_ok(&self, y: &DVector<f64>, tol: f64) -> bool {
        (&self.m_y * y - &self.v_y).iter().all(|&r| r <= tol)
    }

    /// Per-component magnitude bound implied by the single-variable rows of
    /// `M_u`, or `None` when some input is not bounded that way.
    pub fn input_bounds(&self) -> Option<Vec<f64>> {
        axis_bounds(&self.m_u, &self.v_u)
    }

    /// As [`input_bounds`](Self::input_bounds) for the outputs.
    pub fn output_bounds(&self) -> Option<Vec<f64>> {
        axis_bounds(&self.m_y, &self.v_y)
    }
}

fn axis_bounds(m: &DMatrix<f64>, v: &DVector<f64>) -> Option<Vec<f64>> {
    (0..m.ncols())
        .map(|j| {
            (0..m.nrows())
                .filter(|&i| m[(i, j)] != 0.0 && (0..m.ncols()).all(|k| k == j || m[(i, k)] == 0.0))
                .map(|i| (v[i] / m[(i, j)].abs()).abs())
                .fold(None, |acc: Option<f64>, b| Some(acc.map_or(b, |a| a.max(b))))
        })
        .collect()
}

fn box_rows(bounds: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let k = bounds.len();
    let mut m = DMatrix::zeros(2 * k, k);
    let mut v = DVector::zeros(2 * k);
    for (i, &b) in bounds.iter().enumerate() {
        m[(2 * i, i)] = 1.0;
        m[(2 * i + 1, i)] = -1.0;
        v[2 * i] = b;
        v[2 * i + 1] = b;
    }
    (m, v)
}

/// Output weight `Q` (PSD) and input weight `R` (PD).
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights {
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl CostWeights {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || !r.is_square() {
            return Err(Error::Dimension("Q and R must be square".into()));
        }
        if !linalg::is_symmetric(&q, 1e-12) || !linalg::is_symmetric(&r, 1e-12) {
            return Err(Error::InvalidInput("Q and R must be symmetric".into()));
        }
        if !linalg::is_positive_semidefinite(&q) {
            return Err(Error::InvalidInput("Q must be positive semi-definite".into()));
        }
        if !linalg::is_positive_definite(&r, None) {
            return Err(Error::InvalidInput("R must be positive definite".into()));
        }
        Ok(Self { q, r })
    }

    pub fn scalar(q: f64, r: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, q), DMatrix::from_element(1, 1, r))
    }
}

/// `min 1/2 z'Hz + theta'F'z  s.t.  Gz <= E theta + d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricQP {
    pub h: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub d: DVector<f64>,
    pub strictly_convex: bool,
}

impl ParametricQP {
    pub fn new(
        h: DMatrix<f64>,
        f: DMatrix<f64>,
        g: DMatrix<f64>,
        e: DMatrix<f64>,
        d: DVector<f64>,
        strictly_convex: bool,
    ) -> Result<Self> {
        let dz = h.nrows();
        dim_check(h.is_square(), || "H must be square".into())?;
        dim_check(f.nrows() == dz, || format!("F has {} rows, expected {}", f.nrows(), dz))?;
        dim_check(g.ncols() == dz, || format!("G has {} columns, expected {}", g.ncols(), dz))?;
        dim_check(e.nrows() == g.nrows() && d.len() == g.nrows(), || {
            format!("E ({} rows) and d ({}) must match G ({} rows)", e.nrows(), d.len(), g.nrows())
        })?;
        dim_check(e.ncols() == f.ncols(), || {
            format!("E has {} columns but F has {}", e.ncols(), f.ncols())
        })?;
        if strictly_convex && !linalg::is_positive_definite(&h, None) {
            return Err(Error::NotStrictlyConvex("H is not positive definite".into()));
        }
        Ok(Self { h, f, g, e, d, strictly_convex })
    }

    /// Decision dimension.
    pub fn d_z(&self) -> usize {
        self.h.nrows()
    }
    /// Parameter dimension.
    pub fn d_theta(&self) -> usize {
        self.f.ncols()
    }
    pub fn n_constraints(&self) -> usize {
        self.g.nrows()
    }

    /// Linear cost term `F theta` at a fixed parameter.
    pub fn linear_term(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.f * theta
    }

    /// Constraint bound `E theta + d` at a fixed parameter.
    pub fn rhs(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.e * theta + &self.d
    }

    pub fn objective(&self, z: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + theta.dot(&(self.f.transpose() * z))
    }

    /// Rows of `G` that vanish: they constrain the parameter only.
    pub fn zero_rows(&self) -> Vec<usize> {
        let scale = linalg::max_abs(&self.g).max(1.0);
        (0..self.g.nrows())
            .filter(|&i| self.g.row(i).iter().all(|x| x.abs() <= 1e-12 * scale))
            .collect()
    }
}

/// Condensed model-based problem with parameter `x0` and decision `u_f`.
pub fn condense_mpc(
    model: &SystemModel,
    weights: &CostWeights,
    cons: &ConstraintSet,
    n_f: usize,
) -> Result<ParametricQP> {
    if n_f == 0 {
        return Err(Error::InvalidInput("N_f must be at least 1".into()));
    }
    check_dims(model.m(), model.p(), weights, cons)?;
    let o = model.observability_matrix(n_f)?;
    let t = model.toeplitz_matrix(n_f)?;
    let qq = linalg::block_diag_repeat(&weights.q, n_f);
    let rr = linalg::block_diag_repeat(&weights.r, n_f);
    let mu = linalg::block_diag_repeat(&cons.m_u, n_f);
    let my = linalg::block_diag_repeat(&cons.m_y, n_f);

    let tq = t.transpose() * &qq;
    let h = linalg::symmetrize(&((&tq * &t) * 2.0 + rr * 2.0));
    let f = (&tq * &o) * 2.0;
    let g = linalg::vstack(&[&mu, &(&my * &t)]);
    let e = linalg::vstack(&[&DMatrix::zeros(mu.nrows(), model.n()), &(-(&my * &o))]);
    ParametricQP::new(h, f, g, e, cons.stacked_rhs(n_f), true)
}

fn check_dims(m: usize, p: usize, weights: &CostWeights, cons: &ConstraintSet) -> Result<()> {
    dim_check(weights.r.nrows() == m && cons.m() == m, || {
        format!("R is {0}x{0} and M_u has {1} columns, expected m = {2}", weights.r.nrows(), cons.m(), m)
    })?;
    dim_check(weights.q.nrows() == p && cons.p() == p, || {
        format!("Q is {0}x{0} and M_y has {1} columns, expected p = {2}", weights.q.nrows(), cons.p(), p)
    })
}

/// Raw data-driven problem in `a` (only convex):
/// `min 1/2 a' H~ a  s.t.  G~ a <= d,  W_p a = xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct DpcRawQP {
    pub h_tilde: DMatrix<f64>,
    pub g_tilde: DMatrix<f64>,
    pub d: DVector<f64>,
    pub w_p: DMatrix<f64>,
}

impl DpcRawQP {
    /// Dimension of `a`, i.e. the Hankel column count `l`.
    pub fn l(&self) -> usize {
        self.h_tilde.nrows()
    }
    /// Parameter dimension `(m + p) N_p`.
    pub fn xi_dim(&self) -> usize {
        self.w_p.nrows()
    }
}

pub fn build_dpc_raw(
    part: &HankelPartition,
    weights: &CostWeights,
    cons: &ConstraintSet,
) -> Result<DpcRawQP> {
    check_dims(part.m, part.p, weights, cons)?;
    let n_f = part.horizons.n_f;
    let qq = linalg::block_diag_repeat(&weights.q, n_f);
    let rr = linalg::block_diag_repeat(&weights.r, n_f);
    let mu = linalg::block_diag_repeat(&cons.m_u, n_f);
    let my = linalg::block_diag_repeat(&cons.m_y, n_f);

    let h_tilde = linalg::symmetrize(
        &((part.y_f.transpose() * &qq * &part.y_f) * 2.0
            + (part.u_f.transpose() * &rr * &part.u_f) * 2.0),
    );
    let g_tilde = linalg::vstack(&[&(&mu * &part.u_f), &(&my * &part.y_f)]);
    Ok(DpcRawQP { h_tilde, g_tilde, d: cons.stacked_rhs(n_f), w_p: part.w_p.clone() })
}

/// Knobs for building [`ReductionMaps`].
#[derive(Debug, Clone, Default)]
pub struct ReductionOptions {
    /// Replaces the default orthonormal kernel basis of `W_p`.
    pub v_p: Option<DMatrix<f64>>,
    /// Transition matrix in `K_f = (U_f V_p)' Phi`; identity when absent.
    pub phi: Option<DMatrix<f64>>,
    pub tol_rank: Option<f64>,
}

/// Maps linking the `a`, `alpha` and `beta` parametrizations:
/// `a = W_p+ xi + V_p alpha`, `alpha = K_f beta + V_f beta_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionMaps {
    pub w_p_pinv: DMatrix<f64>,
    pub v_p: DMatrix<f64>,
    pub k_f: DMatrix<f64>,
    pub phi: DMatrix<f64>,
    pub uf_vp: DMatrix<f64>,
    pub nu: usize,
    pub mu: usize,
    tol_rank: Option<f64>,
}

impl ReductionMaps {
    pub fn new(part: &HankelPartition, opts: &ReductionOptions) -> Result<Self> {
        let tol = opts.tol_rank;
        let w_p_pinv = pseudoinverse(&part.w_p, tol);
        let rank_wp = linalg::rank(&part.w_p, tol);
        let nu = part.l() - rank_wp;
        let v_p = match &opts.v_p {
            Some(v) => {
                validate_kernel_basis(&part.w_p, v, nu, tol)?;
                v.clone()
            }
            None => nullspace_basis(&part.w_p, tol),
        };
        let uf_vp = &part.u_f * &v_p;
        let mu = linalg::rank(&uf_vp, tol);
        let rows = uf_vp.nrows();
        let phi = opts.phi.clone().unwrap_or_else(|| DMatrix::identity(rows, rows));
        let k_f = build_kf(&uf_vp, &phi, tol)?;
        Ok(Self { w_p_pinv, v_p, k_f, phi, uf_vp, nu, mu, tol_rank: tol })
    }

    /// Orthonormal basis of `ker(U_f V_p)`: the directions of `alpha` that
    /// change neither inputs nor outputs.
    pub fn v_f(&self) -> DMatrix<f64> {
        nullspace_basis(&self.uf_vp, self.tol_rank)
    }

    /// `U_f V_p K_f`, non-singular for consistent exciting data.
    pub fn uf_vp_kf(&self) -> DMatrix<f64> {
        &self.uf_vp * &self.k_f
    }

    /// `a = W_p+ xi + V_p K_f beta`
    pub fn recover_a(&self, xi: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
        &self.w_p_pinv * xi + &self.v_p * (&self.k_f * beta)
    }
}

fn validate_kernel_basis(
    w_p: &DMatrix<f64>,
    v_p: &DMatrix<f64>,
    nu: usize,
    tol: Option<f64>,
) -> Result<()> {
    dim_check(v_p.nrows() == w_p.ncols(), || {
        format!("V_p has {} rows, expected l = {}", v_p.nrows(), w_p.ncols())
    })?;
    let scale = linalg::max_abs(w_p).max(1.0) * linalg::max_abs(v_p).max(1.0);
    if linalg::max_abs(&(w_p * v_p)) > 1e-9 * scale {
        return Err(Error::InvalidInput("supplied V_p does not satisfy W_p V_p = 0".into()));
    }
    if v_p.ncols() != nu || linalg::rank(v_p, tol) != nu {
        return Err(Error::InvalidInput(format!(
            "supplied V_p must have full column rank equal to nullity(W_p) = {}",
            nu
        )));
    }
    Ok(())
}

/// `K_f = (U_f V_p)' Phi` for a non-singular `Phi`.
pub fn build_kf(uf_vp: &DMatrix<f64>, phi: &DMatrix<f64>, tol_rank: Option<f64>) -> Result<DMatrix<f64>> {
    let k = uf_vp.nrows();
    dim_check(phi.shape() == (k, k), || {
        format!("Phi is {}x{}, expected {}x{}", phi.nrows(), phi.ncols(), k, k)
    })?;
    if linalg::rank(phi, tol_rank) < k || linalg::max_abs(phi) == 0.0 {
        return Err(Error::InvalidInput("Phi must be non-singular".into()));
    }
    Ok(uf_vp.transpose() * phi)
}

/// Equality-free problem in `alpha` with parameter `xi`.
pub fn eliminate_equalities(raw: &DpcRawQP, maps: &ReductionMaps) -> Result<ParametricQP> {
    check_maps(raw, maps)?;
    let vt_h = maps.v_p.transpose() * &raw.h_tilde;
    let h = linalg::symmetrize(&(&vt_h * &maps.v_p));
    let f = &vt_h * &maps.w_p_pinv;
    let g = &raw.g_tilde * &maps.v_p;
    let e = -(&raw.g_tilde * &maps.w_p_pinv);
    ParametricQP::new(h, f, g, e, raw.d.clone(), false)
}

/// Reduced problem in `beta` (dimension `m N_f`) with parameter `xi`.
///
/// Fails with [`Error::DegenerateReduction`] when the reduced Hessian is not
/// positive definite, which only happens for inconsistent or poorly
/// exciting data.
pub fn reduce_to_beta(raw: &DpcRawQP, maps: &ReductionMaps) -> Result<ParametricQP> {
    let alpha = eliminate_equalities(raw, maps)?;
    let kt = maps.k_f.transpose();
    let h = linalg::symmetrize(&(&kt * &alpha.h * &maps.k_f));
    let f = &kt * &alpha.f;
    let g = &alpha.g * &maps.k_f;
    if !linalg::is_positive_definite(&h, maps.tol_rank) {
        return Err(Error::DegenerateReduction(format!(
            "reduced Hessian is not positive definite (rank(U_f V_p) = {}, expected {})",
            maps.mu,
            maps.uf_vp.nrows()
        )));
    }
    ParametricQP::new(h, f, g, alpha.e, alpha.d, true)
}

fn check_maps(raw: &DpcRawQP, maps: &ReductionMaps) -> Result<()> {
    dim_check(maps.v_p.nrows() == raw.l() && maps.w_p_pinv.shape() == (raw.l(), raw.xi_dim()), || {
        format!(
            "reduction maps were built for a different partition (l = {}, xi dim = {})",
            raw.l(),
            raw.xi_dim()
        )
    })
}

/// `u_f = U_f W_p+ xi + U_f V_p K_f beta`
pub fn recover_uf(
    maps: &ReductionMaps,
    u_f: &DMatrix<f64>,
    xi: &DVector<f64>,
    beta: &DVector<f64>,
) -> DVector<f64> {
    u_f * (&maps.w_p_pinv * xi) + maps.uf_vp_kf() * beta
}

/// Numerical ranks of the data matrices against their predicted values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankReport {
    pub l: usize,
    pub rank_wp: usize,
    pub nu: usize,
    pub rank_ufvp: usize,
    /// `rank(W_p) = m N_p + n`
    pub wp_rank_ok: bool,
    /// `nu = l - rank(W_p) >= m (N_f + n)`
    pub nu_ok: bool,
    /// `rank(U_f V_p) = m N_f`
    pub ufvp_rank_ok: bool,
}

impl RankReport {
    pub fn all_ok(&self) -> bool {
        self.wp_rank_ok && self.nu_ok && self.ufvp_rank_ok
    }
}

pub fn rank_report(
    part: &HankelPartition,
    maps: &ReductionMaps,
    m: usize,
    n: usize,
    n_p: usize,
    n_f: usize,
) -> RankReport {
    let rank_wp = linalg::rank(&part.w_p, maps.tol_rank);
    let l = part.l();
    let nu = l - rank_wp;
    let rank_ufvp = linalg::rank(&maps.uf_vp, maps.tol_rank);
    RankReport {
        l,
        rank_wp,
        nu,
        rank_ufvp,
        wp_rank_ok: rank_wp == m * n_p + n,
        nu_ok: nu == maps.nu && nu >= m * (n_f + n),
        ufvp_rank_ok: rank_ufvp == m * n_f,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamat::{partition, DataRecord, HorizonSpec};
    use approx::assert_relative_eq;

    fn example1_part() -> HankelPartition {
        let data = DataRecord::new(
            DVector::from_column_slice(&[-0.6, 0.0, 0.0, 0.0, 0.5, 0.5, 1.0]),
            DVector::from_column_slice(&[-0.1, 0.0, 0.0, 0.0, 0.5, 1.0, 2.1]),
            1,
            1,
        )
        .unwrap();
        partition(&data, HorizonSpec::new(1, 2, 1).unwrap()).unwrap()
    }

    fn example1_parts() -> (CostWeights, ConstraintSet) {
        (CostWeights::scalar(0.5, 0.5).unwrap(), ConstraintSet::boxes(&[1.0], &[4.0]))
    }

    fn coordinate_vp() -> DMatrix<f64> {
        let mut v = DMatrix::zeros(5, 3);
        v[(1, 0)] = 1.0;
        v[(2, 1)] = 1.0;
        v[(3, 2)] = 1.0;
        v
    }

    #[test]
    fn condense_example1() {
        let (w, c) = example1_parts();
        let qp = condense_mpc(&SystemModel::scalar(1.2, 1.0, 1.0, 1.0), &w, &c, 2).unwrap();
        assert_relative_eq!(qp.h, DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]), epsilon = 1e-12);
        assert_relative_eq!(qp.f, DMatrix::from_column_slice(2, 1, &[2.2, 1.2]), epsilon = 1e-12);
        assert_eq!(qp.n_constraints(), 8);
        assert!(qp.strictly_convex);
    }

    #[test]
    fn condense_without_output_cost() {
        let w = CostWeights::scalar(0.0, 0.5).unwrap();
        let c = ConstraintSet::boxes(&[1.0], &[4.0]);
        let qp = condense_mpc(&SystemModel::scalar(0.8, 2.0, 3.0, 0.1), &w, &c, 3).unwrap();
        assert_relative_eq!(qp.h, DMatrix::identity(3, 3), epsilon = 1e-15);
        assert!(qp.f.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn weights_reject_indefinite_r() {
        assert!(CostWeights::scalar(1.0, 0.0).is_err());
        assert!(CostWeights::scalar(-1.0, 1.0).is_err());
    }

    #[test]
    fn dpc_raw_example1_shapes() {
        let (w, c) = example1_parts();
        let raw = build_dpc_raw(&example1_part(), &w, &c).unwrap();
        assert_eq!(raw.h_tilde.shape(), (5, 5));
        assert_eq!(raw.g_tilde.nrows(), 8);
        assert!(linalg::is_positive_semidefinite(&raw.h_tilde));
        assert!(linalg::rank(&raw.h_tilde, None) <= 4);
    }

    #[test]
    fn dpc_raw_zero_data() {
        let (w, c) = example1_parts();
        let zero = DataRecord::new(DVector::zeros(7), DVector::zeros(7), 1, 1).unwrap();
        let part = partition(&zero, HorizonSpec::new(1, 2, 1).unwrap()).unwrap();
        let raw = build_dpc_raw(&part, &w, &c).unwrap();
        assert!(raw.h_tilde.iter().chain(raw.g_tilde.iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn pseudoinverse_matches_printed_example1() {
        let p = pseudoinverse(&example1_part().w_p, None);
        let expected = DMatrix::from_row_slice(
            5,
            2,
            &[-2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -0.4, 2.4],
        );
        assert_relative_eq!(p, expected, epsilon = 1e-9);
    }

    #[test]
    fn kernel_basis_spans_printed_subspace() {
        let v = nullspace_basis(&example1_part().w_p, None);
        assert_eq!(v.shape(), (5, 3));
        let pv = coordinate_vp();
        assert_relative_eq!(&v * v.transpose(), &pv * pv.transpose(), epsilon = 1e-12);
    }

    #[test]
    fn kf_examples() {
        let part = example1_part();
        let uf_vp = &part.u_f * coordinate_vp();
        let kf = build_kf(&uf_vp, &(DMatrix::identity(2, 2) * 2.0), None).unwrap();
        assert_relative_eq!(
            kf.transpose(),
            DMatrix::from_row_slice(2, 3, &[0.0, 0.0, 1.0, 0.0, 1.0, 1.0]),
            epsilon = 1e-15
        );
        assert_eq!(build_kf(&uf_vp, &DMatrix::identity(2, 2), None).unwrap(), uf_vp.transpose());
        assert!(build_kf(&uf_vp, &DMatrix::zeros(2, 2), None).is_err());
    }

    #[test]
    fn alpha_qp_example1_in_printed_basis() {
        let (w, c) = example1_parts();
        let part = example1_part();
        let raw = build_dpc_raw(&part, &w, &c).unwrap();
        let maps = ReductionMaps::new(
            &part,
            &ReductionOptions { v_p: Some(coordinate_vp()), ..Default::default() },
        )
        .unwrap();
        let alpha = eliminate_equalities(&raw, &maps).unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 0.0, 0.5, 0.75, 0.0, 0.75, 1.75]);
        assert_relative_eq!(alpha.h, expected, epsilon = 1e-12);
        assert!(!alpha.strictly_convex);
    }

    #[test]
    fn beta_qp_example1_matches_printed_values() {
        let (w, c) = example1_parts();
        let part = example1_part();
        let raw = build_dpc_raw(&part, &w, &c).unwrap();
        let maps = ReductionMaps::new(
            &part,
            &ReductionOptions {
                v_p: Some(coordinate_vp()),
                phi: Some(DMatrix::identity(2, 2) * 2.0),
                ..Default::default()
            },
        )
        .unwrap();
        let beta = reduce_to_beta(&raw, &maps).unwrap();
        assert_relative_eq!(beta.h, DMatrix::from_row_slice(2, 2, &[1.75, 2.5, 2.5, 3.75]), epsilon = 1e-9);
        assert_relative_eq!(
            beta.f,
            DMatrix::from_row_slice(2, 2, &[-1.34, 8.04, -1.96, 11.76]),
            epsilon = 1e-9
        );
        assert!(beta.strictly_convex);
    }

    #[test]
    fn vp_override_is_validated() {
        let part = example1_part();
        let mut bad = coordinate_vp();
        bad[(0, 0)] = 1.0;
        let opts = ReductionOptions { v_p: Some(bad), ..Default::default() };
        assert!(ReductionMaps::new(&part, &opts).is_err());
        let short = coordinate_vp().columns(0, 2).into_owned();
        let opts = ReductionOptions { v_p: Some(short), ..Default::default() };
        assert!(ReductionMaps::new(&part, &opts).is_err());
    }

    #[test]
    fn reduction_on_zero_data_is_degenerate() {
        let (w, c) = example1_parts();
        let zero = DataRecord::new(DVector::zeros(7), DVector::zeros(7), 1, 1).unwrap();
        let part = partition(&zero, HorizonSpec::new(1, 2, 1).unwrap()).unwrap();
        let raw = build_dpc_raw(&part, &w, &c).unwrap();
        let maps = ReductionMaps::new(&part, &ReductionOptions::default()).unwrap();
        let alpha = eliminate_equalities(&raw, &maps).unwrap();
        assert!(alpha.h.iter().chain(alpha.f.iter()).chain(alpha.g.iter()).all(|&x| x == 0.0));
        assert!(matches!(reduce_to_beta(&raw, &maps), Err(Error::DegenerateReduction(_))));
        let report = rank_report(&part, &maps, 1, 1, 1, 2);
        assert_eq!(report.rank_wp, 0);
        assert!(!report.wp_rank_ok);
    }

    #[test]
    fn rank_report_example1() {
        let part = example1_part();
        let maps = ReductionMaps::new(&part, &ReductionOptions::default()).unwrap();
        let r = rank_report(&part, &maps, 1, 1, 1, 2);
        assert_eq!((r.rank_wp, r.nu, r.l, r.rank_ufvp), (2, 3, 5, 2));
        assert!(r.all_ok());
        assert_eq!(maps.mu, 2);
    }

    #[test]
    fn recover_uf_zero() {
        let part = example1_part();
        let maps = ReductionMaps::new(&part, &ReductionOptions::default()).unwrap();
        let u = recover_uf(&maps, &part.u_f, &DVector::zeros(2), &DVector::zeros(2));
        assert_eq!(u, DVector::zeros(2));
        let t = maps.uf_vp_kf();
        assert!(t.clone().svd(false, false).singular_values.min() > 1e-6);
    }

    #[test]
    fn eliminate_with_full_rank_square_wp() {
        // W_p = I: no null space, so the alpha problem has no decisions.
        let part = HankelPartition {
            w_p: DMatrix::identity(2, 2),
            u_f: DMatrix::from_row_slice(1, 2, &[1.0, 2.0]),
            y_f: DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
            m: 1,
            p: 1,
            horizons: HorizonSpec::new(1, 1, 1).unwrap(),
        };
        let (w, c) = example1_parts();
        let raw = build_dpc_raw(&part, &w, &c).unwrap();
        let maps = ReductionMaps::new(&part, &ReductionOptions::default()).unwrap();
        assert_eq!(maps.nu, 0);
        let alpha = eliminate_equalities(&raw, &maps).unwrap();
        assert_eq!(alpha.d_z(), 0);
    }
}
