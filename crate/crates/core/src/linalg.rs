//! Dense linear-algebra helpers shared by the model, data and reduction code.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative factor of the default numerical-rank threshold.
pub const RANK_REL: f64 = 1e-12;

/// Singular values below this are treated as zero:
/// `max(rows, cols) * sigma_max * 1e-12`, unless `tol` overrides it.
pub fn rank_threshold(rows: usize, cols: usize, sigma_max: f64, tol: Option<f64>) -> f64 {
    tol.unwrap_or_else(|| rows.max(cols) as f64 * sigma_max * RANK_REL)
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    m.clone().svd(false, false).singular_values
}

/// Numerical rank at the default (or overridden) threshold.
pub fn rank(m: &DMatrix<f64>, tol: Option<f64>) -> usize {
    let sv = singular_values(m);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let thr = rank_threshold(m.nrows(), m.ncols(), smax, tol);
    sv.iter().filter(|&&s| s > thr && s > 0.0).count()
}

/// Moore-Penrose pseudoinverse through the singular value decomposition.
pub fn pseudoinverse(m: &DMatrix<f64>, tol: Option<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let sv = &svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let thr = rank_threshold(r, c, smax, tol);
    let mut out = DMatrix::zeros(c, r);
    for (k, &s) in sv.iter().enumerate() {
        if s > thr && s > 0.0 {
            out += (vt.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    out
}

/// Orthonormal basis of `ker(m)`, one column per null direction.
///
/// Columns are normalised so that their largest-magnitude entry (first one
/// on ties) is positive. A full-column-rank input yields a `cols x 0` matrix.
pub fn nullspace_basis(m: &DMatrix<f64>, tol: Option<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    if r == 0 {
        return DMatrix::identity(c, c);
    }
    // Zero rows leave the kernel unchanged but make the right factor square.
    let padded = if r < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (r, c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("v_t requested");
    let sv = svd.singular_values;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let thr = rank_threshold(r, c, smax, tol);
    // nalgebra returns singular values unsorted only in pathological cases;
    // select by value rather than position.
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for k in 0..vt.nrows() {
        let s = if k < sv.len() { sv[k] } else { 0.0 };
        if s <= thr || s == 0.0 {
            cols.push(vt.row(k).transpose());
        }
    }
    let mut basis = DMatrix::zeros(c, cols.len());
    for (j, v) in cols.into_iter().enumerate() {
        basis.set_column(j, &canonical_sign(v));
    }
    basis
}

fn canonical_sign(v: DVector<f64>) -> DVector<f64> {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() * (1.0 + 1e-12) {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        -v
    } else {
        v
    }
}

/// Block-diagonal matrix with `count` copies of `block`.
pub fn block_diag_repeat(block: &DMatrix<f64>, count: usize) -> DMatrix<f64> {
    let (r, c) = block.shape();
    let mut out = DMatrix::zeros(r * count, c * count);
    for k in 0..count {
        out.view_mut((k * r, k * c), (r, c)).copy_from(block);
    }
    out
}

/// Stacks matrices with a common column count on top of each other.
pub fn vstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = parts.first().map_or(0, |p| p.ncols());
    let rows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for p in parts {
        assert_eq!(p.ncols(), cols, "vstack column mismatch");
        out.view_mut((at, 0), p.shape()).copy_from(*p);
        at += p.nrows();
    }
    out
}

/// Repeats a vector `count` times end to end.
pub fn repeat_vector(v: &DVector<f64>, count: usize) -> DVector<f64> {
    DVector::from_iterator(v.len() * count, (0..count).flat_map(|_| v.iter().cloned()))
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, &x| a.max(x.abs()))
}

pub fn max_abs_vec(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |a, &x| a.max(x.abs()))
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square() && (m - m.transpose()).iter().all(|x| x.abs() <= tol)
}

/// Smallest and largest eigenvalue of the symmetric part of `m`.
pub fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    if m.is_empty() {
        return (0.0, 0.0);
    }
    let sym = (m + m.transpose()) * 0.5;
    let ev = SymmetricEigen::new(sym).eigenvalues;
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Positive definite at the rank convention: `lambda_min > n * lambda_max * 1e-12`.
pub fn is_positive_definite(m: &DMatrix<f64>, tol: Option<f64>) -> bool {
    if m.is_empty() {
        return true;
    }
    let (lo, hi) = eigen_range(m);
    let thr = rank_threshold(m.nrows(), m.ncols(), hi.abs(), tol);
    lo > thr && lo > 0.0
}

/// Positive semi-definite up to `-1e-10`.
pub fn is_positive_semidefinite(m: &DMatrix<f64>) -> bool {
    m.is_empty() || eigen_range(m).0 > -1e-10
}

/// `(m + m') / 2`
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pinv_of_identity_and_zero() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(pseudoinverse(&i, None), i, epsilon = 1e-15);
        let z = DMatrix::<f64>::zeros(2, 4);
        let zp = pseudoinverse(&z, None);
        assert_eq!(zp.shape(), (4, 2));
        assert!(zp.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn pinv_penrose_conditions_on_wide_matrix() {
        let m = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.0, -1.0, 2.0, 4.0, 0.0, -2.0]);
        let p = pseudoinverse(&m, None);
        assert_relative_eq!(&m * &p * &m, m.clone(), epsilon = 1e-12);
        assert_relative_eq!(&p * &m * &p, p.clone(), epsilon = 1e-12);
        let mp = &m * &p;
        let pm = &p * &m;
        assert_relative_eq!(mp.transpose(), mp, epsilon = 1e-12);
        assert_relative_eq!(pm.transpose(), pm, epsilon = 1e-12);
    }

    #[test]
    fn nullspace_edge_cases() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert_eq!(nullspace_basis(&i, None).ncols(), 0);
        let row = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let v = nullspace_basis(&row, None);
        assert_eq!(v.shape(), (2, 1));
        assert_relative_eq!(v[(0, 0)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(v[(1, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn nullspace_of_tall_rank_deficient() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, -1.0, -1.0]);
        let v = nullspace_basis(&m, None);
        assert_eq!(v.ncols(), 1);
        assert!(max_abs(&(&m * &v)) < 1e-12);
        assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_of_outer_product() {
        let a = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let b = DVector::from_vec(vec![0.5, -1.0]);
        assert_eq!(rank(&(&a * b.transpose()), None), 1);
        assert_eq!(rank(&DMatrix::zeros(2, 2), None), 0);
    }
}
