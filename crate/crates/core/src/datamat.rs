//! Recorded input/output data: Hankel matrices, persistency of excitation
//! and the past/future partition used by the data-driven predictor.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{dim_check, Error, Result};
use crate::linalg;
use crate::sysmodel::SystemModel;

/// Stacked input/output records of length `n_d` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DataRecord {
    u: DVector<f64>,
    y: DVector<f64>,
    m: usize,
    p: usize,
}

impl DataRecord {
    pub fn new(u: DVector<f64>, y: DVector<f64>, m: usize, p: usize) -> Result<Self> {
        if m == 0 || p == 0 {
            return Err(Error::Dimension("m and p must be at least 1".into()));
        }
        dim_check(u.len().is_multiple_of(m) && y.len().is_multiple_of(p), || {
            format!("lengths {} / {} are not multiples of m = {}, p = {}", u.len(), y.len(), m, p)
        })?;
        dim_check(u.len() / m == y.len() / p, || {
            format!(
                "input record has {} samples but output record has {}",
                u.len() / m,
                y.len() / p
            )
        })?;
        if u.is_empty() {
            return Err(Error::InsufficientData("data record is empty".into()));
        }
        Ok(Self { u, y, m, p })
    }

    pub fn u(&self) -> &DVector<f64> {
        &self.u
    }
    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }
    pub fn m(&self) -> usize {
        self.m
    }
    pub fn p(&self) -> usize {
        self.p
    }
    /// Number of samples.
    pub fn len(&self) -> usize {
        self.u.len() / self.m
    }
    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Past-window length, prediction horizon and assumed state dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HorizonSpec {
    pub n_p: usize,
    pub n_f: usize,
    pub n: usize,
}

impl HorizonSpec {
    pub fn new(n_p: usize, n_f: usize, n: usize) -> Result<Self> {
        if n_p == 0 || n_f == 0 || n == 0 {
            return Err(Error::InvalidInput("N_p, N_f and n must be at least 1".into()));
        }
        Ok(Self { n_p, n_f, n })
    }

    /// Required excitation order `N_p + N_f + n`.
    pub fn excitation_order(&self) -> usize {
        self.n_p + self.n_f + self.n
    }
}

/// Blocks of the depth-`(N_p + N_f)` Hankel matrices of recorded data.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelPartition {
    /// `(m + p) N_p x l`: past inputs stacked over past outputs.
    pub w_p: DMatrix<f64>,
    /// `m N_f x l`
    pub u_f: DMatrix<f64>,
    /// `p N_f x l`
    pub y_f: DMatrix<f64>,
    pub m: usize,
    pub p: usize,
    pub horizons: HorizonSpec,
}

impl HankelPartition {
    /// Column count `l = N_d - N_f - N_p + 1`.
    pub fn l(&self) -> usize {
        self.w_p.ncols()
    }

    /// Dimension of the past window `xi`.
    pub fn xi_dim(&self) -> usize {
        self.w_p.nrows()
    }
}

/// Block-Hankel matrix whose column `j` holds blocks `j..j+depth` of `seq`.
pub fn hankel(seq: &DVector<f64>, block: usize, depth: usize) -> Result<DMatrix<f64>> {
    if block == 0 || depth == 0 {
        return Err(Error::InvalidInput("block size and depth must be at least 1".into()));
    }
    dim_check(seq.len().is_multiple_of(block), || {
        format!("sequence length {} is not a multiple of block size {}", seq.len(), block)
    })?;
    let samples = seq.len() / block;
    if depth > samples {
        return Err(Error::InsufficientData(format!(
            "Hankel depth {} exceeds sequence length {}",
            depth, samples
        )));
    }
    let cols = samples - depth + 1;
    Ok(DMatrix::from_fn(block * depth, cols, |r, c| seq[c * block + r]))
}

/// Whether the depth-`order` Hankel matrix of `u` has full row rank `m * order`.
pub fn is_persistently_exciting(
    u: &DVector<f64>,
    m: usize,
    order: usize,
    tol_rank: Option<f64>,
) -> bool {
    match hankel(u, m, order) {
        Ok(h) if h.ncols() >= h.nrows() => linalg::rank(&h, tol_rank) == m * order,
        _ => false,
    }
}

/// Largest excitation order a record of `n_d` samples can carry.
pub fn max_excitation_order(m: usize, n_d: usize) -> usize {
    (n_d + 1) / (m + 1)
}

/// Smallest record length `(m + 1)(N_p + N_f + n) - 1` for the required excitation.
pub fn min_data_length(m: usize, n_p: usize, n_f: usize, n: usize) -> usize {
    (m + 1) * (n_p + n_f + n) - 1
}

/// Splits the data into `W_p`, `U_f` and `Y_f`.
///
/// Missing persistency of excitation is logged, not rejected, so that
/// degenerate records can still be inspected.
pub fn partition(data: &DataRecord, horizons: HorizonSpec) -> Result<HankelPartition> {
    let HorizonSpec { n_p, n_f, .. } = horizons;
    let (m, p) = (data.m(), data.p());
    let depth = n_p + n_f;
    if data.len() < depth {
        return Err(Error::InsufficientData(format!(
            "{} samples cannot fill a depth-{} Hankel matrix",
            data.len(),
            depth
        )));
    }
    let order = horizons.excitation_order();
    if !is_persistently_exciting(data.u(), m, order, None) {
        log::warn!("input data is not persistently exciting of order {}", order);
    }
    let hu = hankel(data.u(), m, depth)?;
    let hy = hankel(data.y(), p, depth)?;
    let l = hu.ncols();

    let mut w_p = DMatrix::zeros((m + p) * n_p, l);
    w_p.view_mut((0, 0), (m * n_p, l)).copy_from(&hu.rows(0, m * n_p));
    w_p.view_mut((m * n_p, 0), (p * n_p, l)).copy_from(&hy.rows(0, p * n_p));
    Ok(HankelPartition {
        w_p,
        u_f: hu.rows(m * n_p, m * n_f).into_owned(),
        y_f: hy.rows(p * n_p, p * n_f).into_owned(),
        m,
        p,
        horizons,
    })
}

/// Attempts made by [`generate_excitation`] before giving up.
pub const EXCITATION_ATTEMPTS: usize = 16;

/// Uniform random inputs in `[-amplitude, amplitude]` applied to `model`
/// from the zero state, redrawn until persistently exciting of the largest
/// order `n_d` samples can carry.
pub fn generate_excitation(
    model: &SystemModel,
    n_d: usize,
    seed: u64,
    amplitude: f64,
) -> Result<DataRecord> {
    generate_excitation_of_order(model, n_d, seed, amplitude, max_excitation_order(model.m(), n_d))
}

/// As [`generate_excitation`] with an explicit excitation order.
pub fn generate_excitation_of_order(
    model: &SystemModel,
    n_d: usize,
    seed: u64,
    amplitude: f64,
    order: usize,
) -> Result<DataRecord> {
    if n_d == 0 {
        return Err(Error::InvalidInput("N_d must be at least 1".into()));
    }
    let m = model.m();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let x0 = DVector::zeros(model.n());
    for _ in 0..EXCITATION_ATTEMPTS {
        let u = DVector::from_fn(m * n_d, |_, _| {
            if amplitude > 0.0 {
                rng.gen_range(-amplitude..=amplitude)
            } else {
                0.0
            }
        });
        if is_persistently_exciting(&u, m, order.max(1), None) {
            let y = model.simulate(&x0, &u)?;
            return DataRecord::new(u, y, m, model.p());
        }
    }
    Err(Error::ExcitationNotAchieved { order, attempts: EXCITATION_ATTEMPTS })
}
