//! Explicit solution of strictly convex parametric QPs.
//!
//! The optimizer of `min 1/2 z'Hz + theta'F'z s.t. Gz <= E theta + d` is
//! continuous and piecewise affine in `theta`. Each piece lives on a
//! critical region where one active set `A` stays optimal; there the KKT
//! system gives
//!
//! ```text
//! lambda_A(theta) = -S^-1 ((E_A + G_A H^-1 F) theta + d_A),   S = G_A H^-1 G_A'
//! z(theta)        = -H^-1 (F theta + G_A' lambda_A(theta))
//! ```
//!
//! and the region is cut out by `lambda_A >= 0` and primal feasibility of
//! the inactive rows. Regions are discovered by stepping across facets of
//! known regions and solving the QP numerically on the far side.

use std::collections::BTreeSet;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::condense::ParametricQP;
use crate::error::{dim_check, Error, Result};
use crate::linalg;
use crate::par::{self, Execution};
use crate::qpcore::{self, chebyshev_ball, solve_lp, ChebyshevBall, LpStatus, QpOptions};

/// Interior tolerance for emptiness and membership tests.
pub const INTERIOR_TOL: f64 = 1e-9;

/// `{theta : A theta <= b}`
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Set by [`Polyhedron::remove_redundant`] when the set turned out empty.
    pub empty: bool,
}

impl Polyhedron {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        dim_check(a.nrows() == b.len(), || {
            format!("A has {} rows but b has length {}", a.nrows(), b.len())
        })?;
        Ok(Self { a, b, empty: false })
    }

    /// Axis-aligned box `lo <= theta <= hi`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        dim_check(lo.len() == hi.len(), || "box bounds differ in length".into())?;
        let d = lo.len();
        let mut a = DMatrix::zeros(2 * d, d);
        let mut b = DVector::zeros(2 * d);
        for i in 0..d {
            a[(2 * i, i)] = 1.0;
            b[2 * i] = hi[i];
            a[(2 * i + 1, i)] = -1.0;
            b[2 * i + 1] = -lo[i];
        }
        Self::new(a, b)
    }

    /// Symmetric box `|theta_i| <= bound_i`.
    pub fn symmetric_box(bounds: &[f64]) -> Result<Self> {
        let lo: Vec<f64> = bounds.iter().map(|b| -b).collect();
        Self::from_box(&lo, bounds)
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.a.nrows()
    }

    /// `a_i theta <= b_i + tol ||a_i||` for every row.
    pub fn contains(&self, theta: &DVector<f64>, tol: f64) -> bool {
        (0..self.n_rows()).all(|i| {
            let row = self.a.row(i);
            row.dot(&theta.transpose()) <= self.b[i] + tol * row.norm().max(1e-300)
        })
    }

    /// Largest `max_i (a_i theta - b_i) / ||a_i||`; negative inside.
    pub fn max_violation(&self, theta: &DVector<f64>) -> f64 {
        (0..self.n_rows())
            .map(|i| {
                let row = self.a.row(i);
                let nrm = row.norm();
                if nrm == 0.0 {
                    -self.b[i]
                } else {
                    (row.dot(&theta.transpose()) - self.b[i]) / nrm
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Chebyshev ball, radius capped at `cap`.
    pub fn chebyshev(&self, cap: f64) -> Option<ChebyshevBall> {
        chebyshev_ball(&self.a, &self.b, cap)
    }

    /// Phase-1 feasibility verdict.
    pub fn is_empty(&self) -> bool {
        match self.chebyshev(1.0) {
            None => true,
            Some(ball) => ball.radius < -INTERIOR_TOL,
        }
    }

    /// Whether the set contains a ball of radius above [`INTERIOR_TOL`].
    pub fn has_interior(&self) -> bool {
        matches!(self.chebyshev(1.0), Some(ball) if ball.radius > INTERIOR_TOL)
    }

    /// Tightest axis-aligned box `(lo, hi)`, or `None` when empty or
    /// unbounded.
    pub fn bounding_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let d = self.dim();
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for j in 0..d {
            let mut c = DVector::zeros(d);
            c[j] = 1.0;
            let min = solve_lp(&c, &self.a, &self.b);
            let max = solve_lp(&(-&c), &self.a, &self.b);
            if min.status != LpStatus::Optimal || max.status != LpStatus::Optimal {
                return None;
            }
            lo[j] = min.value;
            hi[j] = -max.value;
        }
        Some((lo, hi))
    }

    /// Copy with unit-norm rows; zero rows are dropped (or flag emptiness
    /// when their bound is negative).
    pub fn normalized(&self) -> Self {
        let mut rows = Vec::new();
        let mut empty = self.empty;
        for i in 0..self.n_rows() {
            let nrm = self.a.row(i).norm();
            if nrm <= 1e-12 {
                if self.b[i] < -INTERIOR_TOL {
                    empty = true;
                }
                continue;
            }
            rows.push((self.a.row(i) / nrm, self.b[i] / nrm));
        }
        let mut out = from_rows(self.dim(), &rows);
        out.empty = empty;
        out
    }

    /// Minimal H-representation: each retained row is necessary, certified
    /// by an LP that maximises it over the remaining rows.
    pub fn remove_redundant(&self) -> Self {
        let (poly, _) = self.remove_redundant_indexed();
        poly
    }

    /// As [`remove_redundant`](Self::remove_redundant), also returning the
    /// original indices of the kept rows.
    pub fn remove_redundant_indexed(&self) -> (Self, Vec<usize>) {
        let d = self.dim();
        let mut keep: Vec<usize> = Vec::new();
        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
        for i in 0..self.n_rows() {
            let nrm = self.a.row(i).norm();
            if nrm <= 1e-12 {
                if self.b[i] < -INTERIOR_TOL {
                    let mut out = self.clone();
                    out.empty = true;
                    return (out, (0..self.n_rows()).collect());
                }
                continue;
            }
            let a = self.a.row(i).transpose() / nrm;
            let b = self.b[i] / nrm;
            // Parallel duplicates: keep the tighter one.
            if let Some(k) = rows.iter().position(|(r, _)| (r - &a).norm() <= 1e-12) {
                if b < rows[k].1 {
                    rows[k].1 = b;
                    keep[k] = i;
                }
                continue;
            }
            rows.push((a, b));
            keep.push(i);
        }
        let full = from_rows_vec(d, &rows);
        if full.is_empty() {
            let mut out = full;
            out.empty = true;
            return (out, keep);
        }

        let mut alive = vec![true; rows.len()];
        for k in 0..rows.len() {
            let others: Vec<(DVector<f64>, f64)> = rows
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k && alive[j])
                .map(|(_, r)| r.clone())
                .chain(std::iter::once((rows[k].0.clone(), rows[k].1 + 1.0)))
                .collect();
            let p = from_rows_vec(d, &others);
            let sol = solve_lp(&(-&rows[k].0), &p.a, &p.b);
            let redundant = sol.status == LpStatus::Optimal && -sol.value <= rows[k].1 + INTERIOR_TOL;
            if redundant {
                alive[k] = false;
            }
        }
        let kept: Vec<(DVector<f64>, f64)> =
            rows.iter().zip(&alive).filter(|(_, &a)| a).map(|(r, _)| r.clone()).collect();
        let idx: Vec<usize> = keep.iter().zip(&alive).filter(|(_, &a)| a).map(|(&i, _)| i).collect();
        (from_rows_vec(d, &kept), idx)
    }
}

fn from_rows(d: usize, rows: &[(nalgebra::RowDVector<f64>, f64)]) -> Polyhedron {
    let mut a = DMatrix::zeros(rows.len(), d);
    let mut b = DVector::zeros(rows.len());
    for (i, (r, v)) in rows.iter().enumerate() {
        a.set_row(i, r);
        b[i] = *v;
    }
    Polyhedron { a, b, empty: false }
}

fn from_rows_vec(d: usize, rows: &[(DVector<f64>, f64)]) -> Polyhedron {
    let mut a = DMatrix::zeros(rows.len(), d);
    let mut b = DVector::zeros(rows.len());
    for (i, (r, v)) in rows.iter().enumerate() {
        a.set_row(i, &r.transpose());
        b[i] = *v;
    }
    Polyhedron { a, b, empty: false }
}

/// Origin of a region halfspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Facet {
    /// `lambda_i >= 0` for an active row `i`.
    Multiplier(usize),
    /// Primal feasibility of an inactive row `i`.
    Constraint(usize),
    /// Row of the exploration domain.
    Domain(usize),
}

/// One piece of the explicit law: `z = L theta + c` on `region`.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalRegion {
    pub active_set: Vec<usize>,
    pub gain: DMatrix<f64>,
    pub offset: DVector<f64>,
    pub region: Polyhedron,
    /// Origin of each row of `region`.
    pub facets: Vec<Facet>,
    pub lambda_gain: DMatrix<f64>,
    pub lambda_offset: DVector<f64>,
}

impl CriticalRegion {
    pub fn law(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.gain * theta + &self.offset
    }

    /// Multipliers of the active rows at `theta`.
    pub fn multipliers(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.lambda_gain * theta + &self.lambda_offset
    }
}

/// Counters describing the exploration.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SolveStats {
    pub facets_crossed: usize,
    /// Candidate active sets rejected for dependent constraint rows.
    pub licq_skips: usize,
    /// Facet points re-sampled with a jittered offset.
    pub jitter_retries: usize,
    /// Facet crossings that produced no full-dimensional region.
    pub unresolved_crossings: usize,
    /// Regions with at least one facet on the domain boundary.
    pub domain_clipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitSolution {
    pub regions: Vec<CriticalRegion>,
    pub d_theta: usize,
    pub d_z: usize,
    pub domain: Polyhedron,
    pub stats: SolveStats,
}

/// Result of a point-location query.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub region_id: usize,
    pub z: DVector<f64>,
}

impl ExplicitSolution {
    /// Number of regions `s`.
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Sequential scan; the first region containing `theta` (tolerance
    /// [`INTERIOR_TOL`] per halfspace) wins.
    pub fn evaluate(&self, theta: &DVector<f64>) -> Option<Evaluation> {
        if theta.len() != self.d_theta {
            return None;
        }
        self.regions
            .iter()
            .position(|r| r.region.contains(theta, INTERIOR_TOL))
            .map(|id| Evaluation { region_id: id, z: self.regions[id].law(theta) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExplicitOptions {
    /// Step across a facet, relative to `max(1, |facet point|_inf)`.
    pub step: f64,
    /// Regions whose Chebyshev radius does not exceed this are discarded.
    pub min_radius: f64,
    pub max_regions: usize,
    /// Jittered re-samples per unresolved facet crossing.
    pub jitter_attempts: usize,
    /// Tolerance of the numeric QP solves used to identify active sets.
    pub qp_tol: f64,
    pub exec: Execution,
}

impl Default for ExplicitOptions {
    fn default() -> Self {
        Self {
            step: 1e-7,
            min_radius: INTERIOR_TOL,
            max_regions: 100_000,
            jitter_attempts: 3,
            qp_tol: QpOptions::default().tol,
            exec: Execution::default(),
        }
    }
}

pub fn explicit_solve(qp: &ParametricQP, domain: &Polyhedron) -> Result<ExplicitSolution> {
    explicit_solve_with(qp, domain, &ExplicitOptions::default())
}

pub fn explicit_solve_with(
    qp: &ParametricQP,
    domain: &Polyhedron,
    opts: &ExplicitOptions,
) -> Result<ExplicitSolution> {
    if !qp.strictly_convex {
        return Err(Error::NotStrictlyConvex(
            "explicit solution requires a strictly convex QP".into(),
        ));
    }
    dim_check(domain.dim() == qp.d_theta(), || {
        format!("domain has dimension {}, parameter has {}", domain.dim(), qp.d_theta())
    })?;
    let ctx = Context::new(qp, domain, opts)?;
    let mut stats = SolveStats::default();
    let mut regions: Vec<CriticalRegion> = Vec::new();
    let mut visited: BTreeSet<Vec<usize>> = BTreeSet::new();

    let Some(seed) = ctx.seed_point() else {
        return Ok(ctx.finish(regions, stats));
    };
    let seed_region = match ctx.region_near(&seed, &mut stats) {
        Some(r) => r,
        None => {
            return Err(Error::Numerical("no full-dimensional region at the seed point".into()))
        }
    };
    visited.insert(seed_region.active_set.clone());
    let mut frontier = vec![seed_region];

    while !frontier.is_empty() {
        let snapshot = &visited;
        let found: Vec<(Vec<Option<CriticalRegion>>, SolveStats)> =
            par::map(ctx.opts.exec, &frontier, |region| {
                let mut local = SolveStats::default();
                let out = ctx.neighbours(region, snapshot, &mut local);
                (out, local)
            });
        regions.append(&mut frontier);
        for (cands, local) in found {
            stats.facets_crossed += local.facets_crossed;
            stats.licq_skips += local.licq_skips;
            stats.jitter_retries += local.jitter_retries;
            stats.unresolved_crossings += local.unresolved_crossings;
            for cand in cands.into_iter().flatten() {
                if visited.insert(cand.active_set.clone()) {
                    frontier.push(cand);
                }
            }
        }
        if regions.len() + frontier.len() > ctx.opts.max_regions {
            return Err(Error::Numerical(format!(
                "region limit of {} exceeded",
                ctx.opts.max_regions
            )));
        }
    }
    Ok(ctx.finish(regions, stats))
}

struct Context<'a> {
    qp: &'a ParametricQP,
    domain: Polyhedron,
    opts: &'a ExplicitOptions,
    chol: Cholesky<f64, nalgebra::Dyn>,
    /// `H^-1 F`
    hinv_f: DMatrix<f64>,
    /// Radius cap for Chebyshev LPs.
    cap: f64,
}

impl<'a> Context<'a> {
    fn new(qp: &'a ParametricQP, domain: &Polyhedron, opts: &'a ExplicitOptions) -> Result<Self> {
        let chol = Cholesky::new(qp.h.clone())
            .ok_or_else(|| Error::NotStrictlyConvex("H is not positive definite".into()))?;
        let hinv_f = chol.solve(&qp.f);
        let domain = domain.normalized();
        let cap = 1.0 + linalg::max_abs_vec(&domain.b);
        Ok(Self { qp, domain, opts, chol, hinv_f, cap })
    }

    fn finish(&self, mut regions: Vec<CriticalRegion>, mut stats: SolveStats) -> ExplicitSolution {
        regions.sort_by(|a, b| a.active_set.cmp(&b.active_set));
        stats.domain_clipped = regions
            .iter()
            .filter(|r| r.facets.iter().any(|f| matches!(f, Facet::Domain(_))))
            .count();
        ExplicitSolution {
            regions,
            d_theta: self.qp.d_theta(),
            d_z: self.qp.d_z(),
            domain: self.domain.clone(),
            stats,
        }
    }

    /// Parameter with the largest slack in the lifted feasible set
    /// `{(theta, z) : Gz <= E theta + d, theta in domain}`.
    fn seed_point(&self) -> Option<DVector<f64>> {
        let (q, dz, dt) = (self.qp.n_constraints(), self.qp.d_z(), self.qp.d_theta());
        let nd = self.domain.n_rows();
        let mut a = DMatrix::zeros(q + nd, dt + dz);
        let mut b = DVector::zeros(q + nd);
        a.view_mut((0, 0), (q, dt)).copy_from(&(-&self.qp.e));
        a.view_mut((0, dt), (q, dz)).copy_from(&self.qp.g);
        b.rows_mut(0, q).copy_from(&self.qp.d);
        a.view_mut((q, 0), (nd, dt)).copy_from(&self.domain.a);
        b.rows_mut(q, nd).copy_from(&self.domain.b);
        let ball = chebyshev_ball(&a, &b, self.cap)?;
        if ball.radius <= self.opts.min_radius {
            return None;
        }
        Some(ball.center.rows(0, dt).into_owned())
    }

    /// Builds the critical region of `active`, or `None` when LICQ fails or
    /// the region has no interior.
    fn region_for(&self, active: &[usize], stats: &mut SolveStats) -> Option<CriticalRegion> {
        let qp = self.qp;
        let (dz, dt, q) = (qp.d_z(), qp.d_theta(), qp.n_constraints());
        let (gain, offset, lambda_gain, lambda_offset) = if active.is_empty() {
            (-&self.hinv_f, DVector::zeros(dz), DMatrix::zeros(0, dt), DVector::zeros(0))
        } else {
            let ga = qp.g.select_rows(active);
            if linalg::rank(&ga, None) < active.len() {
                stats.licq_skips += 1;
                return None;
            }
            let ea = qp.e.select_rows(active);
            let da = DVector::from_iterator(active.len(), active.iter().map(|&i| qp.d[i]));
            let hinv_gat = self.chol.solve(&ga.transpose());
            let s = &ga * &hinv_gat;
            let s_lu = s.lu();
            let lambda_gain = -s_lu.solve(&(&ea + &ga * &self.hinv_f))?;
            let lambda_offset = -s_lu.solve(&da)?;
            let gain = -(&self.hinv_f + &hinv_gat * &lambda_gain);
            let offset = -(&hinv_gat * &lambda_offset);
            (gain, offset, lambda_gain, lambda_offset)
        };

        let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
        let mut tags: Vec<Facet> = Vec::new();
        for (k, &i) in active.iter().enumerate() {
            rows.push((-lambda_gain.row(k).transpose(), lambda_offset[k]));
            tags.push(Facet::Multiplier(i));
        }
        for i in (0..q).filter(|i| !active.contains(i)) {
            let gi = qp.g.row(i);
            let a = (gi * &gain - qp.e.row(i)).transpose();
            let b = qp.d[i] - gi.dot(&offset.transpose());
            rows.push((a, b));
            tags.push(Facet::Constraint(i));
        }
        for j in 0..self.domain.n_rows() {
            rows.push((self.domain.a.row(j).transpose(), self.domain.b[j]));
            tags.push(Facet::Domain(j));
        }

        let raw = from_rows_vec(dt, &rows);
        let normalized_tags: Vec<Facet> = (0..raw.n_rows())
            .filter(|&i| raw.a.row(i).norm() > 1e-12)
            .map(|i| tags[i])
            .collect();
        let poly = raw.normalized();
        if poly.empty {
            return None;
        }
        let ball = poly.chebyshev(self.cap)?;
        if ball.radius <= self.opts.min_radius {
            return None;
        }
        let (region, kept) = poly.remove_redundant_indexed();
        if region.empty {
            return None;
        }
        let facets = kept.iter().map(|&i| normalized_tags[i]).collect();
        Some(CriticalRegion {
            active_set: active.to_vec(),
            gain,
            offset,
            region,
            facets,
            lambda_gain,
            lambda_offset,
        })
    }

    /// Optimal active set at `theta`, tried in three readings: the solver's
    /// working set, the rows with strictly positive multipliers, and the
    /// rows that hold with equality.
    fn candidates_at(&self, theta: &DVector<f64>) -> Vec<Vec<usize>> {
        let qp = self.qp;
        let qp_opts = QpOptions { tol: self.opts.qp_tol, ..Default::default() };
        let Ok(sol) = qpcore::solve_qp_with(&qp.h, &qp.linear_term(theta), &qp.g, &qp.rhs(theta), &qp_opts) else {
            return Vec::new();
        };
        if !sol.is_optimal() {
            return Vec::new();
        }
        let scale = 1.0 + linalg::max_abs_vec(&sol.lambda);
        let strict: Vec<usize> =
            (0..qp.n_constraints()).filter(|&i| sol.lambda[i] > 1e-9 * scale).collect();
        let rhs = qp.rhs(theta);
        let gz = &qp.g * &sol.z;
        let rscale = 1.0 + linalg::max_abs_vec(&rhs);
        let tight: Vec<usize> = (0..qp.n_constraints())
            .filter(|&i| qp.g.row(i).norm() > 1e-12 && (rhs[i] - gz[i]).abs() <= 1e-9 * rscale)
            .collect();
        let mut out = vec![sol.active_set];
        for c in [strict, tight] {
            if !out.contains(&c) {
                out.push(c);
            }
        }
        out
    }

    /// Full-dimensional region around `theta`, re-sampling nearby points
    /// when `theta` sits on a lower-dimensional piece.
    fn region_near(&self, theta: &DVector<f64>, stats: &mut SolveStats) -> Option<CriticalRegion> {
        self.region_near_skipping(theta, &BTreeSet::new(), stats).flatten()
    }

    /// `Some(None)` means the point resolved to an already known active set.
    fn region_near_skipping(
        &self,
        theta: &DVector<f64>,
        known: &BTreeSet<Vec<usize>>,
        stats: &mut SolveStats,
    ) -> Option<Option<CriticalRegion>> {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(hash_point(theta));
        let jitter = self.opts.step * (1.0 + linalg::max_abs_vec(theta));
        let mut point = theta.clone();
        for attempt in 0..=self.opts.jitter_attempts {
            if attempt > 0 {
                stats.jitter_retries += 1;
                let dir = DVector::from_fn(theta.len(), |_, _| rng.gen_range(-1.0..=1.0));
                point = theta + dir.normalize() * jitter;
            }
            let cands = self.candidates_at(&point);
            if cands.first().is_some_and(|c| known.contains(c)) {
                return Some(None);
            }
            for cand in cands {
                if known.contains(&cand) {
                    return Some(None);
                }
                if let Some(region) = self.region_for(&cand, stats) {
                    return Some(Some(region));
                }
            }
        }
        None
    }

    fn neighbours(
        &self,
        region: &CriticalRegion,
        known: &BTreeSet<Vec<usize>>,
        stats: &mut SolveStats,
    ) -> Vec<Option<CriticalRegion>> {
        let mut out = Vec::new();
        for (k, facet) in region.facets.iter().enumerate() {
            if matches!(facet, Facet::Domain(_)) {
                continue;
            }
            let Some(point) = facet_point(&region.region, k, self.cap) else {
                continue;
            };
            let normal = region.region.a.row(k).transpose();
            let step = self.opts.step * (1.0 + linalg::max_abs_vec(&point));
            let across = &point + normal * step;
            if !self.domain.contains(&across, 0.0) {
                continue;
            }
            stats.facets_crossed += 1;
            // Generic case: the facet's row leaves or joins the active set.
            let guess: Vec<usize> = match *facet {
                Facet::Multiplier(i) => region.active_set.iter().copied().filter(|&j| j != i).collect(),
                Facet::Constraint(i) => {
                    let mut a = region.active_set.clone();
                    a.push(i);
                    a.sort_unstable();
                    a
                }
                Facet::Domain(_) => unreachable!(),
            };
            if known.contains(&guess) {
                continue;
            }
            let mut scratch = SolveStats::default();
            if let Some(r) = self.region_for(&guess, &mut scratch) {
                if r.region.max_violation(&across) <= 0.5 * step {
                    out.push(Some(r));
                    continue;
                }
            }
            // An infeasible far side is the boundary of the feasible set.
            let feasible = self.candidates_at(&across);
            if feasible.is_empty() {
                continue;
            }
            match self.region_near_skipping(&across, known, stats) {
                Some(found) => out.push(found),
                None => {
                    stats.unresolved_crossings += 1;
                    log::warn!(
                        "no full-dimensional region across facet {:?} of active set {:?}",
                        facet,
                        region.active_set
                    );
                }
            }
        }
        out
    }
}

/// Point in the relative interior of facet `k` of `poly`.
fn facet_point(poly: &Polyhedron, k: usize, cap: f64) -> Option<DVector<f64>> {
    let (q, d) = (poly.n_rows(), poly.dim());
    let mut a = DMatrix::zeros(q + 2, d + 1);
    let mut b = DVector::zeros(q + 2);
    let ak = poly.a.row(k);
    let mut r = 0;
    for i in (0..q).filter(|&i| i != k) {
        let row = poly.a.row(i);
        // Radius measured within the facet hyperplane.
        let proj = row - ak * row.dot(&ak);
        a.view_mut((r, 0), (1, d)).copy_from(&row);
        a[(r, d)] = proj.norm();
        b[r] = poly.b[i];
        r += 1;
    }
    a.view_mut((r, 0), (1, d)).copy_from(&ak);
    b[r] = poly.b[k];
    a.view_mut((r + 1, 0), (1, d)).copy_from(&(-ak));
    b[r + 1] = -poly.b[k];
    a[(r + 2, d)] = 1.0;
    b[r + 2] = cap;
    let mut c = DVector::zeros(d + 1);
    c[d] = -1.0;
    let sol = solve_lp(&c, &a, &b);
    (sol.status == LpStatus::Optimal && sol.x[d] > 0.0).then(|| sol.x.rows(0, d).into_owned())
}

fn hash_point(theta: &DVector<f64>) -> u64 {
    theta.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, x| {
        (h ^ x.to_bits()).wrapping_mul(0x0100_0000_01b3)
    })
}
