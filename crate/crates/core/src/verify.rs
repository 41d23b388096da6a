//! Numerical checks that the reduced data-driven problem reproduces
//! model-based MPC: KKT coupling at single past windows, sampled agreement
//! of the two explicit laws, and closed-loop runs.

use std::collections::VecDeque;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::condense::{recover_uf, ParametricQP, ReductionMaps};
use crate::datamat::HankelPartition;
use crate::error::{dim_check, Error, Result};
use crate::linalg;
use crate::mpqp::{ExplicitSolution, Polyhedron};
use crate::par::{self, Execution};
use crate::qpcore::{self, QpSolution, QpStatus};
use crate::sysmodel::SystemModel;

/// Past window `xi = (u_p; y_p)` with `u_p = (u(k-N_p); ...; u(k-1))` and
/// `y_p` stacked the same way.
#[derive(Debug, Clone, PartialEq)]
pub struct PastWindow {
    pub xi: DVector<f64>,
}

impl PastWindow {
    pub fn new(u_p: &DVector<f64>, y_p: &DVector<f64>) -> Self {
        let mut xi = DVector::zeros(u_p.len() + y_p.len());
        xi.rows_mut(0, u_p.len()).copy_from(u_p);
        xi.rows_mut(u_p.len(), y_p.len()).copy_from(y_p);
        Self { xi }
    }

    pub fn from_vector(xi: DVector<f64>) -> Self {
        Self { xi }
    }

    pub fn u_p(&self, m: usize, n_p: usize) -> DVector<f64> {
        self.xi.rows(0, m * n_p).into_owned()
    }

    pub fn y_p(&self, m: usize, n_p: usize) -> DVector<f64> {
        self.xi.rows(m * n_p, self.xi.len() - m * n_p).into_owned()
    }
}

/// `W_p W_p+ xi`: the closest window the data can explain.
pub fn project_past_window(
    part: &HankelPartition,
    maps: &ReductionMaps,
    xi: &PastWindow,
) -> PastWindow {
    PastWindow { xi: &part.w_p * (&maps.w_p_pinv * &xi.xi) }
}

/// `x0 = Gamma W_p W_p+ xi`
pub fn mapped_state(
    model: &SystemModel,
    part: &HankelPartition,
    maps: &ReductionMaps,
    xi: &PastWindow,
) -> Result<DVector<f64>> {
    let gamma = model.gamma_matrix(part.horizons.n_p, None)?;
    let proj = project_past_window(part, maps, xi);
    dim_check(proj.xi.len() == gamma.ncols(), || {
        format!("past window has length {}, expected {}", proj.xi.len(), gamma.ncols())
    })?;
    Ok(gamma * proj.xi)
}

/// Box over `x0` containing the image of `dpc_domain` under
/// `Gamma W_p W_p+`, so every window in the domain has a state counterpart.
pub fn covering_state_domain(
    model: &SystemModel,
    part: &HankelPartition,
    maps: &ReductionMaps,
    dpc_domain: &Polyhedron,
) -> Result<Polyhedron> {
    let gamma = model.gamma_matrix(part.horizons.n_p, None)?;
    let to_state = gamma * &part.w_p * &maps.w_p_pinv;
    let (lo, hi) = dpc_domain
        .bounding_box()
        .ok_or_else(|| Error::InvalidInput("past-window domain is empty or unbounded".into()))?;
    let radius = DVector::from_iterator(lo.len(), lo.iter().zip(&hi).map(|(l, h)| l.abs().max(h.abs())));
    let bounds: Vec<f64> = (to_state.abs() * radius).iter().map(|x| x * (1.0 + 1e-9) + 1e-9).collect();
    Polyhedron::symmetric_box(&bounds)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingReport {
    /// `||u_f*(x0) - (U_f W_p+ xi + U_f V_p K_f beta*)||_inf`
    pub uf_residual: f64,
    /// `||lambda*(x0) - lambda_beta*(xi)||_inf`
    pub lambda_residual: f64,
    pub x0_mapped: DVector<f64>,
    /// Both solutions have linearly independent active rows with strictly
    /// positive multipliers; only then are multipliers unique and compared.
    pub nondegenerate: bool,
    pub mpc_status: QpStatus,
    pub beta_status: QpStatus,
    pub passed: bool,
}

/// Solves the model-based problem at `x0 = Gamma W_p W_p+ xi` and the
/// reduced data-driven problem at `xi`, then compares recovered inputs and
/// multipliers.
#[allow(clippy::too_many_arguments)]
pub fn check_kkt_coupling(
    mpc: &ParametricQP,
    beta_qp: &ParametricQP,
    maps: &ReductionMaps,
    part: &HankelPartition,
    model: &SystemModel,
    xi: &PastWindow,
    tol: f64,
) -> Result<CouplingReport> {
    dim_check(mpc.n_constraints() == beta_qp.n_constraints(), || {
        format!(
            "constraint counts differ: {} vs {}",
            mpc.n_constraints(),
            beta_qp.n_constraints()
        )
    })?;
    let x0 = mapped_state(model, part, maps, xi)?;
    let ms = solve_at(mpc, &x0)?;
    let bs = solve_at(beta_qp, &xi.xi)?;
    if !ms.is_optimal() || !bs.is_optimal() {
        return Ok(CouplingReport {
            uf_residual: f64::INFINITY,
            lambda_residual: f64::INFINITY,
            x0_mapped: x0,
            nondegenerate: false,
            mpc_status: ms.status,
            beta_status: bs.status,
            passed: false,
        });
    }
    let uf = recover_uf(maps, &part.u_f, &xi.xi, &bs.z);
    let uf_residual = linalg::max_abs_vec(&(&ms.z - uf));
    let lambda_residual = linalg::max_abs_vec(&(&ms.lambda - &bs.lambda));
    let nondegenerate =
        is_nondegenerate(mpc, &x0, &ms, 1e-7) && is_nondegenerate(beta_qp, &xi.xi, &bs, 1e-7);
    let passed = uf_residual <= tol && (!nondegenerate || lambda_residual <= tol);
    Ok(CouplingReport {
        uf_residual,
        lambda_residual,
        x0_mapped: x0,
        nondegenerate,
        mpc_status: ms.status,
        beta_status: bs.status,
        passed,
    })
}

fn solve_at(qp: &ParametricQP, theta: &DVector<f64>) -> Result<QpSolution> {
    qpcore::solve_qp(&qp.h, &qp.linear_term(theta), &qp.g, &qp.rhs(theta))
}

/// Strict complementarity plus LICQ at a computed optimum: every row is
/// either clearly inactive (slack above `tol`) or clearly active (multiplier
/// above `tol`), and the active rows are linearly independent.
pub fn is_nondegenerate(qp: &ParametricQP, theta: &DVector<f64>, sol: &QpSolution, tol: f64) -> bool {
    let slack = qp.rhs(theta) - &qp.g * &sol.z;
    let lscale = 1.0 + linalg::max_abs_vec(&sol.lambda);
    let sscale = 1.0 + linalg::max_abs_vec(&qp.rhs(theta));
    let mut active = Vec::new();
    for i in 0..qp.n_constraints() {
        let strongly_active = sol.lambda[i] > tol * lscale;
        let inactive = slack[i] > tol * sscale;
        if strongly_active == inactive {
            return false;
        }
        if strongly_active {
            active.push(i);
        }
    }
    active.is_empty() || linalg::rank(&qp.g.select_rows(&active), None) == active.len()
}

/// How parameters are drawn for [`sampled_equivalence`].
#[derive(Debug, Clone)]
pub struct SamplerSpec {
    pub samples: usize,
    pub seed: u64,
    /// Restricts draws to this set; the solution domain otherwise.
    pub within: Option<Polyhedron>,
    pub exec: Execution,
}

impl SamplerSpec {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples, seed, within: None, exec: Execution::default() }
    }
}

/// Uniform draws from `set` by rejection from its bounding box.
pub fn sample_uniform(set: &Polyhedron, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let (lo, hi) = set
        .bounding_box()
        .ok_or_else(|| Error::InvalidInput("sampling set is empty or unbounded".into()))?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let limit = 1000 * count.max(100);
    for _ in 0..limit {
        let p = DVector::from_fn(lo.len(), |i, _| {
            if hi[i] > lo[i] {
                rng.gen_range(lo[i]..=hi[i])
            } else {
                lo[i]
            }
        });
        if set.contains(&p, 0.0) {
            out.push(p);
            if out.len() == count {
                return Ok(out);
            }
        }
    }
    Err(Error::Numerical(format!(
        "rejection sampling accepted only {} of {} points",
        out.len(),
        count
    )))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub max_uf_deviation: f64,
    /// Draws at which both laws were defined.
    pub samples: usize,
    /// Draws outside one of the two partitions.
    pub skipped: usize,
}

/// Evaluates the explicit data-driven law at sampled `xi`, recovers `u_f`,
/// and compares with the explicit model-based law at
/// `x0 = Gamma W_p W_p+ xi`.
pub fn sampled_equivalence(
    mpc_sol: &ExplicitSolution,
    dpc_sol: &ExplicitSolution,
    maps: &ReductionMaps,
    part: &HankelPartition,
    model: &SystemModel,
    spec: &SamplerSpec,
) -> Result<EquivalenceReport> {
    let set = spec.within.as_ref().unwrap_or(&dpc_sol.domain);
    let points = sample_uniform(set, spec.samples, spec.seed)?;
    let gamma = model.gamma_matrix(part.horizons.n_p, None)?;
    let to_state = &gamma * &part.w_p * &maps.w_p_pinv;
    let deviations = par::map(spec.exec, &points, |xi| {
        let beta = dpc_sol.evaluate(xi)?.z;
        let uf = recover_uf(maps, &part.u_f, xi, &beta);
        let x0 = &to_state * xi;
        let mpc = mpc_sol.evaluate(&x0)?.z;
        Some(linalg::max_abs_vec(&(uf - mpc)))
    });
    let samples = deviations.iter().flatten().count();
    Ok(EquivalenceReport {
        max_uf_deviation: deviations.iter().flatten().fold(0.0, |a: f64, &b| a.max(b)),
        samples,
        skipped: deviations.len() - samples,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    /// Largest `||z_explicit - z_numeric||_inf` over feasible draws.
    pub max_deviation: f64,
    /// Feasible draws compared.
    pub compared: usize,
    /// Draws where the numeric solver reports infeasibility.
    pub infeasible: usize,
    /// Feasible draws outside every region.
    pub uncovered: usize,
    /// Infeasible draws that the explicit law nevertheless covers.
    pub spurious: usize,
}

/// Draws parameters from the solution domain until at least `feasible` of
/// them admit a numeric optimum (at most 20 batches) and compares the
/// explicit law with [`qpcore::solve_qp`].
pub fn oracle_agreement(
    qp: &ParametricQP,
    sol: &ExplicitSolution,
    feasible: usize,
    seed: u64,
    exec: Execution,
) -> Result<OracleReport> {
    let mut report = OracleReport { max_deviation: 0.0, compared: 0, infeasible: 0, uncovered: 0, spurious: 0 };
    let mut round = 0u64;
    while report.compared < feasible && round < 20 {
        let need = 2 * (feasible - report.compared) + 8;
        let points = sample_uniform(&sol.domain, need, seed.wrapping_add(round))?;
        round += 1;
        let outcomes = par::map(exec, &points, |theta| -> Result<Outcome> {
            let numeric = solve_at(qp, theta)?;
            let explicit = sol.evaluate(theta);
            Ok(match (numeric.is_optimal(), explicit) {
                (true, Some(e)) => Outcome::Compared(linalg::max_abs_vec(&(e.z - numeric.z))),
                (true, None) => Outcome::Uncovered,
                (false, Some(_)) => Outcome::Spurious,
                (false, None) => Outcome::Infeasible,
            })
        });
        for o in outcomes {
            match o? {
                Outcome::Compared(dev) => {
                    report.compared += 1;
                    report.max_deviation = report.max_deviation.max(dev);
                }
                Outcome::Uncovered => report.uncovered += 1,
                Outcome::Spurious => report.spurious += 1,
                Outcome::Infeasible => report.infeasible += 1,
            }
        }
    }
    Ok(report)
}

enum Outcome {
    Compared(f64),
    Uncovered,
    Spurious,
    Infeasible,
}

/// Feedback law used by [`closed_loop`].
#[derive(Debug, Clone, Copy)]
pub enum Controller<'a> {
    /// Explicit law in the current state.
    ExplicitMpc(&'a ExplicitSolution),
    /// Explicit law in the past window, mapped back to inputs.
    ExplicitDpc {
        solution: &'a ExplicitSolution,
        maps: &'a ReductionMaps,
        part: &'a HankelPartition,
    },
    /// Numerical solve of the model-based QP at every step.
    NumericMpc(&'a ParametricQP),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `x(0), ..., x(steps)`
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
}

impl Trajectory {
    /// Largest elementwise gap in states, inputs and outputs.
    pub fn max_deviation(&self, other: &Trajectory) -> f64 {
        let gap = |a: &[DVector<f64>], b: &[DVector<f64>]| {
            if a.len() != b.len() {
                return f64::INFINITY;
            }
            a.iter().zip(b).map(|(x, y)| linalg::max_abs_vec(&(x - y))).fold(0.0, f64::max)
        };
        gap(&self.states, &other.states)
            .max(gap(&self.inputs, &other.inputs))
            .max(gap(&self.outputs, &other.outputs))
    }
}

/// Receding-horizon run applying the first input of each optimal sequence.
///
/// The data-driven controller needs a past window; it is produced by `N_p`
/// zero-input steps from a state that reaches `x0` under the free response.
pub fn closed_loop(
    model: &SystemModel,
    controller: Controller<'_>,
    x0: &DVector<f64>,
    steps: usize,
) -> Result<Trajectory> {
    dim_check(x0.len() == model.n(), || format!("x0 has length {}, expected {}", x0.len(), model.n()))?;
    let (m, p) = (model.m(), model.p());
    let mut window = match controller {
        Controller::ExplicitDpc { part, .. } => Some(warm_up(model, x0, part.horizons.n_p)?),
        _ => None,
    };
    let mut x = x0.clone();
    let mut traj = Trajectory { states: vec![x.clone()], inputs: Vec::new(), outputs: Vec::new() };
    for step in 0..steps {
        let uf = match controller {
            Controller::ExplicitMpc(sol) => {
                sol.evaluate(&x).ok_or(Error::DomainExceeded { step })?.z
            }
            Controller::NumericMpc(qp) => {
                let sol = solve_at(qp, &x)?;
                if !sol.is_optimal() {
                    return Err(Error::Numerical(format!("QP not solved at step {step}: {:?}", sol.status)));
                }
                sol.z
            }
            Controller::ExplicitDpc { solution, maps, part } => {
                let w = window.as_ref().expect("window initialized for data-driven control");
                let xi = w.vector(m, p);
                let beta = solution.evaluate(&xi).ok_or(Error::DomainExceeded { step })?.z;
                recover_uf(maps, &part.u_f, &xi, &beta)
            }
        };
        let u = uf.rows(0, m).into_owned();
        let (next, y) = model.step(&x, &u);
        if let Some(w) = window.as_mut() {
            w.push(u.clone(), y.clone());
        }
        traj.inputs.push(u);
        traj.outputs.push(y);
        x = next;
        traj.states.push(x.clone());
    }
    Ok(traj)
}

/// Rolling record of the last `N_p` inputs and outputs.
struct Window {
    u: VecDeque<DVector<f64>>,
    y: VecDeque<DVector<f64>>,
}

impl Window {
    fn push(&mut self, u: DVector<f64>, y: DVector<f64>) {
        self.u.pop_front();
        self.y.pop_front();
        self.u.push_back(u);
        self.y.push_back(y);
    }

    fn vector(&self, m: usize, p: usize) -> DVector<f64> {
        let n_p = self.u.len();
        let mut xi = DVector::zeros((m + p) * n_p);
        for (k, u) in self.u.iter().enumerate() {
            xi.rows_mut(k * m, m).copy_from(u);
        }
        for (k, y) in self.y.iter().enumerate() {
            xi.rows_mut(m * n_p + k * p, p).copy_from(y);
        }
        xi
    }
}

fn warm_up(model: &SystemModel, x0: &DVector<f64>, n_p: usize) -> Result<Window> {
    let a_np = model.a().pow(n_p as u32);
    let start = linalg::pseudoinverse(&a_np, None) * x0;
    if linalg::max_abs_vec(&(&a_np * &start - x0)) > 1e-9 * (1.0 + linalg::max_abs_vec(x0)) {
        return Err(Error::InvalidInput(
            "x0 is not reachable by the free response; supply a past window".into(),
        ));
    }
    let zero = DVector::zeros(model.m());
    let mut x = start;
    let mut w = Window { u: VecDeque::new(), y: VecDeque::new() };
    for _ in 0..n_p {
        let (next, y) = model.step(&x, &zero);
        w.u.push_back(zero.clone());
        w.y.push_back(y);
        x = next;
    }
    Ok(w)
}

/// Whether every recorded input and output satisfies `M u <= v` within `tol`.
pub fn satisfies_constraints(
    traj: &Trajectory,
    cons: &crate::condense::ConstraintSet,
    tol: f64,
) -> bool {
    traj.inputs.iter().all(|u| cons.input_ok(u, tol)) && traj.outputs.iter().all(|y| cons.output_ok(y, tol))
}
