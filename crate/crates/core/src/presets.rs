//! Reference configurations: a scalar plant with a hand-sized data set and
//! the constrained double integrator with generated data.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::condense::{
    build_dpc_raw, condense_mpc, reduce_to_beta, ConstraintSet, CostWeights, DpcRawQP,
    ParametricQP, ReductionMaps, ReductionOptions,
};
use crate::datamat::{
    generate_excitation, min_data_length, partition, DataRecord, HankelPartition, HorizonSpec,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mpqp::Polyhedron;
use crate::sysmodel::SystemModel;

/// Everything needed to build matched model-based and data-driven problems.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub model: SystemModel,
    pub weights: CostWeights,
    pub constraints: ConstraintSet,
    pub horizons: HorizonSpec,
    pub data: DataRecord,
    pub reduction: ReductionOptions,
    /// Exploration domain for the state parameter `x0`.
    pub mpc_domain: Polyhedron,
    /// Exploration domain for the past window `xi`.
    pub dpc_domain: Polyhedron,
}

/// The problems derived from a [`Scenario`].
#[derive(Debug, Clone)]
pub struct Built {
    pub mpc: ParametricQP,
    pub partition: HankelPartition,
    pub raw: DpcRawQP,
    pub maps: ReductionMaps,
    pub beta: ParametricQP,
}

impl Scenario {
    pub fn build(&self) -> Result<Built> {
        let mpc = condense_mpc(&self.model, &self.weights, &self.constraints, self.horizons.n_f)?;
        let partition = partition(&self.data, self.horizons)?;
        let raw = build_dpc_raw(&partition, &self.weights, &self.constraints)?;
        let maps = ReductionMaps::new(&partition, &self.reduction)?;
        let beta = reduce_to_beta(&raw, &maps)?;
        Ok(Built { mpc, partition, raw, maps, beta })
    }
}

/// Box `[-v_u, v_u]^N_p x [-v_y, v_y]^N_p` over the past window, ordered
/// like `xi = (u_p; y_p)`.
pub fn default_dpc_domain(cons: &ConstraintSet, n_p: usize) -> Result<Polyhedron> {
    let (u, y) = match (cons.input_bounds(), cons.output_bounds()) {
        (Some(u), Some(y)) => (u, y),
        _ => {
            return Err(Error::InvalidInput(
                "constraints do not bound every input and output; give the domain explicitly".into(),
            ))
        }
    };
    let bounds: Vec<f64> = std::iter::repeat_n(u.iter(), n_p)
        .flatten()
        .chain(std::iter::repeat_n(y.iter(), n_p).flatten())
        .copied()
        .collect();
    Polyhedron::symmetric_box(&bounds)
}

/// `x(k+1) = 1.2 x(k) + u(k)`, `y(k) = x(k) + u(k)` with `|u| <= 1`,
/// `|y| <= 4`, `Q = R = 0.5`, `N_f = 2`, `N_p = 1` and seven recorded
/// samples. The kernel basis is the coordinate basis `e_2, e_3, e_4` and
/// `Phi = 2 I`.
pub fn example1() -> Scenario {
    let model = SystemModel::scalar(1.2, 1.0, 1.0, 1.0);
    let constraints = ConstraintSet::boxes(&[1.0], &[4.0]);
    let horizons = HorizonSpec { n_p: 1, n_f: 2, n: 1 };
    let data = DataRecord::new(
        DVector::from_column_slice(&[-0.6, 0.0, 0.0, 0.0, 0.5, 0.5, 1.0]),
        DVector::from_column_slice(&[-0.1, 0.0, 0.0, 0.0, 0.5, 1.0, 2.1]),
        1,
        1,
    )
    .expect("example data is well formed");
    let mut v_p = DMatrix::zeros(5, 3);
    for k in 0..3 {
        v_p[(k + 1, k)] = 1.0;
    }
    Scenario {
        name: "example1".into(),
        model,
        weights: CostWeights::scalar(0.5, 0.5).expect("valid weights"),
        mpc_domain: Polyhedron::symmetric_box(&[4.0]).expect("valid box"),
        dpc_domain: default_dpc_domain(&constraints, 1).expect("bounded constraints"),
        constraints,
        horizons,
        data,
        reduction: ReductionOptions {
            v_p: Some(v_p),
            phi: Some(DMatrix::identity(2, 2) * 2.0),
            tol_rank: None,
        },
    }
}

/// Double integrator `A = [1 1; 0 1]`, `B = [0.5; 1]`, `C = [1 0]`, `D = 0`
/// with `|u| <= 1`, `|y| <= 25`, `Q = 1`, `R = 0.01`, `N_f = 5`, `N_p = 2`
/// and 17 uniformly random input samples drawn from `seed`.
pub fn example2(seed: u64) -> Result<Scenario> {
    example2_with_length(seed, 17)
}

/// As [`example2`] with a custom data length.
pub fn example2_with_length(seed: u64, n_d: usize) -> Result<Scenario> {
    let model = double_integrator();
    let constraints = ConstraintSet::boxes(&[1.0], &[25.0]);
    let horizons = HorizonSpec::new(2, 5, 2)?;
    let data = generate_excitation(&model, n_d, seed, 1.0)?;
    Ok(Scenario {
        name: "example2".into(),
        weights: CostWeights::scalar(1.0, 0.01)?,
        mpc_domain: Polyhedron::symmetric_box(&[25.0, 25.0])?,
        dpc_domain: default_dpc_domain(&constraints, 2)?,
        model,
        constraints,
        horizons,
        data,
        reduction: ReductionOptions::default(),
    })
}

pub fn double_integrator() -> SystemModel {
    SystemModel::new(
        DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 1, &[0.5, 1.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DMatrix::zeros(1, 1),
    )
    .expect("valid double integrator")
}

/// Random SISO plant of order `n` whose controllability and
/// observability matrices are well conditioned (`sigma_min / sigma_max`
/// above `1e-3`). Spectral radius is drawn from `[0.5, 1]`.
pub fn random_plant(seed: u64, n: usize) -> SystemModel {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    loop {
        let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..=1.0));
        let rho = a.complex_eigenvalues().iter().map(|e| e.norm()).fold(0.0, f64::max);
        if rho < 1e-6 {
            continue;
        }
        a *= rng.gen_range(0.5..=1.0) / rho;
        let b = DMatrix::from_fn(n, 1, |_, _| rng.gen_range(-1.0..=1.0));
        let c = DMatrix::from_fn(1, n, |_, _| rng.gen_range(-1.0..=1.0));
        let d = DMatrix::from_element(1, 1, if rng.gen_bool(0.5) { rng.gen_range(-1.0..=1.0) } else { 0.0 });
        let model = SystemModel::new(a, b, c, d).expect("consistent dimensions");
        let ctrb = model.controllability_matrix(n);
        let obsv = model.observability_matrix(n).expect("positive depth");
        if well_conditioned(&ctrb) && well_conditioned(&obsv) {
            return model;
        }
    }
}

fn well_conditioned(m: &DMatrix<f64>) -> bool {
    let sv = linalg::singular_values(m);
    let max = sv.max();
    max > 0.0 && sv.min() / max > 1e-3
}

/// Random plant of order 1 to 3 with generated data: `N_p` equals the
/// observability index, `N_f = 3`, `|u| <= 1`, `|y| <= 5`, `Q = 1`,
/// `R = 0.1` and five samples beyond the minimal data length.
pub fn random_scenario(seed: u64) -> Result<Scenario> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n = rng.gen_range(1..=3);
    let model = random_plant(rng.gen(), n);
    let n_p = model
        .observability_index(n, None)
        .ok_or(Error::Unobservable { depth: n, rank: 0, n })?;
    let horizons = HorizonSpec::new(n_p, 3, n)?;
    let n_d = min_data_length(1, n_p, 3, n) + 5;
    let data = generate_excitation(&model, n_d, rng.gen(), 1.0)?;
    let constraints = ConstraintSet::boxes(&[1.0], &[5.0]);
    let x_bound = vec![5.0; n];
    Ok(Scenario {
        name: format!("random-{seed}"),
        weights: CostWeights::scalar(1.0, 0.1)?,
        mpc_domain: Polyhedron::symmetric_box(&x_bound)?,
        dpc_domain: default_dpc_domain(&constraints, n_p)?,
        model,
        constraints,
        horizons,
        data,
        reduction: ReductionOptions::default(),
    })
}

/// Seed used by the built-in second configuration.
pub const EXAMPLE2_SEED: u64 = 7;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn example1_builds_and_matches_printed_reduction() {
        let b = example1().build().unwrap();
        assert_eq!(b.partition.l(), 5);
        assert_eq!(b.maps.nu, 3);
        assert_eq!(b.maps.mu, 2);
        let h = DMatrix::from_row_slice(2, 2, &[1.75, 2.5, 2.5, 3.75]);
        assert_relative_eq!(b.beta.h, h, epsilon = 1e-9);
    }

    #[test]
    fn example1_dpc_domain_is_input_then_output_box() {
        let d = example1().dpc_domain;
        assert_eq!(d.b.as_slice(), &[1.0, 1.0, 4.0, 4.0]);
        assert_eq!(d.a[(0, 0)], 1.0);
        assert_eq!(d.a[(2, 1)], 1.0);
    }

    #[test]
    fn example2_dimensions() {
        let b = example2(EXAMPLE2_SEED).unwrap().build().unwrap();
        assert_eq!(b.partition.l(), 11);
        assert_eq!(b.maps.nu, 7);
        assert_eq!(b.maps.mu, 5);
        assert_eq!(b.beta.d_theta(), 4);
        assert_eq!(b.beta.d_z(), 5);
    }

    #[test]
    fn random_scenarios_are_reproducible_and_build() {
        for seed in 0..5 {
            let a = random_scenario(seed).unwrap();
            let b = random_scenario(seed).unwrap();
            assert_eq!(a.data, b.data);
            assert_eq!(a.model, b.model);
            let built = a.build().unwrap();
            assert_eq!(built.maps.mu, 3);
        }
    }

    #[test]
    fn unbounded_outputs_need_explicit_domain() {
        let cons = ConstraintSet::new(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_column_slice(&[1.0, 1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DVector::from_column_slice(&[3.0]),
        )
        .unwrap();
        assert!(default_dpc_domain(&cons, 1).is_ok());
        let open = ConstraintSet::new(
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_column_slice(&[1.0, 1.0]),
            DMatrix::zeros(0, 1),
            DVector::zeros(0),
        )
        .unwrap();
        assert!(default_dpc_domain(&open, 1).is_err());
    }
}
