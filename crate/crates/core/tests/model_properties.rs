use explicit_dpc::condense::{ReductionMaps, ReductionOptions};
use explicit_dpc::datamat::{hankel, partition, HankelPartition};
use explicit_dpc::linalg::{max_abs, max_abs_vec, pseudoinverse};
use explicit_dpc::presets::{self, random_plant, random_scenario, Scenario};
use explicit_dpc::qpcore::solve_qp;
use explicit_dpc::sysmodel::SystemModel;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

fn vector(rng: &mut Xoshiro256PlusPlus, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.gen_range(-1.0..=1.0))
}

fn scale(m: &DMatrix<f64>) -> f64 {
    1.0 + max_abs(m)
}

/// `x0 = Gamma W_p W_p+` as a matrix acting on `xi`.
fn to_state(sc: &Scenario, part: &HankelPartition, maps: &ReductionMaps) -> DMatrix<f64> {
    sc.model.gamma_matrix(sc.horizons.n_p, None).unwrap() * &part.w_p * &maps.w_p_pinv
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulation_follows_recursion(seed in any::<u64>(), n in 1usize..=3, steps in 1usize..12) {
        let model = random_plant(seed, n);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let x0 = vector(&mut rng, n);
        let u = vector(&mut rng, steps);
        let y = model.simulate(&x0, &u).unwrap();
        let mut x = x0.clone();
        for k in 0..steps {
            let uk = DVector::from_element(1, u[k]);
            let (next, yk) = model.step(&x, &uk);
            prop_assert_eq!(yk[0], y[k]);
            x = next;
        }
        let pred = model.observability_matrix(steps).unwrap() * &x0 + model.toeplitz_matrix(steps).unwrap() * &u;
        prop_assert!(max_abs_vec(&(pred - &y)) <= 1e-12 * (1.0 + max_abs_vec(&y)));
    }

    #[test]
    fn past_window_reconstructs_state(seed in any::<u64>(), n in 1usize..=3, extra in 0usize..3) {
        let model = random_plant(seed, n);
        let n_p = model.observability_index(n, None).unwrap() + extra;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed ^ 1);
        let start = vector(&mut rng, n);
        let u = vector(&mut rng, n_p);
        let (x_true, y) = model.simulate_states(&start, &u).unwrap();
        let mut xi = DVector::zeros(2 * n_p);
        xi.rows_mut(0, n_p).copy_from(&u);
        xi.rows_mut(n_p, n_p).copy_from(&y);
        let x = model.reconstruct_initial_state(n_p, &xi, None).unwrap();
        prop_assert!(max_abs_vec(&(x - x_true)) <= 1e-9);

        let o = model.observability_matrix(n_p).unwrap();
        let left = pseudoinverse(&o, None) * &o;
        prop_assert!(max_abs(&(left - DMatrix::identity(n, n))) <= 1e-9);
    }

    #[test]
    fn hankel_is_shift_invariant(seed in any::<u64>(), block in 1usize..3, samples in 4usize..12, depth in 1usize..4) {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        let seq = vector(&mut rng, block * samples);
        let h = hankel(&seq, block, depth).unwrap();
        for i in 1..depth {
            for j in 0..h.ncols() - 1 {
                for r in 0..block {
                    prop_assert_eq!(h[(i * block + r, j)], h[((i - 1) * block + r, j + 1)]);
                }
            }
        }
    }

    #[test]
    fn partition_restacks_into_hankel_matrices(seed in 0u64..1000) {
        let sc = random_scenario(seed).unwrap();
        let part = partition(&sc.data, sc.horizons).unwrap();
        let (n_p, n_f) = (sc.horizons.n_p, sc.horizons.n_f);
        let hu = hankel(sc.data.u(), 1, n_p + n_f).unwrap();
        let hy = hankel(sc.data.y(), 1, n_p + n_f).unwrap();
        prop_assert_eq!(part.w_p.rows(0, n_p), hu.rows(0, n_p));
        prop_assert_eq!(part.u_f.clone(), hu.rows(n_p, n_f).into_owned());
        prop_assert_eq!(part.w_p.rows(n_p, n_p), hy.rows(0, n_p));
        prop_assert_eq!(part.y_f.clone(), hy.rows(n_p, n_f).into_owned());
    }

    #[test]
    fn every_data_column_is_a_trajectory(seed in 0u64..1000) {
        let sc = random_scenario(seed).unwrap();
        let part = partition(&sc.data, sc.horizons).unwrap();
        let n_p = sc.horizons.n_p;
        let gamma = sc.model.gamma_matrix(n_p, None).unwrap();
        let tol = 1e-9 * scale(&part.y_f);
        for j in 0..part.l() {
            let xi = part.w_p.column(j).into_owned();
            let x = &gamma * &xi;
            let u = part.u_f.column(j).into_owned();
            let y = part.y_f.column(j).into_owned();
            prop_assert!(sc.model.is_consistent(&x, &u, &y, tol).unwrap());
        }
    }

    #[test]
    fn data_relations_hold(seed in 0u64..1000) {
        let sc = random_scenario(seed).unwrap();
        let b = sc.build().unwrap();
        let (part, maps) = (&b.partition, &b.maps);
        let n_f = sc.horizons.n_f;
        let o = sc.model.observability_matrix(n_f).unwrap();
        let t = sc.model.toeplitz_matrix(n_f).unwrap();
        let gamma = sc.model.gamma_matrix(sc.horizons.n_p, None).unwrap();
        let tol = 1e-9 * scale(&part.y_f);

        let shift = &o * &gamma * &part.w_p + &t * &part.u_f;
        prop_assert!(max_abs(&(shift - &part.y_f)) <= tol);

        let yv = &part.y_f * &maps.v_p;
        prop_assert!(max_abs(&(&yv - &t * &maps.uf_vp)) <= tol);

        let vf = maps.v_f();
        prop_assert!(max_abs(&(&maps.uf_vp * &vf)) <= tol);
        prop_assert!(max_abs(&(yv * &vf)) <= tol);

        prop_assert_eq!(maps.mu, sc.horizons.n_f);
        let rank_wp = explicit_dpc::linalg::rank(&part.w_p, None);
        prop_assert_eq!(rank_wp, sc.horizons.n_p + sc.horizons.n);
    }

    #[test]
    fn reduced_problem_is_congruent_to_mpc(seed in 0u64..1000) {
        let sc = random_scenario(seed).unwrap();
        let b = sc.build().unwrap();
        let (mpc, beta, part, maps) = (&b.mpc, &b.beta, &b.partition, &b.maps);
        let t = maps.uf_vp_kf();
        let proj = to_state(&sc, part, maps);
        let uf_pinv = &part.u_f * &maps.w_p_pinv;
        let tol = 1e-9 * scale(&beta.h).max(scale(&beta.f));

        prop_assert!(max_abs(&(&beta.h - t.transpose() * &mpc.h * &t)) <= tol);
        let f = t.transpose() * (&mpc.f * &proj + &mpc.h * &uf_pinv);
        prop_assert!(max_abs(&(&beta.f - f)) <= tol);
        prop_assert!(max_abs(&(&beta.g - &mpc.g * &t)) <= tol);
        let e = &mpc.e * &proj - &mpc.g * &uf_pinv;
        prop_assert!(max_abs(&(&beta.e - e)) <= tol);
        prop_assert!(explicit_dpc::linalg::is_positive_definite(&beta.h, None));
    }

    #[test]
    fn recovered_inputs_do_not_depend_on_basis(seed in 0u64..1000, phi_seed in any::<u64>()) {
        let sc = random_scenario(seed).unwrap();
        let b = sc.build().unwrap();
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(phi_seed);

        // Another orthonormal kernel basis and another non-singular Phi.
        let nu = b.maps.nu;
        let rot = DMatrix::from_fn(nu, nu, |_, _| rng.gen_range(-1.0..=1.0)).qr().q();
        let mu = b.maps.mu;
        let m = DMatrix::from_fn(mu, mu, |_, _| rng.gen_range(-1.0..=1.0));
        let phi = &m * m.transpose() + DMatrix::identity(mu, mu);
        let other = Scenario {
            reduction: ReductionOptions { v_p: Some(&b.maps.v_p * rot), phi: Some(phi), tol_rank: None },
            ..sc.clone()
        };
        let b2 = other.build().unwrap();

        let draws = explicit_dpc::verify::sample_uniform(&sc.dpc_domain, 20, seed).unwrap();
        for xi in draws {
            let s1 = solve_qp(&b.beta.h, &b.beta.linear_term(&xi), &b.beta.g, &b.beta.rhs(&xi)).unwrap();
            let s2 = solve_qp(&b2.beta.h, &b2.beta.linear_term(&xi), &b2.beta.g, &b2.beta.rhs(&xi)).unwrap();
            prop_assert_eq!(s1.is_optimal(), s2.is_optimal());
            if s1.is_optimal() {
                let u1 = explicit_dpc::condense::recover_uf(&b.maps, &b.partition.u_f, &xi, &s1.z);
                let u2 = explicit_dpc::condense::recover_uf(&b2.maps, &b2.partition.u_f, &xi, &s2.z);
                prop_assert!(max_abs_vec(&(u1 - u2)) <= 1e-6);
            }
        }
    }
}

#[test]
fn double_integrator_reconstruction_matches_simulation() {
    let model: SystemModel = presets::double_integrator();
    let start = DVector::from_column_slice(&[0.3, -0.2]);
    let u = DVector::from_column_slice(&[0.5, -1.0]);
    let (x, y) = model.simulate_states(&start, &u).unwrap();
    let xi = DVector::from_column_slice(&[u[0], u[1], y[0], y[1]]);
    let rec = model.reconstruct_initial_state(2, &xi, None).unwrap();
    assert!(max_abs_vec(&(rec - x)) <= 1e-12);
}
