use std::sync::OnceLock;

use explicit_dpc::linalg::{max_abs_vec, rank, singular_values};
use explicit_dpc::mpqp::{explicit_solve, ExplicitSolution};
use explicit_dpc::presets::{self, random_scenario, Built, Scenario};
use explicit_dpc::verify::{
    closed_loop, project_past_window, satisfies_constraints, Controller, PastWindow,
};
use nalgebra::DVector;
use proptest::prelude::*;

fn example2() -> &'static (Scenario, Built, ExplicitSolution, ExplicitSolution) {
    static CELL: OnceLock<(Scenario, Built, ExplicitSolution, ExplicitSolution)> = OnceLock::new();
    CELL.get_or_init(|| {
        let sc = presets::example2(presets::EXAMPLE2_SEED).unwrap();
        let b = sc.build().unwrap();
        let mpc = explicit_solve(&b.mpc, &sc.mpc_domain).unwrap();
        let dpc = explicit_solve(&b.beta, &sc.dpc_domain).unwrap();
        (sc, b, mpc, dpc)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_is_idempotent(seed in 0u64..1000, xs in prop::collection::vec(-5.0f64..5.0, 12)) {
        let sc = random_scenario(seed).unwrap();
        let b = sc.build().unwrap();
        let d = b.partition.w_p.nrows();
        let xi = PastWindow::from_vector(DVector::from_column_slice(&xs[..d]));
        let once = project_past_window(&b.partition, &b.maps, &xi);
        let twice = project_past_window(&b.partition, &b.maps, &once);
        // The computed pseudoinverse carries a forward error of order eps * cond^2.
        let mut sv: Vec<f64> = singular_values(&b.partition.w_p).iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        let cond = sv[0] / sv[rank(&b.partition.w_p, None) - 1];
        let tol = 16.0 * f64::EPSILON * cond * cond * (1.0 + max_abs_vec(&once.xi));
        prop_assert!(max_abs_vec(&(&once.xi - &twice.xi)) <= tol);
    }

    #[test]
    fn closed_loop_respects_constraints(p in -10.0f64..10.0, v in -2.0f64..2.0) {
        let (sc, b, mpc, dpc) = example2();
        let x0 = DVector::from_column_slice(&[p, v]);
        // Recursive feasibility is not guaranteed; runs that leave the
        // explicit domain are discarded.
        let explicit = closed_loop(&sc.model, Controller::ExplicitMpc(mpc), &x0, 30);
        prop_assume!(explicit.is_ok());
        let explicit = explicit.unwrap();
        prop_assert!(satisfies_constraints(&explicit, &sc.constraints, 1e-8));
        let numeric = closed_loop(&sc.model, Controller::NumericMpc(&b.mpc), &x0, 30).unwrap();
        prop_assert!(explicit.max_deviation(&numeric) <= 1e-6);
        // The data-driven run needs a warm-up window inside its domain.
        if let Ok(data) = closed_loop(
            &sc.model,
            Controller::ExplicitDpc { solution: dpc, maps: &b.maps, part: &b.partition },
            &x0,
            30,
        ) {
            prop_assert!(satisfies_constraints(&data, &sc.constraints, 1e-8));
            prop_assert!(explicit.max_deviation(&data) <= 1e-6);
        }
    }
}


