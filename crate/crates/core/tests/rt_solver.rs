mod common;

use common::*;
use proptest::prelude::*;
use rt_core::calculus::*;
use rt_core::corpus::{family_bound, gen_manufactured, gen_pure_gauge};
use rt_core::elliptic::{helmholtz_project, solve_dirichlet_masked, LinearSolverConfig};
use rt_core::error::Error;
use rt_core::norms::lp_norm_interior;
use rt_core::rt::*;
use rt_core::{Grid, Matrix, MatrixForm, VectorForm};

fn reference(n: usize) -> Grid {
    Grid::cube(2, n, -1.0, 1.0).unwrap()
}

fn manufactured(n: usize, m: f64) -> MatrixForm {
    let g = reference(n);
    let gamma = gen_manufactured(&g, 7, 1.0).sample(&g);
    let b = family_bound(&gamma, 4.0).unwrap();
    gamma.scale(m / b)
}

#[test]
fn zero_connection_is_a_fixed_point() {
    let g = reference(9);
    let cfg = SolverConfig::default();
    let z = MatrixForm::zeros(&g, 1);
    let next = step(&RTState::zero(&g), &z, 0.5, &cfg).unwrap();
    assert_eq!(next.k, 1);
    assert_eq!(next.u.max_abs() + next.a.max_abs() + next.y.max_abs() + next.psi.max_abs(), 0.0);

    let sol = run(&z, &[0.0, 0.0], &cfg).unwrap();
    assert!(sol.converged);
    assert_eq!(sol.iterations, 1);
    assert_eq!(sol.j, MatrixForm::identity(sol.j.grid()));
    assert_eq!(sol.b.max_abs(), 0.0);
    assert_eq!(sol.y.max_abs(), 0.0);
}

#[test]
fn rescale_constant_connection() {
    let g = Grid::unit(2, 17).unwrap();
    let c = MatrixForm::from_fn(&g, 1, |s, m, _| s as f64 - 0.5 * m as f64);
    let (star, sub, info) = rescale(&c, &[0.5, 0.5], 0.5).unwrap();
    assert!(info.exact);
    assert_eq!(sub.shape(), &[9, 9]);
    assert_eq!(sub.lo(), &[-0.5, -0.5]);
    assert!(star.data().iter().zip(c.resample(&sub).unwrap().data()).all(|(a, b)| a == b));
    let phys = star.scale(info.epsilon);
    assert_eq!(phys.get(3, 1, 0), 0.5 * (3.0 - 1.0));
}

#[test]
fn rescale_full_box_is_identity() {
    let g = reference(13);
    let gamma = smooth::<Matrix>(&g, 1, 3, 1.0);
    let (star, sub, info) = rescale(&gamma, &[0.0, 0.0], 1.0).unwrap();
    assert!(info.exact);
    assert_eq!(&sub, &g);
    assert_eq!(star, gamma);
}

#[test]
fn rescale_bounds() {
    let g = reference(65);
    let gamma = smooth::<Matrix>(&g, 1, 4, 1.0);
    let eps = 0.5;
    let (star, sub, _) = rescale(&gamma, &[0.0, 0.0], eps).unwrap();
    assert!(star.max_abs() <= gamma.max_abs());
    // Interior difference quotients of the restriction carry one factor of ε.
    let restricted = {
        let sub_phys = Grid::cube(2, sub.shape()[0], -eps, eps).unwrap();
        gamma.resample(&sub_phys).unwrap()
    };
    let d_star = ext_d(&star).unwrap().masked_interior(1).max_abs();
    let d_phys = ext_d(&restricted).unwrap().masked_interior(1).max_abs();
    assert!((d_star - eps * d_phys).abs() < 1e-12 * d_phys);
}

#[test]
fn rescale_rejects_escaping_box() {
    let g = Grid::unit(2, 17).unwrap();
    let c = MatrixForm::zeros(&g, 1);
    assert!(matches!(rescale(&c, &[0.9, 0.5], 0.5), Err(Error::Domain(_))));
}

#[test]
fn sources_match_term_by_term() {
    let g = reference(17);
    let gamma = manufactured(17, 1.0);
    let u = smooth::<Matrix>(&g, 0, 5, 0.3);
    let a = smooth::<Matrix>(&g, 0, 6, 0.3);
    let eps = 0.2;
    let src = assemble_sources(&u, &a, &gamma, eps).unwrap();
    let s = codiff(&gamma).unwrap().add(&codiff(&left_mul(&u, &gamma).unwrap()).unwrap().scale(eps)).unwrap();
    assert!(src.s.sub(&s).unwrap().max_abs() < 1e-11);
    assert!(src.f_u.sub(&s.sub(&a).unwrap()).unwrap().max_abs() < 1e-11);
    assert!(src.w.sub(&vectorize(&s).unwrap()).unwrap().max_abs() < 1e-11);

    let zero = MatrixForm::zeros(&g, 0);
    let src = assemble_sources(&zero, &zero, &MatrixForm::zeros(&g, 1), eps).unwrap();
    assert_eq!(src.s.max_abs() + src.w.max_abs() + src.f_u.max_abs(), 0.0);
}

#[test]
fn first_step_matches_standalone_solves() {
    let g = reference(21);
    let gamma = manufactured(21, 1.0);
    let cfg = SolverConfig::default();
    let one = step(&RTState::zero(&g), &gamma, 0.3, &cfg).unwrap();

    let lin = LinearSolverConfig::default();
    let delta = codiff(&gamma).unwrap();
    let (a_vec, _, _) = helmholtz_project(&vectorize(&delta).unwrap(), &lin).unwrap();
    let a = devectorize(&a_vec).unwrap();
    assert!(one.a.sub(&a).unwrap().max_abs() < 1e-12);

    let bc = devectorize(&ext_d(&one.y).unwrap()).unwrap();
    let (u, _) = solve_dirichlet_masked(&delta.sub(&a).unwrap(), &bc, |c, p| u_fixed(&g, c, p), None, &lin).unwrap();
    assert!(one.u.sub(&u).unwrap().max_abs() < 1e-8 * u.max_abs().max(1.0));
    assert!(one.potential_gap < 1e-7);
    assert_eq!(one.history.len(), 1);
    assert!(one.history[0].ratio.is_nan());
}

#[test]
fn contraction_ratio_scales_with_epsilon() {
    let gamma = manufactured(33, 1.0);
    let cfg = SolverConfig { tol_iter: 1e-12, max_iter: 8, ..Default::default() };
    let mut per_eps = Vec::new();
    for eps in [0.05, 0.1, 0.2] {
        let it = iterate(&gamma, eps, &cfg).unwrap();
        assert!(!it.diverged);
        let r = it.state.history[1].ratio;
        assert!(r < 1.0);
        per_eps.push(r / eps);
    }
    let hi = per_eps.iter().cloned().fold(0.0, f64::max);
    let lo = per_eps.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(hi / lo < 1.3, "{per_eps:?}");
}

#[test]
fn converged_run_is_integrable() {
    let g = reference(33);
    let (gamma, _) = gen_pure_gauge(&g, 11, 0.1).unwrap();
    let cfg = SolverConfig::default();
    let sol = run(&gamma, &[0.0, 0.0], &cfg).unwrap();
    assert!(sol.converged);
    assert!(sol.curl.lp <= 10.0 * cfg.linear.tol_rel, "{}", sol.curl.lp);
    assert!(sol.curl.map_error.unwrap() <= 10.0 * cfg.linear.tol_rel);
    assert!(sol.inverse.max_error < 1e-12);
    assert!(sol.diagnostics.reduced_rt_deltab_res < 1e-8);
    let bvec = vectorize(&sol.b).unwrap();
    assert!(lp_norm_interior(&codiff(&bvec).unwrap(), 4.0, 1).unwrap() < 1e-8);
}

#[test]
fn scaling_consistency() {
    let gamma = manufactured(25, 1.0);
    let cfg = SolverConfig { tol_iter: 1e-12, ..Default::default() };
    let eps = 0.25;
    let a = run_rescaled(&gamma, eps, &cfg).unwrap();
    let b = run_rescaled(&gamma.scale(eps), 1.0, &cfg).unwrap();
    assert!(a.j.sub(&b.j).unwrap().max_abs() < 1e-8);
    assert!(a.b.sub(&b.b).unwrap().max_abs() < 1e-8);
}

#[test]
fn adaptive_epsilon_halves_on_divergence() {
    let gamma = manufactured(17, 40.0);
    let cfg = SolverConfig { epsilon: 1.0, max_iter: 40, ..Default::default() };
    let sol = run(&gamma, &[0.0, 0.0], &cfg).unwrap();
    assert!(sol.restarts >= 1);
    assert_eq!(sol.epsilon(), 0.5f64.powi(sol.restarts as i32));

    let fixed = SolverConfig { adaptive_epsilon: false, ..cfg };
    match run(&gamma, &[0.0, 0.0], &fixed) {
        Err(Error::NonConvergence { restarts, ratios, history }) => {
            assert_eq!(restarts, 0);
            assert!(!ratios.is_empty());
            assert_eq!(ratios.len(), history.len());
        }
        other => panic!("expected non-convergence, got {:?}", other.map(|s| s.epsilon())),
    }
}

#[test]
fn history_csv_has_one_row_per_iteration() {
    let gamma = manufactured(17, 1.0);
    let sol = run_rescaled(&gamma, 0.5, &SolverConfig::default()).unwrap();
    let mut buf = Vec::new();
    write_history_csv(&sol.history, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), sol.iterations + 1);
    assert!(lines[1].starts_with("1,"));
}

#[test]
fn inverse_matches_neumann_series() {
    let g = reference(11);
    let u = smooth::<Matrix>(&g, 0, 31, 1.0);
    let mut errs = Vec::new();
    let epss = [0.04, 0.02, 0.01];
    for eps in epss {
        let mut j = MatrixForm::identity(&g);
        j.axpy(eps, &u).unwrap();
        let inv = invert_jacobian(&j, 1e-8).unwrap();
        let mut series = MatrixForm::identity(&g);
        series.axpy(-eps, &u).unwrap();
        errs.push(inv.jinv.sub(&series).unwrap().max_abs());
    }
    let o = order(&epss, &errs);
    assert!((o - 2.0).abs() < 0.1, "{errs:?}");
}

#[test]
fn singular_jacobian_is_reported() {
    let g = reference(5);
    let mut j = MatrixForm::identity(&g);
    j.set(0, 0, 7, 0.0);
    match invert_jacobian(&j, 1e-8) {
        Err(Error::SingularJacobian { index, .. }) => assert_eq!(index, 7),
        other => panic!("{:?}", other.map(|i| i.min_det)),
    }
}

#[test]
fn curl_of_identity_and_gradients() {
    let g = reference(33);
    assert_eq!(check_curl(&MatrixForm::identity(&g), None, 4.0).unwrap().max, 0.0);
    let phi = VectorForm::from_fn(&g, 0, |mu, _, x| x[mu] + 0.1 * (x[0] * x[1] + mu as f64).sin());
    let j = devectorize(&ext_d(&phi).unwrap()).unwrap();
    let rep = check_curl(&j, None, 4.0).unwrap();
    assert!(rep.max < 1e-12);
    let y = phi.sub(&VectorForm::coordinates(&g)).unwrap().scale(2.0);
    let rep = check_curl(&j, Some((&y, 0.5)), 4.0).unwrap();
    assert!(rep.map_error.unwrap() < 1e-12);
}

#[test]
fn invalid_config_is_rejected() {
    let g = reference(9);
    let z = MatrixForm::zeros(&g, 1);
    let cfg = SolverConfig { p: 1.5, ..Default::default() };
    assert!(matches!(run(&z, &[0.0, 0.0], &cfg), Err(Error::InvalidArgument(_))));
    let cfg = SolverConfig { epsilon: 0.0, ..Default::default() };
    assert!(run(&z, &[0.0, 0.0], &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn inverse_is_two_sided(seed in 0u64..10_000) {
        let g = reference(7);
        let mut j = MatrixForm::identity(&g);
        j.axpy(0.3, &noise::<Matrix>(&g, 0, seed)).unwrap();
        let inv = invert_jacobian(&j, 1e-8).unwrap();
        for p in 0..g.len() {
            let prod = inv.jinv.matrix_at(0, p) * j.matrix_at(0, p);
            let err = (prod - nalgebra::DMatrix::<f64>::identity(2, 2)).abs().max();
            prop_assert!(err < 1e-12);
        }
    }

    #[test]
    fn every_step_keeps_d_of_a_equal_to_d_of_w(seed in 0u64..1000) {
        let g = reference(13);
        let gamma = smooth::<Matrix>(&g, 1, seed, 0.5);
        let cfg = SolverConfig::default();
        let one = step(&RTState::zero(&g), &gamma, 0.5, &cfg).unwrap();
        let two = step(&one, &gamma, 0.5, &cfg).unwrap();
        let src = assemble_sources(&one.u, &MatrixForm::zeros(&g, 0), &gamma, 0.5).unwrap();
        let da = ext_d(&vectorize(&two.a).unwrap()).unwrap().masked_interior(1);
        let dw = ext_d(&src.w).unwrap().masked_interior(1);
        prop_assert!(da.sub(&dw).unwrap().max_abs() <= 1e-12 * dw.max_abs().max(1.0));
    }
}
