use std::f64::consts::PI;

use nalgebra::DVector;
use shearlab::error::LabError;
use shearlab::operators::OperatorMatrix;
use shearlab::resolvent::*;
use shearlab::spectral::*;

/// Smallest singular value by inverse iteration on `MᴴM`, independent of the SVD path.
fn sigma_min_inverse_iteration(a: &OperatorMatrix, lambda: f64) -> f64 {
    let m = a.to_weighted(&a.shifted(lambda));
    let gram = m.adjoint() * &m;
    let lu = gram.lu();
    let mut v = DVector::from_fn(m.ncols(), |i, _| C64::new(1.0 + i as f64 * 0.01, 0.3));
    let mut rayleigh = 0.0;
    for _ in 0..200 {
        v /= C64::from(v.norm());
        let w = lu.solve(&v).unwrap();
        rayleigh = v.dotc(&w).re;
        v = w;
    }
    (1.0 / rayleigh).sqrt()
}

#[test]
fn mean_mode_bottom_singular_value_is_heat_eigenvalue() {
    let g = ChebGrid::new(48).unwrap();
    let a = OperatorMatrix::assemble(&g, 1.0, 0.0).unwrap();
    let s0 = sigma_min_weighted(&a, 0.0).unwrap();
    assert!((s0 - PI * PI / 4.0).abs() < 1e-8, "{s0}");
    for l in [-1.0, -0.3, 0.5, 2.0] {
        assert!(sigma_min_weighted(&a, l).unwrap() >= s0 - 1e-10);
    }
}

#[test]
fn svd_agrees_with_inverse_iteration() {
    let g = ChebGrid::new(48).unwrap();
    for (nu, k, l) in [(1e-2, 1.0, 0.2), (1e-3, 2.0, -0.7), (1e-1, 0.5, 0.0)] {
        let a = OperatorMatrix::assemble(&g, nu, k).unwrap();
        let s = sigma_min_weighted(&a, l).unwrap();
        let oracle = sigma_min_inverse_iteration(&a, l);
        assert!((s - oracle).abs() <= 1e-6 * oracle, "{s} vs {oracle}");
    }
}

#[test]
fn phi_of_mean_mode_scales_with_viscosity() {
    let g = ChebGrid::new(48).unwrap();
    let nu = 1e-2;
    let a = OperatorMatrix::assemble(&g, nu, 0.0).unwrap();
    let sweep = compute_phi(&a, &default_lambda_grid(0.0, 41)).unwrap();
    let expected = nu * PI * PI / 4.0;
    assert!((sweep.phi - expected).abs() < 1e-8 * expected, "{}", sweep.phi);
    assert!(sweep.lambda_star.abs() < 1e-6);
    assert!(sweep.lipschitz_lower_bound <= sweep.phi);
}

#[test]
fn phi_sweep_is_consistent() {
    let g = ChebGrid::new(64).unwrap();
    let a = OperatorMatrix::assemble(&g, 1e-3, 1.0).unwrap();
    let sweep = compute_phi(&a, &default_lambda_grid(1.0, 81)).unwrap();
    assert!(sweep.lambda_star.abs() <= 1.0, "{}", sweep.lambda_star);
    assert!(sweep.phi <= sweep.grid_phi);
    assert!(sweep.phi > 0.0);
    assert!(sweep.lambda_grid.windows(2).all(|w| w[0] < w[1]));
    let min = sweep.sigma_min_values.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(min, sweep.phi);
}

#[test]
fn phi_rejects_bad_grids() {
    let g = ChebGrid::new(32).unwrap();
    let a = OperatorMatrix::assemble(&g, 1e-2, 2.0).unwrap();
    assert!(matches!(compute_phi(&a, &[]), Err(LabError::InvalidArgument(_))));
    assert!(matches!(
        compute_phi(&a, &[-1.0, 0.0, 1.0]),
        Err(LabError::InvalidArgument(_))
    ));
    assert!(matches!(
        compute_phi(&a, &[-3.0, f64::NAN, 3.0]),
        Err(LabError::InvalidArgument(_))
    ));
    assert!(sigma_min_weighted(&a, f64::INFINITY).is_err());
}

#[test]
fn l2_resolvent_single_term_bounded_by_ratio() {
    let g = ChebGrid::new(64).unwrap();
    let (nu, k) = (1e-3, 1.0);
    let forcings = forcing_family(&g, nu, k, 12, 3);
    for lambda in [-0.5, 0.0, 0.9] {
        let r = verify_resolvent_l2h2(&g, nu, k, lambda, &forcings, 0.0).unwrap();
        let ratio = r.ratio_l2h2.unwrap();
        assert!(ratio.is_finite() && ratio > 0.0);
        assert!(r.auxiliary.unwrap() <= ratio);
        assert_eq!(r.sample_count, 12);
        assert!(r.ratio_hm1h1.is_none());
    }
}

#[test]
fn l2_resolvent_rejects_zero_forcing() {
    let g = ChebGrid::new(32).unwrap();
    let zero = ModeField::zeros(1.0, g.len());
    assert!(matches!(
        verify_resolvent_l2h2(&g, 1e-2, 1.0, 0.0, &[zero], 0.0),
        Err(LabError::InvalidArgument(_))
    ));
}

#[test]
fn divergence_form_rejects_constant_potential() {
    let g = ChebGrid::new(32).unwrap();
    let constant = ModeField::from_fn(&g, 1.0, |_| C64::new(2.0, -1.0));
    assert!(matches!(
        verify_resolvent_hm1h1(&g, 1e-2, 1.0, 0.0, &[constant], 0.0),
        Err(LabError::InvalidArgument(_))
    ));
}

#[test]
fn divergence_form_dual_norm_dominates() {
    let g = ChebGrid::new(64).unwrap();
    let (nu, k) = (1e-3, 2.0);
    let pots = band_limited_samples(&g, k, 10, 12, 11);
    let r = verify_resolvent_hm1h1(&g, nu, k, 0.3, &pots, 0.0).unwrap();
    let ratio = r.ratio_hm1h1.unwrap();
    // ‖∂_y G‖_{H^{-1}} ≤ ‖G‖, so dividing by ‖G‖ cannot give more.
    assert!(r.auxiliary.unwrap() <= ratio * (1.0 + 1e-10));
    assert!(r.ratio_l2h2.is_none());
}

#[test]
fn forced_problem_with_zero_forcing_is_silent() {
    let g = ChebGrid::new(32).unwrap();
    let f = ForcingHistory::sample(&g, 1e-2, 50, |_, _| C64::from(0.0), |_, _| C64::from(0.0));
    let r = inhomogeneous_rate_check(&g, 1e-3, 1.0, &f, 10.0).unwrap();
    assert_eq!((r.lhs, r.rhs, r.ratio), (0.0, 0.0, 0.0));
    assert!(!r.violated);
}

#[test]
fn forced_problem_impulse_stays_bounded_across_wavenumbers() {
    let g = ChebGrid::new(64).unwrap();
    let nu = 1e-3;
    let impulse = |t: f64, y: f64| {
        if t < 0.5 {
            C64::from(1.0 - y * y)
        } else {
            C64::from(0.0)
        }
    };
    let mut ratios = Vec::new();
    for k in [1.0, 8.0] {
        let dt = 0.4 / (k + nu * k * k);
        let steps = (20.0 / dt) as usize;
        let f = ForcingHistory::sample(&g, dt, steps, impulse, |_, _| C64::from(0.0));
        let r = inhomogeneous_rate_check(&g, nu, k, &f, 10.0).unwrap();
        assert_eq!(r.branch, RateBranch::MediumHigh);
        assert!(!r.violated, "k = {k}: ratio {}", r.ratio);
        ratios.push(r.ratio);
    }
    assert!(ratios[1] < 10.0 * ratios[0].max(1e-3), "{ratios:?}");
}

#[test]
fn forced_problem_branch_and_step_limit() {
    let g = ChebGrid::new(32).unwrap();
    let zero = |_: f64, _: f64| C64::from(0.0);
    let f = ForcingHistory::sample(&g, 1e-2, 4, zero, zero);
    let r = inhomogeneous_rate_check(&g, 1.0, 1.0, &f, 10.0).unwrap();
    assert_eq!(r.branch, RateBranch::Low);
    let big = ForcingHistory::sample(&g, 0.2, 4, zero, zero);
    assert!(matches!(
        inhomogeneous_rate_check(&g, 1e-3, 8.0, &big, 10.0),
        Err(LabError::StepSize(_))
    ));
}
