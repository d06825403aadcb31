use std::f64::consts::PI;

use shearlab::linalg::expm_registry;
use shearlab::operators::OperatorMatrix;
use shearlab::resolvent::{compute_phi, default_lambda_grid};
use shearlab::semigroup::*;
use shearlab::spectral::*;

fn pade() -> std::sync::Arc<dyn shearlab::linalg::ExpmMethod> {
    expm_registry().get("pade").unwrap()
}

#[test]
fn norm_at_time_zero_is_one() {
    let g = ChebGrid::new(32).unwrap();
    let a = OperatorMatrix::assemble(&g, 1e-2, 1.0).unwrap();
    assert_eq!(semigroup_norm(&a, 0.0, pade().as_ref()).unwrap(), 1.0);
    assert!(semigroup_norm(&a, -1.0, pade().as_ref()).is_err());
}

#[test]
fn heat_semigroup_decays_at_first_eigenvalue() {
    let g = ChebGrid::new(48).unwrap();
    let a = OperatorMatrix::assemble(&g, 1.0, 0.0).unwrap();
    for name in ["pade", "eigen", "auto"] {
        let m = expm_registry().get(name).unwrap();
        let n = semigroup_norm(&a, 1.0, m.as_ref()).unwrap();
        let exact = (-PI * PI / 4.0).exp();
        assert!((n - exact).abs() < 1e-8 * exact, "{name}: {n}");
    }
}

#[test]
fn semigroup_respects_the_resolvent_bound() {
    let g = ChebGrid::new(64).unwrap();
    let a = OperatorMatrix::assemble(&g, 1e-3, 1.0).unwrap();
    let phi = compute_phi(&a, &default_lambda_grid(1.0, 201)).unwrap().phi;
    let horizon = 5.0 / phi;
    let times: Vec<f64> = (0..60).map(|i| horizon * i as f64 / 59.0).collect();
    let curve = decay_curve(&a, &times, pade().as_ref()).unwrap();
    let check = wei_bound_check(&curve, phi, 1e-6);
    assert_eq!(check.violations, 0, "margin {}", check.min_margin);
    assert!(curve.norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-10)));
}

#[test]
fn zero_data_stays_zero() {
    let g = ChebGrid::new(32).unwrap();
    let a = OperatorMatrix::assemble(&g, 1e-2, 2.0).unwrap();
    let zero = ModeField::zeros(2.0, g.len());
    let traj = evolve_homogeneous(&a, &zero, &[0.0, 1.0, 2.0], StepOptions::default()).unwrap();
    assert!(traj.iter().all(|f| f.values.iter().all(|z| z.norm() == 0.0)));
}

#[test]
fn eigenmode_decays_at_its_eigenvalue() {
    let g = ChebGrid::new(48).unwrap();
    let a = OperatorMatrix::assemble(&g, 1.0, 0.0).unwrap();
    let theta = ModeField::from_fn(&g, 0.0, |y| C64::from((PI * y / 2.0).cos()));
    let times = [0.0, 0.5, 1.0];
    let traj = evolve_homogeneous(&a, &theta, &times, StepOptions { max_dt: 1e-3, tol: 1e-8 }).unwrap();
    for (t, f) in times.iter().zip(&traj) {
        let expected = (-PI * PI / 4.0 * t).exp() * g.norm(&theta.values);
        assert!((g.norm(&f.values) - expected).abs() < 1e-7, "t = {t}");
    }
}

#[test]
fn evolve_rejects_nonzero_wall_data_and_coarse_steps() {
    let g = ChebGrid::new(32).unwrap();
    let a = OperatorMatrix::assemble(&g, 1.0, 0.0).unwrap();
    let bad = ModeField::from_fn(&g, 0.0, |_| C64::from(1.0));
    assert!(evolve_homogeneous(&a, &bad, &[0.0, 1.0], StepOptions::default()).is_err());
    let ok = ModeField::from_fn(&g, 0.0, |y| C64::from(1.0 - y * y));
    let coarse = StepOptions { max_dt: 0.5, tol: 1e-14 };
    assert!(matches!(
        evolve_homogeneous(&a, &ok, &[0.0, 1.0], coarse),
        Err(shearlab::error::LabError::StepSize(_))
    ));
}

#[test]
fn fit_recovers_synthetic_exponential() {
    let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
    let curve = DecayCurve {
        nu: 1.0,
        k: 0.0,
        norms: times.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect(),
        times,
        fitted_rate: 0.0,
        fitted_prefactor: 0.0,
        method: "synthetic".into(),
    };
    let (rate, pref) = fit_decay(&curve, (0.5, 4.0)).unwrap();
    assert!((rate - 2.0).abs() < 1e-10);
    assert!((pref - 3.0).abs() < 1e-9);
    assert!(fit_decay(&curve, (4.0, 0.5)).is_err());
    assert!(fit_decay(&curve, (0.0, 0.15)).is_err());
}

#[test]
fn integrated_constant_of_heat_mode() {
    let g = ChebGrid::new(48).unwrap();
    let nu = 1.0;
    let a = OperatorMatrix::assemble(&g, nu, 0.0).unwrap();
    let theta = ModeField::from_fn(&g, 0.0, |y| C64::from((PI * y / 2.0).cos()));
    let times: Vec<f64> = (0..=400).map(|i| i as f64 * 0.01).collect();
    let traj = evolve_homogeneous(&a, &theta, &times, StepOptions { max_dt: 1e-2, tol: 1e-6 }).unwrap();
    let c = integrated_decay_constant(&a, &times, &traj).unwrap();
    // trapezoid rule applied to ν e^{-2μt}, μ = π²/4
    let mu = PI * PI / 4.0;
    let exact: f64 = times
        .windows(2)
        .map(|w| 0.5 * (w[1] - w[0]) * ((-2.0 * mu * w[0]).exp() + (-2.0 * mu * w[1]).exp()))
        .sum::<f64>()
        * nu;
    assert!((c - exact).abs() < 1e-6 * exact, "{c} vs {exact}");
}
