use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shearlab::error::LabError;
use shearlab::sim::*;
use shearlab::spectral::*;

fn empty_state(m: usize, n: usize, lx: f64, nu: f64) -> SimState {
    SimState::zeros(Arc::new(ChebGrid::new(n).unwrap()), XGrid::new(lx, m).unwrap(), nu)
}

fn random_state(m: usize, n: usize, seed: u64) -> SimState {
    let mut s = empty_state(m, n, 2.0 * std::f64::consts::PI, 1e-2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = s.grid.len();
    let mut c = || C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    for j in 1..s.modes.len() {
        let mode = &mut s.modes[j];
        mode.psi = DVector::from_fn(len, |_, _| c());
        mode.omega = DVector::from_fn(len, |_, _| c());
        mode.theta = DVector::from_fn(len, |_, _| c());
    }
    s.modes[0].theta = DVector::from_fn(len, |_, _| C64::from(c().re));
    s.modes[0].omega = DVector::from_fn(len, |_, _| C64::from(c().re));
    s.mean_shear = DVector::from_fn(len, |_, _| c().re);
    s
}

/// `Σ_{|j|, |l-j| ≤ c} a_j b_{l-j}` with `a_{-j} = conj(a_j)`.
fn truncated_convolution(a: &[DVector<C64>], b: &[DVector<C64>], l: i64, c: i64) -> DVector<C64> {
    let at = |v: &[DVector<C64>], j: i64| {
        if j >= 0 {
            v[j as usize].clone()
        } else {
            v[(-j) as usize].map(|z| z.conj())
        }
    };
    let mut out = DVector::zeros(a[0].len());
    for j in -c..=c {
        if (l - j).abs() <= c {
            out += at(a, j).component_mul(&at(b, l - j));
        }
    }
    out
}

#[test]
fn dealiased_product_matches_direct_convolution() {
    let s = random_state(12, 10, 3);
    let c = dealias_cutoff(12) as i64;
    let fl = nonlinear_fluxes(&s).unwrap();
    let (u1, u2): (Vec<_>, Vec<_>) = (0..s.modes.len()).map(|j| s.velocity(j)).unzip();
    let w: Vec<_> = s.modes.iter().map(|m| m.omega.clone()).collect();
    let th: Vec<_> = s.modes.iter().map(|m| m.theta.clone()).collect();
    for l in 0..=c {
        for (got, a, b) in [
            (&fl.f1, &u1, &w),
            (&fl.f2, &u2, &w),
            (&fl.g1, &u1, &th),
            (&fl.g2, &u2, &th),
        ] {
            let want = truncated_convolution(a, b, l, c);
            let err = (&got[l as usize] - &want).norm();
            assert!(err <= 1e-10 * want.norm().max(1.0), "l = {l}: {err}");
        }
    }
    for l in (c + 1) as usize..s.modes.len() {
        assert_eq!(fl.f1[l].norm(), 0.0);
    }
    let rs = truncated_convolution(&u1, &u2, 0, c);
    assert!((&fl.reynolds_stress - rs).norm() < 1e-10);
}

#[test]
fn aliased_single_mode_product_has_sum_and_difference_support() {
    let mut s = empty_state(16, 8, 2.0 * std::f64::consts::PI, 1e-2);
    let len = s.grid.len();
    s.modes[1].psi = s.grid.sample_real(|y| 1.0 - y * y);
    s.modes[2].omega = DVector::from_element(len, C64::new(0.5, 0.25));
    let fl = nonlinear_fluxes_aliased(&s).unwrap();
    for (j, f) in fl.f1.iter().enumerate() {
        let nonzero = f.norm() > 1e-12;
        assert_eq!(nonzero, j == 1 || j == 3, "j = {j}");
    }
}

#[test]
fn zero_state_is_a_fixed_point() {
    let s = empty_state(8, 16, 4.0 * std::f64::consts::PI, 1e-2);
    for scheme in ["imex-euler", "cnab2", "sbdf2"] {
        let next = imex_step(&s, 1e-2, scheme).unwrap();
        assert!(next.modes.iter().all(|m| m.omega.norm() == 0.0 && m.theta.norm() == 0.0));
        assert_eq!(next.mean_shear.norm(), 0.0);
        assert!((next.time - 1e-2).abs() < 1e-15);
    }
}

#[test]
fn quiescent_velocity_gives_zero_fluxes() {
    let mut s = empty_state(8, 16, 4.0 * std::f64::consts::PI, 1e-2);
    s.modes[1].theta = s.grid.sample(|y| C64::new(1.0 - y * y, 0.3));
    let fl = nonlinear_fluxes(&s).unwrap();
    for v in fl.f1.iter().chain(&fl.f2).chain(&fl.g1).chain(&fl.g2) {
        assert_eq!(v.norm(), 0.0);
    }
    assert_eq!(fl.max_speed, 0.0);
}

#[test]
fn corrupt_mean_mode_is_rejected() {
    let mut s = random_state(8, 8, 1);
    s.modes[0].theta[3].im = 1e-3;
    assert!(matches!(nonlinear_fluxes(&s), Err(LabError::StateCorruption(_))));
    s.modes[0].theta[3].im = 0.0;
    s.modes.pop();
    assert!(matches!(nonlinear_fluxes(&s), Err(LabError::StateCorruption(_))));
}

#[test]
fn boundary_residuals_report_injected_wall_values() {
    let mut s = empty_state(8, 16, 4.0 * std::f64::consts::PI, 1e-2);
    s.modes[1].theta = s.grid.sample_real(|y| 1.0 - y * y);
    s.modes[1].theta[0] = C64::from(0.25);
    let norm = s.grid.norm(&s.modes[1].theta);
    let (t, p, dp) = boundary_residuals(&s);
    assert!((t - 0.25 / norm).abs() < 1e-14);
    assert_eq!((p, dp), (0.0, 0.0));
}

#[test]
fn cfl_breach_is_a_step_size_error() {
    let mut s = empty_state(8, 16, 2.0 * std::f64::consts::PI, 1e-2);
    s.mean_shear = s.grid.nodes().map(|y| 1e3 * (1.0 - y * y));
    let mut integ = Integrator::new(&s, time_schemes().get("sbdf2").unwrap(), 1.0, false).unwrap();
    assert!(matches!(integ.step(&s), Err(LabError::StepSize(_))));
    assert!(Integrator::new(&s, time_schemes().get("cnab2").unwrap(), 0.0, false).is_err());
}

fn small_config(t: f64) -> SimConfig {
    SimConfig::parse(&format!(
        "nu = 1e-2\nLx = 12.566370614359172\nm = 16\nn = 24\ndt = 1e-2\nT = {t}\nscheme = sbdf2\nsnapshot_every = 10\nseed = 4\n"
    ))
    .unwrap()
}

#[test]
fn zero_horizon_keeps_only_the_initial_snapshot() {
    let rec = simulate(&small_config(0.0)).unwrap();
    assert_eq!(rec.snapshots.len(), 1);
    assert_eq!(rec.steps, 0);
    assert_eq!(rec.outcome, RunOutcome::Completed);
}

#[test]
fn short_run_keeps_invariants() {
    let cfg = small_config(1.0);
    let rec = simulate(&cfg).unwrap();
    assert_eq!(rec.outcome, RunOutcome::Completed);
    assert_eq!(rec.steps, 100);
    let last = rec.snapshots.last().unwrap();
    assert!((last.t - 1.0).abs() < 1e-12);
    assert!(rec.snapshots.windows(2).all(|w| w[1].e_total >= w[0].e_total));
    let d = &rec.diagnostics;
    assert_eq!(d.reality, 0.0);
    assert!(d.boundary.0 < 1e-10 && d.boundary.1 < 1e-10 && d.boundary.2 < 1e-8, "{:?}", d.boundary);
    assert!(d.divergence < 1e-8);
    assert_eq!(d.theta_l2_violations, 0);
    let again = simulate(&cfg).unwrap();
    assert_eq!(
        again.snapshots.last().unwrap().e_total.to_bits(),
        last.e_total.to_bits()
    );
}

#[test]
fn checkpoint_roundtrip_is_exact() {
    let s = random_state(8, 12, 9);
    let mut buf = Vec::new();
    write_checkpoint(&s, &mut buf).unwrap();
    let back = read_checkpoint(buf.as_slice()).unwrap();
    assert_eq!(back.modes, s.modes);
    assert_eq!(back.mean_shear, s.mean_shear);
    assert_eq!((back.nu, back.time), (s.nu, s.time));
    assert_eq!(back.xgrid.box_length(), s.xgrid.box_length());
    buf[0] = b'X';
    assert!(matches!(read_checkpoint(buf.as_slice()), Err(LabError::Data(_))));
    assert!(read_checkpoint(&buf[..10]).is_err());
}

#[test]
fn config_errors_are_config_errors() {
    for text in ["dt = 0\n", "n = 2\n", "ceiling = 1\n", "snapshot_every = 0\n", "linear = maybe\n", "bogus = 1\n"] {
        assert!(SimConfig::parse(text).unwrap_err().is_config_error(), "{text}");
    }
    let c = small_config(1.0);
    let o = c.with_overrides(&[("m".into(), "32".into())]).unwrap();
    assert_eq!(o.m, 32);
    assert!(c.with_overrides(&[("x".into(), "1".into())]).is_err());
    assert_eq!(c.steps(), 100);
}
