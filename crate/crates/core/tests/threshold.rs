use std::sync::Arc;

use shearlab::energy::Aggregates;
use shearlab::error::LabError;
use shearlab::sim::*;
use shearlab::spectral::*;
use shearlab::threshold::*;

fn run_at(eps: f64, threshold: f64) -> shearlab::error::Result<ThresholdRun> {
    let verdict = if eps < threshold { Verdict::Stable } else { Verdict::Unstable };
    Ok(ThresholdRun {
        eps,
        verdict,
        outcome: RunOutcome::Completed,
        peak_ratio: 1.0,
        final_ratio: 1.0,
    })
}

#[test]
fn bisection_locates_a_synthetic_threshold() {
    let opts = ThresholdOptions::default();
    let p = bisect_with_oracle(1e-2, 0.01, &opts, |e| run_at(e, 0.37)).unwrap();
    assert_eq!(p.outcome, BisectionOutcome::Converged);
    let e = p.eps_star.unwrap();
    assert!(e >= 0.37 / 1.1 && e <= 0.37 * 1.1, "{e}");
    let (lo, hi) = (p.lower.unwrap(), p.upper.unwrap());
    assert!(lo < 0.37 && hi >= 0.37 && hi / lo <= 1.1);
    assert!(p.monotonicity_violation.is_none());
    let down = bisect_with_oracle(1e-2, 50.0, &opts, |e| run_at(e, 0.37)).unwrap();
    assert_eq!(down.outcome, BisectionOutcome::Converged);
}

#[test]
fn always_stable_oracle_is_a_bracket_failure() {
    let opts = ThresholdOptions::default();
    let p = bisect_with_oracle(1e-2, 1.0, &opts, |e| run_at(e, f64::INFINITY)).unwrap();
    assert!(matches!(p.outcome, BisectionOutcome::BracketFailure { .. }));
    assert!(p.eps_star.is_none());
    assert_eq!(p.runs.len(), opts.max_scans + 1);
}

#[test]
fn bisection_rejects_bad_options() {
    let opts = ThresholdOptions::default();
    assert!(bisect_with_oracle(1e-2, 0.0, &opts, |e| run_at(e, 1.0)).is_err());
    let flat = ThresholdOptions { scan_factor: 1.0, ..ThresholdOptions::default() };
    assert!(bisect_with_oracle(1e-2, 1.0, &flat, |e| run_at(e, 1.0)).is_err());
    let failing = bisect_with_oracle(1e-2, 1.0, &opts, |_| Err(LabError::numerical("boom")));
    assert!(failing.is_err());
}

fn snapshot(t: f64, inst: f64) -> Snapshot {
    Snapshot {
        t,
        e_omega: inst,
        e_theta: 0.0,
        e_total: inst,
        instant_total: inst,
        theta_l2: 0.0,
        theta_max: 0.0,
    }
}

fn record(values: &[(f64, f64)], outcome: RunOutcome) -> RunRecord {
    let mut config = SimConfig::default();
    config.t_end = 10.0;
    config.dt = 0.1;
    let snapshots: Vec<Snapshot> = values.iter().map(|&(t, e)| snapshot(t, e)).collect();
    let peak = snapshots.iter().map(|s| s.instant_total).fold(0.0, f64::max);
    RunRecord {
        config,
        steps: 100,
        complete: true,
        outcome,
        diagnostics: RunDiagnostics {
            boundary: (0.0, 0.0, 0.0),
            divergence: 0.0,
            reality: 0.0,
            theta_l2_growth: 0.0,
            theta_l2_violations: 0,
            theta_max_violations: 0,
            max_instant_total: peak,
        },
        final_aggregates: Aggregates {
            e_omega: 0.0,
            e_theta: 0.0,
            e_total: 0.0,
            c_norm: 1.0,
        },
        snapshots,
        ledger: None,
        final_state: None,
    }
}

#[test]
fn transient_growth_below_the_bootstrap_factor_is_stable() {
    let c = BootstrapCriterion::default();
    let ok = record(&[(0.0, 1.0), (3.0, 3.9), (10.0, 0.8)], RunOutcome::Completed);
    assert_eq!(classify_run(&ok, &c).unwrap(), Verdict::Stable);
    let peaked = record(&[(0.0, 1.0), (3.0, 4.1), (10.0, 0.8)], RunOutcome::Completed);
    assert_eq!(classify_run(&peaked, &c).unwrap(), Verdict::Unstable);
    let lingering = record(&[(0.0, 1.0), (10.0, 1.01)], RunOutcome::Completed);
    assert_eq!(classify_run(&lingering, &c).unwrap(), Verdict::Unstable);
    let zero = record(&[(0.0, 0.0), (10.0, 0.0)], RunOutcome::Completed);
    assert_eq!(classify_run(&zero, &c).unwrap(), Verdict::Stable);
}

#[test]
fn divergence_is_unstable_and_truncated_records_are_errors() {
    let c = BootstrapCriterion::default();
    let div = RunOutcome::DivergenceDetected {
        time: 2.0,
        reason: "test".into(),
    };
    assert_eq!(classify_run(&record(&[(0.0, 1.0)], div), &c).unwrap(), Verdict::Unstable);
    let short = record(&[(0.0, 1.0), (5.0, 0.5)], RunOutcome::Completed);
    assert!(matches!(classify_run(&short, &c), Err(LabError::Data(_))));
    let empty = record(&[], RunOutcome::Completed);
    assert!(matches!(classify_run(&empty, &c), Err(LabError::Data(_))));
    let mut partial = record(&[(0.0, 1.0), (10.0, 0.5)], RunOutcome::Completed);
    partial.complete = false;
    assert!(classify_run(&partial, &c).is_err());
}

fn point(nu: f64, eps: f64) -> ThresholdPoint {
    ThresholdPoint {
        nu,
        eps_star: Some(eps),
        lower: Some(eps),
        upper: Some(eps),
        outcome: BisectionOutcome::Converged,
        monotonicity_violation: None,
        runs: vec![],
    }
}

#[test]
fn exponent_fit_recovers_power_laws() {
    let nus = [1e-2, 3e-3, 1e-3, 3e-4];
    let half: Vec<_> = nus.iter().map(|&n| point(n, n.sqrt())).collect();
    let f = fit_exponent(&half, 0.5).unwrap();
    assert!((f.slope - 0.5).abs() < 1e-12);
    let five: Vec<_> = nus.iter().map(|&n| point(n, 2.0 * n.powf(5.0 / 6.0))).collect();
    let f = fit_exponent(&five, 5.0 / 6.0).unwrap();
    assert!((f.slope - 5.0 / 6.0).abs() < 1e-12);
    assert!((f.intercept - 2f64.ln()).abs() < 1e-12);
    assert!(fit_exponent(&half[..2], 0.5).is_err());
}

#[test]
fn sweep_modes_and_run_configs() {
    assert_eq!(SweepMode::Joint.predicted_exponent(), 0.5);
    assert_eq!(SweepMode::ThetaOnly { eps_u: 0.1 }.predicted_exponent(), 5.0 / 6.0);
    let opts = ThresholdOptions::default();
    let c = run_config(&SimConfig::default(), 1e-3, 0.2, &opts).unwrap();
    assert!((c.amplitude_u - 0.2).abs() < 1e-15);
    assert!((c.amplitude_theta - 0.02).abs() < 1e-15);
    assert!((c.t_end - 200.0).abs() < 1e-9);
    let theta = ThresholdOptions {
        mode: SweepMode::ThetaOnly { eps_u: 0.5 },
        ..ThresholdOptions::default()
    };
    let c = run_config(&SimConfig::default(), 1e-2, 0.3, &theta).unwrap();
    assert!((c.amplitude_u - 0.05).abs() < 1e-15);
    assert_eq!(c.amplitude_theta, 0.3);
}

fn grids() -> (Arc<ChebGrid>, XGrid) {
    (Arc::new(ChebGrid::new(24).unwrap()), XGrid::new(4.0 * std::f64::consts::PI, 16).unwrap())
}

#[test]
fn initial_data_is_deterministic_and_scales() {
    let (g, x) = grids();
    let p = InitialProfile::default();
    let a = make_initial_data(7, &p, 1e-2, 1e-3, g.clone(), x.clone(), 1e-2).unwrap();
    let b = make_initial_data(7, &p, 1e-2, 1e-3, g.clone(), x.clone(), 1e-2).unwrap();
    assert_eq!(a.modes, b.modes);
    let c = make_initial_data(8, &p, 1e-2, 1e-3, g.clone(), x.clone(), 1e-2).unwrap();
    assert_ne!(a.modes, c.modes);
    let zero = make_initial_data(7, &p, 0.0, 0.0, g, x, 1e-2).unwrap();
    assert!(zero.modes.iter().all(|m| m.omega.norm() == 0.0 && m.theta.norm() == 0.0));
    assert_eq!(velocity_h2(&zero).unwrap(), 0.0);
    assert!(a.divergence_defect() < 1e-10);
    let (t, p_, dp) = boundary_residuals(&a);
    assert!(t < 1e-14 && p_ < 1e-14 && dp < 1e-12);
}

#[test]
fn theta_budget_of_a_single_mode() {
    let (g, _) = grids();
    // k = 8 with Δk = 1: the |∂x|^{1/3} term is twice the plain H¹ term at k = 8
    let x = XGrid::new(2.0 * std::f64::consts::PI, 32).unwrap();
    let mut s = SimState::zeros(g.clone(), x.clone(), 1e-2);
    s.modes[8].theta = g.sample_real(|y| (1.0 - y * y).powi(2));
    let budget = theta_budget(&s).unwrap();
    let mut th = SpectralField::zeros(&x, &g);
    th.modes[8] = s.modes[8].theta.clone();
    let h1 = sobolev_norm(&th, &x, &g, 1, 0.0).unwrap();
    assert!((budget - 3.0 * h1).abs() < 1e-12 * budget);
}

#[test]
fn tiny_simulated_threshold_run_is_stable() {
    let base = SimConfig::parse("m = 16\nn = 24\ndt = 1e-2\nscheme = sbdf2\nsnapshot_every = 50\n").unwrap();
    let opts = ThresholdOptions {
        horizon_factor: 2.0,
        ..ThresholdOptions::default()
    };
    let cfg = run_config(&base, 1e-2, 1e-3, &opts).unwrap();
    let rec = simulate(&cfg).unwrap();
    assert_eq!(classify_run(&rec, &BootstrapCriterion::default()).unwrap(), Verdict::Stable);
}
