//! Seeded initial data, run classification and amplitude bisection for the
//! stability threshold as a function of `ν`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::fit_line;
use crate::registry::Registry;
use crate::sim::{dealias_cutoff, mean_stream, simulate, RunOutcome, RunRecord, SimConfig, SimState};
use crate::spectral::{sobolev_norm, sobolev_norm_components, ChebGrid, SpectralField, XGrid, C64};

/// Horizontal content of the initial data: the listed wavenumbers, each with
/// the clamped envelope `(1 - y²)²` in `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialProfile {
    pub wavenumbers: Vec<f64>,
}

impl Default for InitialProfile {
    fn default() -> Self {
        InitialProfile {
            wavenumbers: vec![0.5, 1.0, 1.5, 2.0],
        }
    }
}

/// `‖u‖_{H²}` with `u = (∂_yψ, -∂_xψ)`.
pub fn velocity_h2(s: &SimState) -> Result<f64> {
    let mut u1 = SpectralField::zeros(&s.xgrid, &s.grid);
    let mut u2 = SpectralField::zeros(&s.xgrid, &s.grid);
    for j in 0..s.modes.len() {
        let (a, b) = s.velocity(j);
        u1.modes[j] = a;
        u2.modes[j] = b;
    }
    sobolev_norm_components(&[&u1, &u2], &s.xgrid, &s.grid, 2, 0.0)
}

/// `‖θ‖_{H¹} + ‖|∂_x|^{1/3}θ‖_{H¹}`.
pub fn theta_budget(s: &SimState) -> Result<f64> {
    let mut th = SpectralField::zeros(&s.xgrid, &s.grid);
    for (j, m) in s.modes.iter().enumerate() {
        th.modes[j] = m.theta.clone();
    }
    Ok(sobolev_norm(&th, &s.xgrid, &s.grid, 1, 0.0)?
        + sobolev_norm(&th, &s.xgrid, &s.grid, 1, 1.0 / 3.0)?)
}

/// Seeded initial state rescaled so that `‖u‖_{H²} = target_u` and the
/// temperature budget equals `target_theta`. Phases and relative mode
/// amplitudes come from the seed.
pub fn make_initial_data(
    seed: u64,
    profile: &InitialProfile,
    target_u: f64,
    target_theta: f64,
    grid: Arc<ChebGrid>,
    xgrid: XGrid,
    nu: f64,
) -> Result<SimState> {
    if !(target_u >= 0.0 && target_theta >= 0.0) {
        return Err(LabError::InvalidArgument("amplitudes must be nonnegative".into()));
    }
    let cutoff = dealias_cutoff(xgrid.m());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SimState::zeros(grid.clone(), xgrid.clone(), nu);
    let envelope = grid.sample_real(|y| (1.0 - y * y).powi(2));
    for &k in &profile.wavenumbers {
        let jf = k / xgrid.dk();
        let j = jf.round();
        if !(k > 0.0) || (jf - j).abs() > 1e-9 || j as usize > cutoff {
            return Err(LabError::InvalidArgument(format!(
                "wavenumber {k} is not an active mode of a box of length {} with m = {}",
                xgrid.box_length(),
                xgrid.m()
            )));
        }
        let j = j as usize;
        let mut coeff = || {
            let r: f64 = rng.random_range(0.5..1.0);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            C64::from_polar(r, phi)
        };
        let a = coeff();
        let b = coeff();
        let kj = s.modes[j].k;
        let psi = &envelope * a;
        s.modes[j].omega = grid.diff2(&psi) - &psi * C64::from(kj * kj);
        s.modes[j].psi = psi;
        s.modes[j].theta = &envelope * b;
    }
    let nu_ = velocity_h2(&s)?;
    let nt = theta_budget(&s)?;
    let su = if nu_ > 0.0 { target_u / nu_ } else { 0.0 };
    let st = if nt > 0.0 { target_theta / nt } else { 0.0 };
    for m in s.modes.iter_mut() {
        m.omega *= C64::from(su);
        m.psi *= C64::from(su);
        m.theta *= C64::from(st);
    }
    s.mean_shear.fill(0.0);
    let psi0 = mean_stream(&grid, &s.mean_shear);
    s.modes[0].psi = psi0.map(C64::from);
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Stable,
    Unstable,
}

/// Decides whether a finished run counts as stable.
pub trait StabilityCriterion: Send + Sync {
    fn name(&self) -> &'static str;
    fn classify(&self, record: &RunRecord) -> Result<Verdict>;
}

/// Stable iff no divergence was flagged, the instantaneous `𝓔_total` never
/// exceeded `k_boot` times its initial value, and it ended at or below the
/// initial value.
#[derive(Debug, Clone, Copy)]
pub struct BootstrapCriterion {
    pub k_boot: f64,
}

impl Default for BootstrapCriterion {
    fn default() -> Self {
        BootstrapCriterion { k_boot: 4.0 }
    }
}

impl StabilityCriterion for BootstrapCriterion {
    fn name(&self) -> &'static str {
        "bootstrap"
    }

    fn classify(&self, record: &RunRecord) -> Result<Verdict> {
        if let RunOutcome::DivergenceDetected { .. } = record.outcome {
            return Ok(Verdict::Unstable);
        }
        let (first, last) = match (record.snapshots.first(), record.snapshots.last()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(LabError::Data("run record has no snapshots".into())),
        };
        let horizon = record.config.t_end;
        if !record.complete || last.t < horizon - 0.5 * record.config.dt {
            return Err(LabError::Data(format!(
                "run stopped at t = {} before T = {horizon} without a divergence flag",
                last.t
            )));
        }
        let e0 = first.instant_total;
        let peak = record
            .snapshots
            .iter()
            .map(|s| s.instant_total)
            .fold(record.diagnostics.max_instant_total, f64::max);
        let stable = peak <= self.k_boot * e0 && last.instant_total <= e0;
        Ok(if stable { Verdict::Stable } else { Verdict::Unstable })
    }
}

pub fn stability_criteria() -> Registry<dyn StabilityCriterion> {
    let mut r: Registry<dyn StabilityCriterion> = Registry::new("stability criterion");
    r.register("bootstrap", Arc::new(BootstrapCriterion::default()));
    r
}

pub fn classify_run(record: &RunRecord, criterion: &dyn StabilityCriterion) -> Result<Verdict> {
    criterion.classify(record)
}

/// Which amplitudes are varied together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SweepMode {
    /// `amplitude_u = ε`, `amplitude_theta = ε ν^{1/3}`.
    Joint,
    /// `amplitude_u = eps_u ν^{1/2}` fixed, `amplitude_theta = ε`.
    ThetaOnly { eps_u: f64 },
}

impl SweepMode {
    fn amplitudes(self, eps: f64, nu: f64) -> (f64, f64) {
        match self {
            SweepMode::Joint => (eps, eps * nu.cbrt()),
            SweepMode::ThetaOnly { eps_u } => (eps_u * nu.sqrt(), eps),
        }
    }

    /// Exponent of the predicted `ε* ∝ ν^p`.
    pub fn predicted_exponent(self) -> f64 {
        match self {
            SweepMode::Joint => 0.5,
            SweepMode::ThetaOnly { .. } => 5.0 / 6.0,
        }
    }

    fn default_start(self, nu: f64) -> f64 {
        0.1 * nu.powf(self.predicted_exponent())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdOptions {
    pub mode: SweepMode,
    /// Starting amplitude; defaults to `0.1 ν^p` with the predicted exponent.
    pub start: Option<f64>,
    pub scan_factor: f64,
    pub max_scans: usize,
    /// Stop when `upper / lower ≤ 1 + tolerance`.
    pub tolerance: f64,
    /// Horizon `T = horizon_factor · ν^{-1/3}`.
    pub horizon_factor: f64,
    pub criterion: String,
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        ThresholdOptions {
            mode: SweepMode::Joint,
            start: None,
            scan_factor: 4.0,
            max_scans: 8,
            tolerance: 0.1,
            horizon_factor: 20.0,
            criterion: "bootstrap".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdRun {
    pub eps: f64,
    pub verdict: Verdict,
    pub outcome: RunOutcome,
    pub peak_ratio: f64,
    pub final_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BisectionOutcome {
    Converged,
    BracketFailure { reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub nu: f64,
    /// Geometric midpoint of the final bracket.
    pub eps_star: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub outcome: BisectionOutcome,
    /// A stable amplitude above an unstable one was seen.
    pub monotonicity_violation: Option<(f64, f64)>,
    pub runs: Vec<ThresholdRun>,
}

/// Config for one threshold run at amplitude `eps`.
pub fn run_config(base: &SimConfig, nu: f64, eps: f64, opts: &ThresholdOptions) -> Result<SimConfig> {
    let (au, at) = opts.mode.amplitudes(eps, nu);
    let mut c = base.clone();
    c.nu = nu;
    c.t_end = opts.horizon_factor * nu.powf(-1.0 / 3.0);
    c.amplitude_u = au;
    c.amplitude_theta = at;
    c.validate()?;
    Ok(c)
}

fn run_once(
    base: &SimConfig,
    nu: f64,
    eps: f64,
    opts: &ThresholdOptions,
    criterion: &dyn StabilityCriterion,
) -> Result<ThresholdRun> {
    let rec = simulate(&run_config(base, nu, eps, opts)?)?;
    let verdict = classify_run(&rec, criterion)?;
    let e0 = rec.snapshots[0].instant_total;
    let peak = rec
        .snapshots
        .iter()
        .map(|s| s.instant_total)
        .fold(rec.diagnostics.max_instant_total, f64::max);
    let last = rec.snapshots.last().map_or(f64::NAN, |s| s.instant_total);
    Ok(ThresholdRun {
        eps,
        verdict,
        outcome: rec.outcome,
        peak_ratio: peak / e0,
        final_ratio: last / e0,
    })
}

/// Brackets the threshold by geometric scans from the starting amplitude and
/// bisects (geometrically) to the relative tolerance. Each probe is a full
/// simulation classified by the configured criterion.
pub fn bisect_threshold(base: &SimConfig, nu: f64, opts: &ThresholdOptions) -> Result<ThresholdPoint> {
    let criterion = stability_criteria().get(&opts.criterion)?;
    let start = opts.start.unwrap_or_else(|| opts.mode.default_start(nu));
    bisect_with_oracle(nu, start, opts, |eps| run_once(base, nu, eps, opts, &*criterion))
}

/// Bracketing and bisection against an arbitrary amplitude oracle.
pub fn bisect_with_oracle(
    nu: f64,
    start: f64,
    opts: &ThresholdOptions,
    mut oracle: impl FnMut(f64) -> Result<ThresholdRun>,
) -> Result<ThresholdPoint> {
    if !(opts.scan_factor > 1.0 && opts.tolerance > 0.0 && start > 0.0) {
        return Err(LabError::InvalidArgument(
            "scan factor must exceed 1, tolerance and start must be positive".into(),
        ));
    }
    let mut runs: Vec<ThresholdRun> = Vec::new();
    let mut probe = |eps: f64, runs: &mut Vec<ThresholdRun>| -> Result<Verdict> {
        let r = oracle(eps)?;
        let v = r.verdict;
        runs.push(r);
        Ok(v)
    };

    let (mut lo, mut hi) = match probe(start, &mut runs)? {
        Verdict::Stable => (Some(start), None),
        Verdict::Unstable => (None, Some(start)),
    };
    let mut eps = start;
    for _ in 0..opts.max_scans {
        if lo.is_some() && hi.is_some() {
            break;
        }
        eps = if hi.is_none() {
            eps * opts.scan_factor
        } else {
            eps / opts.scan_factor
        };
        match probe(eps, &mut runs)? {
            Verdict::Stable => lo = Some(eps),
            Verdict::Unstable => hi = Some(eps),
        }
    }
    let point = |eps_star, lower, upper, outcome, runs: Vec<ThresholdRun>| ThresholdPoint {
        nu,
        eps_star,
        lower,
        upper,
        outcome,
        monotonicity_violation: monotonicity_violation(&runs),
        runs,
    };
    let (mut a, mut b) = match (lo, hi) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            let reason = if lo.is_some() {
                format!("still stable at amplitude {eps:e}")
            } else {
                format!("still unstable at amplitude {eps:e}")
            };
            return Ok(point(
                None,
                lo,
                hi,
                BisectionOutcome::BracketFailure { reason },
                runs,
            ));
        }
    };
    while b / a > 1.0 + opts.tolerance {
        let mid = (a * b).sqrt();
        match probe(mid, &mut runs)? {
            Verdict::Stable => a = mid,
            Verdict::Unstable => b = mid,
        }
    }
    Ok(point(
        Some((a * b).sqrt()),
        Some(a),
        Some(b),
        BisectionOutcome::Converged,
        runs,
    ))
}

fn monotonicity_violation(runs: &[ThresholdRun]) -> Option<(f64, f64)> {
    let max_stable = runs
        .iter()
        .filter(|r| r.verdict == Verdict::Stable)
        .map(|r| r.eps)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_unstable = runs
        .iter()
        .filter(|r| r.verdict == Verdict::Unstable)
        .map(|r| r.eps)
        .fold(f64::INFINITY, f64::min);
    (max_stable > min_unstable).then_some((min_unstable, max_stable))
}

/// Threshold at each `ν` (in parallel).
pub fn threshold_sweep(
    base: &SimConfig,
    nus: &[f64],
    opts: &ThresholdOptions,
) -> Result<Vec<ThresholdPoint>> {
    nus.par_iter().map(|&nu| bisect_threshold(base, nu, opts)).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExponentFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
    pub predicted: f64,
    pub points_used: usize,
}

/// Log–log slope of `ε*(ν)` over the converged points (at least three).
pub fn fit_exponent(points: &[ThresholdPoint], predicted: f64) -> Result<ExponentFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter_map(|p| p.eps_star.map(|e| (p.nu.ln(), e.ln())))
        .unzip();
    if xs.len() < 3 {
        return Err(LabError::InvalidArgument(format!(
            "exponent fit needs at least 3 converged points, got {}",
            xs.len()
        )));
    }
    let fit = fit_line(&xs, &ys)?;
    Ok(ExponentFit {
        slope: fit.slope,
        intercept: fit.intercept,
        residual: fit.residual,
        predicted,
        points_used: xs.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn initial_data_hits_targets() {
        let g = Arc::new(ChebGrid::new(24).unwrap());
        let x = XGrid::new(4.0 * std::f64::consts::PI, 16).unwrap();
        let s = make_initial_data(3, &InitialProfile::default(), 2e-3, 5e-4, g, x, 1e-2).unwrap();
        assert!((velocity_h2(&s).unwrap() / 2e-3 - 1.0).abs() < 1e-10);
        assert!((theta_budget(&s).unwrap() / 5e-4 - 1.0).abs() < 1e-10);
        assert_eq!(s.reality_defect(), 0.0);
    }

    #[test]
    fn rejects_unrepresentable_wavenumber() {
        let g = Arc::new(ChebGrid::new(16).unwrap());
        let x = XGrid::new(2.0 * std::f64::consts::PI, 16).unwrap();
        let p = InitialProfile { wavenumbers: vec![0.5] };
        assert!(make_initial_data(0, &p, 1.0, 1.0, g, x, 1e-2).is_err());
    }
}
