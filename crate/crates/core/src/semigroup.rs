//! Weighted norms of `e^{-At}`, implicit homogeneous evolution, and decay-rate
//! fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{fit_line, sigma_max, ExpmMethod, Propagator};
use crate::operators::{interior, with_zero_boundary, OperatorMatrix};
use crate::spectral::{ModeField, C64};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayCurve {
    pub nu: f64,
    pub k: f64,
    pub times: Vec<f64>,
    pub norms: Vec<f64>,
    pub fitted_rate: f64,
    pub fitted_prefactor: f64,
    /// Matrix exponential method that produced the curve.
    pub method: String,
}

fn weighted_propagator(a: &OperatorMatrix, method: &dyn ExpmMethod) -> Result<Box<dyn Propagator>> {
    method.prepare(&a.to_weighted(&a.entries))
}

/// Largest weighted singular value of `e^{-At}`.
pub fn semigroup_norm(a: &OperatorMatrix, t: f64, method: &dyn ExpmMethod) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(LabError::InvalidArgument(format!("time must be finite and ≥ 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(1.0);
    }
    sigma_max(&weighted_propagator(a, method)?.at(t)?)
}

/// `[0.1·T, T]` with `T = 5 / ((νk²)^{1/3} + ν)`.
pub fn default_fit_window(nu: f64, k: f64) -> (f64, f64) {
    let t = 5.0 / ((nu * k * k).cbrt() + nu);
    (0.1 * t, t)
}

/// `e^{-At}` norms on `times` (ascending, starting at or after 0). Uniform
/// grids starting at 0 are propagated by repeated multiplication with a single
/// step exponential. The fit uses the default window when it holds at least
/// three samples and the later half of the curve otherwise.
pub fn decay_curve(a: &OperatorMatrix, times: &[f64], method: &dyn ExpmMethod) -> Result<DecayCurve> {
    if times.is_empty() {
        return Err(LabError::InvalidArgument("empty time grid".into()));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::InvalidArgument(
            "times must be finite, nonnegative and strictly increasing".into(),
        ));
    }
    let prop = weighted_propagator(a, method)?;
    let norms = if is_uniform_from_zero(times) {
        let dt = times[1] - times[0];
        let step = prop.at(dt)?;
        let dim = a.dim();
        let mut power = DMatrix::<C64>::identity(dim, dim);
        let mut out = vec![1.0];
        for _ in 1..times.len() {
            power = &step * &power;
            out.push(sigma_max(&power)?);
        }
        out
    } else {
        times
            .iter()
            .map(|&t| if t == 0.0 { Ok(1.0) } else { sigma_max(&prop.at(t)?) })
            .collect::<Result<Vec<_>>>()?
    };
    let mut curve = DecayCurve {
        nu: a.nu,
        k: a.k,
        times: times.to_vec(),
        norms,
        fitted_rate: f64::NAN,
        fitted_prefactor: f64::NAN,
        method: prop.method().to_string(),
    };
    let last = *times.last().unwrap_or(&0.0);
    let (w0, w1) = default_fit_window(a.nu, a.k);
    let window = if times.iter().filter(|&&t| t >= w0 && t <= w1).count() >= 3 {
        Some((w0, w1))
    } else if times.len() >= 3 {
        Some((times[times.len() / 2], last))
    } else {
        None
    };
    if let Some(w) = window {
        if let Ok((rate, pre)) = fit_decay(&curve, w) {
            curve.fitted_rate = rate;
            curve.fitted_prefactor = pre;
        }
    }
    Ok(curve)
}

fn is_uniform_from_zero(times: &[f64]) -> bool {
    if times.len() < 3 || times[0] != 0.0 {
        return false;
    }
    let dt = times[1];
    times
        .iter()
        .enumerate()
        .all(|(i, t)| (t - i as f64 * dt).abs() <= 1e-12 * t.abs().max(dt))
}

/// Least-squares fit of `log ‖e^{-At}‖` on `window`: returns
/// `(rate, prefactor)` with `norm ≈ prefactor · e^{-rate·t}`.
pub fn fit_decay(curve: &DecayCurve, window: (f64, f64)) -> Result<(f64, f64)> {
    let (t0, t1) = window;
    if !(t0 < t1) {
        return Err(LabError::InvalidArgument(format!("empty fit window [{t0}, {t1}]")));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = curve
        .times
        .iter()
        .zip(&curve.norms)
        .filter(|(t, _)| **t >= t0 && **t <= t1)
        .map(|(t, n)| (*t, *n))
        .unzip();
    if xs.len() < 3 {
        return Err(LabError::InvalidArgument(format!(
            "fit window [{t0}, {t1}] holds {} samples, need 3",
            xs.len()
        )));
    }
    if ys.iter().any(|n| !(*n > 0.0)) {
        return Err(LabError::InvalidArgument("nonpositive norm in fit window".into()));
    }
    let logs: Vec<f64> = ys.iter().map(|n| n.ln()).collect();
    let fit = fit_line(&xs, &logs)?;
    Ok((-fit.slope, fit.intercept.exp()))
}

/// Pointwise comparison with `e^{π/2} e^{-Φt}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeiCheck {
    pub phi: f64,
    /// Smallest `1 - norm / bound` over the curve.
    pub min_margin: f64,
    /// Samples exceeding `bound · (1 + tolerance)`.
    pub violations: usize,
    pub tolerance: f64,
}

pub fn wei_bound_check(curve: &DecayCurve, phi: f64, tolerance: f64) -> WeiCheck {
    let pref = std::f64::consts::FRAC_PI_2.exp();
    let mut min_margin = f64::INFINITY;
    let mut violations = 0;
    for (t, n) in curve.times.iter().zip(&curve.norms) {
        let bound = pref * (-phi * t).exp();
        min_margin = min_margin.min(1.0 - n / bound);
        if !(*n <= bound * (1.0 + tolerance)) {
            violations += 1;
        }
    }
    WeiCheck {
        phi,
        min_margin,
        violations,
        tolerance,
    }
}

/// Step control for [`evolve_homogeneous`].
#[derive(Debug, Clone, Copy)]
pub struct StepOptions {
    pub max_dt: f64,
    /// Relative tolerance on the estimated global error.
    pub tol: f64,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            max_dt: 1e-2,
            tol: 1e-8,
        }
    }
}

/// The L-stable (1,2) Padé approximant of `e^{-hA}`:
/// `(1 - z/3) / (1 + 2z/3 + z²/6)` with `z = hA`, applied with two complex
/// solves through the factorization `z² + 4z + 6 = (z - r₁)(z - r₂)`.
struct PadeStepper {
    h: f64,
    a: DMatrix<C64>,
    lu1: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    lu2: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl PadeStepper {
    fn new(a: &DMatrix<C64>, h: f64) -> Result<Self> {
        let s2 = 2f64.sqrt();
        let roots = [C64::new(-2.0, s2), C64::new(-2.0, -s2)];
        let dim = a.nrows();
        let make = |r: C64| {
            let mut m = a * C64::from(h);
            for i in 0..dim {
                m[(i, i)] -= r;
            }
            let lu = m.lu();
            if lu.is_invertible() {
                Ok(lu)
            } else {
                Err(LabError::numerical("singular Padé factor"))
            }
        };
        Ok(PadeStepper {
            h,
            a: a.clone(),
            lu1: make(roots[0])?,
            lu2: make(roots[1])?,
        })
    }

    fn step(&self, x: &DVector<C64>) -> Result<DVector<C64>> {
        let num = (x - &self.a * x * C64::from(self.h / 3.0)) * C64::from(6.0);
        let y = self
            .lu2
            .solve(&num)
            .ok_or_else(|| LabError::numerical("Padé solve failed"))?;
        self.lu1
            .solve(&y)
            .ok_or_else(|| LabError::numerical("Padé solve failed"))
    }
}

/// Evolves `∂_tθ + Aθ = 0` with Dirichlet data and returns `θ` at each time
/// of `t_grid` (ascending, first entry is the initial time).
///
/// Each interval is split into equal steps no larger than `max_dt`. The
/// whole trajectory is repeated with halved steps; if the resulting error
/// estimate exceeds `tol·‖θ_in‖` a step-size error is returned.
pub fn evolve_homogeneous(
    a: &OperatorMatrix,
    theta_in: &ModeField,
    t_grid: &[f64],
    opts: StepOptions,
) -> Result<Vec<ModeField>> {
    let len = a.dim() + 2;
    if theta_in.len() != len {
        return Err(LabError::Dimension {
            expected: len,
            got: theta_in.len(),
        });
    }
    let scale = theta_in.values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let edge = theta_in.values[0].norm().max(theta_in.values[len - 1].norm());
    if edge > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(LabError::InvalidArgument(
            "initial data must vanish at the walls".into(),
        ));
    }
    if t_grid.is_empty() || t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LabError::InvalidArgument(
            "time grid must be nonempty and strictly increasing".into(),
        ));
    }
    if !(opts.max_dt > 0.0 && opts.tol > 0.0) {
        return Err(LabError::InvalidArgument("max_dt and tol must be positive".into()));
    }

    let x0 = interior(&theta_in.values);
    let norm0 = a.norm(&x0);
    let coarse = march(a, &x0, t_grid, opts.max_dt, 1)?;
    if norm0 > 0.0 && t_grid.len() > 1 {
        let fine = march(a, &x0, t_grid, opts.max_dt, 2)?;
        // third-order scheme: error of the coarse run ≈ (coarse - fine)·8/7
        let estimate = coarse
            .iter()
            .zip(&fine)
            .map(|(c, f)| a.norm(&(c - f)))
            .fold(0.0, f64::max)
            * 8.0
            / 7.0;
        if estimate > opts.tol * norm0 {
            return Err(LabError::StepSize(format!(
                "estimated error {:.3e} exceeds tolerance {:.3e} with max_dt = {:.3e}",
                estimate / norm0,
                opts.tol,
                opts.max_dt
            )));
        }
    }
    Ok(coarse
        .into_iter()
        .map(|x| ModeField::new(a.k, with_zero_boundary(&x)))
        .collect())
}

fn march(
    a: &OperatorMatrix,
    x0: &DVector<C64>,
    t_grid: &[f64],
    max_dt: f64,
    refine: usize,
) -> Result<Vec<DVector<C64>>> {
    let mut out = vec![x0.clone()];
    let mut x = x0.clone();
    let mut cache: Option<PadeStepper> = None;
    for w in t_grid.windows(2) {
        let span = w[1] - w[0];
        let steps = (span / max_dt).ceil().max(1.0) as usize * refine;
        let h = span / steps as f64;
        let reuse = cache.as_ref().is_some_and(|s| (s.h - h).abs() <= 1e-14 * h);
        if !reuse {
            cache = Some(PadeStepper::new(&a.entries, h)?);
        }
        let stepper = cache.as_ref().expect("stepper cached above");
        for _ in 0..steps {
            x = stepper.step(&x)?;
        }
        if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LabError::numerical("non-finite homogeneous trajectory"));
        }
        out.push(x.clone());
    }
    Ok(out)
}

/// `((νk²)^{1/3} + ν) ∫ ‖θ‖² dt / ‖θ(0)‖²` by the trapezoid rule.
pub fn integrated_decay_constant(a: &OperatorMatrix, times: &[f64], traj: &[ModeField]) -> Result<f64> {
    if times.len() != traj.len() || times.len() < 2 {
        return Err(LabError::InvalidArgument(
            "trajectory and times must match and hold at least two samples".into(),
        ));
    }
    let sq: Vec<f64> = traj.iter().map(|f| a.norm(&interior(&f.values)).powi(2)).collect();
    if !(sq[0] > 0.0) {
        return Err(LabError::InvalidArgument("zero initial data".into()));
    }
    let integral: f64 = times
        .windows(2)
        .zip(sq.windows(2))
        .map(|(t, s)| 0.5 * (t[1] - t[0]) * (s[0] + s[1]))
        .sum();
    Ok(((a.nu * a.k * a.k).cbrt() + a.nu) * integral / sq[0])
}
