//! Imaginary-axis resolvent diagnostics of the mode operator: the bottom
//! singular value of `A - iλ`, the gap `Φ(A)`, empirical resolvent constants,
//! and the forced-problem rate check.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::sigma_min;
use crate::operators::{interior, with_zero_boundary, OperatorMatrix};
use crate::spectral::{h_minus1_norm, ChebGrid, ModeField, C64, I};

/// Smallest weighted singular value of `A - iλ`.
pub fn sigma_min_weighted(a: &OperatorMatrix, lambda: f64) -> Result<f64> {
    if !lambda.is_finite() {
        return Err(LabError::InvalidArgument(format!("non-finite λ {lambda}")));
    }
    sigma_min(&a.to_weighted(&a.shifted(lambda)))
}

/// Precomputed `W^{1/2} A W^{-1/2}`; the shift `-iλ` commutes with the
/// similarity, so each λ costs one diagonal update and one SVD.
struct WeightedShifts {
    base: DMatrix<C64>,
}

impl WeightedShifts {
    fn new(a: &OperatorMatrix) -> Self {
        WeightedShifts {
            base: a.to_weighted(&a.entries),
        }
    }

    fn sigma(&self, lambda: f64) -> Result<f64> {
        let mut m = self.base.clone();
        for i in 0..m.nrows() {
            m[(i, i)] -= I * lambda;
        }
        sigma_min(&m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolventSweep {
    pub nu: f64,
    pub k: f64,
    /// Sorted; contains the uniform grid plus refinement samples.
    pub lambda_grid: Vec<f64>,
    pub sigma_min_values: Vec<f64>,
    pub phi: f64,
    pub lambda_star: f64,
    /// Minimum over the caller's grid alone, before refinement.
    pub grid_phi: f64,
    /// `grid_phi - δ/2` with `δ` the largest grid gap: a lower bound for the
    /// infimum over the grid's hull, since `σ_min` is 1-Lipschitz in `λ`.
    pub lipschitz_lower_bound: f64,
}

/// `points` uniform values on `[-L, L]` with `L = max(2, 1.5|k|)`.
pub fn default_lambda_grid(k: f64, points: usize) -> Vec<f64> {
    let half = 2f64.max(1.5 * k.abs());
    if points < 2 {
        return vec![0.0];
    }
    (0..points)
        .map(|i| -half + 2.0 * half * i as f64 / (points - 1) as f64)
        .collect()
}

/// Sweeps `σ_min(A - iλ)` over `lambda_grid`, then refines the best grid
/// cell by golden-section search.
pub fn compute_phi(a: &OperatorMatrix, lambda_grid: &[f64]) -> Result<ResolventSweep> {
    if lambda_grid.is_empty() {
        return Err(LabError::InvalidArgument("empty λ grid".into()));
    }
    if lambda_grid.iter().any(|l| !l.is_finite()) {
        return Err(LabError::InvalidArgument("non-finite λ in grid".into()));
    }
    let mut grid = lambda_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let reach = 1.5 * a.k.abs();
    let tol = 1e-12 * reach.max(1.0);
    if grid[0] > -reach + tol || grid[grid.len() - 1] < reach - tol {
        return Err(LabError::InvalidArgument(format!(
            "λ grid [{}, {}] does not cover [-{reach}, {reach}]",
            grid[0],
            grid[grid.len() - 1]
        )));
    }
    let shifts = WeightedShifts::new(a);
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&l| shifts.sigma(l))
        .collect::<Result<_>>()?;
    let (best, grid_phi) = argmin(&values);
    let max_gap = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);

    let mut samples: Vec<(f64, f64)> = grid.iter().copied().zip(values).collect();
    if grid.len() >= 2 {
        let lo = grid[best.saturating_sub(1)];
        let hi = grid[(best + 1).min(grid.len() - 1)];
        golden_section(&shifts, lo, hi, &mut samples)?;
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    samples.dedup_by(|a, b| a.0 == b.0);
    let (lambda_grid, sigma_min_values): (Vec<f64>, Vec<f64>) = samples.into_iter().unzip();
    let (i, phi) = argmin(&sigma_min_values);
    Ok(ResolventSweep {
        nu: a.nu,
        k: a.k,
        lambda_star: lambda_grid[i],
        lambda_grid,
        sigma_min_values,
        phi,
        grid_phi,
        lipschitz_lower_bound: grid_phi - 0.5 * max_gap,
    })
}

fn argmin(v: &[f64]) -> (usize, f64) {
    v.iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, x)| if x < acc.1 { (i, x) } else { acc })
}

fn golden_section(
    shifts: &WeightedShifts,
    mut lo: f64,
    mut hi: f64,
    samples: &mut Vec<(f64, f64)>,
) -> Result<()> {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = shifts.sigma(x1)?;
    let mut f2 = shifts.sigma(x2)?;
    samples.push((x1, f1));
    samples.push((x2, f2));
    let width = (hi - lo).max(f64::MIN_POSITIVE);
    while hi - lo > 1e-9 * width.max(1.0) && samples.len() < 100_000 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = shifts.sigma(x1)?;
            samples.push((x1, f1));
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = shifts.sigma(x2)?;
            samples.push((x2, f2));
        }
    }
    Ok(())
}

/// Empirical constants of the two resolvent bounds. A ratio is `None` when
/// the corresponding check was not run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolventConstantReport {
    pub nu: f64,
    pub k: f64,
    pub lambda: f64,
    pub ratio_l2h2: Option<f64>,
    pub ratio_hm1h1: Option<f64>,
    /// Largest `(νk²)^{1/3}‖f‖/‖F‖` seen (L² check) or the largest ratio with
    /// `‖G‖` in place of `‖F‖_{H^{-1}}` (divergence-form check).
    pub auxiliary: Option<f64>,
    pub sample_count: usize,
}

/// LU of `A - ikλ - εν^{1/3}|k|^{2/3}` on the interior; `λ` is the
/// critical-layer position, so the shear term reads `ik(y - λ)`.
fn shifted_solver(
    g: &ChebGrid,
    nu: f64,
    k: f64,
    lambda: f64,
    eps: f64,
) -> Result<nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>> {
    let a = OperatorMatrix::assemble(g, nu, k)?;
    let mut m = a.shifted(k * lambda);
    let shift = eps * nu.cbrt() * k.abs().powf(2.0 / 3.0);
    for i in 0..m.nrows() {
        m[(i, i)] -= C64::from(shift);
    }
    let lu = m.lu();
    if !lu.is_invertible() {
        return Err(LabError::numerical(format!(
            "A - ikλ singular at ν = {nu}, k = {k}, λ = {lambda}"
        )));
    }
    Ok(lu)
}

fn solve_full(
    lu: &nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    rhs: &DVector<C64>,
) -> Result<DVector<C64>> {
    let x = lu
        .solve(&interior(rhs))
        .ok_or_else(|| LabError::numerical("resolvent solve failed"))?;
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LabError::numerical("non-finite resolvent solution"));
    }
    Ok(with_zero_boundary(&x))
}

/// Solves `-ν(∂_y² - k²)f + ik(y - λ)f - εν^{1/3}|k|^{2/3}f = F` with
/// Dirichlet data for each sample and records
/// `(ν^{2/3}|k|^{1/3}‖∂_y f‖ + (νk²)^{1/3}‖f‖ + |k|‖(y-λ)f‖) / ‖F‖`.
pub fn verify_resolvent_l2h2(
    g: &ChebGrid,
    nu: f64,
    k: f64,
    lambda: f64,
    forcings: &[ModeField],
    eps: f64,
) -> Result<ResolventConstantReport> {
    let lu = shifted_solver(g, nu, k, lambda, eps)?;
    let ka = k.abs();
    let c_dy = nu.powf(2.0 / 3.0) * ka.cbrt();
    let c_f = (nu * k * k).cbrt();
    let y = g.nodes();
    let mut worst = 0.0f64;
    let mut single = 0.0f64;
    for f_in in forcings {
        f_in.check_len(g)?;
        let f_norm = g.norm(&f_in.values);
        if !(f_norm > 0.0) {
            return Err(LabError::InvalidArgument("zero forcing sample".into()));
        }
        let f = solve_full(&lu, &f_in.values)?;
        let df = g.diff(&f);
        let shear = DVector::from_fn(f.len(), |i, _| f[i] * (y[i] - lambda));
        let term_f = c_f * g.norm(&f);
        let ratio = (c_dy * g.norm(&df) + term_f + ka * g.norm(&shear)) / f_norm;
        worst = worst.max(ratio);
        single = single.max(term_f / f_norm);
    }
    Ok(ResolventConstantReport {
        nu,
        k,
        lambda,
        ratio_l2h2: Some(worst),
        ratio_hm1h1: None,
        auxiliary: Some(single),
        sample_count: forcings.len(),
    })
}

/// For each `G`, solves with `F = ∂_y G` and records
/// `(ν‖∂_y f‖ + ν^{2/3}|k|^{1/3}‖f‖) / ‖F‖_{H^{-1}}`.
pub fn verify_resolvent_hm1h1(
    g: &ChebGrid,
    nu: f64,
    k: f64,
    lambda: f64,
    potentials: &[ModeField],
    eps: f64,
) -> Result<ResolventConstantReport> {
    let lu = shifted_solver(g, nu, k, lambda, eps)?;
    let c_f = nu.powf(2.0 / 3.0) * k.abs().cbrt();
    let mut worst = 0.0f64;
    let mut worst_g = 0.0f64;
    for pot in potentials {
        pot.check_len(g)?;
        let forcing = ModeField::new(k, g.diff(&pot.values));
        let dual = h_minus1_norm(&forcing, g)?;
        if !(dual > 1e-12 * g.norm(&pot.values)) {
            return Err(LabError::InvalidArgument(
                "forcing ∂_y G vanishes (G constant)".into(),
            ));
        }
        let f = solve_full(&lu, &forcing.values)?;
        let lhs = nu * g.norm(&g.diff(&f)) + c_f * g.norm(&f);
        worst = worst.max(lhs / dual);
        worst_g = worst_g.max(lhs / g.norm(&pot.values));
    }
    Ok(ResolventConstantReport {
        nu,
        k,
        lambda,
        ratio_l2h2: None,
        ratio_hm1h1: Some(worst),
        auxiliary: Some(worst_g),
        sample_count: potentials.len(),
    })
}

/// Random Chebyshev series `Σ_{m ≤ degree} c_m T_m(y)` with decaying complex
/// coefficients; deterministic in `seed`.
pub fn band_limited_samples(
    g: &ChebGrid,
    k: f64,
    count: usize,
    degree: usize,
    seed: u64,
) -> Vec<ModeField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = g.n();
    (0..count)
        .map(|_| {
            let coeffs: Vec<C64> = (0..=degree)
                .map(|m| {
                    let amp = 1.0 / (1.0 + m as f64);
                    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * amp
                })
                .collect();
            let values = DVector::from_fn(n + 1, |j, _| {
                let theta = j as f64 * std::f64::consts::PI / n as f64;
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(m, c)| c * (m as f64 * theta).cos())
                    .sum()
            });
            ModeField::new(k, values)
        })
        .collect()
}

/// Profiles concentrated in layers of width `ν^{1/2}` at the walls.
pub fn boundary_layer_samples(g: &ChebGrid, nu: f64, k: f64) -> Vec<ModeField> {
    let w = nu.sqrt();
    vec![
        ModeField::from_fn(g, k, |y| C64::from((-(1.0 - y.abs()) / w).exp())),
        ModeField::from_fn(g, k, |y| C64::from((-(1.0 - y) / w).exp())),
        ModeField::from_fn(g, k, |y| I * (-(1.0 + y) / w).exp()),
        ModeField::from_fn(g, k, |y| {
            C64::new(1.0, -1.0) * y * (-(1.0 - y.abs()) / w).exp()
        }),
    ]
}

/// `count` samples in total: the boundary-layer family followed by seeded
/// band-limited fields.
pub fn forcing_family(g: &ChebGrid, nu: f64, k: f64, count: usize, seed: u64) -> Vec<ModeField> {
    let mut out = boundary_layer_samples(g, nu, k);
    out.truncate(count);
    let rest = count - out.len();
    out.extend(band_limited_samples(g, k, rest, 16, seed));
    out
}

/// Which inequality of the forced-problem bound applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateBranch {
    /// `|k| ≥ 10ν`: weight `(νk²)^{1/6}` on the time-integrated norm.
    MediumHigh,
    /// `|k| < 10ν`: weight `ν^{1/2}`.
    Low,
}

/// Forcing samples `g¹(t_j)`, `g²(t_j)` at `t_j = j·dt`, full-length in `y`.
#[derive(Debug, Clone)]
pub struct ForcingHistory {
    pub dt: f64,
    pub g1: Vec<DVector<C64>>,
    pub g2: Vec<DVector<C64>>,
}

impl ForcingHistory {
    /// Samples `g¹(t, y)` and `g²(t, y)` on `steps + 1` time levels.
    pub fn sample(
        g: &ChebGrid,
        dt: f64,
        steps: usize,
        g1: impl Fn(f64, f64) -> C64,
        g2: impl Fn(f64, f64) -> C64,
    ) -> Self {
        let times = (0..=steps).map(|j| j as f64 * dt);
        let (a, b) = times
            .map(|t| (g.sample(|y| g1(t, y)), g.sample(|y| g2(t, y))))
            .unzip();
        ForcingHistory { dt, g1: a, g2: b }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InhomogeneousReport {
    pub nu: f64,
    pub k: f64,
    pub branch: RateBranch,
    pub sup_norm: f64,
    pub l2_norm: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs / rhs`, zero when both vanish.
    pub ratio: f64,
    pub slack: f64,
    pub violated: bool,
}

/// Time-step limit `dt·(|k| + νk²) ≤ 1/2` for the forced integration.
pub const FORCED_STEP_LIMIT: f64 = 0.5;

/// Integrates `∂_tθ + Aθ = -ik g¹ - ∂_y g²` from zero data with
/// Crank–Nicolson and compares both sides of the applicable bound.
pub fn inhomogeneous_rate_check(
    g: &ChebGrid,
    nu: f64,
    k: f64,
    forcing: &ForcingHistory,
    slack: f64,
) -> Result<InhomogeneousReport> {
    let dt = forcing.dt;
    if !(dt > 0.0) {
        return Err(LabError::StepSize(format!("dt must be positive, got {dt}")));
    }
    if dt * (k.abs() + nu * k * k) > FORCED_STEP_LIMIT {
        return Err(LabError::StepSize(format!(
            "dt = {dt} too large for k = {k} (limit dt·(|k| + νk²) ≤ {FORCED_STEP_LIMIT})"
        )));
    }
    if forcing.g1.len() != forcing.g2.len() || forcing.g1.is_empty() {
        return Err(LabError::InvalidArgument(
            "forcing histories must be nonempty and of equal length".into(),
        ));
    }
    for v in forcing.g1.iter().chain(&forcing.g2) {
        if v.len() != g.len() {
            return Err(LabError::Dimension {
                expected: g.len(),
                got: v.len(),
            });
        }
    }
    let a = OperatorMatrix::assemble(g, nu, k)?;
    let dim = a.dim();
    let half = C64::from(0.5 * dt);
    let implicit = DMatrix::<C64>::identity(dim, dim) + &a.entries * half;
    let explicit = DMatrix::<C64>::identity(dim, dim) - &a.entries * half;
    let lu = implicit.lu();
    let source = |j: usize| -> DVector<C64> {
        let s = &forcing.g1[j] * (-I * k) - g.diff(&forcing.g2[j]);
        interior(&s)
    };

    let mut theta = DVector::<C64>::zeros(dim);
    let mut s_prev = source(0);
    let mut sup: f64 = 0.0;
    let mut prev_sq = 0.0;
    let mut integral = 0.0;
    for j in 1..forcing.g1.len() {
        let s_next = source(j);
        let rhs = &explicit * &theta + (&s_prev + &s_next) * half;
        theta = lu
            .solve(&rhs)
            .ok_or_else(|| LabError::numerical("forced step solve failed"))?;
        let nrm = a.norm(&theta);
        if !nrm.is_finite() {
            return Err(LabError::numerical("non-finite forced solution"));
        }
        sup = sup.max(nrm);
        integral += 0.5 * dt * (prev_sq + nrm * nrm);
        prev_sq = nrm * nrm;
        s_prev = s_next;
    }
    let l2 = integral.sqrt();

    let time_l2 = |series: &[DVector<C64>]| -> f64 {
        let sq: Vec<f64> = series.iter().map(|v| g.norm(v).powi(2)).collect();
        sq.windows(2).map(|w| 0.5 * dt * (w[0] + w[1])).sum::<f64>().sqrt()
    };
    let branch = if k.abs() >= 10.0 * nu {
        RateBranch::MediumHigh
    } else {
        RateBranch::Low
    };
    let weight = match branch {
        RateBranch::MediumHigh => (nu * k * k).powf(1.0 / 6.0),
        RateBranch::Low => nu.sqrt(),
    };
    let lhs = sup + weight * l2;
    let rhs = nu.powf(-1.0 / 6.0) * k.abs().powf(2.0 / 3.0) * time_l2(&forcing.g1)
        + nu.powf(-0.5) * time_l2(&forcing.g2);
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(InhomogeneousReport {
        nu,
        k,
        branch,
        sup_norm: sup,
        l2_norm: l2,
        lhs,
        rhs,
        ratio,
        slack,
        violated: !(ratio <= slack),
    })
}
