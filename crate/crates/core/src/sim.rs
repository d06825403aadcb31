//! Fourier–Chebyshev IMEX solver for the perturbation vorticity/temperature
//! system around Couette flow in the no-slip channel.
//!
//! Storage is the half spectrum `j = 0..m/2` (negative modes are conjugates,
//! the Nyquist mode is dropped). Modes above the 2/3 cutoff are kept at zero.
//! The `k = 0` velocity is the mean shear `U(y) = u¹₀`, advanced by its own
//! Dirichlet heat equation; `ω₀ = U'` and `ψ₀ = ∫_{-1}^y U`.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::energy::{aggregate, Aggregates, EnergyLedger, ModeSample};
use crate::error::{LabError, Result};
use crate::operators::{
    apply_full_operator, influence_matrix, ImplicitSolver, InfluenceMatrix, PoissonSolver,
};
use crate::registry::Registry;
use crate::spectral::{ChebGrid, XGrid, XTransform, C64, I};

/// Fields of one stored Fourier mode, full length in `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeState {
    pub k: f64,
    pub omega: DVector<C64>,
    pub theta: DVector<C64>,
    pub psi: DVector<C64>,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub time: f64,
    pub nu: f64,
    pub modes: Vec<ModeState>,
    pub mean_shear: DVector<f64>,
    pub grid: Arc<ChebGrid>,
    pub xgrid: XGrid,
}

impl SimState {
    pub fn zeros(grid: Arc<ChebGrid>, xgrid: XGrid, nu: f64) -> Self {
        let len = grid.len();
        let modes = (0..xgrid.stored_modes())
            .map(|j| ModeState {
                k: xgrid.k_of(j as i64),
                omega: DVector::zeros(len),
                theta: DVector::zeros(len),
                psi: DVector::zeros(len),
            })
            .collect();
        SimState {
            time: 0.0,
            nu,
            modes,
            mean_shear: DVector::zeros(len),
            grid,
            xgrid,
        }
    }

    /// Largest `|Im|` among the `k = 0` fields; zero for a real physical state.
    pub fn reality_defect(&self) -> f64 {
        let m = &self.modes[0];
        m.omega
            .iter()
            .chain(m.theta.iter())
            .chain(m.psi.iter())
            .map(|z| z.im.abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.mean_shear.iter().all(|v| v.is_finite())
            && self.modes.iter().all(|m| {
                m.omega
                    .iter()
                    .chain(m.theta.iter())
                    .chain(m.psi.iter())
                    .all(|z| z.re.is_finite() && z.im.is_finite())
            })
    }

    /// Velocity components of stored mode `j`.
    pub fn velocity(&self, j: usize) -> (DVector<C64>, DVector<C64>) {
        if j == 0 {
            (self.mean_shear.map(C64::from), DVector::zeros(self.grid.len()))
        } else {
            let m = &self.modes[j];
            (self.grid.diff(&m.psi), &m.psi * (-I * m.k))
        }
    }

    /// `‖θ‖_{L²_{x,y}}` in the `Δk`-weighted convention of the Sobolev norms.
    pub fn theta_l2(&self) -> f64 {
        let s: f64 = self
            .modes
            .iter()
            .enumerate()
            .map(|(j, m)| XGrid::multiplicity(j) * self.grid.norm(&m.theta).powi(2))
            .sum();
        (self.xgrid.dk() * self.xgrid.box_length() * s).sqrt()
    }

    /// Largest `|θ|` over the physical collocation grid.
    pub fn theta_max(&self, transform: &XTransform) -> f64 {
        let thetas: Vec<DVector<C64>> = self.modes.iter().map(|m| m.theta.clone()).collect();
        transform
            .to_physical(&thetas, thetas.len())
            .iter()
            .flat_map(|row| row.iter())
            .map(|v| v.abs())
            .fold(0.0, f64::max)
    }

    /// `max_j max|ik u¹_j + ∂_y u²_j| / ‖u‖`.
    pub fn divergence_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        let mut unorm: f64 = 0.0;
        for j in 0..self.modes.len() {
            let (u1, u2) = self.velocity(j);
            let k = self.modes[j].k;
            let div = &u1 * (I * k) + self.grid.diff(&u2);
            worst = worst.max(div.iter().map(|z| z.norm()).fold(0.0, f64::max));
            unorm = unorm.max(u1.iter().chain(u2.iter()).map(|z| z.norm()).fold(0.0, f64::max));
        }
        if unorm > 0.0 {
            worst / unorm
        } else {
            worst
        }
    }
}

/// Active band of the 2/3 rule: stored modes `j ≤ (m - 1)/3`.
pub fn dealias_cutoff(m: usize) -> usize {
    (m - 1) / 3
}

/// Nonlinear flux densities per stored mode: `f¹ = u¹ω`, `f² = u²ω`,
/// `g¹ = u¹θ`, `g² = u²θ`, plus the mean Reynolds stress `(u¹u²)₀`.
#[derive(Debug, Clone)]
pub struct FluxSet {
    pub f1: Vec<DVector<C64>>,
    pub f2: Vec<DVector<C64>>,
    pub g1: Vec<DVector<C64>>,
    pub g2: Vec<DVector<C64>>,
    pub reynolds_stress: DVector<C64>,
    /// `max |u|` over the physical grid.
    pub max_speed: f64,
}

fn check_reality(s: &SimState) -> Result<()> {
    let defect = s.reality_defect();
    if defect != 0.0 {
        return Err(LabError::StateCorruption(format!(
            "mean mode carries imaginary part {defect:e}"
        )));
    }
    if s.modes.len() != s.xgrid.stored_modes() {
        return Err(LabError::StateCorruption(format!(
            "{} stored modes for m = {}",
            s.modes.len(),
            s.xgrid.m()
        )));
    }
    Ok(())
}

/// Dealiased pseudo-spectral fluxes of `s`.
pub fn nonlinear_fluxes(s: &SimState) -> Result<FluxSet> {
    fluxes_with(s, &XTransform::new(s.xgrid.m()), true)
}

/// Fluxes without the 2/3 truncation: every stored mode enters the products
/// and every product mode is kept.
pub fn nonlinear_fluxes_aliased(s: &SimState) -> Result<FluxSet> {
    fluxes_with(s, &XTransform::new(s.xgrid.m()), false)
}

fn fluxes_with(s: &SimState, tr: &XTransform, dealias: bool) -> Result<FluxSet> {
    check_reality(s)?;
    let stored = s.modes.len();
    let keep = if dealias {
        dealias_cutoff(s.xgrid.m()) + 1
    } else {
        stored
    };
    let mut u1s = Vec::with_capacity(stored);
    let mut u2s = Vec::with_capacity(stored);
    for j in 0..stored {
        let (a, b) = s.velocity(j);
        u1s.push(a);
        u2s.push(b);
    }
    let omegas: Vec<DVector<C64>> = s.modes.iter().map(|m| m.omega.clone()).collect();
    let thetas: Vec<DVector<C64>> = s.modes.iter().map(|m| m.theta.clone()).collect();
    let pu1 = tr.to_physical(&u1s, keep);
    let pu2 = tr.to_physical(&u2s, keep);
    let pw = tr.to_physical(&omegas, keep);
    let pt = tr.to_physical(&thetas, keep);
    let product = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<DVector<C64>> {
        let phys: Vec<Vec<f64>> = a
            .iter()
            .zip(b)
            .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x * y).collect())
            .collect();
        let mut modes = tr.to_modes(&phys, stored);
        for m in modes.iter_mut().skip(keep) {
            m.fill(C64::from(0.0));
        }
        modes
    };
    let max_speed = pu1
        .iter()
        .zip(&pu2)
        .flat_map(|(r1, r2)| r1.iter().zip(r2).map(|(a, b)| (a * a + b * b).sqrt()))
        .fold(0.0, f64::max);
    let rs = product(&pu1, &pu2);
    Ok(FluxSet {
        f1: product(&pu1, &pw),
        f2: product(&pu2, &pw),
        g1: product(&pu1, &pt),
        g2: product(&pu2, &pt),
        reynolds_stress: rs[0].clone(),
        max_speed,
    })
}

/// An implicit–explicit splitting: the linear operator `A` is treated by
/// `(c/dt) I + A` on the left, the explicit tendencies `N` on the right.
pub trait TimeScheme: Send + Sync {
    fn name(&self) -> &'static str;
    /// `c` in `(c/dt) I + A`.
    fn implicit_coefficient(&self) -> f64;
    fn needs_operator_product(&self) -> bool;
    /// Two-level schemes take their first step with [`ImexEuler`].
    fn needs_starter(&self) -> bool {
        false
    }
    /// Right-hand side given `x`, `A x` (when requested), the previous level
    /// of `x`, and the current and previous tendencies. Previous values are
    /// absent on the first step.
    fn rhs(&self, dt: f64, x: &DVector<C64>, ax: Option<&DVector<C64>>, prev: Option<Level<'_>>, n_now: &DVector<C64>) -> DVector<C64>;
}

/// Values one step back.
#[derive(Debug, Clone, Copy)]
pub struct Level<'a> {
    pub x: &'a DVector<C64>,
    pub n: &'a DVector<C64>,
}

/// Backward Euler for `A`, forward Euler for `N`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ImexEuler;

impl TimeScheme for ImexEuler {
    fn name(&self) -> &'static str {
        "imex-euler"
    }
    fn implicit_coefficient(&self) -> f64 {
        1.0
    }
    fn needs_operator_product(&self) -> bool {
        false
    }
    fn rhs(&self, dt: f64, x: &DVector<C64>, _ax: Option<&DVector<C64>>, _prev: Option<Level<'_>>, n_now: &DVector<C64>) -> DVector<C64> {
        x * C64::from(1.0 / dt) + n_now
    }
}

/// Crank–Nicolson for `A`, second-order Adams–Bashforth for `N` (forward
/// Euler on the first step). Not L-stable: the stiffest wall modes are
/// carried with amplification close to `-1` rather than damped.
#[derive(Debug, Clone, Copy, Default)]
pub struct Cnab2;

impl TimeScheme for Cnab2 {
    fn name(&self) -> &'static str {
        "cnab2"
    }
    fn implicit_coefficient(&self) -> f64 {
        2.0
    }
    fn needs_operator_product(&self) -> bool {
        true
    }
    fn rhs(&self, dt: f64, x: &DVector<C64>, ax: Option<&DVector<C64>>, prev: Option<Level<'_>>, n_now: &DVector<C64>) -> DVector<C64> {
        let mut r = x * C64::from(2.0 / dt);
        if let Some(ax) = ax {
            r -= ax;
        }
        match prev {
            Some(p) => r + n_now * C64::from(3.0) - p.n,
            None => r + n_now * C64::from(2.0),
        }
    }
}

/// Second-order backward differentiation for `A` with linearly extrapolated
/// `N` (L-stable).
#[derive(Debug, Clone, Copy, Default)]
pub struct Sbdf2;

impl TimeScheme for Sbdf2 {
    fn name(&self) -> &'static str {
        "sbdf2"
    }
    fn implicit_coefficient(&self) -> f64 {
        1.5
    }
    fn needs_operator_product(&self) -> bool {
        false
    }
    fn needs_starter(&self) -> bool {
        true
    }
    fn rhs(&self, dt: f64, x: &DVector<C64>, _ax: Option<&DVector<C64>>, prev: Option<Level<'_>>, n_now: &DVector<C64>) -> DVector<C64> {
        match prev {
            Some(p) => {
                (x * C64::from(4.0) - p.x) * C64::from(0.5 / dt) + n_now * C64::from(2.0) - p.n
            }
            None => x * C64::from(1.0 / dt) + n_now,
        }
    }
}

pub fn time_schemes() -> Registry<dyn TimeScheme> {
    let mut r: Registry<dyn TimeScheme> = Registry::new("time scheme");
    r.register("imex-euler", Arc::new(ImexEuler));
    r.register("cnab2", Arc::new(Cnab2));
    r.register("sbdf2", Arc::new(Sbdf2));
    r
}

/// Fraction of `Δx / max|u|` allowed for `dt`.
pub const CFL_SAFETY: f64 = 0.5;

struct ModeOps {
    solver: ImplicitSolver,
    closure: Option<(InfluenceMatrix, PoissonSolver)>,
}

/// Per-mode values of one time level (`ω`, `θ`, mean shear) or of the
/// explicit tendencies.
#[derive(Clone)]
struct Tendencies {
    omega: Vec<DVector<C64>>,
    theta: Vec<DVector<C64>>,
    mean: DVector<C64>,
}

struct History {
    state: Tendencies,
    tendency: Tendencies,
}

/// Prebuilt solvers for repeated steps at a fixed `dt`.
pub struct Integrator {
    scheme: Arc<dyn TimeScheme>,
    dt: f64,
    nu: f64,
    linear: bool,
    grid: Arc<ChebGrid>,
    transform: XTransform,
    ops: Vec<ModeOps>,
    starter: Option<Vec<ModeOps>>,
    mean_lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    history: Option<History>,
    active: usize,
}

impl std::fmt::Debug for Integrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Integrator")
            .field("scheme", &self.scheme.name())
            .field("dt", &self.dt)
            .field("nu", &self.nu)
            .field("linear", &self.linear)
            .finish()
    }
}

impl Integrator {
    /// `linear = true` drops the advective fluxes; buoyancy stays.
    pub fn new(
        state: &SimState,
        scheme: Arc<dyn TimeScheme>,
        dt: f64,
        linear: bool,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(LabError::StepSize(format!("dt must be positive, got {dt}")));
        }
        let g = state.grid.clone();
        let active = dealias_cutoff(state.xgrid.m()).min(state.modes.len() - 1) + 1;
        let build = |c: f64| -> Result<Vec<ModeOps>> {
            let mut ops = Vec::with_capacity(active);
            for j in 0..active {
                if j == 0 {
                    ops.push(ModeOps {
                        solver: ImplicitSolver::new(&g, state.nu, 0.0, c / dt)?,
                        closure: None,
                    });
                } else {
                    let (inf, solver, poisson) =
                        influence_matrix(&g, state.nu, state.modes[j].k, dt, c)?;
                    ops.push(ModeOps {
                        solver,
                        closure: Some((inf, poisson)),
                    });
                }
            }
            Ok(ops)
        };
        let ops = build(scheme.implicit_coefficient())?;
        let starter = if scheme.needs_starter() {
            Some(build(ImexEuler.implicit_coefficient())?)
        } else {
            None
        };
        Ok(Integrator {
            scheme,
            dt,
            nu: state.nu,
            linear,
            transform: XTransform::new(state.xgrid.m()),
            ops,
            starter,
            mean_lu: mean_stream_operator(&g),
            grid: g,
            history: None,
            active,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn scheme_name(&self) -> &'static str {
        self.scheme.name()
    }

    pub fn transform(&self) -> &XTransform {
        &self.transform
    }

    /// Zeroes the modes outside the dealiased band.
    pub fn project(&self, state: &mut SimState) {
        for m in state.modes.iter_mut().skip(self.active) {
            m.omega.fill(C64::from(0.0));
            m.theta.fill(C64::from(0.0));
            m.psi.fill(C64::from(0.0));
        }
    }

    /// Advances one step. Fails with a step-size error when
    /// `dt · max|u| > CFL_SAFETY · Δx`.
    pub fn step(&mut self, s: &SimState) -> Result<SimState> {
        let g = &*self.grid;
        let dt = self.dt;
        let nu = self.nu;
        let len = g.len();
        let zero = || DVector::<C64>::zeros(len);

        let fluxes = if self.linear {
            check_reality(s)?;
            None
        } else {
            let f = fluxes_with(s, &self.transform, true)?;
            let dx = s.xgrid.box_length() / s.xgrid.m() as f64;
            if dt * f.max_speed > CFL_SAFETY * dx {
                return Err(LabError::StepSize(format!(
                    "CFL violated: dt·max|u| = {:.3e} > {:.3e}",
                    dt * f.max_speed,
                    CFL_SAFETY * dx
                )));
            }
            Some(f)
        };

        let mut now = Tendencies {
            omega: Vec::with_capacity(self.active),
            theta: Vec::with_capacity(self.active),
            mean: zero(),
        };
        for j in 0..self.active {
            let m = &s.modes[j];
            let k = m.k;
            let (nw, nt) = match &fluxes {
                Some(f) => (
                    &f.f1[j] * (-I * k) - g.diff(&f.f2[j]),
                    &f.g1[j] * (-I * k) - g.diff(&f.g2[j]),
                ),
                None => (zero(), zero()),
            };
            now.omega.push(nw - &m.theta * (I * k));
            now.theta.push(nt);
        }
        if let Some(f) = &fluxes {
            now.mean = -g.diff(&f.reynolds_stress);
        }

        let use_starter = self.history.is_none() && self.starter.is_some();
        let scheme: &dyn TimeScheme = if use_starter { &ImexEuler } else { &*self.scheme };
        let all_ops = if use_starter {
            self.starter.as_ref().expect("starter built")
        } else {
            &self.ops
        };
        let hist = self.history.as_ref();
        let rhs = |x: &DVector<C64>, k: f64, n: &DVector<C64>, p: Option<Level<'_>>| {
            let ax = scheme
                .needs_operator_product()
                .then(|| apply_full_operator(g, nu, k, x));
            scheme.rhs(dt, x, ax.as_ref(), p, n)
        };
        let level = |pick: fn(&Tendencies) -> &DVector<C64>| {
            hist.map(|h| Level {
                x: pick(&h.state),
                n: pick(&h.tendency),
            })
        };

        let mut current = Tendencies {
            omega: Vec::with_capacity(self.active),
            theta: Vec::with_capacity(self.active),
            mean: DVector::from_iterator(len, s.mean_shear.iter().map(|&v| C64::from(v))),
        };
        let mut next = s.clone();
        next.time = s.time + dt;
        for j in 0..self.active {
            let m = &s.modes[j];
            current.omega.push(m.omega.clone());
            current.theta.push(m.theta.clone());
            let ops = &all_ops[j];
            let lt = hist.map(|h| Level {
                x: &h.state.theta[j],
                n: &h.tendency.theta[j],
            });
            let rt = rhs(&m.theta, m.k, &now.theta[j], lt);
            let theta = ops.solver.solve(&rt, C64::from(0.0), C64::from(0.0))?;
            if j == 0 {
                let ru = rhs(&current.mean, 0.0, &now.mean, level(|t| &t.mean));
                let u_new = ops.solver.solve(&ru, C64::from(0.0), C64::from(0.0))?;
                next.mean_shear = u_new.map(|z| z.re);
                next.modes[0] = self.mean_mode(&next.mean_shear, theta);
                continue;
            }
            let lw = hist.map(|h| Level {
                x: &h.state.omega[j],
                n: &h.tendency.omega[j],
            });
            let rw = rhs(&m.omega, m.k, &now.omega[j], lw);
            let omega_p = ops.solver.solve(&rw, C64::from(0.0), C64::from(0.0))?;
            let (inf, poisson) = ops.closure.as_ref().expect("closure for k != 0");
            let psi_p = poisson.solve(&omega_p)?;
            let (omega, psi) = inf.correct(g, &omega_p, &psi_p);
            next.modes[j] = ModeState {
                k: m.k,
                omega,
                theta,
                psi,
            };
        }
        self.history = Some(History {
            state: current,
            tendency: now,
        });
        if !use_starter {
            self.starter = self.starter.take().filter(|_| self.history.is_none());
        }
        Ok(next)
    }

    fn mean_mode(&self, u: &DVector<f64>, theta: DVector<C64>) -> ModeState {
        let g = &*self.grid;
        let n = g.n();
        let omega = (g.d1() * u).map(C64::from);
        let mut rhs = u.clone();
        rhs[n] = 0.0;
        let psi = self
            .mean_lu
            .solve(&rhs)
            .unwrap_or_else(|| DVector::zeros(n + 1))
            .map(C64::from);
        let mut theta = theta;
        for z in theta.iter_mut() {
            z.im = 0.0;
        }
        ModeState {
            k: 0.0,
            omega,
            theta,
            psi,
        }
    }

    /// Recomputes `ω₀` and `ψ₀` from the mean shear and drops imaginary
    /// round-off of the mean mode.
    pub fn sync_mean(&self, s: &mut SimState) {
        let theta = s.modes[0].theta.clone();
        s.modes[0] = self.mean_mode(&s.mean_shear, theta);
    }
}

/// `d1` with its `y = -1` row replaced by point evaluation, so that solving
/// against `(U, 0)` yields `ψ₀ = ∫_{-1}^y U`.
fn mean_stream_operator(g: &ChebGrid) -> nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn> {
    let n = g.n();
    let mut m = g.d1().clone();
    for c in 0..=n {
        m[(n, c)] = if c == n { 1.0 } else { 0.0 };
    }
    m.lu()
}

/// One step with a freshly built integrator for the named scheme.
pub fn imex_step(s: &SimState, dt: f64, scheme: &str) -> Result<SimState> {
    let scheme = time_schemes().get(scheme)?;
    Integrator::new(s, scheme, dt, false)?.step(s)
}

/// `(max|θ_k(±1)|, max|ψ_k(±1)|, max|∂_yψ_k(±1)|)` over modes, each divided
/// by the mode's field norm. The `ψ` entries skip the mean mode.
pub fn boundary_residuals(s: &SimState) -> (f64, f64, f64) {
    let g = &*s.grid;
    let n = g.n();
    let rel = |v: f64, norm: f64| if norm > 0.0 { v / norm } else { v };
    let mut out = (0.0f64, 0.0f64, 0.0f64);
    for (j, m) in s.modes.iter().enumerate() {
        let tn = g.norm(&m.theta);
        out.0 = out.0.max(rel(m.theta[0].norm().max(m.theta[n].norm()), tn));
        if j == 0 {
            continue;
        }
        let pn = g.norm(&m.psi);
        out.1 = out.1.max(rel(m.psi[0].norm().max(m.psi[n].norm()), pn));
        let dpsi = g.diff(&m.psi);
        out.2 = out.2.max(rel(dpsi[0].norm().max(dpsi[n].norm()), pn));
    }
    out
}

/// Flat `key = value` run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub nu: f64,
    pub lx: f64,
    pub m: usize,
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub amplitude_u: f64,
    pub amplitude_theta: f64,
    pub scheme: String,
    /// Divergence is flagged when `𝓔_total` exceeds this multiple of its
    /// initial value.
    pub ceiling: f64,
    pub c_norm: f64,
    pub linear: bool,
    pub snapshot_every: usize,
}

pub const CONFIG_KEYS: [&str; 14] = [
    "nu",
    "Lx",
    "m",
    "n",
    "dt",
    "T",
    "seed",
    "amplitude_u",
    "amplitude_theta",
    "scheme",
    "ceiling",
    "c_norm",
    "linear",
    "snapshot_every",
];

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig::resolve(&BTreeMap::new()).expect("defaults are valid")
    }
}

impl SimConfig {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                LabError::Config(format!("line {}: expected key = value", lineno + 1))
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Self::resolve(&map)
    }

    /// Builds a config from explicit entries, filling defaults. Unknown keys
    /// are rejected. Amplitude defaults depend on `nu`:
    /// `0.1·ν^{1/2}` and `0.1·ν^{5/6}`; the horizon defaults to `20·ν^{-1/3}`.
    pub fn resolve(map: &BTreeMap<String, String>) -> Result<Self> {
        for key in map.keys() {
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(LabError::Config(format!(
                    "unknown key '{key}' (known: {})",
                    CONFIG_KEYS.join(", ")
                )));
            }
        }
        fn get<T: std::str::FromStr>(
            map: &BTreeMap<String, String>,
            key: &str,
            default: T,
        ) -> Result<T> {
            match map.get(key) {
                None => Ok(default),
                Some(v) => v
                    .parse()
                    .map_err(|_| LabError::Config(format!("bad value '{v}' for '{key}'"))),
            }
        }
        let nu: f64 = get(map, "nu", 1e-2)?;
        let cfg = SimConfig {
            nu,
            lx: get(map, "Lx", 4.0 * std::f64::consts::PI)?,
            m: get(map, "m", 128)?,
            n: get(map, "n", 128)?,
            dt: get(map, "dt", 5e-3)?,
            t_end: get(map, "T", 20.0 * nu.powf(-1.0 / 3.0))?,
            seed: get(map, "seed", 0)?,
            amplitude_u: get(map, "amplitude_u", 0.1 * nu.sqrt())?,
            amplitude_theta: get(map, "amplitude_theta", 0.1 * nu.powf(5.0 / 6.0))?,
            scheme: get(map, "scheme", "imex-euler".to_string())?,
            ceiling: get(map, "ceiling", 1e3)?,
            c_norm: get(map, "c_norm", 1.0)?,
            linear: get(map, "linear", false)?,
            snapshot_every: get(map, "snapshot_every", 100)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(LabError::Config(msg));
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.lx > 0.0 && self.lx.is_finite()) {
            return bad(format!("Lx must be positive, got {}", self.lx));
        }
        if self.m < 4 || self.m % 2 != 0 {
            return bad(format!("m must be even and at least 4, got {}", self.m));
        }
        if self.n < 4 {
            return bad(format!("n must be at least 4, got {}", self.n));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("T must be nonnegative, got {}", self.t_end));
        }
        if !(self.amplitude_u >= 0.0 && self.amplitude_theta >= 0.0) {
            return bad("amplitudes must be nonnegative".into());
        }
        if !(self.ceiling > 1.0) {
            return bad(format!("ceiling must exceed 1, got {}", self.ceiling));
        }
        if !(self.c_norm > 0.0) {
            return bad(format!("c_norm must be positive, got {}", self.c_norm));
        }
        if self.snapshot_every == 0 {
            return bad("snapshot_every must be at least 1".into());
        }
        if !time_schemes().contains(&self.scheme) {
            return bad(format!("unknown scheme '{}'", self.scheme));
        }
        Ok(())
    }

    /// Applies `key=value` overrides on top of this config.
    pub fn with_overrides(&self, overrides: &[(String, String)]) -> Result<Self> {
        let mut map = self.to_map();
        for (k, v) in overrides {
            if !CONFIG_KEYS.contains(&k.as_str()) {
                return Err(LabError::Config(format!("unknown key '{k}'")));
            }
            map.insert(k.clone(), v.clone());
        }
        Self::resolve(&map)
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("nu".into(), format!("{:e}", self.nu));
        m.insert("Lx".into(), format!("{:e}", self.lx));
        m.insert("m".into(), self.m.to_string());
        m.insert("n".into(), self.n.to_string());
        m.insert("dt".into(), format!("{:e}", self.dt));
        m.insert("T".into(), format!("{:e}", self.t_end));
        m.insert("seed".into(), self.seed.to_string());
        m.insert("amplitude_u".into(), format!("{:e}", self.amplitude_u));
        m.insert("amplitude_theta".into(), format!("{:e}", self.amplitude_theta));
        m.insert("scheme".into(), self.scheme.clone());
        m.insert("ceiling".into(), format!("{:e}", self.ceiling));
        m.insert("c_norm".into(), format!("{:e}", self.c_norm));
        m.insert("linear".into(), self.linear.to_string());
        m.insert("snapshot_every".into(), self.snapshot_every.to_string());
        m
    }

    /// Canonical text form; parsing it returns an identical config.
    pub fn to_text(&self) -> String {
        CONFIG_KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.to_map()[*k]))
            .collect()
    }

    /// Step count; the run uses `T / steps ≤ dt` so that it ends at `T`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    /// Running functionals on `[0, t]`.
    pub e_omega: f64,
    pub e_theta: f64,
    pub e_total: f64,
    /// `𝓔_total` of the state at time `t` alone (no time accumulation).
    pub instant_total: f64,
    pub theta_l2: f64,
    pub theta_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RunOutcome {
    Completed,
    DivergenceDetected { time: f64, reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunDiagnostics {
    /// Largest normalized `(θ, ψ, ∂_yψ)` wall values seen after any step.
    pub boundary: (f64, f64, f64),
    pub divergence: f64,
    pub reality: f64,
    /// Largest `‖θ^{n+1}‖ / ‖θ^n‖ - 1` over steps.
    pub theta_l2_growth: f64,
    /// Steps where `‖θ‖` grew by more than `1e-10` relative.
    pub theta_l2_violations: usize,
    /// Steps where `max|θ|` grew by more than `1e-8` relative.
    pub theta_max_violations: usize,
    pub max_instant_total: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: SimConfig,
    pub snapshots: Vec<Snapshot>,
    pub outcome: RunOutcome,
    pub steps: usize,
    pub complete: bool,
    pub diagnostics: RunDiagnostics,
    pub final_aggregates: Aggregates,
    #[serde(skip)]
    pub ledger: Option<EnergyLedger>,
    #[serde(skip)]
    pub final_state: Option<SimState>,
}

pub const THETA_L2_SLACK: f64 = 1e-10;
pub const THETA_MAX_SLACK: f64 = 1e-8;

fn mode_samples(s: &SimState) -> Vec<ModeSample> {
    let scale = s.xgrid.box_length();
    (0..s.modes.len())
        .map(|j| {
            let (u1, u2) = s.velocity(j);
            let m = &s.modes[j];
            ModeSample::from_fields(&s.grid, &m.omega, &u1, &u2, &m.theta, scale)
        })
        .collect()
}

/// Ledger over the stored modes with `L¹_k` multiplicities.
pub fn new_ledger(s: &SimState, c_norm: f64) -> Result<EnergyLedger> {
    let modes: Vec<(f64, f64)> = s
        .modes
        .iter()
        .enumerate()
        .map(|(j, m)| (m.k, XGrid::multiplicity(j)))
        .collect();
    EnergyLedger::new(s.nu, s.xgrid.dk(), &modes, c_norm)
}

/// Aggregates of the state alone, with no time accumulation.
pub fn instant_aggregates(s: &SimState, c_norm: f64) -> Result<Aggregates> {
    let mut l = new_ledger(s, c_norm)?;
    l.record(s.time, &mode_samples(s))?;
    aggregate(&l)
}

/// Runs from the initial data described by `config` (see
/// [`crate::threshold::make_initial_data`]).
pub fn simulate(config: &SimConfig) -> Result<RunRecord> {
    config.validate()?;
    let grid = Arc::new(ChebGrid::new(config.n)?);
    let xgrid = XGrid::new(config.lx, config.m)?;
    let state = crate::threshold::make_initial_data(
        config.seed,
        &crate::threshold::InitialProfile::default(),
        config.amplitude_u,
        config.amplitude_theta,
        grid,
        xgrid,
        config.nu,
    )?;
    simulate_from(config, state)
}

/// Runs from a given state. Blow-up (non-finite fields, `𝓔_total` above the
/// ceiling, or a CFL breach) ends the run with a divergence-detected outcome.
pub fn simulate_from(config: &SimConfig, initial: SimState) -> Result<RunRecord> {
    config.validate()?;
    if (initial.nu - config.nu).abs() > 0.0 {
        return Err(LabError::Config("state and config viscosities differ".into()));
    }
    let scheme = time_schemes().get(&config.scheme)?;
    let steps = config.steps();
    let dt = if steps > 0 {
        config.t_end / steps as f64
    } else {
        config.dt
    };
    let mut integ = Integrator::new(&initial, scheme, dt, config.linear)?;
    let mut state = initial;
    integ.project(&mut state);
    integ.sync_mean(&mut state);

    let mut ledger = new_ledger(&state, config.c_norm)?;
    ledger.record(state.time, &mode_samples(&state))?;
    let start = aggregate(&ledger)?;
    let inst0 = instant_aggregates(&state, config.c_norm)?;
    let mut diagnostics = RunDiagnostics {
        boundary: (0.0, 0.0, 0.0),
        divergence: state.divergence_defect(),
        reality: state.reality_defect(),
        theta_l2_growth: f64::NEG_INFINITY,
        theta_l2_violations: 0,
        theta_max_violations: 0,
        max_instant_total: inst0.e_total,
    };
    let mut theta_l2 = state.theta_l2();
    let mut theta_max = state.theta_max(integ.transform());
    let snap = |t: f64, agg: &Aggregates, inst: f64, tl2: f64, tmax: f64| Snapshot {
        t,
        e_omega: agg.e_omega,
        e_theta: agg.e_theta,
        e_total: agg.e_total,
        instant_total: inst,
        theta_l2: tl2,
        theta_max: tmax,
    };
    let mut snapshots = vec![snap(0.0, &start, inst0.e_total, theta_l2, theta_max)];
    let mut outcome = RunOutcome::Completed;
    let mut done = 0;
    let mut last = start;
    for step in 1..=steps {
        let next = match integ.step(&state) {
            Ok(s) => s,
            Err(LabError::StepSize(msg)) => {
                outcome = RunOutcome::DivergenceDetected {
                    time: state.time,
                    reason: msg,
                };
                break;
            }
            Err(e) => return Err(e),
        };
        done = step;
        if !next.is_finite() {
            outcome = RunOutcome::DivergenceDetected {
                time: next.time,
                reason: "non-finite field".into(),
            };
            break;
        }
        let b = boundary_residuals(&next);
        diagnostics.boundary.0 = diagnostics.boundary.0.max(b.0);
        diagnostics.boundary.1 = diagnostics.boundary.1.max(b.1);
        diagnostics.boundary.2 = diagnostics.boundary.2.max(b.2);
        diagnostics.divergence = diagnostics.divergence.max(next.divergence_defect());
        diagnostics.reality = diagnostics.reality.max(next.reality_defect());

        let new_l2 = next.theta_l2();
        if theta_l2 > 0.0 {
            let growth = new_l2 / theta_l2 - 1.0;
            diagnostics.theta_l2_growth = diagnostics.theta_l2_growth.max(growth);
            if growth > THETA_L2_SLACK {
                diagnostics.theta_l2_violations += 1;
            }
        }
        theta_l2 = new_l2;
        let new_max = next.theta_max(integ.transform());
        if new_max > theta_max * (1.0 + THETA_MAX_SLACK) {
            diagnostics.theta_max_violations += 1;
        }
        theta_max = new_max;

        let samples = mode_samples(&next);
        ledger.record(next.time, &samples)?;
        let agg = aggregate(&ledger)?;
        let inst = instant_aggregates(&next, config.c_norm)?.e_total;
        diagnostics.max_instant_total = diagnostics.max_instant_total.max(inst);
        state = next;
        last = agg;
        if !agg.e_total.is_finite() || (start.e_total > 0.0 && agg.e_total > config.ceiling * start.e_total) {
            snapshots.push(snap(state.time, &agg, inst, theta_l2, theta_max));
            outcome = RunOutcome::DivergenceDetected {
                time: state.time,
                reason: format!(
                    "energy functional {:.3e} above {} × initial",
                    agg.e_total, config.ceiling
                ),
            };
            break;
        }
        if step % config.snapshot_every == 0 || step == steps {
            snapshots.push(snap(state.time, &agg, inst, theta_l2, theta_max));
        }
    }
    if diagnostics.theta_l2_growth == f64::NEG_INFINITY {
        diagnostics.theta_l2_growth = 0.0;
    }
    Ok(RunRecord {
        config: config.clone(),
        snapshots,
        outcome,
        steps: done,
        complete: true,
        diagnostics,
        final_aggregates: last,
        ledger: Some(ledger),
        final_state: Some(state),
    })
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"SHLB";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Binary checkpoint. Layout (little endian): magic `SHLB`, `u32` version,
/// `u32 m`, `u32 n`, `f64 Lx`, `f64 nu`, `f64 time`; then for each stored mode
/// `j = 0..m/2` the arrays `ω_j`, `θ_j`, `ψ_j`, each `n + 1` complex values
/// written as `(re: f64, im: f64)`; then the `n + 1` mean-shear samples.
pub fn write_checkpoint(s: &SimState, mut w: impl Write) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(s.xgrid.m() as u32).to_le_bytes())?;
    w.write_all(&(s.grid.n() as u32).to_le_bytes())?;
    for v in [s.xgrid.box_length(), s.nu, s.time] {
        w.write_all(&v.to_le_bytes())?;
    }
    for m in &s.modes {
        for arr in [&m.omega, &m.theta, &m.psi] {
            for z in arr.iter() {
                w.write_all(&z.re.to_le_bytes())?;
                w.write_all(&z.im.to_le_bytes())?;
            }
        }
    }
    for v in s.mean_shear.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint(mut r: impl Read) -> Result<SimState> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(LabError::Data("not a checkpoint file".into()));
    }
    let mut b4 = [0u8; 4];
    let mut b8 = [0u8; 8];
    let mut u32_ = |r: &mut dyn Read| -> Result<u32> {
        r.read_exact(&mut b4)?;
        Ok(u32::from_le_bytes(b4))
    };
    let version = u32_(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(LabError::Data(format!("unsupported checkpoint version {version}")));
    }
    let m = u32_(&mut r)? as usize;
    let n = u32_(&mut r)? as usize;
    let mut f64_ = |r: &mut dyn Read| -> Result<f64> {
        r.read_exact(&mut b8)?;
        Ok(f64::from_le_bytes(b8))
    };
    let lx = f64_(&mut r)?;
    let nu = f64_(&mut r)?;
    let time = f64_(&mut r)?;
    let grid = Arc::new(ChebGrid::new(n).map_err(|e| LabError::Data(e.to_string()))?);
    let xgrid = XGrid::new(lx, m).map_err(|e| LabError::Data(e.to_string()))?;
    let mut s = SimState::zeros(grid, xgrid, nu);
    s.time = time;
    for mode in s.modes.iter_mut() {
        for arr in [&mut mode.omega, &mut mode.theta, &mut mode.psi] {
            for z in arr.iter_mut() {
                let re = f64_(&mut r)?;
                let im = f64_(&mut r)?;
                *z = C64::new(re, im);
            }
        }
    }
    for v in s.mean_shear.iter_mut() {
        *v = f64_(&mut r)?;
    }
    Ok(s)
}

/// `ψ₀ = ∫_{-1}^y U` for a mean-shear profile (used when building states by
/// hand).
pub fn mean_stream(g: &ChebGrid, u: &DVector<f64>) -> DVector<f64> {
    let n = g.n();
    let mut rhs = u.clone();
    rhs[n] = 0.0;
    mean_stream_operator(g)
        .solve(&rhs)
        .unwrap_or_else(|| DVector::zeros(n + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_roundtrip() {
        let c = SimConfig::default();
        assert_eq!(c.m, 128);
        assert!((c.t_end - 20.0 * 1e-2f64.powf(-1.0 / 3.0)).abs() < 1e-12);
        let again = SimConfig::parse(&c.to_text()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn config_rejects_unknown_and_bad_values() {
        assert!(SimConfig::parse("nu = 1e-2\nfoo = 3\n").unwrap_err().is_config_error());
        assert!(SimConfig::parse("m = 7\n").is_err());
        assert!(SimConfig::parse("scheme = rk4\n").is_err());
        assert!(SimConfig::parse("nu\n").is_err());
        let c = SimConfig::parse("# comment\nnu = 1e-3 # trailing\nT = 5\n").unwrap();
        assert_eq!(c.nu, 1e-3);
        assert_eq!(c.t_end, 5.0);
    }

    #[test]
    fn cutoff_values() {
        assert_eq!(dealias_cutoff(32), 10);
        assert_eq!(dealias_cutoff(6), 1);
    }

    #[test]
    fn scheme_registry_names() {
        assert_eq!(time_schemes().names(), vec!["cnab2", "imex-euler", "sbdf2"]);
    }
}
