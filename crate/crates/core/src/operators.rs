//! Per-mode linear operators: the shear–diffusion operator
//! `A = -ν(∂_y² - k²) + iky` with Dirichlet elimination, the streamfunction
//! Poisson solve, velocity recovery, and the influence-matrix closure that
//! enforces the clamped conditions `ψ = ∂_yψ = 0` at the walls.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::error::{LabError, Result};
use crate::spectral::{real_matvec, ChebGrid, ModeField, C64, I};

/// Boundary treatment baked into an [`OperatorMatrix`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// Homogeneous Dirichlet rows at `y = ±1`, eliminated.
    DirichletEliminated,
}

/// Dense interior matrix of `A` acting on the `n - 1` interior samples.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub entries: DMatrix<C64>,
    pub nu: f64,
    pub k: f64,
    pub bc: BoundaryCondition,
    /// Interior quadrature weights defining the measured norm.
    pub weights: DVector<f64>,
}

pub fn assemble_mode_operator(g: &ChebGrid, nu: f64, k: f64) -> Result<OperatorMatrix> {
    OperatorMatrix::assemble(g, nu, k)
}

impl OperatorMatrix {
    pub fn assemble(g: &ChebGrid, nu: f64, k: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(LabError::InvalidParameter(format!(
                "viscosity must be positive, got {nu}"
            )));
        }
        if !k.is_finite() {
            return Err(LabError::InvalidParameter(format!("non-finite wavenumber {k}")));
        }
        let n = g.n();
        let y = g.nodes();
        let entries = DMatrix::from_fn(n - 1, n - 1, |i, j| {
            let mut v = C64::new(-nu * g.d2()[(i + 1, j + 1)], 0.0);
            if i == j {
                v += C64::new(nu * k * k, k * y[i + 1]);
            }
            v
        });
        Ok(OperatorMatrix {
            entries,
            nu,
            k,
            bc: BoundaryCondition::DirichletEliminated,
            weights: g.interior_weights(),
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// `A - iλ`.
    pub fn shifted(&self, lambda: f64) -> DMatrix<C64> {
        let mut m = self.entries.clone();
        for i in 0..m.nrows() {
            m[(i, i)] -= I * lambda;
        }
        m
    }

    /// `W^{1/2} M W^{-1/2}` for a matrix acting on interior samples, so that
    /// Euclidean singular values equal weighted-norm singular values.
    pub fn to_weighted(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * (sw[i] / sw[j]))
    }

    /// Interior weighted inner product.
    pub fn inner(&self, a: &DVector<C64>, b: &DVector<C64>) -> C64 {
        a.iter()
            .zip(b.iter())
            .zip(self.weights.iter())
            .map(|((x, y), w)| x * y.conj() * *w)
            .sum()
    }

    pub fn norm(&self, v: &DVector<C64>) -> f64 {
        self.inner(v, v).re.max(0.0).sqrt()
    }

    pub fn apply(&self, v: &DVector<C64>) -> DVector<C64> {
        &self.entries * v
    }
}

/// Interior samples of a full-length field.
pub fn interior(v: &DVector<C64>) -> DVector<C64> {
    v.rows(1, v.len() - 2).into_owned()
}

/// Full-length field with zero boundary values from interior samples.
pub fn with_zero_boundary(v: &DVector<C64>) -> DVector<C64> {
    let mut out = DVector::zeros(v.len() + 2);
    out.rows_mut(1, v.len()).copy_from(v);
    out
}

/// Factored Dirichlet Helmholtz operator `∂_y² - k²` for `Δ_k ψ = ω`.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    pub k: f64,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
}

impl PoissonSolver {
    pub fn new(g: &ChebGrid, k: f64) -> Result<Self> {
        let n = g.n();
        let m = DMatrix::from_fn(n - 1, n - 1, |i, j| {
            let diag = if i == j { k * k } else { 0.0 };
            g.d2()[(i + 1, j + 1)] - diag
        });
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(LabError::numerical("singular Poisson operator"));
        }
        Ok(PoissonSolver { k, lu, n })
    }

    /// Solves `(∂_y² - k²)ψ = ω` at interior nodes with `ψ(±1) = 0`.
    pub fn solve(&self, omega: &DVector<C64>) -> Result<DVector<C64>> {
        let n = self.n;
        let re = DVector::from_fn(n - 1, |i, _| omega[i + 1].re);
        let im = DVector::from_fn(n - 1, |i, _| omega[i + 1].im);
        let (Some(xr), Some(xi)) = (self.lu.solve(&re), self.lu.solve(&im)) else {
            return Err(LabError::numerical("Poisson solve failed"));
        };
        let mut out = DVector::<C64>::zeros(n + 1);
        for i in 0..n - 1 {
            out[i + 1] = C64::new(xr[i], xi[i]);
        }
        Ok(out)
    }
}

pub fn solve_poisson_mode(ps: &PoissonSolver, omega: &ModeField) -> Result<ModeField> {
    if (omega.k - ps.k).abs() > 1e-12 * ps.k.abs().max(1.0) {
        return Err(LabError::InvalidArgument(format!(
            "solver built for k = {}, field has k = {}",
            ps.k, omega.k
        )));
    }
    if omega.len() != ps.n + 1 {
        return Err(LabError::Dimension {
            expected: ps.n + 1,
            got: omega.len(),
        });
    }
    Ok(ModeField::new(omega.k, ps.solve(&omega.values)?))
}

/// `u_k = (∂_yψ, -ikψ)`.
pub fn velocity_from_stream(psi: &ModeField, g: &ChebGrid) -> (ModeField, ModeField) {
    let u1 = g.diff(&psi.values);
    let u2 = &psi.values * (-I * psi.k);
    (ModeField::new(psi.k, u1), ModeField::new(psi.k, u2))
}

/// Discrete divergence `ik u¹ + d1 u²` of a mode velocity.
pub fn divergence(u1: &ModeField, u2: &ModeField, g: &ChebGrid) -> DVector<C64> {
    &u1.values * (I * u1.k) + g.diff(&u2.values)
}

/// LU of `(α I + A)` on interior nodes plus the boundary columns of `A`,
/// so that solutions with prescribed Dirichlet values can be formed.
#[derive(Debug, Clone)]
pub struct ImplicitSolver {
    pub alpha: f64,
    pub nu: f64,
    pub k: f64,
    lu: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    /// Columns `-ν d2[int, 0]` and `-ν d2[int, n]` of `A`.
    col_top: DVector<C64>,
    col_bottom: DVector<C64>,
}

impl ImplicitSolver {
    pub fn new(g: &ChebGrid, nu: f64, k: f64, alpha: f64) -> Result<Self> {
        let a = OperatorMatrix::assemble(g, nu, k)?;
        let mut m = a.entries;
        for i in 0..m.nrows() {
            m[(i, i)] += C64::new(alpha, 0.0);
        }
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(LabError::numerical("singular implicit operator"));
        }
        let n = g.n();
        let col_top = DVector::from_fn(n - 1, |i, _| C64::new(-nu * g.d2()[(i + 1, 0)], 0.0));
        let col_bottom = DVector::from_fn(n - 1, |i, _| C64::new(-nu * g.d2()[(i + 1, n)], 0.0));
        Ok(ImplicitSolver {
            alpha,
            nu,
            k,
            lu,
            col_top,
            col_bottom,
        })
    }

    /// Solves `(αI + A) v = rhs` at interior nodes with `v(+1) = top`,
    /// `v(-1) = bottom`. `rhs` is full length; its boundary entries are ignored.
    pub fn solve(&self, rhs: &DVector<C64>, top: C64, bottom: C64) -> Result<DVector<C64>> {
        let n = rhs.len() - 1;
        let mut r = interior(rhs);
        if top != C64::new(0.0, 0.0) {
            r -= &self.col_top * top;
        }
        if bottom != C64::new(0.0, 0.0) {
            r -= &self.col_bottom * bottom;
        }
        let x = self
            .lu
            .solve(&r)
            .ok_or_else(|| LabError::numerical("implicit solve failed"))?;
        let mut out = DVector::<C64>::zeros(n + 1);
        out.rows_mut(1, n - 1).copy_from(&x);
        out[0] = top;
        out[n] = bottom;
        Ok(out)
    }
}

/// Applies the full collocation operator `A` to a full-length field,
/// returning full-length output (boundary rows evaluated by collocation).
pub fn apply_full_operator(g: &ChebGrid, nu: f64, k: f64, v: &DVector<C64>) -> DVector<C64> {
    let d2v = real_matvec(g.d2(), v);
    let y = g.nodes();
    DVector::from_fn(v.len(), |i, _| -nu * (d2v[i] - k * k * v[i]) + I * k * y[i] * v[i])
}

/// Influence-matrix closure for one implicit step of `(αI + A)ω = r`,
/// `Δ_k ψ = ω`, selecting boundary vorticity so that `∂_yψ(±1) = 0`.
#[derive(Debug, Clone)]
pub struct InfluenceMatrix {
    /// Maps `(ω(+1), ω(-1))` to `(∂_yψ(+1), ∂_yψ(-1))`.
    pub matrix: Matrix2<C64>,
    pub inverse: Matrix2<C64>,
    pub condition: f64,
    /// Homogeneous responses to unit boundary vorticity at `+1` and `-1`.
    pub omega_top: DVector<C64>,
    pub omega_bottom: DVector<C64>,
    pub psi_top: DVector<C64>,
    pub psi_bottom: DVector<C64>,
}

/// Builds the closure for `(coefficient/dt) I + A`. `coefficient` is the
/// implicit-scheme coefficient (1 for backward Euler, 2 for Crank–Nicolson).
pub fn influence_matrix(
    g: &ChebGrid,
    nu: f64,
    k: f64,
    dt: f64,
    coefficient: f64,
) -> Result<(InfluenceMatrix, ImplicitSolver, PoissonSolver)> {
    if k == 0.0 {
        return Err(LabError::InvalidParameter(
            "influence matrix needs k != 0; the mean mode is advanced as a shear profile".into(),
        ));
    }
    if !(dt > 0.0) {
        return Err(LabError::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let solver = ImplicitSolver::new(g, nu, k, coefficient / dt)?;
    let poisson = PoissonSolver::new(g, k)?;
    let zero = DVector::<C64>::zeros(g.len());
    let one = C64::new(1.0, 0.0);
    let z = C64::new(0.0, 0.0);
    let omega_top = solver.solve(&zero, one, z)?;
    let omega_bottom = solver.solve(&zero, z, one)?;
    let psi_top = poisson.solve(&omega_top)?;
    let psi_bottom = poisson.solve(&omega_bottom)?;
    let n = g.n();
    let dt_top = g.diff(&psi_top);
    let dt_bottom = g.diff(&psi_bottom);
    let matrix = Matrix2::new(dt_top[0], dt_bottom[0], dt_top[n], dt_bottom[n]);
    let sv = matrix.singular_values();
    let condition = sv[0].max(sv[1]) / sv[0].min(sv[1]);
    let inverse = match matrix.try_inverse() {
        Some(inv) if condition.is_finite() && condition < 1e14 => inv,
        _ => {
            return Err(LabError::ill_conditioned(
                format!("influence matrix singular at k = {k}, dt = {dt}"),
                condition,
            ))
        }
    };
    Ok((
        InfluenceMatrix {
            matrix,
            inverse,
            condition,
            omega_top,
            omega_bottom,
            psi_top,
            psi_bottom,
        },
        solver,
        poisson,
    ))
}

impl InfluenceMatrix {
    /// Given the particular solution `(ω_p, ψ_p)` computed with zero boundary
    /// vorticity, returns the corrected pair satisfying `∂_yψ(±1) = 0`.
    pub fn correct(
        &self,
        g: &ChebGrid,
        omega_p: &DVector<C64>,
        psi_p: &DVector<C64>,
    ) -> (DVector<C64>, DVector<C64>) {
        let n = g.n();
        let dpsi = g.diff(psi_p);
        let coeffs = self.inverse * Vector2::new(-dpsi[0], -dpsi[n]);
        let omega = omega_p + &self.omega_top * coeffs[0] + &self.omega_bottom * coeffs[1];
        let psi = psi_p + &self.psi_top * coeffs[0] + &self.psi_bottom * coeffs[1];
        (omega, psi)
    }
}
