//! Chebyshev collocation in `y`, truncated Fourier representation in `x`,
//! and the quadrature-based norms used throughout the crate.
//!
//! Conventions fixed here and nowhere else:
//!
//! * Nodes are Chebyshev–Gauss–Lobatto points `y_j = cos(jπ/n)`, ordered
//!   from `+1` down to `-1`.
//! * The forward `x`-transform carries `1/L_x`, so a box field is
//!   `f(x, y) = Σ_j c_j(y) e^{i k_j x}` with `k_j = 2πj/L_x`.
//! * Sobolev norms are `Δk`-weighted: `‖f‖² = Δk · L_x · Σ_j (...)`, which
//!   equals `Δk ∫_box |f|²` and does not change when a periodic field is
//!   represented in a box twice as long.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{LabError, Result};

pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);

/// Chebyshev–Gauss–Lobatto grid with differentiation matrices and
/// Clenshaw–Curtis weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct ChebGrid {
    n: usize,
    nodes: DVector<f64>,
    d1: DMatrix<f64>,
    d2: DMatrix<f64>,
    weights: DVector<f64>,
}

/// Builds the degree-`n` collocation grid. `n` must be at least 4.
pub fn build_cheb_grid(n: usize) -> Result<ChebGrid> {
    ChebGrid::new(n)
}

impl ChebGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 4 {
            return Err(LabError::InvalidResolution(format!(
                "Chebyshev degree must be at least 4, got {n}"
            )));
        }
        let nodes = DVector::from_fn(n + 1, |j, _| (j as f64 * PI / n as f64).cos());
        let d1 = diff_matrix(n);
        let d2 = &d1 * &d1;
        let weights = clenshaw_curtis_weights(n);
        Ok(ChebGrid {
            n,
            nodes,
            d1,
            d2,
            weights,
        })
    }

    /// Polynomial degree; the grid has `n + 1` nodes.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn nodes(&self) -> &DVector<f64> {
        &self.nodes
    }

    pub fn d1(&self) -> &DMatrix<f64> {
        &self.d1
    }

    pub fn d2(&self) -> &DMatrix<f64> {
        &self.d2
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Quadrature weights of the `n - 1` interior nodes.
    pub fn interior_weights(&self) -> DVector<f64> {
        self.weights.rows(1, self.n - 1).into_owned()
    }

    pub fn interior_nodes(&self) -> DVector<f64> {
        self.nodes.rows(1, self.n - 1).into_owned()
    }

    /// `d1 · v` for complex samples.
    pub fn diff(&self, v: &DVector<C64>) -> DVector<C64> {
        real_matvec(&self.d1, v)
    }

    /// `d2 · v` for complex samples.
    pub fn diff2(&self, v: &DVector<C64>) -> DVector<C64> {
        real_matvec(&self.d2, v)
    }

    /// Weighted inner product `Σ w_j a_j conj(b_j)`.
    pub fn inner(&self, a: &DVector<C64>, b: &DVector<C64>) -> C64 {
        a.iter()
            .zip(b.iter())
            .zip(self.weights.iter())
            .map(|((x, y), w)| x * y.conj() * *w)
            .sum()
    }

    /// `sqrt(Σ w_j |v_j|²)` without a length check.
    pub fn norm(&self, v: &DVector<C64>) -> f64 {
        v.iter()
            .zip(self.weights.iter())
            .map(|(x, w)| w * x.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Integral of real samples by the Clenshaw–Curtis rule.
    pub fn integrate(&self, v: &DVector<f64>) -> f64 {
        v.dot(&self.weights)
    }

    /// Samples a complex function at the nodes.
    pub fn sample(&self, f: impl Fn(f64) -> C64) -> DVector<C64> {
        DVector::from_iterator(self.len(), self.nodes.iter().map(|&y| f(y)))
    }

    /// Samples a real function at the nodes as complex values.
    pub fn sample_real(&self, f: impl Fn(f64) -> f64) -> DVector<C64> {
        DVector::from_iterator(self.len(), self.nodes.iter().map(|&y| C64::new(f(y), 0.0)))
    }
}

/// First-derivative collocation matrix on Chebyshev–Gauss–Lobatto nodes.
///
/// Off-diagonal node differences use the product-of-sines form and the
/// diagonal uses the negative-sum trick, which keeps `D·1 = 0` exact.
fn diff_matrix(n: usize) -> DMatrix<f64> {
    let h = PI / (2.0 * n as f64);
    let c = |j: usize| if j == 0 || j == n { 2.0 } else { 1.0 };
    let mut d = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..=n {
        for j in 0..=n {
            if i == j {
                continue;
            }
            // x_i - x_j = 2 sin((i+j)h) sin((j-i)h)
            let diff = 2.0 * ((i + j) as f64 * h).sin() * ((j as f64 - i as f64) * h).sin();
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            d[(i, j)] = c(i) / c(j) * sign / diff;
        }
    }
    for i in 0..=n {
        let row_sum: f64 = (0..=n).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -row_sum;
    }
    d
}

/// Clenshaw–Curtis weights on the Chebyshev–Gauss–Lobatto nodes.
fn clenshaw_curtis_weights(n: usize) -> DVector<f64> {
    let nf = n as f64;
    let mut w = DVector::<f64>::zeros(n + 1);
    let mut v = vec![1.0; n - 1];
    if n % 2 == 0 {
        w[0] = 1.0 / (nf * nf - 1.0);
        w[n] = w[0];
        for k in 1..n / 2 {
            let kf = k as f64;
            for (idx, vi) in v.iter_mut().enumerate() {
                let theta = (idx + 1) as f64 * PI / nf;
                *vi -= 2.0 * (2.0 * kf * theta).cos() / (4.0 * kf * kf - 1.0);
            }
        }
        for (idx, vi) in v.iter_mut().enumerate() {
            let theta = (idx + 1) as f64 * PI / nf;
            *vi -= (nf * theta).cos() / (nf * nf - 1.0);
        }
    } else {
        w[0] = 1.0 / (nf * nf);
        w[n] = w[0];
        for k in 1..=(n - 1) / 2 {
            let kf = k as f64;
            for (idx, vi) in v.iter_mut().enumerate() {
                let theta = (idx + 1) as f64 * PI / nf;
                *vi -= 2.0 * (2.0 * kf * theta).cos() / (4.0 * kf * kf - 1.0);
            }
        }
    }
    for (idx, vi) in v.iter().enumerate() {
        w[idx + 1] = 2.0 * vi / nf;
    }
    w
}

pub(crate) fn real_matvec(m: &DMatrix<f64>, v: &DVector<C64>) -> DVector<C64> {
    let (rows, cols) = m.shape();
    debug_assert_eq!(cols, v.len());
    let mut out = DVector::<C64>::zeros(rows);
    // column-major traversal
    for j in 0..cols {
        let vj = v[j];
        if vj == C64::new(0.0, 0.0) {
            continue;
        }
        let col = m.column(j);
        for i in 0..rows {
            out[i] += vj * col[i];
        }
    }
    out
}

/// Complex samples of one horizontal Fourier mode at the grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeField {
    pub k: f64,
    pub values: DVector<C64>,
}

impl ModeField {
    pub fn new(k: f64, values: DVector<C64>) -> Self {
        ModeField { k, values }
    }

    pub fn zeros(k: f64, len: usize) -> Self {
        ModeField {
            k,
            values: DVector::zeros(len),
        }
    }

    pub fn from_fn(grid: &ChebGrid, k: f64, f: impl Fn(f64) -> C64) -> Self {
        ModeField {
            k,
            values: grid.sample(f),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scaled(&self, c: C64) -> Self {
        ModeField {
            k: self.k,
            values: &self.values * c,
        }
    }

    pub(crate) fn check_len(&self, grid: &ChebGrid) -> Result<()> {
        if self.len() != grid.len() {
            return Err(LabError::Dimension {
                expected: grid.len(),
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// Clenshaw–Curtis `L²_y` norm of a mode.
pub fn l2_norm(f: &ModeField, g: &ChebGrid) -> Result<f64> {
    f.check_len(g)?;
    Ok(g.norm(&f.values))
}

/// Discrete `H^{-1}_y` norm: solve `(1 - ∂_y²) w = f` with `w(±1) = 0` and
/// return `sqrt(Re⟨f, w⟩)`.
pub fn h_minus1_norm(f: &ModeField, g: &ChebGrid) -> Result<f64> {
    f.check_len(g)?;
    let w = DirichletHelmholtz::new(g, 1.0)?.solve(&f.values)?;
    let pairing = g.inner(&f.values, &w).re;
    if pairing < -1e-12 * g.norm(&f.values).powi(2) {
        return Err(LabError::numerical(format!(
            "negative H^-1 pairing {pairing:e}"
        )));
    }
    Ok(pairing.max(0.0).sqrt())
}

/// LU-factored `(shift - ∂_y²)` on the interior nodes with homogeneous
/// Dirichlet data. Used for the dual norm.
#[derive(Debug, Clone)]
pub struct DirichletHelmholtz {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
}

impl DirichletHelmholtz {
    pub fn new(g: &ChebGrid, shift: f64) -> Result<Self> {
        let n = g.n();
        let m = DMatrix::from_fn(n - 1, n - 1, |i, j| {
            let delta = if i == j { shift } else { 0.0 };
            delta - g.d2()[(i + 1, j + 1)]
        });
        let lu = m.lu();
        if !lu.is_invertible() {
            return Err(LabError::numerical("singular Dirichlet Helmholtz operator"));
        }
        Ok(DirichletHelmholtz { lu, n })
    }

    /// Solves with the right-hand side taken at interior nodes; returns the
    /// full-length solution with zero boundary values.
    pub fn solve(&self, rhs: &DVector<C64>) -> Result<DVector<C64>> {
        let n = self.n;
        let re = DVector::from_fn(n - 1, |i, _| rhs[i + 1].re);
        let im = DVector::from_fn(n - 1, |i, _| rhs[i + 1].im);
        let (Some(xr), Some(xi)) = (self.lu.solve(&re), self.lu.solve(&im)) else {
            return Err(LabError::numerical("Helmholtz solve failed"));
        };
        let mut out = DVector::<C64>::zeros(n + 1);
        for i in 0..n - 1 {
            out[i + 1] = C64::new(xr[i], xi[i]);
        }
        Ok(out)
    }
}

/// Horizontal multiplier `|k|^s` realizing `|∂_x|^s`.
pub fn frac_x_weight(k: f64, s: f64) -> f64 {
    debug_assert!(s >= 0.0, "fractional order must be nonnegative");
    if s == 0.0 {
        1.0
    } else {
        k.abs().powf(s)
    }
}

/// Periodic box in `x` truncating the real line.
#[derive(Debug, Clone, PartialEq)]
pub struct XGrid {
    box_length: f64,
    m: usize,
}

impl XGrid {
    pub fn new(box_length: f64, m: usize) -> Result<Self> {
        if !(box_length > 0.0 && box_length.is_finite()) {
            return Err(LabError::InvalidParameter(format!(
                "box length must be positive, got {box_length}"
            )));
        }
        if m < 2 || m % 2 != 0 {
            return Err(LabError::InvalidResolution(format!(
                "mode count must be even and at least 2, got {m}"
            )));
        }
        Ok(XGrid { box_length, m })
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Wavenumber spacing `2π/L_x`.
    pub fn dk(&self) -> f64 {
        2.0 * PI / self.box_length
    }

    pub fn k_of(&self, j: i64) -> f64 {
        j as f64 * self.dk()
    }

    /// All wavenumbers `k_j`, `j ∈ [-m/2, m/2)`, in ascending order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let half = (self.m / 2) as i64;
        (-half..half).map(|j| self.k_of(j)).collect()
    }

    /// Stored (nonnegative) mode count; negative modes are conjugates and the
    /// Nyquist mode is kept at zero.
    pub fn stored_modes(&self) -> usize {
        self.m / 2
    }

    /// Multiplicity of stored mode `j` in full-spectrum sums.
    pub fn multiplicity(j: usize) -> f64 {
        if j == 0 {
            1.0
        } else {
            2.0
        }
    }

    pub fn physical_points(&self) -> Vec<f64> {
        (0..self.m)
            .map(|i| i as f64 * self.box_length / self.m as f64)
            .collect()
    }
}

/// A real physical field stored by its nonnegative `x`-modes `j = 0..m/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub modes: Vec<DVector<C64>>,
}

impl SpectralField {
    pub fn zeros(x: &XGrid, g: &ChebGrid) -> Self {
        SpectralField {
            modes: vec![DVector::zeros(g.len()); x.stored_modes()],
        }
    }

    pub fn scale(&mut self, c: f64) {
        for m in &mut self.modes {
            *m *= C64::new(c, 0.0);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.iter().all(|z| z.norm_sqr() == 0.0))
    }
}

/// Discrete `H^{y_order}` norm with extra horizontal multiplier `|k|^{x_frac}`.
///
/// Each `x`-derivative contributes `|k|`, each `y`-derivative applies `d1`.
pub fn sobolev_norm(
    field: &SpectralField,
    x: &XGrid,
    g: &ChebGrid,
    y_order: u32,
    x_frac: f64,
) -> Result<f64> {
    sobolev_norm_components(&[field], x, g, y_order, x_frac)
}

/// Same as [`sobolev_norm`] for a vector field (components summed in square).
pub fn sobolev_norm_components(
    fields: &[&SpectralField],
    x: &XGrid,
    g: &ChebGrid,
    y_order: u32,
    x_frac: f64,
) -> Result<f64> {
    if y_order > 2 {
        return Err(LabError::InvalidArgument(format!(
            "unsupported Sobolev order {y_order}"
        )));
    }
    if !(x_frac >= 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "fractional x order must be nonnegative, got {x_frac}"
        )));
    }
    let mut total = 0.0;
    for field in fields {
        if field.modes.len() != x.stored_modes() {
            return Err(LabError::Dimension {
                expected: x.stored_modes(),
                got: field.modes.len(),
            });
        }
        for (j, c) in field.modes.iter().enumerate() {
            if c.len() != g.len() {
                return Err(LabError::Dimension {
                    expected: g.len(),
                    got: c.len(),
                });
            }
            let k = x.k_of(j as i64);
            let mult = frac_x_weight(k, x_frac).powi(2);
            if mult == 0.0 {
                continue;
            }
            // ‖d1^b c‖² for b = 0..=y_order
            let mut deriv = c.clone();
            let mut y_norms = Vec::with_capacity(y_order as usize + 1);
            y_norms.push(g.norm(&deriv).powi(2));
            for _ in 0..y_order {
                deriv = g.diff(&deriv);
                y_norms.push(g.norm(&deriv).powi(2));
            }
            let mut mode_sum = 0.0;
            for b in 0..=y_order {
                for a in 0..=(y_order - b) {
                    mode_sum += k.abs().powi(2 * a as i32) * y_norms[b as usize];
                }
            }
            total += XGrid::multiplicity(j) * mult * mode_sum;
        }
    }
    Ok((x.dk() * x.box_length() * total).sqrt())
}

/// FFT plans for moving between stored modes and physical `x` samples.
pub struct XTransform {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for XTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("XTransform").field("m", &self.m).finish()
    }
}

impl XTransform {
    pub fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        XTransform {
            m,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Physical samples `f(x_i, y_r)` as `[r][i]` from stored modes
    /// `modes[j][r]`, treating modes with `j ≥ keep` as zero.
    pub fn to_physical(&self, modes: &[DVector<C64>], keep: usize) -> Vec<Vec<f64>> {
        let ny = modes.first().map_or(0, |v| v.len());
        let mut out = Vec::with_capacity(ny);
        let mut buf = vec![C64::new(0.0, 0.0); self.m];
        let keep = keep.min(modes.len());
        for r in 0..ny {
            buf.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            buf[0] = C64::new(modes[0][r].re, 0.0);
            for (j, mode) in modes.iter().enumerate().take(keep).skip(1) {
                buf[j] = mode[r];
                buf[self.m - j] = mode[r].conj();
            }
            self.inverse.process(&mut buf);
            out.push(buf.iter().map(|z| z.re).collect());
        }
        out
    }

    /// Stored modes `j = 0..stored` of physical samples `[r][i]`.
    pub fn to_modes(&self, phys: &[Vec<f64>], stored: usize) -> Vec<DVector<C64>> {
        let ny = phys.len();
        let scale = 1.0 / self.m as f64;
        let mut modes = vec![DVector::<C64>::zeros(ny); stored];
        let mut buf = vec![C64::new(0.0, 0.0); self.m];
        for (r, row) in phys.iter().enumerate() {
            for (b, v) in buf.iter_mut().zip(row.iter()) {
                *b = C64::new(*v, 0.0);
            }
            self.forward.process(&mut buf);
            for (j, mode) in modes.iter_mut().enumerate() {
                mode[r] = buf[j] * scale;
            }
            modes[0][r].im = 0.0;
        }
        modes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_low_resolution() {
        assert!(matches!(
            build_cheb_grid(3),
            Err(LabError::InvalidResolution(_))
        ));
    }

    #[test]
    fn degree_four_nodes() {
        let g = build_cheb_grid(4).unwrap();
        let s = 2f64.sqrt() / 2.0;
        let expected = [1.0, s, 0.0, -s, -1.0];
        for (a, b) in g.nodes().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn nodes_strictly_decreasing() {
        let g = build_cheb_grid(33).unwrap();
        assert_eq!(g.nodes()[0], 1.0);
        assert_eq!(g.nodes()[33], -1.0);
        assert!(g.nodes().as_slice().windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn cubic_derivative_exact() {
        let g = build_cheb_grid(8).unwrap();
        let f = g.sample_real(|y| y.powi(3));
        let df = g.diff(&f);
        for (d, y) in df.iter().zip(g.nodes().iter()) {
            assert!((d.re - 3.0 * y * y).abs() < 1e-12);
        }
    }

    #[test]
    fn second_matrix_is_square_of_first() {
        let g = build_cheb_grid(12).unwrap();
        let diff = g.d2() - g.d1() * g.d1();
        assert_eq!(diff.camax(), 0.0);
    }

    #[test]
    fn weights_sum_to_two() {
        for n in [4, 5, 8, 17, 64] {
            let g = build_cheb_grid(n).unwrap();
            assert_relative_eq!(g.weights().sum(), 2.0, max_relative = 1e-12);
            assert!(g.weights().iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn l2_norm_values() {
        let g = build_cheb_grid(32).unwrap();
        assert_eq!(l2_norm(&ModeField::zeros(1.0, 33), &g).unwrap(), 0.0);
        let one = ModeField::from_fn(&g, 0.0, |_| C64::new(1.0, 0.0));
        assert_relative_eq!(l2_norm(&one, &g).unwrap(), 2f64.sqrt(), max_relative = 1e-14);
        let s = ModeField::from_fn(&g, 0.0, |y| C64::new((PI * y).sin(), 0.0));
        assert!((l2_norm(&s, &g).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn l2_norm_length_mismatch() {
        let g = build_cheb_grid(8).unwrap();
        assert!(matches!(
            l2_norm(&ModeField::zeros(0.0, 5), &g),
            Err(LabError::Dimension { .. })
        ));
    }

    #[test]
    fn h_minus1_of_sine_mode() {
        let g = build_cheb_grid(32).unwrap();
        let f = ModeField::from_fn(&g, 0.0, |y| C64::new((PI * y).sin(), 0.0));
        let expected = l2_norm(&f, &g).unwrap() / (1.0 + PI * PI).sqrt();
        assert!((h_minus1_norm(&f, &g).unwrap() - expected).abs() < 1e-8);
        assert_eq!(h_minus1_norm(&ModeField::zeros(0.0, 33), &g).unwrap(), 0.0);
    }

    #[test]
    fn frac_weight_values() {
        assert_eq!(frac_x_weight(0.0, 1.0 / 3.0), 0.0);
        assert_eq!(frac_x_weight(1.0, 1.0 / 3.0), 1.0);
        assert!((frac_x_weight(8.0, 1.0 / 3.0) - 2.0).abs() < 1e-15);
        assert_eq!(frac_x_weight(0.0, 0.0), 1.0);
    }

    #[test]
    fn xgrid_wavenumbers_symmetric() {
        let x = XGrid::new(4.0 * PI, 8).unwrap();
        let ks = x.wavenumbers();
        assert_eq!(ks.len(), 8);
        assert!((ks[0] + 2.0).abs() < 1e-15);
        for w in ks.windows(2) {
            assert!((w[1] - w[0] - 0.5).abs() < 1e-14);
        }
        assert!(XGrid::new(1.0, 7).is_err());
        assert!(XGrid::new(-1.0, 8).is_err());
    }

    #[test]
    fn sobolev_rejects_order_three() {
        let g = build_cheb_grid(8).unwrap();
        let x = XGrid::new(4.0 * PI, 8).unwrap();
        let f = SpectralField::zeros(&x, &g);
        assert_eq!(sobolev_norm(&f, &x, &g, 0, 0.0).unwrap(), 0.0);
        assert!(matches!(
            sobolev_norm(&f, &x, &g, 3, 0.0),
            Err(LabError::InvalidArgument(_))
        ));
    }

    #[test]
    fn sobolev_constant_mean_mode() {
        let g = build_cheb_grid(8).unwrap();
        let x = XGrid::new(4.0 * PI, 8).unwrap();
        let mut f = SpectralField::zeros(&x, &g);
        let c = 1.7;
        f.modes[0] = g.sample_real(|_| c);
        let expected = c * (2.0 * x.dk() * x.box_length()).sqrt();
        assert_relative_eq!(
            sobolev_norm(&f, &x, &g, 0, 0.0).unwrap(),
            expected,
            max_relative = 1e-13
        );
    }

    #[test]
    fn sobolev_h1_dominates_x_derivative() {
        let g = build_cheb_grid(16).unwrap();
        let x = XGrid::new(PI, 8).unwrap(); // dk = 2, mode j=1 has k=2
        let mut f = SpectralField::zeros(&x, &g);
        f.modes[1] = g.sample_real(|y| 1.0 - y * y);
        let h0 = sobolev_norm(&f, &x, &g, 0, 0.0).unwrap();
        let h1 = sobolev_norm(&f, &x, &g, 1, 0.0).unwrap();
        assert!(h1 / h0 >= 2.0);
    }

    #[test]
    fn fft_roundtrip() {
        let g = build_cheb_grid(6).unwrap();
        let x = XGrid::new(2.0 * PI, 8).unwrap();
        let t = XTransform::new(8);
        let mut modes = vec![DVector::<C64>::zeros(g.len()); x.stored_modes()];
        modes[0] = g.sample_real(|y| y);
        modes[2] = g.sample(|y| C64::new(y * y, 0.5 - y));
        let phys = t.to_physical(&modes, x.stored_modes());
        let back = t.to_modes(&phys, x.stored_modes());
        for (a, b) in modes.iter().zip(back.iter()) {
            assert!((a - b).camax() < 1e-14);
        }
    }
}
