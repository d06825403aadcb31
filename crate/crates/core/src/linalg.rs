//! Dense complex linear algebra: extreme singular values, least-squares line
//! fits, and matrix exponentials behind a strategy registry.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{LabError, Result};
use crate::registry::Registry;
use crate::spectral::C64;

pub fn singular_values(m: &DMatrix<C64>) -> Result<DVector<f64>> {
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LabError::numerical("non-finite matrix entry before SVD"));
    }
    let sv = m
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| LabError::numerical("SVD did not converge"))?
        .singular_values;
    if sv.iter().any(|s| !s.is_finite()) {
        return Err(LabError::numerical("non-finite singular value"));
    }
    Ok(sv)
}

pub fn sigma_min(m: &DMatrix<C64>) -> Result<f64> {
    Ok(singular_values(m)?.min())
}

pub fn sigma_max(m: &DMatrix<C64>) -> Result<f64> {
    Ok(singular_values(m)?.max())
}

/// Maximum absolute column sum.
pub fn one_norm(m: &DMatrix<C64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Least-squares line `y ≈ slope·x + intercept`; `residual` is the RMS misfit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(LabError::Dimension {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(LabError::InvalidArgument(
            "a line fit needs at least two points".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(LabError::InvalidArgument("non-finite fit data".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(LabError::InvalidArgument(
            "degenerate abscissae in line fit".into(),
        ));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        residual: (ss / n).sqrt(),
    })
}

/// Evaluates `e^{-tA}` for a fixed matrix at arbitrary times.
pub trait Propagator: Send + Sync {
    fn at(&self, t: f64) -> Result<DMatrix<C64>>;
    /// Name of the method that actually produced this propagator.
    fn method(&self) -> &'static str;
}

/// A way of computing matrix exponentials.
pub trait ExpmMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn prepare(&self, a: &DMatrix<C64>) -> Result<Box<dyn Propagator>>;
}

/// Registry with the built-in methods `pade`, `eigen` and `auto`.
pub fn expm_registry() -> Registry<dyn ExpmMethod> {
    let mut r: Registry<dyn ExpmMethod> = Registry::new("matrix exponential method");
    r.register("pade", Arc::new(PadeExpm));
    r.register("eigen", Arc::new(EigenExpm::default()));
    r.register("auto", Arc::new(AutoExpm::default()));
    r
}

/// `e^{M}` by scaling and squaring with the degree-13 Padé approximant.
pub fn expm_pade(m: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = m.nrows();
    if n != m.ncols() {
        return Err(LabError::InvalidArgument("expm of a non-square matrix".into()));
    }
    let norm = one_norm(m);
    if !norm.is_finite() {
        return Err(LabError::numerical("non-finite matrix in expm"));
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = m * C64::from(0.5f64.powi(s));
    let id = DMatrix::<C64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let c = |x: f64| C64::from(x);
    let u_inner = &a6 * (&a6 * c(B[13]) + &a4 * c(B[11]) + &a2 * c(B[9]))
        + &a6 * c(B[7])
        + &a4 * c(B[5])
        + &a2 * c(B[3])
        + &id * c(B[1]);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * c(B[12]) + &a4 * c(B[10]) + &a2 * c(B[8]))
        + &a6 * c(B[6])
        + &a4 * c(B[4])
        + &a2 * c(B[2])
        + &id * c(B[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| LabError::numerical("singular Padé denominator in expm"))?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LabError::numerical("expm overflow"));
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PadeExpm;

struct PadePropagator {
    a: DMatrix<C64>,
}

impl Propagator for PadePropagator {
    fn at(&self, t: f64) -> Result<DMatrix<C64>> {
        expm_pade(&(&self.a * C64::from(-t)))
    }
    fn method(&self) -> &'static str {
        "pade"
    }
}

impl ExpmMethod for PadeExpm {
    fn name(&self) -> &'static str {
        "pade"
    }
    fn prepare(&self, a: &DMatrix<C64>) -> Result<Box<dyn Propagator>> {
        Ok(Box::new(PadePropagator { a: a.clone() }))
    }
}

/// Diagonalization `A = V Λ V^{-1}` from a complex Schur form. Refuses
/// eigenvector bases whose condition number exceeds `max_condition`.
#[derive(Debug, Clone, Copy)]
pub struct EigenExpm {
    pub max_condition: f64,
}

impl Default for EigenExpm {
    fn default() -> Self {
        EigenExpm { max_condition: 1e8 }
    }
}

struct EigenPropagator {
    v: DMatrix<C64>,
    v_inv: DMatrix<C64>,
    eig: DVector<C64>,
}

impl Propagator for EigenPropagator {
    fn at(&self, t: f64) -> Result<DMatrix<C64>> {
        let mut scaled = self.v.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= (-self.eig[j] * t).exp();
        }
        let out = scaled * &self.v_inv;
        if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(LabError::numerical("expm overflow"));
        }
        Ok(out)
    }
    fn method(&self) -> &'static str {
        "eigen"
    }
}

/// Eigen-decomposition with the condition number of the eigenvector basis.
pub fn eigen_decompose(a: &DMatrix<C64>) -> Result<(DMatrix<C64>, DVector<C64>, f64)> {
    let n = a.nrows();
    let schur = nalgebra::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| LabError::numerical("Schur iteration did not converge"))?;
    let (q, t) = schur.unpack();
    let scale = one_norm(&t).max(f64::MIN_POSITIVE);
    let mut x = DMatrix::<C64>::zeros(n, n);
    for j in 0..n {
        let lambda = t[(j, j)];
        x[(j, j)] = C64::from(1.0);
        for i in (0..j).rev() {
            let mut s = C64::from(0.0);
            for l in i + 1..=j {
                s += t[(i, l)] * x[(l, j)];
            }
            let mut d = t[(i, i)] - lambda;
            if d.norm() < f64::EPSILON * scale {
                d = C64::from(f64::EPSILON * scale);
            }
            x[(i, j)] = -s / d;
        }
    }
    let mut v = q * x;
    for mut col in v.column_iter_mut() {
        let nrm = col.norm();
        if nrm > 0.0 {
            col /= C64::from(nrm);
        }
    }
    let sv = singular_values(&v)?;
    let cond = sv.max() / sv.min();
    let eig = DVector::from_fn(n, |j, _| t[(j, j)]);
    Ok((v, eig, if cond.is_finite() { cond } else { f64::INFINITY }))
}

impl ExpmMethod for EigenExpm {
    fn name(&self) -> &'static str {
        "eigen"
    }
    fn prepare(&self, a: &DMatrix<C64>) -> Result<Box<dyn Propagator>> {
        let (v, eig, cond) = eigen_decompose(a)?;
        if cond >= self.max_condition {
            return Err(LabError::ill_conditioned(
                "eigenvector basis too ill-conditioned for the eigen method",
                cond,
            ));
        }
        let v_inv = v
            .clone()
            .try_inverse()
            .ok_or_else(|| LabError::numerical("singular eigenvector basis"))?;
        Ok(Box::new(EigenPropagator { v, v_inv, eig }))
    }
}

/// Uses the eigen method when its basis is well conditioned, otherwise Padé.
#[derive(Debug, Clone, Copy, Default)]
pub struct AutoExpm {
    pub eigen: EigenExpm,
}

impl ExpmMethod for AutoExpm {
    fn name(&self) -> &'static str {
        "auto"
    }
    fn prepare(&self, a: &DMatrix<C64>) -> Result<Box<dyn Propagator>> {
        match self.eigen.prepare(a) {
            Ok(p) => Ok(p),
            Err(_) => PadeExpm.prepare(a),
        }
    }
}
