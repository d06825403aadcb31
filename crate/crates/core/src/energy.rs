//! Frequency regimes, time-accumulated mode norms, the piecewise mode energies
//! `E_k[ω_k]`, `E_k[θ_k]`, their `L¹_k` aggregates, ladder diagnostics, and
//! randomized checks of the two frequency-comparison inequalities used in the
//! nonlinear estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::spectral::{ChebGrid, C64};
use nalgebra::DVector;

/// `I3` is split at `|k| = ν^{-1/2}` into `I4` (below) and `I5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    I1,
    I2,
    I4,
    I5,
}

impl Regime {
    pub fn is_i3(self) -> bool {
        matches!(self, Regime::I4 | Regime::I5)
    }

    /// Label of the three-way partition.
    pub fn coarse_label(self) -> &'static str {
        match self {
            Regime::I1 => "I1",
            Regime::I2 => "I2",
            Regime::I4 | Regime::I5 => "I3",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Regime::I1 => "I1",
            Regime::I2 => "I2",
            Regime::I4 => "I4",
            Regime::I5 => "I5",
        }
    }
}

/// Boundaries `|k| = 10ν`, `1`, `ν^{-1/2}`; a boundary point belongs to the
/// lower-index regime.
pub fn regime_of(k: f64, nu: f64) -> Regime {
    let a = k.abs();
    if a <= 10.0 * nu {
        Regime::I1
    } else if a <= 1.0 {
        Regime::I2
    } else if a <= nu.powf(-0.5) {
        Regime::I4
    } else {
        Regime::I5
    }
}

/// Norms of one mode at one instant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ModeSample {
    pub omega_l2: f64,
    /// `‖(1 - |y|)^{1/2} ω‖_{L²}`.
    pub omega_wall_l2: f64,
    /// `‖u‖_{L²}` of the full velocity vector.
    pub u_l2: f64,
    /// `max_y |u(y)|` of the full velocity vector.
    pub u_inf: f64,
    pub u1_inf: f64,
    pub theta_l2: f64,
}

impl ModeSample {
    /// Evaluates the norms from nodal values, multiplying each by `scale`.
    pub fn from_fields(
        g: &ChebGrid,
        omega: &DVector<C64>,
        u1: &DVector<C64>,
        u2: &DVector<C64>,
        theta: &DVector<C64>,
        scale: f64,
    ) -> Self {
        let y = g.nodes();
        let w = g.weights();
        let wall: f64 = omega
            .iter()
            .enumerate()
            .map(|(i, z)| w[i] * (1.0 - y[i].abs()) * z.norm_sqr())
            .sum();
        let u_inf = u1
            .iter()
            .zip(u2.iter())
            .map(|(a, b)| (a.norm_sqr() + b.norm_sqr()).sqrt())
            .fold(0.0, f64::max);
        ModeSample {
            omega_l2: scale * g.norm(omega),
            omega_wall_l2: scale * wall.max(0.0).sqrt(),
            u_l2: scale * (g.norm(u1).powi(2) + g.norm(u2).powi(2)).sqrt(),
            u_inf: scale * u_inf,
            u1_inf: scale * u1.iter().map(|z| z.norm()).fold(0.0, f64::max),
            theta_l2: scale * g.norm(theta),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        ModeSample {
            omega_l2: c * self.omega_l2,
            omega_wall_l2: c * self.omega_wall_l2,
            u_l2: c * self.u_l2,
            u_inf: c * self.u_inf,
            u1_inf: c * self.u1_inf,
            theta_l2: c * self.theta_l2,
        }
    }
}

/// Running `L^∞_t` maxima and `L²_t` integrals (of squares) for one mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRecord {
    pub k: f64,
    /// Multiplicity in `L¹_k` sums (2 for a stored mode standing for `±k`).
    pub weight: f64,
    pub samples: usize,
    pub sup_omega: f64,
    pub sup_omega_wall: f64,
    pub sup_u_inf: f64,
    pub sup_u1_inf: f64,
    pub sup_theta: f64,
    pub int_omega_sq: f64,
    pub int_u_sq: f64,
    pub int_theta_sq: f64,
    pub int_u1_inf_sq: f64,
    last: Option<ModeSample>,
}

impl ModeRecord {
    fn new(k: f64, weight: f64) -> Self {
        ModeRecord {
            k,
            weight,
            samples: 0,
            sup_omega: 0.0,
            sup_omega_wall: 0.0,
            sup_u_inf: 0.0,
            sup_u1_inf: 0.0,
            sup_theta: 0.0,
            int_omega_sq: 0.0,
            int_u_sq: 0.0,
            int_theta_sq: 0.0,
            int_u1_inf_sq: 0.0,
            last: None,
        }
    }

    fn push(&mut self, dt: f64, s: &ModeSample) {
        self.sup_omega = self.sup_omega.max(s.omega_l2);
        self.sup_omega_wall = self.sup_omega_wall.max(s.omega_wall_l2);
        self.sup_u_inf = self.sup_u_inf.max(s.u_inf);
        self.sup_u1_inf = self.sup_u1_inf.max(s.u1_inf);
        self.sup_theta = self.sup_theta.max(s.theta_l2);
        if let Some(p) = &self.last {
            let trap = |a: f64, b: f64| 0.5 * dt * (a * a + b * b);
            self.int_omega_sq += trap(p.omega_l2, s.omega_l2);
            self.int_u_sq += trap(p.u_l2, s.u_l2);
            self.int_theta_sq += trap(p.theta_l2, s.theta_l2);
            self.int_u1_inf_sq += trap(p.u1_inf, s.u1_inf);
        }
        self.last = Some(*s);
        self.samples += 1;
    }

    fn scaled(&self, c: f64) -> Self {
        ModeRecord {
            k: self.k,
            weight: self.weight,
            samples: self.samples,
            sup_omega: c * self.sup_omega,
            sup_omega_wall: c * self.sup_omega_wall,
            sup_u_inf: c * self.sup_u_inf,
            sup_u1_inf: c * self.sup_u1_inf,
            sup_theta: c * self.sup_theta,
            int_omega_sq: c * c * self.int_omega_sq,
            int_u_sq: c * c * self.int_u_sq,
            int_theta_sq: c * c * self.int_theta_sq,
            int_u1_inf_sq: c * c * self.int_u1_inf_sq,
            last: self.last.map(|s| s.scaled(c)),
        }
    }

    fn check(&self) -> Result<()> {
        if self.samples == 0 {
            Err(LabError::State(format!("no samples recorded for k = {}", self.k)))
        } else {
            Ok(())
        }
    }
}

/// Per-mode accumulators on `[0, t_current]` plus the `L¹_k` weighting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub nu: f64,
    pub dk: f64,
    /// Constant `C` in `𝓔_total = 𝓔_ω + 2Cν^{-1/3}𝓔_θ`.
    pub c_norm: f64,
    pub modes: Vec<ModeRecord>,
    pub time: Option<f64>,
}

impl EnergyLedger {
    /// `modes` lists `(k, multiplicity)` pairs.
    pub fn new(nu: f64, dk: f64, modes: &[(f64, f64)], c_norm: f64) -> Result<Self> {
        if !(nu > 0.0) {
            return Err(LabError::InvalidParameter(format!("ν must be positive, got {nu}")));
        }
        if !(c_norm > 0.0) {
            return Err(LabError::InvalidParameter(format!(
                "normalization constant must be positive, got {c_norm}"
            )));
        }
        if !(dk > 0.0) {
            return Err(LabError::InvalidParameter(format!("Δk must be positive, got {dk}")));
        }
        Ok(EnergyLedger {
            nu,
            dk,
            c_norm,
            modes: modes.iter().map(|&(k, w)| ModeRecord::new(k, w)).collect(),
            time: None,
        })
    }

    /// Adds the instant `t` (non-decreasing) with one sample per mode.
    pub fn record(&mut self, t: f64, samples: &[ModeSample]) -> Result<()> {
        if samples.len() != self.modes.len() {
            return Err(LabError::Dimension {
                expected: self.modes.len(),
                got: samples.len(),
            });
        }
        let dt = match self.time {
            Some(prev) if t < prev => {
                return Err(LabError::State(format!(
                    "ledger time went backwards: {t} < {prev}"
                )))
            }
            Some(prev) => t - prev,
            None => 0.0,
        };
        for (m, s) in self.modes.iter_mut().zip(samples) {
            m.push(dt, s);
        }
        self.time = Some(t);
        Ok(())
    }

    /// All norms multiplied by `c ≥ 0`.
    pub fn scaled(&self, c: f64) -> Self {
        EnergyLedger {
            nu: self.nu,
            dk: self.dk,
            c_norm: self.c_norm,
            modes: self.modes.iter().map(|m| m.scaled(c)).collect(),
            time: self.time,
        }
    }
}

/// `E_k[ω_k]` from the mode's accumulators, using the regime of `k`.
pub fn mode_energy_omega(rec: &ModeRecord, nu: f64, k: f64) -> Result<f64> {
    rec.check()?;
    let a = k.abs();
    let w_l2 = rec.int_omega_sq.sqrt();
    let u_l2 = rec.int_u_sq.sqrt();
    Ok(match regime_of(k, nu) {
        Regime::I1 => rec.sup_omega + nu.sqrt() * w_l2 + rec.sup_u_inf + nu.sqrt() * u_l2,
        Regime::I2 => {
            rec.sup_omega_wall
                + nu.powf(0.25) * a.powf(-0.25) * rec.sup_omega
                + nu.powf(0.25) * a.powf(0.25) * w_l2
                + rec.sup_u_inf
                + a.sqrt() * u_l2
        }
        Regime::I4 | Regime::I5 => {
            rec.sup_omega_wall
                + nu.powf(0.25) * a.sqrt() * w_l2
                + a.sqrt() * rec.sup_u_inf
                + a * u_l2
        }
    })
}

/// `E_k[θ_k]` from the mode's accumulators.
pub fn mode_energy_theta(rec: &ModeRecord, nu: f64, k: f64) -> Result<f64> {
    rec.check()?;
    let a = k.abs();
    let l2 = rec.int_theta_sq.sqrt();
    Ok(match regime_of(k, nu) {
        Regime::I1 => rec.sup_theta + nu.sqrt() * l2,
        Regime::I2 => rec.sup_theta + nu.powf(1.0 / 6.0) * a.cbrt() * l2,
        Regime::I4 | Regime::I5 => {
            a.cbrt() * rec.sup_theta + nu.powf(1.0 / 6.0) * a.powf(2.0 / 3.0) * l2
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub e_omega: f64,
    pub e_theta: f64,
    pub e_total: f64,
    pub c_norm: f64,
}

/// `Δk`-weighted `L¹_k` sums and `𝓔_total = 𝓔_ω + 2Cν^{-1/3}𝓔_θ`.
pub fn aggregate(ledger: &EnergyLedger) -> Result<Aggregates> {
    let mut e_omega = 0.0;
    let mut e_theta = 0.0;
    for m in &ledger.modes {
        e_omega += ledger.dk * m.weight * mode_energy_omega(m, ledger.nu, m.k)?;
        e_theta += ledger.dk * m.weight * mode_energy_theta(m, ledger.nu, m.k)?;
    }
    Ok(Aggregates {
        e_omega,
        e_theta,
        e_total: e_omega + 2.0 * ledger.c_norm * ledger.nu.powf(-1.0 / 3.0) * e_theta,
        c_norm: ledger.c_norm,
    })
}

/// Left sides of the ladder bounds divided by their right sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LadderRatios {
    pub k: f64,
    pub regime: Regime,
    /// `‖u¹‖_{L^∞_t L^∞_y} / (min{1, |k|^{-1/2}} E_k[ω_k])`.
    pub u1_sup: f64,
    /// `‖u¹‖_{L²_t L^∞_y}` over its regime-dependent bound.
    pub u1_l2_inf: f64,
    /// `‖θ‖_{L^∞_t L²_y}` over its bound.
    pub theta_sup: f64,
    /// `‖θ‖_{L²_t L²_y}` over its bound.
    pub theta_l2: f64,
    /// Set when an `E_k` vanished and the matching ratios were reported as 0.
    pub zero_energy: bool,
}

pub fn ladder_ratios(rec: &ModeRecord, nu: f64) -> Result<LadderRatios> {
    let k = rec.k;
    let a = k.abs();
    let regime = regime_of(k, nu);
    let e_w = mode_energy_omega(rec, nu, k)?;
    let e_t = mode_energy_theta(rec, nu, k)?;
    let div = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    let u1_l2_factor = match regime {
        Regime::I1 => nu.powf(-0.5),
        Regime::I2 => nu.powf(-0.125) * a.powf(-0.375),
        Regime::I4 | Regime::I5 => nu.powf(-0.125) * a.powf(-0.75),
    };
    let theta_sup_factor = if regime.is_i3() { a.powf(-1.0 / 3.0) } else { 1.0 };
    let theta_l2_factor = match regime {
        Regime::I1 => nu.powf(-0.5),
        Regime::I2 => nu.powf(-1.0 / 6.0) * a.powf(-1.0 / 3.0),
        Regime::I4 | Regime::I5 => nu.powf(-1.0 / 6.0) * a.powf(-2.0 / 3.0),
    };
    let min_factor = if a > 1.0 { a.powf(-0.5) } else { 1.0 };
    Ok(LadderRatios {
        k,
        regime,
        u1_sup: div(rec.sup_u1_inf, min_factor * e_w),
        u1_l2_inf: div(rec.int_u1_inf_sq.sqrt(), u1_l2_factor * e_w),
        theta_sup: div(rec.sup_theta, theta_sup_factor * e_t),
        theta_l2: div(rec.int_theta_sq.sqrt(), theta_l2_factor * e_t),
        zero_energy: e_w == 0.0 || e_t == 0.0,
    })
}

/// Relative roundoff allowance in the frequency comparisons.
const ROUNDOFF: f64 = 1e-12;

/// For `|k| ≤ 10ν`, `10ν ≤ |ℓ| ≤ 1` and `10ν ≤ |k - ℓ| ≤ 2`, checks
/// `½|ℓ| ≤ |k - ℓ| ≤ 2|ℓ|`. `None` when the sample is outside the hypotheses.
pub fn low_mid_comparable(k: f64, l: f64, nu: f64) -> Option<bool> {
    let d = (k - l).abs();
    let b = 10.0 * nu;
    if !(k.abs() <= b && b <= l.abs() && l.abs() <= 1.0 && b <= d && d <= 2.0) {
        return None;
    }
    let al = l.abs();
    Some(d >= 0.5 * al * (1.0 - ROUNDOFF) && d <= 2.0 * al * (1.0 + ROUNDOFF))
}

/// For `|k|, |ℓ|, |k - ℓ| ≥ 1` and `0 ≤ m, n ≤ α`, checks
/// `|k|^α ≤ 2^{max(α-m, α-n)} (|k|^m |k-ℓ|^{α-m} + |k|^n |ℓ|^{α-n})`.
pub fn high_split_holds(k: f64, l: f64, alpha: f64, m: f64, n: f64) -> Option<bool> {
    let (ak, al, d) = (k.abs(), l.abs(), (k - l).abs());
    if !(ak >= 1.0 && al >= 1.0 && d >= 1.0 && alpha >= 0.0)
        || !(0.0..=alpha).contains(&m)
        || !(0.0..=alpha).contains(&n)
    {
        return None;
    }
    let c = 2f64.powf((alpha - m).max(alpha - n));
    let rhs = c * (ak.powf(m) * d.powf(alpha - m) + ak.powf(n) * al.powf(alpha - n));
    Some(ak.powf(alpha) <= rhs * (1.0 + ROUNDOFF))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreqLemmaReport {
    pub requested: usize,
    pub low_mid_accepted: usize,
    pub low_mid_rejected: usize,
    pub low_mid_violations: usize,
    pub high_accepted: usize,
    pub high_rejected: usize,
    pub high_violations: usize,
}

impl FreqLemmaReport {
    pub fn passed(&self) -> bool {
        self.low_mid_violations == 0 && self.high_violations == 0
    }
}

/// Draws `sample_count` accepted samples for each inequality (candidates
/// outside the hypotheses are rejected and counted).
pub fn check_freq_lemmas(sample_count: usize, seed: u64) -> Result<FreqLemmaReport> {
    if sample_count < 1000 {
        return Err(LabError::InvalidArgument(format!(
            "at least 1000 samples required, got {sample_count}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FreqLemmaReport {
        requested: sample_count,
        low_mid_accepted: 0,
        low_mid_rejected: 0,
        low_mid_violations: 0,
        high_accepted: 0,
        high_rejected: 0,
        high_violations: 0,
    };
    let sign = |rng: &mut ChaCha8Rng| if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    while report.low_mid_accepted < sample_count {
        let nu = 10f64.powf(rng.random_range(-6.0..-1.0));
        let b = 10.0 * nu;
        let k = rng.random_range(-b..=b);
        let l = sign(&mut rng) * rng.random_range(b..=1.0);
        match low_mid_comparable(k, l, nu) {
            None => report.low_mid_rejected += 1,
            Some(ok) => {
                report.low_mid_accepted += 1;
                if !ok {
                    report.low_mid_violations += 1;
                }
            }
        }
    }
    while report.high_accepted < sample_count {
        let k = sign(&mut rng) * 10f64.powf(rng.random_range(0.0..3.0));
        let l = sign(&mut rng) * 10f64.powf(rng.random_range(0.0..3.0));
        let alpha = rng.random_range(0.0..4.0);
        let m = rng.random_range(0.0..=alpha);
        let n = rng.random_range(0.0..=alpha);
        match high_split_holds(k, l, alpha, m, n) {
            None => report.high_rejected += 1,
            Some(ok) => {
                report.high_accepted += 1;
                if !ok {
                    report.high_violations += 1;
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_examples() {
        assert_eq!(regime_of(0.05, 1e-2), Regime::I1);
        assert_eq!(regime_of(0.5, 1e-2), Regime::I2);
        assert_eq!(regime_of(5.0, 1e-2), Regime::I4);
        assert_eq!(regime_of(5.0, 1e-2).coarse_label(), "I3");
        assert_eq!(regime_of(20.0, 1e-2), Regime::I5);
        assert_eq!(regime_of(-0.5, 1e-2), Regime::I2);
    }

    #[test]
    fn boundaries_go_to_lower_regime() {
        let nu = 1e-2;
        assert_eq!(regime_of(10.0 * nu, nu), Regime::I1);
        assert_eq!(regime_of(1.0, nu), Regime::I2);
        assert_eq!(regime_of(nu.powf(-0.5), nu), Regime::I4);
    }

    #[test]
    fn uninitialized_ledger_is_an_error() {
        let l = EnergyLedger::new(1e-2, 0.5, &[(0.5, 1.0)], 1.0).unwrap();
        assert!(matches!(
            mode_energy_omega(&l.modes[0], 1e-2, 0.5),
            Err(LabError::State(_))
        ));
    }

    #[test]
    fn time_must_not_go_backwards() {
        let mut l = EnergyLedger::new(1e-2, 0.5, &[(0.5, 1.0)], 1.0).unwrap();
        l.record(1.0, &[ModeSample::default()]).unwrap();
        assert!(l.record(0.5, &[ModeSample::default()]).is_err());
        assert!(l.record(2.0, &[]).is_err());
    }

    #[test]
    fn lemma_examples() {
        assert_eq!(low_mid_comparable(0.05, 0.5, 1e-2), Some(true));
        assert_eq!(high_split_holds(2.0, 2.0, 1.0, 0.5, 0.5), None);
        assert_eq!(high_split_holds(3.0, 1.0, 1.0, 1.0 / 3.0, 1.0 / 3.0), Some(true));
        assert!(check_freq_lemmas(10, 1).is_err());
    }
}
