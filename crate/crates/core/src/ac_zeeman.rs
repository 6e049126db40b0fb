//! Second-order shifts from oscillating magnetic fields and the stray-field sensing chain.
//!
//! A field `B(t) = Re(b e^{−iΩt})` couples through `V_b = µB (gJ J + gI I)·b`. The
//! shift of level `i` keeps both counter-rotating denominators:
//! `Σ_j |⟨j|V_b|i⟩|²/4 / (E_i − E_j + Ω) + |⟨j|V_b†|i⟩|²/4 / (E_i − E_j − Ω)`.
//! Vectors are expressed in the frame whose z axis is the static field.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::hyperfine::{
    eigensystem, Eigensystem, HyperfineError, HyperfineSystem, StateLabel, TransitionLabels,
};

/// Closest allowed approach of `Ω` to a coupled level spacing (Hz).
pub const DEFAULT_GUARD_BAND: f64 = 10e3;

/// Longest amplitude ramp of the sensing protocol (s).
pub const MAX_RAMP_DURATION: f64 = 80e-6;
/// Longest spin-echo arm of the sensing protocol (s).
pub const MAX_ECHO_ARM: f64 = 1.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcZeemanError {
    #[error("drive at {drive} Hz lies {detuning} Hz from a coupled spacing (guard band {guard} Hz)")]
    ResonantDenominator {
        drive: f64,
        detuning: f64,
        guard: f64,
    },
    #[error("input must be positive: {0}")]
    NonPositiveInput(String),
    #[error("out of range: {0}")]
    RangeError(String),
    #[error("displacement must be non-negative, got {0} m")]
    NegativeDisplacement(f64),
    #[error("invalid oscillating field: {0}")]
    InvalidField(String),
    #[error("invalid sensing run: {0}")]
    InvalidRun(String),
    #[error(transparent)]
    Hyperfine(#[from] HyperfineError),
}

/// Polarisation of the oscillating field relative to the static field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Polarisation {
    /// Complex unit vector (x, y, z) with z along the static field.
    Vector([Complex64; 3]),
    /// Linear polarisation uniformly distributed over directions in a plane whose
    /// normal makes angle `tilt` (rad) with the static field.
    InPlaneUnpolarised { tilt: f64 },
}

impl Polarisation {
    pub fn pi() -> Self {
        Polarisation::linear([0.0, 0.0, 1.0])
    }

    /// Linear polarisation perpendicular to the static field.
    pub fn transverse() -> Self {
        Polarisation::linear([1.0, 0.0, 0.0])
    }

    /// Co-rotating with the Larmor precession of a positive moment (drives Δm_F = +1).
    pub fn sigma_plus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Polarisation::Vector([
            Complex64::new(s, 0.0),
            Complex64::new(0.0, s),
            Complex64::new(0.0, 0.0),
        ])
    }

    pub fn sigma_minus() -> Self {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Polarisation::Vector([
            Complex64::new(s, 0.0),
            Complex64::new(0.0, -s),
            Complex64::new(0.0, 0.0),
        ])
    }

    /// Linear polarisation along `dir` (normalised here).
    pub fn linear(dir: [f64; 3]) -> Self {
        let n = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        Polarisation::Vector(dir.map(|c| Complex64::new(c / n, 0.0)))
    }

    fn validate(&self) -> Result<(), AcZeemanError> {
        match self {
            Polarisation::Vector(v) => {
                let n: f64 = v.iter().map(|c| c.norm_sqr()).sum();
                if !((n - 1.0).abs() < 1e-9) {
                    return Err(AcZeemanError::InvalidField(format!(
                        "polarisation vector must be normalised, |e|² = {n}"
                    )));
                }
            }
            Polarisation::InPlaneUnpolarised { tilt } => {
                if !tilt.is_finite() {
                    return Err(AcZeemanError::InvalidField("tilt is not finite".into()));
                }
            }
        }
        Ok(())
    }

    /// Weighted components whose shifts add up to the shift of this polarisation.
    fn components(&self) -> Vec<(f64, [Complex64; 3])> {
        match *self {
            Polarisation::Vector(v) => vec![(1.0, v)],
            Polarisation::InPlaneUnpolarised { tilt } => {
                // ⟨(u·ẑ)²⟩ over unit u in the plane equals sin²(tilt)/2
                let par = 0.5 * tilt.sin().powi(2);
                let one = Complex64::new(1.0, 0.0);
                let zero = Complex64::new(0.0, 0.0);
                vec![(par, [zero, zero, one]), (1.0 - par, [one, zero, zero])]
            }
        }
    }
}

/// Oscillating magnetic field at the ion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OscillatingField {
    /// Zero-to-peak amplitude (T).
    pub amplitude: f64,
    /// Ordinary frequency Ω/2π (Hz).
    pub frequency: f64,
    pub polarisation: Polarisation,
}

impl OscillatingField {
    pub fn new(
        amplitude: f64,
        frequency: f64,
        polarisation: Polarisation,
    ) -> Result<Self, AcZeemanError> {
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(AcZeemanError::InvalidField(format!(
                "amplitude must be non-negative, got {amplitude}"
            )));
        }
        if !(frequency > 0.0 && frequency.is_finite()) {
            return Err(AcZeemanError::InvalidField(format!(
                "frequency must be positive, got {frequency}"
            )));
        }
        polarisation.validate()?;
        Ok(OscillatingField {
            amplitude,
            frequency,
            polarisation,
        })
    }
}

/// Level structure and moment operators at one static field, reused across drives.
#[derive(Debug, Clone)]
pub struct AcShiftCalculator {
    pub eigensystem: Eigensystem,
    mz: DMatrix<f64>,
    mp: DMatrix<f64>,
    pub guard_band: f64,
}

impl AcShiftCalculator {
    pub fn new(sys: &HyperfineSystem, b0: f64) -> Result<Self, AcZeemanError> {
        let es = eigensystem(sys, b0)?;
        let ops = sys.operators();
        let (mz, mp) = sys.moment_operators(&ops);
        // rotate into the eigenbasis once
        let v = &es.eigenvectors;
        let mz = v.transpose() * mz * v;
        let mp = v.transpose() * mp * v;
        Ok(AcShiftCalculator {
            eigensystem: es,
            mz,
            mp,
            guard_band: DEFAULT_GUARD_BAND,
        })
    }

    pub fn with_guard_band(mut self, guard_band: f64) -> Self {
        self.guard_band = guard_band;
        self
    }

    /// Shift of one level (Hz) for a unit-amplitude polarisation vector, per T².
    fn unit_shift(
        &self,
        i: usize,
        frequency: f64,
        e: &[Complex64; 3],
    ) -> Result<f64, AcZeemanError> {
        let cp = (e[0] - Complex64::i() * e[1]) * 0.5;
        let cm = (e[0] + Complex64::i() * e[1]) * 0.5;
        let ez = e[2];
        let energies = &self.eigensystem.energies;
        let mut total = 0.0;
        for j in 0..energies.len() {
            if j == i {
                continue;
            }
            // ⟨j|M_-|i⟩ = ⟨i|M_+|j⟩
            let zji = self.mz[(j, i)];
            let pji = self.mp[(j, i)];
            let mji = self.mp[(i, j)];
            let v = ez * zji + cp * pji + cm * mji;
            let v_dag = ez.conj() * zji + cp.conj() * mji + cm.conj() * pji;
            let (a, b) = (v.norm_sqr(), v_dag.norm_sqr());
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let w = energies[i] - energies[j];
            for (weight, den) in [(a, w + frequency), (b, w - frequency)] {
                if weight > 0.0 && den.abs() < self.guard_band {
                    return Err(AcZeemanError::ResonantDenominator {
                        drive: frequency,
                        detuning: den,
                        guard: self.guard_band,
                    });
                }
            }
            total += 0.25 * (a / (w + frequency) + b / (w - frequency));
        }
        Ok(total)
    }

    /// Shift of `level` (Hz) under `field`.
    pub fn level_shift(
        &self,
        level: StateLabel,
        field: &OscillatingField,
    ) -> Result<f64, AcZeemanError> {
        let i = self.eigensystem.index(level)?;
        let per_t2 = field
            .polarisation
            .components()
            .iter()
            .try_fold(0.0, |acc, (w, e)| {
                Ok::<_, AcZeemanError>(acc + w * self.unit_shift(i, field.frequency, e)?)
            })?;
        Ok(per_t2 * field.amplitude * field.amplitude)
    }

    /// Differential shift per squared amplitude (Hz/T²).
    pub fn transition_sensitivity(
        &self,
        labels: TransitionLabels,
        frequency: f64,
        polarisation: Polarisation,
    ) -> Result<f64, AcZeemanError> {
        let field = OscillatingField::new(1.0, frequency, polarisation)?;
        Ok(self.level_shift(labels.upper, &field)? - self.level_shift(labels.lower, &field)?)
    }
}

/// a.c. Zeeman shift of `level` (Hz) at static field `b0`.
pub fn ac_level_shift(
    sys: &HyperfineSystem,
    b0: f64,
    level: StateLabel,
    field: &OscillatingField,
) -> Result<f64, AcZeemanError> {
    AcShiftCalculator::new(sys, b0)?.level_shift(level, field)
}

/// Quadratic a.c. sensitivity of a transition (Hz/T²), signed.
pub fn transition_ac_sensitivity(
    sys: &HyperfineSystem,
    b0: f64,
    labels: TransitionLabels,
    frequency: f64,
    polarisation: Polarisation,
) -> Result<f64, AcZeemanError> {
    AcShiftCalculator::new(sys, b0)?.transition_sensitivity(labels, frequency, polarisation)
}

/// Amplitude at drive voltage `u_rf` from the measured shift-vs-voltage² slope.
/// `slope` (Hz/V²) and `sensitivity` (Hz/T²) must share a sign.
pub fn infer_bosc(slope: f64, u_rf: f64, sensitivity: f64) -> Result<f64, AcZeemanError> {
    if !(u_rf > 0.0) {
        return Err(AcZeemanError::NonPositiveInput(format!("U_RF = {u_rf}")));
    }
    if sensitivity == 0.0 || !sensitivity.is_finite() {
        return Err(AcZeemanError::NonPositiveInput(format!(
            "sensitivity = {sensitivity}"
        )));
    }
    let ratio = slope / sensitivity;
    if !(ratio >= 0.0) {
        return Err(AcZeemanError::NonPositiveInput(format!(
            "slope {slope} and sensitivity {sensitivity} differ in sign"
        )));
    }
    Ok(u_rf * ratio.sqrt())
}

/// Differential shift (Hz) after lowering the drive from `u_rf` by `du`, with
/// `B_osc ∝ U`: `s B² [1 − (1 − ΔU/U)²]`.
pub fn differential_shift_vs_du(
    b_osc: f64,
    u_rf: f64,
    du: f64,
    sensitivity: f64,
) -> Result<f64, AcZeemanError> {
    if !(u_rf > 0.0) {
        return Err(AcZeemanError::RangeError(format!("U_RF = {u_rf} must be positive")));
    }
    if !(0.0..=u_rf).contains(&du) {
        return Err(AcZeemanError::RangeError(format!(
            "ΔU = {du} V outside [0, {u_rf}] V"
        )));
    }
    let r = 1.0 - du / u_rf;
    Ok(sensitivity * b_osc * b_osc * (1.0 - r * r))
}

/// `B_ref + coefficient·√y` (T) with `coefficient` in T/m^½.
pub fn spatial_sqrt_model(y: f64, coefficient: f64, b_ref: f64) -> Result<f64, AcZeemanError> {
    if !(y >= 0.0) {
        return Err(AcZeemanError::NegativeDisplacement(y));
    }
    Ok(b_ref + coefficient * y.sqrt())
}

/// Frequency gradient (Hz/m) of `s B(y)²` when `B(y) = coefficient·√y`.
pub fn spatial_shift_slope(sensitivity: f64, coefficient: f64) -> f64 {
    sensitivity * coefficient * coefficient
}

/// One a.c. Zeeman sensing configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensingRun {
    /// Drive amplitude (V).
    pub u_rf: f64,
    /// Amplitude reduction during the second echo arm (V).
    pub delta_u_rf: f64,
    /// Echo arm duration (s).
    pub t_p: f64,
    pub ramp_duration: f64,
    /// Angle between the static field and the trap axis (rad).
    pub tilt: f64,
    pub inferred_bosc: f64,
    /// Signed quadratic sensitivity (Hz/T²).
    pub quadratic_sensitivity: f64,
}

impl SensingRun {
    pub fn validate(&self) -> Result<(), AcZeemanError> {
        if !(self.u_rf > 0.0) {
            return Err(AcZeemanError::InvalidRun(format!("U_RF = {}", self.u_rf)));
        }
        if !(0.0..=self.u_rf).contains(&self.delta_u_rf) {
            return Err(AcZeemanError::InvalidRun(format!(
                "ΔU_RF = {} outside [0, U_RF]",
                self.delta_u_rf
            )));
        }
        if !(self.ramp_duration >= 0.0 && self.ramp_duration <= MAX_RAMP_DURATION) {
            return Err(AcZeemanError::InvalidRun(format!(
                "ramp duration {} s exceeds {MAX_RAMP_DURATION} s",
                self.ramp_duration
            )));
        }
        if !(self.t_p >= 0.0 && self.t_p <= MAX_ECHO_ARM) {
            return Err(AcZeemanError::InvalidRun(format!(
                "echo arm {} s exceeds {MAX_ECHO_ARM} s",
                self.t_p
            )));
        }
        Ok(())
    }

    /// Differential shift between the two echo arms (Hz).
    pub fn differential_shift(&self) -> Result<f64, AcZeemanError> {
        differential_shift_vs_du(
            self.inferred_bosc,
            self.u_rf,
            self.delta_u_rf,
            self.quadratic_sensitivity,
        )
    }

    /// Echo phase accumulated per second of arm duration (rad/s).
    pub fn phase_rate(&self) -> Result<f64, AcZeemanError> {
        Ok(2.0 * PI * self.differential_shift()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hyperfine::{curvature, field_sensitivity, StateLabel, TransitionTag};

    const B0: f64 = 10.9584e-3;
    const OMEGA: f64 = 57.3e6;
    const UT2: f64 = 1e-12;

    fn sys() -> HyperfineSystem {
        HyperfineSystem::magnesium_25()
    }

    #[test]
    fn mw2_in_plane_sensitivity() {
        let tilt = 30f64.to_radians();
        let s = transition_ac_sensitivity(
            &sys(),
            B0,
            TransitionTag::MW2.labels(),
            OMEGA,
            Polarisation::InPlaneUnpolarised { tilt },
        )
        .unwrap()
            * UT2;
        assert!(((s.abs() - 4.783) / 4.783).abs() < 0.05, "{s}");
    }

    #[test]
    fn static_limits_match_field_derivatives() {
        // isotropic Hamiltonian: a transverse static δ shifts levels by E'(B0)·δ²/(2B0),
        // a longitudinal one by E''·δ²/2; time averaging halves both
        let sys = sys();
        let labels = TransitionTag::MW2.labels();
        let calc = AcShiftCalculator::new(&sys, B0).unwrap().with_guard_band(0.0);
        let pi = calc.transition_sensitivity(labels, 1e-3, Polarisation::pi()).unwrap();
        let expected_pi = 0.25 * curvature(&sys, B0, labels).unwrap();
        assert!(((pi - expected_pi) / expected_pi).abs() < 1e-5, "{pi} vs {expected_pi}");

        let lab = TransitionTag::MW0.labels();
        let perp = calc.transition_sensitivity(lab, 1e-3, Polarisation::transverse()).unwrap();
        let expected_perp = field_sensitivity(&sys, B0, lab).unwrap() / (4.0 * B0);
        assert!(((perp - expected_perp) / expected_perp).abs() < 1e-6, "{perp} vs {expected_perp}");
    }

    #[test]
    fn quadratic_scaling() {
        let sys = sys();
        let level = StateLabel::new(2, 0);
        let f1 = OscillatingField::new(1e-6, OMEGA, Polarisation::sigma_plus()).unwrap();
        let f3 = OscillatingField { amplitude: 3e-6, ..f1 };
        let a = ac_level_shift(&sys, B0, level, &f1).unwrap();
        let b = ac_level_shift(&sys, B0, level, &f3).unwrap();
        assert!((b - 9.0 * a).abs() <= 1e-12 * b.abs());
    }

    #[test]
    fn components_add_without_cross_terms() {
        let calc = AcShiftCalculator::new(&sys(), B0).unwrap();
        let level = StateLabel::new(3, 1);
        let shift = |p| {
            calc.level_shift(level, &OscillatingField::new(1.0, OMEGA, p).unwrap())
                .unwrap()
        };
        let (x, z) = (0.6, 0.8);
        let combined = shift(Polarisation::linear([x, 0.0, z]));
        let parts = x * x * shift(Polarisation::transverse()) + z * z * shift(Polarisation::pi());
        assert!((combined - parts).abs() < 1e-12 * combined.abs());
        let sp = shift(Polarisation::sigma_plus());
        let sm = shift(Polarisation::sigma_minus());
        assert!((0.5 * (sp + sm) - shift(Polarisation::transverse())).abs() < 1e-9 * sp.abs());
        assert!((sp - sm).abs() > 1e-6 * sp.abs());
    }

    #[test]
    fn sign_flips_across_a_resonance() {
        // |3,1⟩ ↔ |2,2⟩ (MW1) is σ-coupled; scan the drive across it
        let sys = sys();
        let calc = AcShiftCalculator::new(&sys, B0).unwrap();
        let w = calc.eigensystem.energy(StateLabel::new(2, 2)).unwrap()
            - calc.eigensystem.energy(StateLabel::new(3, 1)).unwrap();
        let f = |nu| {
            calc.level_shift(
                StateLabel::new(3, 1),
                &OscillatingField::new(1e-6, nu, Polarisation::transverse()).unwrap(),
            )
            .unwrap()
        };
        let below = f(w - 1e6);
        let above = f(w + 1e6);
        assert!(below.signum() != above.signum(), "{below} {above}");
        assert!(matches!(
            calc.level_shift(
                StateLabel::new(3, 1),
                &OscillatingField::new(1e-6, w + 1e3, Polarisation::transverse()).unwrap()
            ),
            Err(AcZeemanError::ResonantDenominator { .. })
        ));
    }

    #[test]
    fn doubled_drive_frequency_recomputed_independently() {
        // brute force over the full product-basis operators
        let sys = sys();
        let labels = TransitionTag::MW2.labels();
        let nu = 2.0 * OMEGA;
        let fast = transition_ac_sensitivity(&sys, B0, labels, nu, Polarisation::transverse())
            .unwrap();
        let es = eigensystem(&sys, B0).unwrap();
        let ops = sys.operators();
        let (_, mp) = sys.moment_operators(&ops);
        let mx = (&mp + mp.transpose()) * 0.5;
        let shift = |label| {
            let i = es.index(label).unwrap();
            (0..12)
                .filter(|&j| j != i)
                .map(|j| {
                    let m = es.matrix_element(&mx, j, i);
                    let w = es.energies[i] - es.energies[j];
                    0.25 * m * m * (1.0 / (w + nu) + 1.0 / (w - nu))
                })
                .sum::<f64>()
        };
        let brute = shift(labels.upper) - shift(labels.lower);
        assert!(((fast - brute) / brute).abs() < 1e-10);
        let base = transition_ac_sensitivity(&sys, B0, labels, OMEGA, Polarisation::transverse())
            .unwrap();
        assert!((fast - base).abs() > 1e-4 * base.abs());
    }

    #[test]
    fn sensing_chain_values() {
        let s = 4.783 / UT2;
        let b = infer_bosc(20.77e-3, 79.5, s).unwrap();
        assert!((b - 5.239e-6).abs() < 0.01e-6, "{b}");
        assert_eq!(infer_bosc(0.0, 79.5, s).unwrap(), 0.0);
        let b2 = infer_bosc(20.77e-3, 159.0, s).unwrap();
        assert!((b2 - 2.0 * b).abs() < 1e-18);
        assert!(infer_bosc(20.77e-3, 79.5, -s).is_err());

        let full = differential_shift_vs_du(5.239e-6, 79.5, 79.5, s).unwrap();
        assert!((full - 131.3).abs() < 0.1, "{full}");
        assert_eq!(differential_shift_vs_du(5.239e-6, 79.5, 0.0, s).unwrap(), 0.0);
        let h = 1e-6;
        let slope = differential_shift_vs_du(5.239e-6, 79.5, h, s).unwrap() / h;
        let expected = 2.0 * s * 5.239e-6f64.powi(2) / 79.5;
        assert!(((slope - expected) / expected).abs() < 1e-6);
        assert!(differential_shift_vs_du(5.239e-6, 79.5, 80.0, s).is_err());
        assert!(differential_shift_vs_du(5.239e-6, 79.5, -1.0, s).is_err());
    }

    #[test]
    fn sensing_round_trip() {
        let s = -4.756 / UT2;
        let u = 79.5;
        let b = 5.2389e-6;
        // slope of shift against ΔU² for the full ramp
        let slope = differential_shift_vs_du(b, u, u, s).unwrap() / (u * u);
        let back = infer_bosc(slope, u, s).unwrap();
        assert!(((back - b) / b).abs() < 1e-10);
    }

    #[test]
    fn spatial_model() {
        let k = 0.262e-6 / 1e-3; // T/m^½
        let db = spatial_sqrt_model(4e-6, k, 0.0).unwrap();
        assert!((db - 0.524e-6).abs() < 1e-12);
        assert_eq!(spatial_sqrt_model(0.0, k, 1e-6).unwrap(), 1e-6);
        assert!(matches!(
            spatial_sqrt_model(-1e-6, k, 0.0),
            Err(AcZeemanError::NegativeDisplacement(_))
        ));
        let slope = spatial_shift_slope(4.783 / UT2, k) * 1e-6;
        assert!(((slope - 0.327) / 0.327).abs() < 0.05, "{slope}");
    }

    #[test]
    fn sensing_run_limits() {
        let run = SensingRun {
            u_rf: 79.5,
            delta_u_rf: 79.5,
            t_p: 1.2,
            ramp_duration: 80e-6,
            tilt: 30f64.to_radians(),
            inferred_bosc: 5.239e-6,
            quadratic_sensitivity: 4.783 / UT2,
        };
        run.validate().unwrap();
        assert!((run.phase_rate().unwrap() / (2.0 * PI) - 131.3).abs() < 0.1);
        assert!(SensingRun { ramp_duration: 81e-6, ..run }.validate().is_err());
        assert!(SensingRun { t_p: 1.3, ..run }.validate().is_err());
    }

    #[test]
    fn field_validation() {
        assert!(OscillatingField::new(-1.0, 1.0, Polarisation::pi()).is_err());
        assert!(OscillatingField::new(1.0, 0.0, Polarisation::pi()).is_err());
        let bad = Polarisation::Vector([Complex64::new(1.0, 0.0); 3]);
        assert!(OscillatingField::new(1.0, 1.0, bad).is_err());
    }
}
