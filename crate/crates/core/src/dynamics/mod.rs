//! Two-level dynamics of a driven transition under field noise.
//!
//! Basis `(|0⟩, |1⟩)` is (lower, upper) of the transition; every sequence starts
//! in `|0⟩` and reports the probability of finding the ion there at the end. In
//! the frame of a drive resonant at the nominal field the Hamiltonian is
//! `H = (Ω/2)(cos φ σx + sin φ σy) − (Δ/2) σz` with `Δ = 2π δν` the atomic
//! detuning, so a Ramsey fringe reads `P = [1 − cos(Δφ + Φ)]/2`.

mod echo;
mod noise;
mod ramsey;
mod stabilization;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ac_zeeman::AcZeemanError;
use crate::analysis::AnalysisError;
use crate::hyperfine::{HyperfineError, TransitionSpec};
use crate::magnetics::MagneticsError;

pub use echo::{echo_sequence, spin_echo_acz_scan, unwrap_progressive, EchoPoint, EchoResult, EchoScan};
pub use noise::{NoiseKind, NoiseModel, ShotNoise, WindowIntegrals};
pub use ramsey::{
    calibrate_quasi_static, coherence_grid, predicted_contrast, predicted_tau, ramsey_contrast_scan,
    CoherenceResult, RamseyPoint, RamseyScan,
};
pub use stabilization::{
    stabilization_loop, Correction, StabilizationConfig, StabilizationSample, StabilizationTrace,
};

/// Default limit on the duration of one sequence (s).
pub const MAX_SEQUENCE_DURATION: f64 = 1.5;
/// Allowed drift of the state norm.
pub const NORM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid pulse sequence: {0}")]
    InvalidSequence(String),
    #[error("invalid noise model: {0}")]
    InvalidNoise(String),
    #[error("{0}")]
    RangeError(String),
    #[error("shim current {current} A exceeds the actuator limit {max} A")]
    ActuatorSaturation { current: f64, max: f64 },
    #[error("state norm drifted by {0:e}")]
    NormViolation(f64),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error(transparent)]
    Fit(#[from] AnalysisError),
    #[error(transparent)]
    Hyperfine(#[from] HyperfineError),
    #[error(transparent)]
    AcZeeman(#[from] AcZeemanError),
    #[error(transparent)]
    Magnetics(#[from] MagneticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum SequenceEvent {
    /// Replaces the deterministic detuning offset (Hz) from this point on.
    SetDetuningOffset(f64),
    Marker(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Segment {
    /// `area` and `phase` in rad, `rabi_rate` in rad/s.
    Pulse { area: f64, phase: f64, rabi_rate: f64 },
    Wait { duration: f64 },
    Event(SequenceEvent),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseModel {
    /// Pulses are instantaneous rotations.
    Instantaneous,
    /// Pulses take `area/rabi_rate` and see the detuning at their start.
    Finite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseSequence {
    pub segments: Vec<Segment>,
    pub shots: u32,
    pub pulse_model: PulseModel,
    pub max_duration: f64,
}

impl PulseSequence {
    pub fn new(segments: Vec<Segment>, shots: u32, pulse_model: PulseModel) -> Self {
        PulseSequence {
            segments,
            shots,
            pulse_model,
            max_duration: MAX_SEQUENCE_DURATION,
        }
    }

    pub fn with_max_duration(mut self, max_duration: f64) -> Self {
        self.max_duration = max_duration;
        self
    }

    /// `π/2(0) – T – π/2(phase)`.
    pub fn ramsey(rabi_rate: f64, wait: f64, phase: f64, shots: u32, pulse_model: PulseModel) -> Self {
        let half = |phase| Segment::Pulse {
            area: PI / 2.0,
            phase,
            rabi_rate,
        };
        PulseSequence::new(
            vec![half(0.0), Segment::Wait { duration: wait }, half(phase)],
            shots,
            pulse_model,
        )
    }

    pub fn duration(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| match *s {
                Segment::Wait { duration } => duration,
                Segment::Pulse { area, rabi_rate, .. } if self.pulse_model == PulseModel::Finite => {
                    area / rabi_rate
                }
                _ => 0.0,
            })
            .sum()
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        if self.shots == 0 {
            return Err(DynamicsError::InvalidSequence("at least one shot required".into()));
        }
        for s in &self.segments {
            match *s {
                Segment::Pulse {
                    area,
                    phase,
                    rabi_rate,
                } => {
                    if !(area >= 0.0 && area.is_finite()) || !phase.is_finite() {
                        return Err(DynamicsError::InvalidSequence(format!(
                            "pulse area {area} rad, phase {phase} rad"
                        )));
                    }
                    if self.pulse_model == PulseModel::Finite && !(rabi_rate > 0.0 && rabi_rate.is_finite()) {
                        return Err(DynamicsError::InvalidSequence(format!(
                            "Rabi rate {rabi_rate} rad/s"
                        )));
                    }
                }
                Segment::Wait { duration } => {
                    if !(duration >= 0.0 && duration.is_finite()) {
                        return Err(DynamicsError::InvalidSequence(format!("wait {duration} s")));
                    }
                }
                Segment::Event(SequenceEvent::SetDetuningOffset(v)) if !v.is_finite() => {
                    return Err(DynamicsError::InvalidSequence("non-finite detuning offset".into()));
                }
                Segment::Event(_) => {}
            }
        }
        let total = self.duration();
        if total > self.max_duration {
            return Err(DynamicsError::InvalidSequence(format!(
                "duration {total} s exceeds {} s",
                self.max_duration
            )));
        }
        Ok(())
    }
}

/// Two-level state amplitudes.
pub type Spinor = [Complex64; 2];

/// Exact propagator for constant Rabi rate `omega` and detuning `delta` (rad/s).
pub fn rotation(area_time: f64, phase: f64, omega: f64, delta: f64) -> [[Complex64; 2]; 2] {
    let eff = omega.hypot(delta);
    let half = 0.5 * eff * area_time;
    let (s, c) = half.sin_cos();
    let (nx, nz) = if eff > 0.0 { (omega / eff, delta / eff) } else { (0.0, 0.0) };
    let i = Complex64::i();
    let off = Complex64::from_polar(s * nx, 0.0);
    [
        [Complex64::new(c, s * nz), -i * off * Complex64::from_polar(1.0, -phase)],
        [-i * off * Complex64::from_polar(1.0, phase), Complex64::new(c, -s * nz)],
    ]
}

/// Instantaneous rotation by `area` about `cos φ x + sin φ y`.
pub fn instant_rotation(area: f64, phase: f64) -> [[Complex64; 2]; 2] {
    rotation(area, phase, 1.0, 0.0)
}

fn apply(u: &[[Complex64; 2]; 2], psi: &mut Spinor) {
    let a = u[0][0] * psi[0] + u[0][1] * psi[1];
    let b = u[1][0] * psi[0] + u[1][1] * psi[1];
    psi[0] = a;
    psi[1] = b;
}

/// Free precession by accumulated phase `phi = ∫Δ dt`.
fn precess(phi: f64, psi: &mut Spinor) {
    psi[0] *= Complex64::from_polar(1.0, 0.5 * phi);
    psi[1] *= Complex64::from_polar(1.0, -0.5 * phi);
}

/// Deterministic detuning (Hz) as a function of sequence time.
pub type DetuningFn<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

const SIMPSON_INTERVALS: usize = 64;

fn integrate(f: DetuningFn<'_>, t0: f64, duration: f64) -> f64 {
    let n = SIMPSON_INTERVALS;
    let h = duration / n as f64;
    let mut acc = f(t0) + f(t0 + duration);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(t0 + k as f64 * h);
    }
    acc * h / 3.0
}

/// Outcome of one shot before projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotOutcome {
    pub survival: f64,
    pub norm: f64,
}

/// Evolves one noise realisation through the sequence.
pub fn evolve_shot<R: Rng>(
    seq: &PulseSequence,
    transition: &TransitionSpec,
    shot: &mut ShotNoise<'_, R>,
    detuning: Option<DetuningFn<'_>>,
) -> Result<ShotOutcome, DynamicsError> {
    let s = transition.sensitivity;
    let c = transition.curvature;
    let mut offset = 0.0;
    let mut psi: Spinor = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    for seg in &seq.segments {
        match *seg {
            Segment::Event(SequenceEvent::SetDetuningOffset(v)) => offset = v,
            Segment::Event(SequenceEvent::Marker(_)) => {}
            Segment::Pulse {
                area,
                phase,
                rabi_rate,
            } => match seq.pulse_model {
                PulseModel::Instantaneous => apply(&instant_rotation(area, phase), &mut psi),
                PulseModel::Finite => {
                    let t = shot.time();
                    let b = shot.hold(area / rabi_rate);
                    let det = s * b + 0.5 * c * b * b + offset + detuning.map_or(0.0, |f| f(t));
                    apply(&rotation(area / rabi_rate, phase, rabi_rate, 2.0 * PI * det), &mut psi);
                }
            },
            Segment::Wait { duration } => {
                if duration == 0.0 {
                    continue;
                }
                let t0 = shot.time();
                let w = shot.window(duration);
                // local slope sets the white-noise coupling
                let slope = s + c * w.linear / duration;
                let cycles = s * w.linear
                    + 0.5 * c * w.quadratic
                    + slope * w.white
                    + offset * duration
                    + detuning.map_or(0.0, |f| integrate(f, t0, duration));
                precess(2.0 * PI * cycles, &mut psi);
            }
        }
    }
    let norm = psi[0].norm_sqr() + psi[1].norm_sqr();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(DynamicsError::NormViolation(norm - 1.0));
    }
    Ok(ShotOutcome {
        survival: psi[0].norm_sqr().clamp(0.0, 1.0),
        norm,
    })
}

/// Survival probability of every shot of `seq`, each with its own noise draw.
pub fn evolve_sequence<R: Rng>(
    seq: &PulseSequence,
    transition: &TransitionSpec,
    noise: &NoiseModel,
    detuning: Option<DetuningFn<'_>>,
    rng: &mut R,
) -> Result<Vec<f64>, DynamicsError> {
    seq.validate()?;
    noise.validate()?;
    (0..seq.shots)
        .map(|_| {
            let mut shot = ShotNoise::new(noise, rng);
            evolve_shot(seq, transition, &mut shot, detuning).map(|o| o.survival)
        })
        .collect()
}

/// Projects shots with survival probabilities `p` and returns the bright fraction.
pub fn project<R: Rng>(p: &[f64], rng: &mut R) -> f64 {
    let hits = p.iter().filter(|&&p| rng.random::<f64>() < p).count();
    hits as f64 / p.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RabiPoint {
    /// Hz.
    pub detuning: f64,
    pub transfer: f64,
}

/// Noise-free transfer to `|1⟩` after one pulse of `area` at each detuning (Hz).
pub fn rabi_scan(transition: &TransitionSpec, area: f64, detunings: &[f64]) -> Result<Vec<RabiPoint>, DynamicsError> {
    let omega = 2.0 * PI * transition.coupling_strength;
    if !(omega > 0.0 && omega.is_finite()) || !(area >= 0.0) {
        return Err(DynamicsError::RangeError(format!(
            "Rabi rate {omega} rad/s, area {area} rad"
        )));
    }
    let t = area / omega;
    Ok(detunings
        .iter()
        .map(|&d| {
            let mut psi: Spinor = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
            apply(&rotation(t, 0.0, omega, 2.0 * PI * d), &mut psi);
            RabiPoint {
                detuning: d,
                transfer: psi[1].norm_sqr(),
            }
        })
        .collect())
}

/// `Ω²/Ω_eff² · sin²(Ω_eff t/2)` with rates in rad/s.
pub fn rabi_transfer(omega: f64, delta: f64, t: f64) -> f64 {
    let eff2 = omega * omega + delta * delta;
    if eff2 == 0.0 {
        return 0.0;
    }
    omega * omega / eff2 * (0.5 * eff2.sqrt() * t).sin().powi(2)
}
