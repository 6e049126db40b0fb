//! Ramsey contrast decay and noise calibration.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{evolve_sequence, project, DynamicsError, NoiseModel, PulseModel, PulseSequence, MAX_SEQUENCE_DURATION};
use crate::analysis::{fit_exp_decay, fit_sinusoid_binomial, AnalysisError, FitResult};
use crate::hyperfine::{TransitionSpec, TransitionTag};

/// Contrast at which an automatic grid stops.
const GRID_FLOOR_CONTRAST: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RamseyScan {
    pub t_grid: Vec<f64>,
    /// Final-pulse phases per point, evenly spread over [0, 2π).
    pub phases: usize,
    pub shots: u32,
    pub float_baseline: bool,
    pub pulse_model: PulseModel,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RamseyPoint {
    pub t: f64,
    pub contrast: f64,
    pub contrast_err: f64,
    pub phase: f64,
    pub bright_fraction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceResult {
    pub transition: TransitionTag,
    pub sensitivity: f64,
    pub noise: NoiseModel,
    pub points: Vec<RamseyPoint>,
    pub decay: FitResult,
    pub tau: f64,
    pub tau_err: f64,
    /// 2π/τ (rad/s).
    pub gamma: f64,
    pub gamma_err: f64,
}

impl CoherenceResult {
    pub fn t_grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }
}

fn scan_phases(n: usize) -> Vec<f64> {
    (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect()
}

/// Simulates a Ramsey phase scan at every `T` and fits the contrast decay.
///
/// Each (T, phase) point draws from its own ChaCha8 stream of `seed`, so the
/// result does not depend on thread scheduling.
pub fn ramsey_contrast_scan(
    transition: &TransitionSpec,
    noise: &NoiseModel,
    scan: &RamseyScan,
) -> Result<CoherenceResult, DynamicsError> {
    noise.validate()?;
    if scan.t_grid.len() < 2 {
        return Err(DynamicsError::RangeError("need at least two evolution times".into()));
    }
    if scan.phases < 5 {
        return Err(DynamicsError::RangeError(format!(
            "need at least five phases, got {}",
            scan.phases
        )));
    }
    let rabi_rate = 2.0 * PI * transition.coupling_strength;
    let phases = scan_phases(scan.phases);
    for &t in &scan.t_grid {
        PulseSequence::ramsey(rabi_rate, t, 0.0, scan.shots, scan.pulse_model).validate()?;
    }

    let n_ph = phases.len();
    let fractions: Vec<f64> = (0..scan.t_grid.len() * n_ph)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n_ph, k % n_ph);
            let mut rng = ChaCha8Rng::seed_from_u64(scan.seed);
            rng.set_stream(k as u64);
            let seq = PulseSequence::ramsey(rabi_rate, scan.t_grid[i], phases[j], scan.shots, scan.pulse_model);
            let p = evolve_sequence(&seq, transition, noise, None, &mut rng)?;
            Ok(project(&p, &mut rng))
        })
        .collect::<Result<_, DynamicsError>>()?;

    let mut points = Vec::with_capacity(scan.t_grid.len());
    for (i, &t) in scan.t_grid.iter().enumerate() {
        let y = &fractions[i * n_ph..(i + 1) * n_ph];
        let fit = fit_sinusoid_binomial(&phases, y, scan.shots as u64, scan.float_baseline)?;
        points.push(RamseyPoint {
            t,
            contrast: fit.value("contrast"),
            contrast_err: fit.sigma("contrast"),
            phase: fit.value("phase"),
            bright_fraction: y.to_vec(),
        });
    }
    let t: Vec<f64> = points.iter().map(|p| p.t).collect();
    let c: Vec<f64> = points.iter().map(|p| p.contrast).collect();
    let s: Vec<f64> = points.iter().map(|p| p.contrast_err).collect();
    let decay = fit_exp_decay(&t, &c, &s)?;
    let tau = decay.value("tau");
    let tau_err = decay.sigma("tau");
    Ok(CoherenceResult {
        transition: transition.tag,
        sensitivity: transition.sensitivity,
        noise: *noise,
        gamma: 2.0 * PI / tau,
        gamma_err: 2.0 * PI * tau_err / (tau * tau),
        points,
        decay,
        tau,
        tau_err,
    })
}

/// Ramsey contrast for a Gaussian static field offset of rms `sigma`.
///
/// With `φ = aX + bX²`, `a = 2π s T`, `b = π c T` and `X ~ N(0, σ²)`,
/// `⟨e^{iφ}⟩ = (1 − 2ibσ²)^{-1/2} exp(−a²σ²/(2(1 − 2ibσ²)))`.
pub fn predicted_contrast(transition: &TransitionSpec, sigma: f64, t: f64) -> f64 {
    let a = 2.0 * PI * transition.sensitivity * t;
    let b = PI * transition.curvature * t;
    let d = Complex64::new(1.0, -2.0 * b * sigma * sigma);
    let v = d.sqrt().inv() * (-(a * a * sigma * sigma) / (2.0 * d)).exp();
    v.norm()
}

/// `n` evenly spaced times ending where the predicted contrast reaches 0.15,
/// capped at `t_cap`.
pub fn coherence_grid(transition: &TransitionSpec, noise: &NoiseModel, n: usize, t_cap: f64) -> Vec<f64> {
    let sigma = noise.static_rms();
    let cap = t_cap.min(MAX_SEQUENCE_DURATION);
    let t_max = if predicted_contrast(transition, sigma, cap) >= GRID_FLOOR_CONTRAST {
        cap
    } else {
        let (mut lo, mut hi) = (0.0, cap);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if predicted_contrast(transition, sigma, mid) > GRID_FLOOR_CONTRAST {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    };
    (1..=n).map(|k| t_max * k as f64 / n as f64).collect()
}

/// Decay time obtained by fitting an exponential to the predicted contrast.
pub fn predicted_tau(transition: &TransitionSpec, sigma: f64, grid: &[f64]) -> Result<f64, AnalysisError> {
    let c: Vec<f64> = grid.iter().map(|&t| predicted_contrast(transition, sigma, t)).collect();
    Ok(fit_exp_decay(grid, &c, &vec![0.01; grid.len()])?.value("tau"))
}

/// Quasi-static rms for which the fitted decay time on `grid` equals `target_tau`.
pub fn calibrate_quasi_static(
    transition: &TransitionSpec,
    target_tau: f64,
    grid: &[f64],
) -> Result<f64, DynamicsError> {
    if !(target_tau > 0.0) {
        return Err(DynamicsError::Calibration(format!("target τ = {target_tau}")));
    }
    // τ falls monotonically with σ; a non-decaying fit counts as τ = ∞
    let tau_at = |ln_sigma: f64| predicted_tau(transition, ln_sigma.exp(), grid).unwrap_or(f64::INFINITY);
    let (mut lo, mut hi) = (1e-12f64.ln(), 1e-5f64.ln());
    if tau_at(hi) > target_tau || tau_at(lo) < target_tau {
        return Err(DynamicsError::Calibration(format!(
            "τ = {target_tau} s is not reachable on this grid"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if tau_at(mid) > target_tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}
