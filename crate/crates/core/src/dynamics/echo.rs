//! Spin echo with an RF amplitude step in the second arm.
//!
//! `π/2 – T_P – π – [ramp down] – T_P – [ramp up] – π/2(Δφ)` leaves
//! `P = [1 + cos(χ − Δφ)]/2` with `χ = Φ₁ − Φ₂`. Static detunings cancel in χ and
//! the a.c. Zeeman step contributes `2π D T_P`. The ramps are treated as
//! instantaneous; their duration is bounded by the sensing run.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{
    evolve_sequence, project, DynamicsError, NoiseModel, PulseModel, PulseSequence, Segment, SequenceEvent,
};
use crate::ac_zeeman::{SensingRun, MAX_ECHO_ARM};
use crate::analysis::{fit_line, FitResult};
use crate::hyperfine::TransitionSpec;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EchoScan {
    pub t_p_grid: Vec<f64>,
    pub shots: u32,
    pub seed: u64,
}

impl EchoScan {
    /// Arm durations doubling from `first` and ending at `last`.
    pub fn geometric(first: f64, last: f64, shots: u32, seed: u64) -> Self {
        let mut t_p_grid = vec![0.0];
        let mut t = first;
        while t < last {
            t_p_grid.push(t);
            t *= 2.0;
        }
        t_p_grid.push(last);
        EchoScan { t_p_grid, shots, seed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EchoPoint {
    pub t_p: f64,
    /// Unwrapped χ (rad).
    pub phase: f64,
    pub phase_err: f64,
    /// Bright fractions at Δφ = 0 and Δφ = π/2.
    pub quadratures: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EchoResult {
    pub points: Vec<EchoPoint>,
    pub slope_fit: FitResult,
    /// dχ/dT_P (rad/s).
    pub phase_rate: f64,
    pub phase_rate_err: f64,
    /// Measured differential shift (Hz).
    pub differential_shift: f64,
    /// Differential shift of the sensing model (Hz).
    pub expected_shift: f64,
}

/// Echo sequence with the a.c. shift `full` (Hz) in the first arm and `reduced`
/// in the second.
pub fn echo_sequence(
    rabi_rate: f64,
    t_p: f64,
    full: f64,
    reduced: f64,
    final_phase: f64,
    shots: u32,
) -> PulseSequence {
    let pulse = |area, phase| Segment::Pulse {
        area,
        phase,
        rabi_rate,
    };
    PulseSequence::new(
        vec![
            Segment::Event(SequenceEvent::SetDetuningOffset(full)),
            pulse(PI / 2.0, 0.0),
            Segment::Wait { duration: t_p },
            pulse(PI, 0.0),
            Segment::Event(SequenceEvent::Marker("ramp down")),
            Segment::Event(SequenceEvent::SetDetuningOffset(reduced)),
            Segment::Wait { duration: t_p },
            Segment::Event(SequenceEvent::Marker("ramp up")),
            Segment::Event(SequenceEvent::SetDetuningOffset(full)),
            pulse(PI / 2.0, final_phase),
        ],
        shots,
        PulseModel::Instantaneous,
    )
    .with_max_duration(2.0 * MAX_ECHO_ARM)
}

fn wrap(x: f64) -> f64 {
    x - 2.0 * PI * (x / (2.0 * PI)).round()
}

/// Unwraps phases sampled at increasing `t` against a line through the origin
/// refitted after every accepted point.
pub fn unwrap_progressive(t: &[f64], phase: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(phase.len());
    let (mut stt, mut sty) = (0.0, 0.0);
    for (&ti, &pi) in t.iter().zip(phase) {
        let slope = if stt > 0.0 { sty / stt } else { 0.0 };
        let predicted = slope * ti;
        let v = predicted + wrap(pi - predicted);
        stt += ti * ti;
        sty += ti * v;
        out.push(v);
    }
    out
}

/// Simulates the echo phase against arm duration and fits its slope.
pub fn spin_echo_acz_scan(
    transition: &TransitionSpec,
    run: &SensingRun,
    noise: &NoiseModel,
    scan: &EchoScan,
) -> Result<EchoResult, DynamicsError> {
    run.validate()?;
    noise.validate()?;
    if scan.t_p_grid.len() < 2 {
        return Err(DynamicsError::RangeError("need at least two arm durations".into()));
    }
    if scan.t_p_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(DynamicsError::RangeError("arm durations must increase".into()));
    }
    for &t in &scan.t_p_grid {
        SensingRun { t_p: t, ..*run }.validate()?;
    }
    let b = run.inferred_bosc;
    let full = run.quadratic_sensitivity * b * b;
    let reduced = run.quadratic_sensitivity * (b * (1.0 - run.delta_u_rf / run.u_rf)).powi(2);
    let rabi_rate = 2.0 * PI * transition.coupling_strength;
    let n = scan.shots as f64;

    let fractions: Vec<f64> = (0..2 * scan.t_p_grid.len())
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(scan.seed);
            rng.set_stream(k as u64);
            let final_phase = if k % 2 == 0 { 0.0 } else { PI / 2.0 };
            let seq = echo_sequence(rabi_rate, scan.t_p_grid[k / 2], full, reduced, final_phase, scan.shots);
            let p = evolve_sequence(&seq, transition, noise, None, &mut rng)?;
            Ok(project(&p, &mut rng))
        })
        .collect::<Result<_, DynamicsError>>()?;

    let floor = 0.5 / n;
    let sd = |p: f64| {
        let p = p.clamp(floor, 1.0 - floor);
        2.0 * (p * (1.0 - p) / n).sqrt()
    };
    let mut raw = Vec::with_capacity(scan.t_p_grid.len());
    let mut err = Vec::with_capacity(scan.t_p_grid.len());
    for pair in fractions.chunks(2) {
        let (x, y) = (2.0 * pair[0] - 1.0, 2.0 * pair[1] - 1.0);
        raw.push(y.atan2(x));
        let r2 = (x * x + y * y).max(1.0 / n);
        let (sx, sy) = (sd(pair[0]), sd(pair[1]));
        err.push(((x * sy).powi(2) + (y * sx).powi(2)).sqrt() / r2);
    }
    let phase = unwrap_progressive(&scan.t_p_grid, &raw);
    let slope_fit = fit_line(&scan.t_p_grid, &phase, &err, false)?;
    let points = scan
        .t_p_grid
        .iter()
        .zip(phase.iter().zip(&err))
        .zip(fractions.chunks(2))
        .map(|((&t_p, (&phase, &phase_err)), q)| EchoPoint {
            t_p,
            phase,
            phase_err,
            quadratures: [q[0], q[1]],
        })
        .collect();
    let phase_rate = slope_fit.value("slope");
    Ok(EchoResult {
        points,
        phase_rate,
        phase_rate_err: slope_fit.sigma("slope"),
        differential_shift: phase_rate / (2.0 * PI),
        expected_shift: full - reduced,
        slope_fit,
    })
}
