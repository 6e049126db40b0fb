//! Closed-loop stabilisation of the field magnitude with the longitudinal shim pair.
//!
//! At every control interval the field-sensitive proxy transition is measured with
//! Gaussian frequency noise, converted to a field error through its sensitivity, and
//! corrected by a single proportional current step when the error exceeds the
//! deadband. Between corrections the environment drifts freely.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;

use super::{DynamicsError, NoiseModel};
use crate::hyperfine::TransitionSpec;
use crate::magnetics::{CoilAxis, CoilPair};

/// Allowed control interval (s).
pub const INTERVAL_RANGE: (f64, f64) = (300.0, 1200.0);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizationConfig {
    pub target_field: f64,
    pub interval: f64,
    pub duration: f64,
    pub sample_period: f64,
    pub coil: CoilPair,
    /// Proxy frequency noise per measurement (Hz).
    pub measurement_sigma: f64,
    /// Deadband in units of the field uncertainty of one measurement.
    pub deadband_sigmas: f64,
    pub closed_loop: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StabilizationSample {
    pub t: f64,
    pub field: f64,
    /// Proxy frequency at the true field (Hz).
    pub proxy_frequency: f64,
    pub current: f64,
    pub relative_deviation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Correction {
    pub t: f64,
    pub measured_error: f64,
    pub applied: bool,
    pub current: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilizationTrace {
    pub samples: Vec<StabilizationSample>,
    pub corrections: Vec<Correction>,
    /// RMS of `(B − B_target)/B_target` over all samples.
    pub rms_relative_deviation: f64,
    pub max_relative_deviation: f64,
    /// Free-running drift of the environment per hour, relative to the target.
    pub open_loop_drift_per_hour: f64,
}

impl StabilizationConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let range = |what: &str, v: f64| DynamicsError::RangeError(format!("{what} = {v}"));
        if !(self.target_field > 0.0) {
            return Err(range("target field", self.target_field));
        }
        if self.closed_loop && !(INTERVAL_RANGE.0..=INTERVAL_RANGE.1).contains(&self.interval) {
            return Err(DynamicsError::RangeError(format!(
                "control interval {} s outside [{}, {}] s",
                self.interval, INTERVAL_RANGE.0, INTERVAL_RANGE.1
            )));
        }
        if !(self.duration > 0.0) {
            return Err(range("duration", self.duration));
        }
        if !(self.sample_period > 0.0 && self.sample_period <= self.duration) {
            return Err(range("sample period", self.sample_period));
        }
        if !(self.measurement_sigma >= 0.0) {
            return Err(range("measurement σ", self.measurement_sigma));
        }
        if !(self.deadband_sigmas >= 0.0) {
            return Err(range("deadband", self.deadband_sigmas));
        }
        if self.coil.axis != CoilAxis::Longitudinal {
            return Err(DynamicsError::RangeError(
                "field-magnitude control needs the longitudinal coil pair".into(),
            ));
        }
        self.coil.field()?;
        Ok(())
    }
}

/// Runs the control loop against the drift and OU components of `noise`.
pub fn stabilization_loop(
    cfg: &StabilizationConfig,
    proxy: &TransitionSpec,
    noise: &NoiseModel,
) -> Result<StabilizationTrace, DynamicsError> {
    cfg.validate()?;
    noise.validate()?;
    if proxy.sensitivity == 0.0 {
        return Err(DynamicsError::RangeError("proxy transition is field-insensitive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let meas = Normal::new(0.0, cfg.measurement_sigma).map_err(|e| DynamicsError::RangeError(e.to_string()))?;
    let sigma_b = cfg.measurement_sigma / proxy.sensitivity.abs();
    let deadband = cfg.deadband_sigmas * sigma_b;
    let detuning = |db: f64| proxy.sensitivity * db + 0.5 * proxy.curvature * db * db;

    let mut coil = cfg.coil;
    let z: f64 = StandardNormal.sample(&mut rng);
    let mut ou = noise.ou_rms * z;
    let n = (cfg.duration / cfg.sample_period).round() as usize;
    let steps_per_interval = (cfg.interval / cfg.sample_period).round().max(1.0) as usize;
    let decay = (-cfg.sample_period / noise.ou_correlation_time).exp();
    let kick = noise.ou_rms * (1.0 - decay * decay).sqrt();

    let mut samples = Vec::with_capacity(n + 1);
    let mut corrections = Vec::new();
    for k in 0..=n {
        let t = k as f64 * cfg.sample_period;
        if k > 0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            ou = ou * decay + kick * z;
        }
        let env = noise.drift_rate * t + ou;
        if cfg.closed_loop && k > 0 && k % steps_per_interval == 0 {
            let db = env + coil.calibration * coil.current;
            let measured = detuning(db) + meas.sample(&mut rng);
            let error = measured / proxy.sensitivity;
            let applied = error.abs() > deadband;
            if applied {
                let current = coil.quantise(coil.current - error / coil.calibration);
                if current.abs() > coil.max_current {
                    return Err(DynamicsError::ActuatorSaturation {
                        current,
                        max: coil.max_current,
                    });
                }
                coil.current = current;
            }
            corrections.push(Correction {
                t,
                measured_error: error,
                applied,
                current: coil.current,
            });
        }
        let db = env + coil.calibration * coil.current;
        samples.push(StabilizationSample {
            t,
            field: cfg.target_field + db,
            proxy_frequency: proxy.frequency + detuning(db),
            current: coil.current,
            relative_deviation: db / cfg.target_field,
        });
    }
    let rms = (samples.iter().map(|s| s.relative_deviation.powi(2)).sum::<f64>() / samples.len() as f64).sqrt();
    let max = samples
        .iter()
        .map(|s| s.relative_deviation.abs())
        .fold(0.0, f64::max);
    Ok(StabilizationTrace {
        samples,
        corrections,
        rms_relative_deviation: rms,
        max_relative_deviation: max,
        open_loop_drift_per_hour: noise.drift_rate * 3600.0 / cfg.target_field,
    })
}
