//! Magnetic-field noise at the ion, sampled shot by shot.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::DynamicsError;

/// Which components of a [`NoiseModel`] are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NoiseKind {
    None,
    QuasiStatic,
    OrnsteinUhlenbeck,
    Drift,
    Composite,
}

/// Field fluctuations along the quantisation axis (all fields in T).
///
/// Each shot draws an independent quasi-static offset and starts the
/// Ornstein–Uhlenbeck process from its stationary distribution. The white term
/// is specified by its one-sided amplitude spectral density and enters the phase
/// linearly only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseModel {
    pub quasi_static_rms: f64,
    pub ou_rms: f64,
    pub ou_correlation_time: f64,
    /// T/√Hz.
    pub white_asd: f64,
    /// T/s.
    pub drift_rate: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::none()
    }
}

impl NoiseModel {
    pub fn none() -> Self {
        NoiseModel {
            quasi_static_rms: 0.0,
            ou_rms: 0.0,
            ou_correlation_time: 1.0,
            white_asd: 0.0,
            drift_rate: 0.0,
        }
    }

    pub fn quasi_static(rms: f64) -> Self {
        NoiseModel {
            quasi_static_rms: rms,
            ..NoiseModel::none()
        }
    }

    pub fn ornstein_uhlenbeck(rms: f64, correlation_time: f64) -> Self {
        NoiseModel {
            ou_rms: rms,
            ou_correlation_time: correlation_time,
            ..NoiseModel::none()
        }
    }

    pub fn drift(rate: f64) -> Self {
        NoiseModel {
            drift_rate: rate,
            ..NoiseModel::none()
        }
    }

    pub fn kind(&self) -> NoiseKind {
        let active = [
            (self.quasi_static_rms > 0.0, NoiseKind::QuasiStatic),
            (self.ou_rms > 0.0, NoiseKind::OrnsteinUhlenbeck),
            (self.white_asd > 0.0, NoiseKind::Composite),
            (self.drift_rate != 0.0, NoiseKind::Drift),
        ];
        let on: Vec<NoiseKind> = active.iter().filter(|a| a.0).map(|a| a.1).collect();
        match on.as_slice() {
            [] => NoiseKind::None,
            [one] => *one,
            _ => NoiseKind::Composite,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (name, v) in [
            ("quasi-static rms", self.quasi_static_rms),
            ("OU rms", self.ou_rms),
            ("white ASD", self.white_asd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(DynamicsError::InvalidNoise(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        if !(self.ou_correlation_time > 0.0 && self.ou_correlation_time.is_finite()) {
            return Err(DynamicsError::InvalidNoise(format!(
                "OU correlation time must be positive, got {}",
                self.ou_correlation_time
            )));
        }
        if !self.drift_rate.is_finite() {
            return Err(DynamicsError::InvalidNoise("drift rate is not finite".into()));
        }
        Ok(())
    }

    /// RMS of the components that are static on the scale of a short sequence.
    pub fn static_rms(&self) -> f64 {
        self.quasi_static_rms.hypot(self.ou_rms)
    }
}

/// Field integrals over one free-evolution window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindowIntegrals {
    /// ∫δB dt of the coloured components (T·s).
    pub linear: f64,
    /// ∫δB² dt of the coloured components (T²·s).
    pub quadratic: f64,
    /// ∫ white noise dt (T·s).
    pub white: f64,
}

/// Noise realisation of one shot.
pub struct ShotNoise<'a, R: Rng> {
    model: &'a NoiseModel,
    rng: &'a mut R,
    offset: f64,
    ou: f64,
    t: f64,
}

/// OU grid steps per correlation time.
const OU_STEPS_PER_TAU: f64 = 20.0;

impl<'a, R: Rng> ShotNoise<'a, R> {
    pub fn new(model: &'a NoiseModel, rng: &'a mut R) -> Self {
        let offset = if model.quasi_static_rms > 0.0 {
            model.quasi_static_rms * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        let ou = if model.ou_rms > 0.0 {
            model.ou_rms * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        ShotNoise {
            model,
            rng,
            offset,
            ou,
            t: 0.0,
        }
    }

    /// Shot with a prescribed quasi-static offset.
    pub fn with_offset(model: &'a NoiseModel, rng: &'a mut R, offset: f64) -> Self {
        let mut s = ShotNoise::new(model, rng);
        s.offset = offset;
        s
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Instantaneous coloured field.
    pub fn field_now(&self) -> f64 {
        self.offset + self.model.drift_rate * self.t + self.ou
    }

    /// Advances by `duration` with the field treated as frozen (finite pulses).
    pub fn hold(&mut self, duration: f64) -> f64 {
        let b = self.field_now();
        self.evolve_ou(duration, |_, _| {});
        self.t += duration;
        b
    }

    fn evolve_ou<F: FnMut(f64, f64)>(&mut self, duration: f64, mut visit: F) {
        if self.model.ou_rms == 0.0 {
            return;
        }
        let tau = self.model.ou_correlation_time;
        let n = ((duration / tau) * OU_STEPS_PER_TAU).ceil().max(2.0) as usize;
        let h = duration / n as f64;
        let decay = (-h / tau).exp();
        let kick = self.model.ou_rms * (1.0 - decay * decay).sqrt();
        visit(0.0, self.ou);
        for k in 1..=n {
            self.ou = self.ou * decay + kick * self.rng.sample::<f64, _>(StandardNormal);
            visit(k as f64 * h, self.ou);
        }
    }

    /// Integrates the field over a free-evolution window of length `duration`.
    pub fn window(&mut self, duration: f64) -> WindowIntegrals {
        let t0 = self.t;
        let q = self.offset;
        let d = self.model.drift_rate;
        let mut out = WindowIntegrals::default();
        if duration <= 0.0 {
            return out;
        }
        if self.model.ou_rms == 0.0 {
            // q + d t integrated exactly
            let t1 = t0 + duration;
            out.linear = q * duration + 0.5 * d * (t1 * t1 - t0 * t0);
            let cube = |t: f64| (q + d * t).powi(3);
            out.quadratic = if d == 0.0 {
                q * q * duration
            } else {
                (cube(t1) - cube(t0)) / (3.0 * d)
            };
        } else {
            let mut prev: Option<(f64, f64)> = None;
            let (mut lin, mut quad) = (0.0, 0.0);
            self.evolve_ou(duration, |s, x| {
                let b = q + d * (t0 + s) + x;
                if let Some((sp, bp)) = prev {
                    let h = s - sp;
                    lin += 0.5 * h * (b + bp);
                    quad += 0.5 * h * (b * b + bp * bp);
                }
                prev = Some((s, b));
            });
            out.linear = lin;
            out.quadratic = quad;
        }
        if self.model.white_asd > 0.0 {
            // two-sided density a²/2
            let sd = self.model.white_asd * (0.5 * duration).sqrt();
            out.white = sd * self.rng.sample::<f64, _>(StandardNormal);
        }
        self.t = t0 + duration;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kinds_and_validation() {
        assert_eq!(NoiseModel::none().kind(), NoiseKind::None);
        assert_eq!(NoiseModel::quasi_static(1e-7).kind(), NoiseKind::QuasiStatic);
        assert_eq!(NoiseModel::drift(1e-9).kind(), NoiseKind::Drift);
        let mut c = NoiseModel::quasi_static(1e-7);
        c.ou_rms = 1e-8;
        assert_eq!(c.kind(), NoiseKind::Composite);
        assert!(NoiseModel::ornstein_uhlenbeck(1e-8, 0.0).validate().is_err());
        assert!(NoiseModel::quasi_static(-1.0).validate().is_err());
    }

    #[test]
    fn static_noise_integrates_exactly() {
        let m = NoiseModel::quasi_static(1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut shot = ShotNoise::with_offset(&m, &mut rng, 2e-7);
        let w = shot.window(0.5);
        assert_eq!(w.linear, 2e-7 * 0.5);
        assert!((w.quadratic - 2e-14).abs() < 1e-28);
        let d = NoiseModel::drift(1e-9);
        let mut shot = ShotNoise::new(&d, &mut rng);
        shot.window(1.0);
        let w = shot.window(1.0);
        assert!((w.linear - 1.5e-9).abs() < 1e-24);
        assert!((w.quadratic - 7.0 / 3.0 * 1e-18).abs() < 1e-30);
    }

    #[test]
    fn ou_integral_variance() {
        // Var ∫x = 2σ²τ[T − τ(1 − e^{−T/τ})]
        let (sigma, tau, t) = (1.0, 0.01, 0.05);
        let m = NoiseModel::ornstein_uhlenbeck(sigma, tau);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4000;
        let mut acc = 0.0;
        let mut acc_q = 0.0;
        for _ in 0..n {
            let mut shot = ShotNoise::new(&m, &mut rng);
            let w = shot.window(t);
            acc += w.linear * w.linear;
            acc_q += w.quadratic;
        }
        let var = acc / n as f64;
        let expected = 2.0 * sigma * sigma * tau * (t - tau * (1.0 - (-t / tau).exp()));
        assert!((var / expected - 1.0).abs() < 0.08, "{var} vs {expected}");
        assert!((acc_q / n as f64 / (sigma * sigma * t) - 1.0).abs() < 0.05);
    }
}
