//! Run configuration read from TOML. Every physical value carries a unit suffix;
//! missing sections take the defaults of the benchmark setup and unknown keys are
//! rejected.

use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::ac_zeeman::{infer_bosc, transition_ac_sensitivity, AcZeemanError, Polarisation, SensingRun};
use crate::dynamics::{NoiseModel, PulseModel, StabilizationConfig};
use crate::hyperfine::{HyperfineError, HyperfineSystem, NuclearGConvention, TransitionSpec, TransitionTag};
use crate::magnetics::{CoilAxis, CoilPair, MagnetAssembly, MagneticsError, RingMagnet};
use crate::units::{
    parse_field_per_sqrt_frequency, parse_field_per_sqrt_length, Angle, Current, Field, FieldPerCurrent,
    Frequency, FrequencyPerField, FrequencyPerVolt2, Length, PerKelvin, Time, UnitError, Voltage,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Unit(#[from] UnitError),
    #[error("invalid magnet configuration: {0}")]
    Magnetics(#[from] MagneticsError),
    #[error("invalid atomic configuration: {0}")]
    Hyperfine(#[from] HyperfineError),
}

macro_rules! sqrt_quantity {
    ($name:ident, $parse:ident, $unit:literal) => {
        #[derive(Debug, Clone, Copy, PartialEq, Default)]
        pub struct $name(pub f64);

        impl $name {
            pub fn parse(text: &str) -> Result<Self, UnitError> {
                $parse(text).map($name)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&format!("{:e} {}", self.0, $unit))
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                $name::parse(&s).map_err(de::Error::custom)
            }
        }
    };
}

sqrt_quantity!(FieldPerSqrtLength, parse_field_per_sqrt_length, "T/m^1/2");
sqrt_quantity!(SpectralDensity, parse_field_per_sqrt_frequency, "T/Hz^1/2");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MagnetConfig {
    pub inner_radius: Length,
    pub outer_radius: Length,
    pub thickness: Length,
    pub remanence: Field,
    pub rings_per_stack: usize,
    pub face_distance: Length,
    pub temperature_coefficient: PerKelvin,
}

impl Default for MagnetConfig {
    fn default() -> Self {
        MagnetConfig {
            inner_radius: Length(29e-3),
            outer_radius: Length(51e-3),
            thickness: Length(4e-3),
            remanence: Field(1.17),
            rings_per_stack: 3,
            face_distance: Length(223e-3),
            temperature_coefficient: PerKelvin(-1.2e-3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoilConfig {
    pub longitudinal_calibration: FieldPerCurrent,
    pub current_resolution: Current,
    pub max_current: Current,
}

impl Default for CoilConfig {
    fn default() -> Self {
        CoilConfig {
            longitudinal_calibration: FieldPerCurrent(0.26e-3),
            current_resolution: Current(3e-6),
            max_current: Current(0.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AtomConfig {
    pub nuclear_spin: f64,
    pub electronic_spin: f64,
    pub hyperfine_constant: Frequency,
    pub electronic_g: f64,
    pub nuclear_g: f64,
    pub nuclear_g_convention: NuclearGConvention,
    pub bohr_magneton: FrequencyPerField,
}

impl Default for AtomConfig {
    fn default() -> Self {
        let mg = HyperfineSystem::magnesium_25();
        AtomConfig {
            nuclear_spin: mg.nuclear_spin(),
            electronic_spin: mg.electronic_spin(),
            hyperfine_constant: Frequency(mg.hyperfine_constant),
            electronic_g: mg.electronic_g,
            nuclear_g: mg.nuclear_g,
            nuclear_g_convention: NuclearGConvention::BohrMagneton,
            bohr_magneton: FrequencyPerField(mg.bohr_magneton),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OperatingPoint {
    pub field: Field,
    pub u_rf: Voltage,
    pub delta_u_rf: Voltage,
    pub rf_frequency: Frequency,
    pub tilt: Angle,
    /// Measured slope of the a.c. shift against U_RF².
    pub acz_slope: FrequencyPerVolt2,
    pub ramp_duration: Time,
    pub spatial_coefficient: FieldPerSqrtLength,
}

impl Default for OperatingPoint {
    fn default() -> Self {
        OperatingPoint {
            field: Field(10.9584e-3),
            u_rf: Voltage(79.5),
            delta_u_rf: Voltage(79.5),
            rf_frequency: Frequency(57.3e6),
            tilt: Angle(30f64.to_radians()),
            acz_slope: FrequencyPerVolt2(20.77e-3),
            ramp_duration: Time(80e-6),
            spatial_coefficient: FieldPerSqrtLength(0.262e-6 / 1e-3),
        }
    }
}

/// Resonant Rabi frequencies of the drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Couplings {
    pub mw0: Frequency,
    pub mw1: Frequency,
    pub mw2: Frequency,
    pub rf0: Frequency,
}

impl Default for Couplings {
    fn default() -> Self {
        Couplings {
            mw0: Frequency(161e3),
            mw1: Frequency(38.3e3),
            mw2: Frequency(28.5e3),
            rf0: Frequency(286.0),
        }
    }
}

impl Couplings {
    pub fn get(&self, tag: TransitionTag) -> f64 {
        match tag {
            TransitionTag::MW0 => self.mw0.si(),
            TransitionTag::MW1 => self.mw1.si(),
            TransitionTag::MW2 => self.mw2.si(),
            TransitionTag::RF0 => self.rf0.si(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Absent: calibrated so that `calibration_transition` decays with `target_tau`.
    pub quasi_static_rms: Option<Field>,
    pub calibration_transition: TransitionTag,
    pub target_tau: Time,
    pub ou_rms: Field,
    pub ou_correlation_time: Time,
    pub white_asd: SpectralDensity,
    /// Open-loop drift of |B| relative to the operating field, per hour.
    pub drift_per_hour: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            quasi_static_rms: None,
            calibration_transition: TransitionTag::MW2,
            target_tau: Time(6.6),
            ou_rms: Field(50e-9),
            ou_correlation_time: Time(10e-3),
            white_asd: SpectralDensity(52e-12),
            drift_per_hour: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub seed: u64,
    pub shots: u32,
    pub phases: usize,
    pub t_points: usize,
    pub t_max: Time,
    pub float_baseline: bool,
    pub pulse_model: PulseModel,
    pub echo_first_arm: Time,
    pub echo_last_arm: Time,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            seed: 1,
            shots: 200,
            phases: 12,
            t_points: 8,
            t_max: Time(1.5),
            float_baseline: true,
            pulse_model: PulseModel::Instantaneous,
            echo_first_arm: Time(1e-3),
            echo_last_arm: Time(1.2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilizationSettings {
    pub interval: Time,
    pub duration: Time,
    pub sample_period: Time,
    pub measurement_sigma: Frequency,
    pub deadband_sigmas: f64,
    pub closed_loop: bool,
}

impl Default for StabilizationSettings {
    fn default() -> Self {
        StabilizationSettings {
            interval: Time(600.0),
            duration: Time(8.0 * 3600.0),
            sample_period: Time(10.0),
            measurement_sigma: Frequency(500.0),
            deadband_sigmas: 4.0,
            closed_loop: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub magnet: MagnetConfig,
    pub coils: CoilConfig,
    pub atom: AtomConfig,
    pub operating_point: OperatingPoint,
    pub couplings: Couplings,
    pub noise: NoiseConfig,
    pub simulation: SimulationConfig,
    pub stabilization: StabilizationSettings,
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match toml::to_string(self) {
            Ok(s) => f.write_str(&s),
            Err(_) => Err(fmt::Error),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")))
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Config::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let m = &self.magnet;
        positive("magnet.thickness", m.thickness.si())?;
        positive("magnet.remanence", m.remanence.si())?;
        positive("magnet.face_distance", m.face_distance.si())?;
        if m.rings_per_stack == 0 {
            return Err(ConfigError::Invalid("magnet.rings_per_stack must be at least 1".into()));
        }
        self.assembly()?;
        positive("coils.longitudinal_calibration", self.coils.longitudinal_calibration.si())?;
        positive("coils.max_current", self.coils.max_current.si())?;
        if !(self.coils.current_resolution.si() >= 0.0) {
            return Err(ConfigError::Invalid("coils.current_resolution must be non-negative".into()));
        }
        self.hyperfine_system()?;
        let op = &self.operating_point;
        positive("operating_point.field", op.field.si())?;
        positive("operating_point.u_rf", op.u_rf.si())?;
        positive("operating_point.rf_frequency", op.rf_frequency.si())?;
        positive("operating_point.acz_slope", op.acz_slope.si())?;
        positive("operating_point.spatial_coefficient", op.spatial_coefficient.0)?;
        if !(0.0..=op.u_rf.si()).contains(&op.delta_u_rf.si()) {
            return Err(ConfigError::Invalid("operating_point.delta_u_rf must lie in [0, u_rf]".into()));
        }
        for tag in TransitionTag::ALL {
            positive(&format!("couplings.{}", tag.to_string().to_lowercase()), self.couplings.get(tag))?;
        }
        let n = &self.noise;
        if let Some(q) = n.quasi_static_rms {
            if !(q.si() >= 0.0) {
                return Err(ConfigError::Invalid("noise.quasi_static_rms must be non-negative".into()));
            }
        }
        positive("noise.target_tau", n.target_tau.si())?;
        positive("noise.ou_correlation_time", n.ou_correlation_time.si())?;
        if !(n.ou_rms.si() >= 0.0 && n.white_asd.0 >= 0.0 && n.drift_per_hour.is_finite()) {
            return Err(ConfigError::Invalid("noise amplitudes must be non-negative".into()));
        }
        let s = &self.simulation;
        if s.shots == 0 || s.phases < 5 || s.t_points < 2 {
            return Err(ConfigError::Invalid(
                "simulation needs shots >= 1, phases >= 5 and t_points >= 2".into(),
            ));
        }
        positive("simulation.t_max", s.t_max.si())?;
        positive("simulation.echo_first_arm", s.echo_first_arm.si())?;
        if !(s.echo_last_arm.si() >= s.echo_first_arm.si()) {
            return Err(ConfigError::Invalid("simulation.echo_last_arm precedes echo_first_arm".into()));
        }
        let st = &self.stabilization;
        positive("stabilization.interval", st.interval.si())?;
        positive("stabilization.duration", st.duration.si())?;
        positive("stabilization.sample_period", st.sample_period.si())?;
        if !(st.measurement_sigma.si() >= 0.0 && st.deadband_sigmas >= 0.0) {
            return Err(ConfigError::Invalid("stabilization noise and deadband must be non-negative".into()));
        }
        Ok(())
    }

    pub fn assembly(&self) -> Result<MagnetAssembly, MagneticsError> {
        let m = &self.magnet;
        let ring = RingMagnet::new(
            m.inner_radius.si(),
            m.outer_radius.si(),
            m.thickness.si(),
            m.remanence.si(),
        )?;
        MagnetAssembly::symmetric_stacks(ring, m.rings_per_stack, m.face_distance.si(), m.temperature_coefficient.si())
    }

    pub fn hyperfine_system(&self) -> Result<HyperfineSystem, HyperfineError> {
        let a = &self.atom;
        HyperfineSystem::new(
            a.nuclear_spin,
            a.electronic_spin,
            a.hyperfine_constant.si(),
            a.electronic_g,
            a.nuclear_g,
            a.nuclear_g_convention,
            a.bohr_magneton.si(),
        )
    }

    pub fn transition(&self, tag: TransitionTag, field: f64) -> Result<TransitionSpec, HyperfineError> {
        TransitionSpec::evaluate(&self.hyperfine_system()?, field, tag, self.couplings.get(tag))
    }

    pub fn longitudinal_coil(&self) -> CoilPair {
        CoilPair {
            axis: CoilAxis::Longitudinal,
            calibration: self.coils.longitudinal_calibration.si(),
            current: 0.0,
            current_resolution: self.coils.current_resolution.si(),
            max_current: self.coils.max_current.si(),
        }
    }

    pub fn polarisation(&self) -> Polarisation {
        Polarisation::InPlaneUnpolarised {
            tilt: self.operating_point.tilt.si(),
        }
    }

    /// Quadratic a.c. sensitivity of MW2 at the operating point (Hz/T²).
    pub fn acz_sensitivity(&self) -> Result<f64, AcZeemanError> {
        transition_ac_sensitivity(
            &self.hyperfine_system()?,
            self.operating_point.field.si(),
            TransitionTag::MW2.labels(),
            self.operating_point.rf_frequency.si(),
            self.polarisation(),
        )
    }

    /// Sensing run at the operating point with `B_osc` inferred from the measured slope.
    pub fn sensing_run(&self) -> Result<SensingRun, AcZeemanError> {
        let op = &self.operating_point;
        let s = self.acz_sensitivity()?;
        // the measured slope is a magnitude; it carries the sign of the sensitivity
        let slope = op.acz_slope.si().copysign(s);
        Ok(SensingRun {
            u_rf: op.u_rf.si(),
            delta_u_rf: op.delta_u_rf.si(),
            t_p: self.simulation.echo_last_arm.si(),
            ramp_duration: op.ramp_duration.si(),
            tilt: op.tilt.si(),
            inferred_bosc: infer_bosc(slope, op.u_rf.si(), s)?,
            quadratic_sensitivity: s,
        })
    }

    /// Noise with the quasi-static term set to `quasi_static_rms` (T).
    pub fn noise_model(&self, quasi_static_rms: f64) -> NoiseModel {
        let n = &self.noise;
        NoiseModel {
            quasi_static_rms,
            ou_rms: n.ou_rms.si(),
            ou_correlation_time: n.ou_correlation_time.si(),
            white_asd: n.white_asd.0,
            drift_rate: n.drift_per_hour * self.operating_point.field.si() / 3600.0,
        }
    }

    pub fn stabilization(&self) -> StabilizationConfig {
        let st = &self.stabilization;
        StabilizationConfig {
            target_field: self.operating_point.field.si(),
            interval: st.interval.si(),
            duration: st.duration.si(),
            sample_period: st.sample_period.si(),
            coil: self.longitudinal_coil(),
            measurement_sigma: st.measurement_sigma.si(),
            deadband_sigmas: st.deadband_sigmas,
            closed_loop: st.closed_loop,
            seed: self.simulation.seed,
        }
    }
}
