use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{eigensystem, HyperfineError, HyperfineSystem, StateLabel};

/// Transitions probed in the benchmark measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransitionTag {
    MW0,
    MW1,
    MW2,
    RF0,
}

impl TransitionTag {
    pub const ALL: [TransitionTag; 4] = [
        TransitionTag::MW0,
        TransitionTag::MW1,
        TransitionTag::MW2,
        TransitionTag::RF0,
    ];

    /// Level pair of an I = 5/2, J = 1/2 ion with a negative hyperfine constant.
    pub fn labels(self) -> TransitionLabels {
        let (lower, upper) = match self {
            TransitionTag::MW0 => (StateLabel::new(3, 3), StateLabel::new(2, 2)),
            TransitionTag::MW1 => (StateLabel::new(3, 1), StateLabel::new(2, 2)),
            TransitionTag::MW2 => (StateLabel::new(3, 1), StateLabel::new(2, 0)),
            TransitionTag::RF0 => (StateLabel::new(2, 2), StateLabel::new(2, 1)),
        };
        TransitionLabels { lower, upper }
    }
}

impl fmt::Display for TransitionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for TransitionTag {
    type Err = HyperfineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MW0" => Ok(TransitionTag::MW0),
            "MW1" => Ok(TransitionTag::MW1),
            "MW2" => Ok(TransitionTag::MW2),
            "RF0" => Ok(TransitionTag::RF0),
            _ => Err(HyperfineError::MalformedLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TransitionLabels {
    pub lower: StateLabel,
    pub upper: StateLabel,
}

/// Evaluated transition at one field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionSpec {
    pub tag: TransitionTag,
    pub lower: StateLabel,
    pub upper: StateLabel,
    pub frequency: f64,
    /// dν/dB (Hz/T).
    pub sensitivity: f64,
    /// d²ν/dB² (Hz/T²).
    pub curvature: f64,
    /// Resonant Rabi frequency of the drive (Hz).
    pub coupling_strength: f64,
}

impl TransitionSpec {
    pub fn evaluate(
        sys: &HyperfineSystem,
        b: f64,
        tag: TransitionTag,
        coupling_strength: f64,
    ) -> Result<Self, HyperfineError> {
        let labels = tag.labels();
        let frequency = transition_frequency(sys, b, labels)?;
        if !(frequency > 0.0) {
            return Err(HyperfineError::NonPositiveFrequency {
                lower: labels.lower,
                upper: labels.upper,
                frequency,
            });
        }
        Ok(TransitionSpec {
            tag,
            lower: labels.lower,
            upper: labels.upper,
            frequency,
            sensitivity: field_sensitivity(sys, b, labels)?,
            curvature: curvature(sys, b, labels)?,
            coupling_strength,
        })
    }
}

/// `E_upper − E_lower` (Hz).
pub fn transition_frequency(
    sys: &HyperfineSystem,
    b: f64,
    labels: TransitionLabels,
) -> Result<f64, HyperfineError> {
    let es = eigensystem(sys, b)?;
    Ok(es.energy(labels.upper)? - es.energy(labels.lower)?)
}

/// Hellmann–Feynman dν/dB (Hz/T): difference of the Zeeman-operator expectations.
pub fn field_sensitivity(
    sys: &HyperfineSystem,
    b: f64,
    labels: TransitionLabels,
) -> Result<f64, HyperfineError> {
    let es = eigensystem(sys, b)?;
    let (mz, _) = sys.moment_operators(&sys.operators());
    let up = es.index(labels.upper)?;
    let lo = es.index(labels.lower)?;
    Ok(es.matrix_element(&mz, up, up) - es.matrix_element(&mz, lo, lo))
}

/// Central-difference dν/dB with step `h` (T), one-sided at zero field.
pub fn field_sensitivity_numeric(
    sys: &HyperfineSystem,
    b: f64,
    labels: TransitionLabels,
    h: f64,
) -> Result<f64, HyperfineError> {
    let lo = (b - h).max(0.0);
    let hi = b + h;
    Ok((transition_frequency(sys, hi, labels)? - transition_frequency(sys, lo, labels)?)
        / (hi - lo))
}

/// d²ν/dB² by Richardson-extrapolated central differences (Hz/T²).
pub fn curvature(
    sys: &HyperfineSystem,
    b: f64,
    labels: TransitionLabels,
) -> Result<f64, HyperfineError> {
    let h = 1e-4f64.min(0.5 * b).max(1e-6);
    let f0 = transition_frequency(sys, b, labels)?;
    let second = |h: f64| -> Result<f64, HyperfineError> {
        let fp = transition_frequency(sys, b + h, labels)?;
        let fm = transition_frequency(sys, (b - h).max(0.0), labels)?;
        Ok((fp - 2.0 * f0 + fm) / (h * h))
    };
    let coarse = second(h)?;
    let fine = second(0.5 * h)?;
    Ok((4.0 * fine - coarse) / 3.0)
}

/// Coefficient `q` of `Δν ≈ q ΔB²` (Hz/T²), half the curvature.
pub fn quadratic_coefficient(
    sys: &HyperfineSystem,
    b: f64,
    labels: TransitionLabels,
) -> Result<f64, HyperfineError> {
    Ok(0.5 * curvature(sys, b, labels)?)
}

/// Field of vanishing first-order sensitivity within ±1 mT of `guess`.
pub fn find_clock_field(
    sys: &HyperfineSystem,
    labels: TransitionLabels,
    guess: f64,
) -> Result<f64, HyperfineError> {
    find_clock_field_in(sys, labels, (guess - 1e-3).max(0.0), guess + 1e-3)
}

/// Root of dν/dB inside `[lo, hi]` by scanning for a sign change and refining with
/// Illinois-modified regula falsi.
pub fn find_clock_field_in(
    sys: &HyperfineSystem,
    labels: TransitionLabels,
    lo: f64,
    hi: f64,
) -> Result<f64, HyperfineError> {
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(HyperfineError::InvalidField(if lo < 0.0 { lo } else { hi }));
    }
    let s = |b: f64| field_sensitivity(sys, b, labels);
    const SCAN: usize = 20;
    let mut bracket = None;
    let mut b_prev = lo;
    let mut s_prev = s(lo)?;
    for k in 1..=SCAN {
        let b = lo + (hi - lo) * k as f64 / SCAN as f64;
        let sb = s(b)?;
        if s_prev == 0.0 {
            return Ok(b_prev);
        }
        if s_prev.signum() != sb.signum() {
            bracket = Some((b_prev, s_prev, b, sb));
            break;
        }
        b_prev = b;
        s_prev = sb;
    }
    let (mut a, mut fa, mut c, mut fc) = bracket.ok_or(HyperfineError::NoRootInBracket { lo, hi })?;
    let mut side = 0i8;
    for _ in 0..200 {
        let x = (a * fc - c * fa) / (fc - fa);
        let x = if x > a.min(c) && x < a.max(c) { x } else { 0.5 * (a + c) };
        let fx = s(x)?;
        if fx.abs() < 1e-3 || (c - a).abs() < 1e-15 {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
            if side == -1 {
                fc *= 0.5;
            }
            side = -1;
        } else {
            c = x;
            fc = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(if fa.abs() < fc.abs() { a } else { c })
}

/// One point of a detuning curve around the clock field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetuningPoint {
    pub field: f64,
    /// `field − B*` (T).
    pub offset: f64,
    /// `ν(field) − ν(B*)` (Hz).
    pub detuning: f64,
}

/// Frequency offsets from the clock point over `n` evenly spaced fields in
/// `[b_min, b_max]`; the clock field is located inside the same range.
pub fn detuning_curve(
    sys: &HyperfineSystem,
    labels: TransitionLabels,
    b_min: f64,
    b_max: f64,
    n: usize,
) -> Result<Vec<DetuningPoint>, HyperfineError> {
    let b_star = find_clock_field_in(sys, labels, b_min, b_max)?;
    let f_star = transition_frequency(sys, b_star, labels)?;
    let n = n.max(2);
    (0..n)
        .map(|k| {
            let field = b_min + (b_max - b_min) * k as f64 / (n - 1) as f64;
            Ok(DetuningPoint {
                field,
                offset: field - b_star,
                detuning: transition_frequency(sys, field, labels)? - f_star,
            })
        })
        .collect()
}
