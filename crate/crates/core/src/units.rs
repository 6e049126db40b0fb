//! Strict parsing of physical quantities with unit suffixes.
//!
//! Quantities are written as `<number><unit>` or `<number> <unit>`, e.g. `223 mm`,
//! `10.9584mT`, `0.26 mT/A`, `20.77 mHz/V^2`. A unit expression is a product of
//! prefixed base units, optionally divided by a second product. Every configured
//! value declares the dimension it expects; a mismatch is an error, never a silent
//! conversion.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnitError {
    #[error("cannot parse quantity `{0}`")]
    Malformed(String),
    #[error("unknown unit `{0}`")]
    UnknownUnit(String),
    #[error("quantity `{value}` has dimension {found}, expected {expected}")]
    WrongDimension {
        value: String,
        found: Dimension,
        expected: Dimension,
    },
    #[error("quantity `{0}` is missing a unit suffix")]
    MissingUnit(String),
}

/// Exponents of the base dimensions: metre, tesla, second, ampere, volt, kelvin, radian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Dimension(pub [i8; 7]);

const SYMBOLS: [&str; 7] = ["m", "T", "s", "A", "V", "K", "rad"];

impl Dimension {
    pub const NONE: Dimension = Dimension([0; 7]);
    pub const LENGTH: Dimension = Dimension([1, 0, 0, 0, 0, 0, 0]);
    pub const FIELD: Dimension = Dimension([0, 1, 0, 0, 0, 0, 0]);
    pub const TIME: Dimension = Dimension([0, 0, 1, 0, 0, 0, 0]);
    pub const FREQUENCY: Dimension = Dimension([0, 0, -1, 0, 0, 0, 0]);
    pub const CURRENT: Dimension = Dimension([0, 0, 0, 1, 0, 0, 0]);
    pub const VOLTAGE: Dimension = Dimension([0, 0, 0, 0, 1, 0, 0]);
    pub const ANGLE: Dimension = Dimension([0, 0, 0, 0, 0, 0, 1]);
    pub const PER_KELVIN: Dimension = Dimension([0, 0, 0, 0, 0, -1, 0]);
    pub const FIELD_PER_CURRENT: Dimension = Dimension([0, 1, 0, -1, 0, 0, 0]);
    pub const FREQUENCY_PER_FIELD: Dimension = Dimension([0, -1, -1, 0, 0, 0, 0]);
    pub const FREQUENCY_PER_VOLT2: Dimension = Dimension([0, 0, -1, 0, -2, 0, 0]);

    fn add(self, other: Dimension, sign: i8) -> Dimension {
        let mut out = self.0;
        for (o, e) in out.iter_mut().zip(other.0) {
            *o += sign * e;
        }
        Dimension(out)
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Dimension::NONE {
            return write!(f, "[dimensionless]");
        }
        let parts: Vec<String> = SYMBOLS
            .iter()
            .zip(self.0)
            .filter(|(_, e)| *e != 0)
            .map(|(s, e)| if e == 1 { s.to_string() } else { format!("{s}^{e}") })
            .collect();
        write!(f, "[{}]", parts.join("·"))
    }
}

fn base_unit(token: &str) -> Option<(f64, Dimension)> {
    let d = |i: usize| {
        let mut e = [0i8; 7];
        e[i] = 1;
        Dimension(e)
    };
    Some(match token {
        "m" => (1.0, d(0)),
        "T" => (1.0, d(1)),
        "G" => (1e-4, d(1)),
        "s" => (1.0, d(2)),
        "min" => (60.0, d(2)),
        "h" => (3600.0, d(2)),
        "Hz" => (1.0, Dimension::FREQUENCY),
        "A" => (1.0, d(3)),
        "V" => (1.0, d(4)),
        "K" => (1.0, d(5)),
        "rad" => (1.0, d(6)),
        "deg" => (std::f64::consts::PI / 180.0, d(6)),
        _ => return None,
    })
}

fn prefix(c: char) -> Option<f64> {
    Some(match c {
        'G' => 1e9,
        'M' => 1e6,
        'k' => 1e3,
        'c' => 1e-2,
        'm' => 1e-3,
        'u' | 'µ' | 'μ' => 1e-6,
        'n' => 1e-9,
        'p' => 1e-12,
        _ => return None,
    })
}

fn parse_factor(token: &str) -> Result<(f64, Dimension), UnitError> {
    let (body, exp) = match token.split_once('^') {
        Some((b, e)) => (
            b,
            e.parse::<i8>()
                .map_err(|_| UnitError::UnknownUnit(token.to_string()))?,
        ),
        None => {
            // allow trailing digit exponents like `V2`
            let split = token
                .char_indices()
                .find(|(_, c)| c.is_ascii_digit())
                .map(|(i, _)| i);
            match split {
                Some(i) if i > 0 => (
                    &token[..i],
                    token[i..]
                        .parse::<i8>()
                        .map_err(|_| UnitError::UnknownUnit(token.to_string()))?,
                ),
                _ => (token, 1),
            }
        }
    };
    let (scale, dim) = if let Some(u) = base_unit(body) {
        u
    } else {
        let mut chars = body.chars();
        let first = chars.next().ok_or_else(|| UnitError::UnknownUnit(token.into()))?;
        let rest = chars.as_str();
        match (prefix(first), base_unit(rest)) {
            (Some(p), Some((s, d))) => (p * s, d),
            _ => return Err(UnitError::UnknownUnit(token.to_string())),
        }
    };
    let mut out = Dimension::NONE;
    for _ in 0..exp.unsigned_abs() {
        out = out.add(dim, exp.signum());
    }
    Ok((scale.powi(exp as i32), out))
}

fn parse_product(expr: &str) -> Result<(f64, Dimension), UnitError> {
    let mut scale = 1.0;
    let mut dim = Dimension::NONE;
    for token in expr.split(['*', '·']).map(str::trim).filter(|t| !t.is_empty()) {
        if token == "1" {
            continue;
        }
        let (s, d) = parse_factor(token)?;
        scale *= s;
        dim = dim.add(d, 1);
    }
    Ok((scale, dim))
}

/// Parses a unit expression into an SI scale factor and a dimension.
pub fn parse_unit(expr: &str) -> Result<(f64, Dimension), UnitError> {
    let expr = expr.trim();
    match expr.split_once('/') {
        None => parse_product(expr),
        Some((num, den)) => {
            if den.contains('/') {
                return Err(UnitError::UnknownUnit(expr.to_string()));
            }
            let (sn, dn) = parse_product(num)?;
            let (sd, dd) = parse_product(den)?;
            Ok((sn / sd, dn.add(dd, -1)))
        }
    }
}

/// Parses `<number><unit>` and converts to SI, requiring the given dimension.
pub fn parse_quantity(text: &str, expected: Dimension) -> Result<f64, UnitError> {
    let t = text.trim();
    let split = t
        .char_indices()
        .find(|&(i, c)| {
            !(c.is_ascii_digit()
                || c == '.'
                || c == '+'
                || c == '-'
                || ((c == 'e' || c == 'E')
                    && t[i + 1..]
                        .chars()
                        .next()
                        .is_some_and(|n| n.is_ascii_digit() || n == '-' || n == '+')))
        })
        .map(|(i, _)| i)
        .unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| UnitError::Malformed(text.to_string()))?;
    let unit = unit.trim();
    if unit.is_empty() {
        if expected == Dimension::NONE {
            return Ok(value);
        }
        return Err(UnitError::MissingUnit(text.to_string()));
    }
    let (scale, dim) = parse_unit(unit)?;
    if dim != expected {
        return Err(UnitError::WrongDimension {
            value: text.to_string(),
            found: dim,
            expected,
        });
    }
    Ok(value * scale)
}

macro_rules! quantity {
    ($(#[$doc:meta])* $name:ident, $dim:expr, $si:literal) => {
        $(#[$doc])*
        #[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default)]
        pub struct $name(pub f64);

        impl $name {
            pub const DIMENSION: Dimension = $dim;

            pub fn si(self) -> f64 {
                self.0
            }

            pub fn parse(text: &str) -> Result<Self, UnitError> {
                parse_quantity(text, $dim).map($name)
            }
        }

        impl std::str::FromStr for $name {
            type Err = UnitError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::parse(s)
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&format!("{:e} {}", self.0, $si))
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                struct V;
                impl<'de> Visitor<'de> for V {
                    type Value = $name;
                    fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                        write!(f, "a quantity string with unit {}", $si)
                    }
                    fn visit_str<E: de::Error>(self, v: &str) -> Result<$name, E> {
                        $name::parse(v).map_err(E::custom)
                    }
                }
                d.deserialize_str(V)
            }
        }
    };
}

quantity!(Length, Dimension::LENGTH, "m");
quantity!(Field, Dimension::FIELD, "T");
quantity!(Time, Dimension::TIME, "s");
quantity!(Frequency, Dimension::FREQUENCY, "Hz");
quantity!(Current, Dimension::CURRENT, "A");
quantity!(Voltage, Dimension::VOLTAGE, "V");
quantity!(Angle, Dimension::ANGLE, "rad");
quantity!(PerKelvin, Dimension::PER_KELVIN, "1/K");
quantity!(FieldPerCurrent, Dimension::FIELD_PER_CURRENT, "T/A");
quantity!(FrequencyPerField, Dimension::FREQUENCY_PER_FIELD, "Hz/T");
quantity!(
    /// Slope of a frequency shift against squared voltage.
    FrequencyPerVolt2,
    Dimension::FREQUENCY_PER_VOLT2,
    "Hz/V^2"
);

/// Parses a field-per-square-root-length coefficient written as `0.262 uT/um^1/2`,
/// returning T/m^½.
pub fn parse_field_per_sqrt_length(text: &str) -> Result<f64, UnitError> {
    parse_field_per_sqrt(text, Dimension::LENGTH)
}

/// Parses an amplitude spectral density written as `52 pT/Hz^1/2`, returning T/√Hz.
pub fn parse_field_per_sqrt_frequency(text: &str) -> Result<f64, UnitError> {
    parse_field_per_sqrt(text, Dimension::FREQUENCY)
}

fn parse_field_per_sqrt(text: &str, denominator: Dimension) -> Result<f64, UnitError> {
    let t = text.trim();
    let Some(stripped) = t.strip_suffix("^1/2") else {
        return Err(UnitError::Malformed(text.to_string()));
    };
    let (field_part, unit) = stripped
        .rsplit_once('/')
        .ok_or_else(|| UnitError::Malformed(text.to_string()))?;
    let field = parse_quantity(field_part, Dimension::FIELD)?;
    let (scale, dim) = parse_unit(unit)?;
    if dim != denominator {
        return Err(UnitError::WrongDimension {
            value: text.to_string(),
            found: dim,
            expected: denominator,
        });
    }
    Ok(field / scale.sqrt())
}
