use serde::Serialize;

use super::{MagneticsError, Vec3};

/// Orientation of a shim-coil pair in the frame where `z` is the magnet symmetry axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CoilAxis {
    Longitudinal,
    Vertical,
    Horizontal,
}

impl CoilAxis {
    pub fn unit(self) -> Vec3 {
        match self {
            CoilAxis::Horizontal => Vec3::x(),
            CoilAxis::Vertical => Vec3::y(),
            CoilAxis::Longitudinal => Vec3::z(),
        }
    }
}

/// Shim-coil pair modelled as an ideal uniform field source at the ion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoilPair {
    pub axis: CoilAxis,
    /// Field per unit current (T/A).
    pub calibration: f64,
    pub current: f64,
    /// Smallest programmable current step (A).
    pub current_resolution: f64,
    pub max_current: f64,
}

impl CoilPair {
    pub fn field(&self) -> Result<Vec3, MagneticsError> {
        if !(self.calibration > 0.0) {
            return Err(MagneticsError::InvalidArgument(format!(
                "coil calibration must be positive, got {}",
                self.calibration
            )));
        }
        if !(self.current.abs() <= self.max_current) {
            return Err(MagneticsError::CurrentOutOfRange {
                current: self.current,
                max: self.max_current,
            });
        }
        Ok(self.axis.unit() * (self.calibration * self.current))
    }

    /// Rounds a requested current to the programmable grid.
    pub fn quantise(&self, current: f64) -> f64 {
        if self.current_resolution > 0.0 {
            (current / self.current_resolution).round() * self.current_resolution
        } else {
            current
        }
    }
}

/// Σ axis × calibration × current over all pairs.
pub fn coil_field(pairs: &[CoilPair]) -> Result<Vec3, MagneticsError> {
    pairs
        .iter()
        .try_fold(Vec3::zeros(), |acc, p| Ok(acc + p.field()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(axis: CoilAxis, cal: f64, current: f64) -> CoilPair {
        CoilPair {
            axis,
            calibration: cal,
            current,
            current_resolution: 3e-6,
            max_current: 0.1,
        }
    }

    #[test]
    fn calibration_products() {
        let b = coil_field(&[pair(CoilAxis::Longitudinal, 0.26e-3, 0.1)]).unwrap();
        assert!((b.z - 26e-6).abs() < 1e-15);
        assert_eq!((b.x, b.y), (0.0, 0.0));
        let b = coil_field(&[pair(CoilAxis::Vertical, 1.3e-3, 0.01)]).unwrap();
        assert!((b.y - 13e-6).abs() < 1e-15);
        let b = coil_field(&[pair(CoilAxis::Horizontal, 0.24e-3, 0.0)]).unwrap();
        assert_eq!(b, Vec3::zeros());
    }

    #[test]
    fn superposes_and_checks_limits() {
        let pairs = [
            pair(CoilAxis::Longitudinal, 0.26e-3, 0.05),
            pair(CoilAxis::Vertical, 1.3e-3, -0.02),
        ];
        let b = coil_field(&pairs).unwrap();
        assert!((b.z - 13e-6).abs() < 1e-15 && (b.y + 26e-6).abs() < 1e-15);
        let err = coil_field(&[pair(CoilAxis::Vertical, 1.3e-3, 0.2)]).unwrap_err();
        assert!(matches!(err, MagneticsError::CurrentOutOfRange { .. }));
    }

    #[test]
    fn quantisation_grid() {
        let p = pair(CoilAxis::Longitudinal, 0.26e-3, 0.0);
        let q = p.quantise(1.00001e-3);
        assert!(((q / 3e-6).round() * 3e-6 - q).abs() < 1e-18);
    }
}
