//! Static fields of the permanent ring-magnet assembly and the shim coils.
//!
//! The solid-state source is two coaxial stacks of axially magnetised rings placed
//! mirror-symmetrically about `z = 0`. On the symmetry axis the field has a closed
//! form; off axis it is obtained from the equivalent magnetic surface charges on the
//! annular end faces (see [`surface_charge`]).

mod axial;
mod coils;
mod homogeneity;
pub mod quadrature;
pub mod surface_charge;

pub use axial::{assembly_axial_field, axial_ring_field, tuning_slope};
pub use coils::{coil_field, CoilAxis, CoilPair};
pub use homogeneity::{
    clock_spatial_curvature, fibonacci_sphere, gradient_bound, homogeneity_dsv,
    homogeneity_dsv_with, DsvSampling,
};
pub use surface_charge::{assembly_field_3d, SurfaceChargeSolver};

use serde::Serialize;
use thiserror::Error;

/// Vacuum permeability (H/m).
pub const MU_0: f64 = 1.256_637_062_12e-6;

pub type Vec3 = nalgebra::Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MagneticsError {
    #[error("invalid ring geometry: {0}")]
    InvalidRing(String),
    #[error("invalid assembly: {0}")]
    InvalidAssembly(String),
    #[error("position ({0:e}, {1:e}, {2:e}) m lies inside magnet material")]
    PositionInsideMagnet(f64, f64, f64),
    #[error("homogeneity search did not converge: {0}")]
    NonConvergent(String),
    #[error("coil current {current} A exceeds limit {max} A")]
    CurrentOutOfRange { current: f64, max: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// A single axially magnetised ring occupying `axial_offset <= z <= axial_offset + thickness`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RingMagnet {
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub thickness: f64,
    /// Remanence in tesla.
    pub remanence: f64,
    /// Axial coordinate of the ring face with the smaller `z`.
    pub axial_offset: f64,
    /// +1 for magnetisation along +z, -1 along -z.
    pub magnetisation_sign: f64,
}

impl RingMagnet {
    pub fn new(
        inner_radius: f64,
        outer_radius: f64,
        thickness: f64,
        remanence: f64,
    ) -> Result<Self, MagneticsError> {
        let ring = RingMagnet {
            inner_radius,
            outer_radius,
            thickness,
            remanence,
            axial_offset: 0.0,
            magnetisation_sign: 1.0,
        };
        ring.validate()?;
        Ok(ring)
    }

    pub fn validate(&self) -> Result<(), MagneticsError> {
        let finite = [
            self.inner_radius,
            self.outer_radius,
            self.thickness,
            self.remanence,
            self.axial_offset,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(MagneticsError::InvalidRing("non-finite parameter".into()));
        }
        if !(self.inner_radius > 0.0 && self.inner_radius < self.outer_radius) {
            return Err(MagneticsError::InvalidRing(format!(
                "need 0 < R_i < R_o, got R_i = {} m, R_o = {} m",
                self.inner_radius, self.outer_radius
            )));
        }
        if self.thickness <= 0.0 || self.remanence <= 0.0 {
            return Err(MagneticsError::InvalidRing(
                "thickness and remanence must be positive".into(),
            ));
        }
        if self.magnetisation_sign.abs() != 1.0 {
            return Err(MagneticsError::InvalidRing(
                "magnetisation sign must be +1 or -1".into(),
            ));
        }
        Ok(())
    }

    pub fn at_offset(mut self, axial_offset: f64) -> Self {
        self.axial_offset = axial_offset;
        self
    }

    /// Volume of magnet material (m³).
    pub fn volume(&self) -> f64 {
        std::f64::consts::PI
            * (self.outer_radius.powi(2) - self.inner_radius.powi(2))
            * self.thickness
    }

    /// Whether a point at cylindrical radius `rho` and height `z` is inside material.
    pub fn contains(&self, rho: f64, z: f64) -> bool {
        rho > self.inner_radius
            && rho < self.outer_radius
            && z > self.axial_offset
            && z < self.axial_offset + self.thickness
    }
}

/// Two mirror-placed stacks of identical rings, packed face to face.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MagnetAssembly {
    rings: Vec<RingMagnet>,
    face_distance: f64,
    temperature_coefficient: f64,
    rings_per_stack: usize,
    template: RingMagnet,
}

impl MagnetAssembly {
    /// Builds two stacks of `rings_per_stack` copies of `template` whose facing planes
    /// are `face_distance` apart. Both stacks are magnetised along the template's sign.
    pub fn symmetric_stacks(
        template: RingMagnet,
        rings_per_stack: usize,
        face_distance: f64,
        temperature_coefficient: f64,
    ) -> Result<Self, MagneticsError> {
        template.validate()?;
        if rings_per_stack == 0 {
            return Err(MagneticsError::InvalidAssembly(
                "each stack needs at least one ring".into(),
            ));
        }
        if !(face_distance > 0.0 && face_distance.is_finite()) {
            return Err(MagneticsError::InvalidAssembly(format!(
                "face distance must be positive, got {face_distance} m"
            )));
        }
        if !temperature_coefficient.is_finite() {
            return Err(MagneticsError::InvalidAssembly(
                "temperature coefficient must be finite".into(),
            ));
        }
        let half = 0.5 * face_distance;
        let d = template.thickness;
        let mut rings = Vec::with_capacity(2 * rings_per_stack);
        for k in 0..rings_per_stack {
            let k = k as f64;
            rings.push(template.at_offset(half + k * d));
            rings.push(template.at_offset(-half - (k + 1.0) * d));
        }
        Ok(MagnetAssembly {
            rings,
            face_distance,
            temperature_coefficient,
            rings_per_stack,
            template,
        })
    }

    pub fn rings(&self) -> &[RingMagnet] {
        &self.rings
    }

    pub fn face_distance(&self) -> f64 {
        self.face_distance
    }

    pub fn temperature_coefficient(&self) -> f64 {
        self.temperature_coefficient
    }

    pub fn rings_per_stack(&self) -> usize {
        self.rings_per_stack
    }

    pub fn template(&self) -> RingMagnet {
        self.template
    }

    /// Same assembly with both stacks moved so the facing planes are `face_distance` apart.
    pub fn with_face_distance(&self, face_distance: f64) -> Result<Self, MagneticsError> {
        Self::symmetric_stacks(
            self.template,
            self.rings_per_stack,
            face_distance,
            self.temperature_coefficient,
        )
    }

    /// Same assembly with every remanence multiplied by `factor`.
    pub fn scaled_remanence(&self, factor: f64) -> Result<Self, MagneticsError> {
        let mut template = self.template;
        template.remanence *= factor;
        Self::symmetric_stacks(
            template,
            self.rings_per_stack,
            self.face_distance,
            self.temperature_coefficient,
        )
    }

    /// Assembly after a temperature change of `delta_kelvin`; remanence scales linearly.
    pub fn at_temperature_offset(&self, delta_kelvin: f64) -> Result<Self, MagneticsError> {
        self.scaled_remanence(1.0 + self.temperature_coefficient * delta_kelvin)
    }

    /// Returns the ring containing the point, if any.
    pub fn material_at(&self, r: &Vec3) -> Option<&RingMagnet> {
        let rho = r.x.hypot(r.y);
        self.rings.iter().find(|ring| ring.contains(rho, r.z))
    }
}

/// One evaluated field point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldSample {
    pub position: [f64; 3],
    pub field: [f64; 3],
}

impl FieldSample {
    pub fn new(position: Vec3, field: Vec3) -> Self {
        FieldSample {
            position: position.into(),
            field: field.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomogeneityReport {
    /// Diameter of the spherical volume (m).
    pub d_dsv: f64,
    /// Relative tolerance on `| |B(r)| - |B(0)| | / |B(0)|`.
    pub tolerance: f64,
    pub center_field: f64,
    /// Largest |∇|B|| found inside the accepted sphere (T/m).
    pub max_gradient: f64,
    /// Diameter found with the doubled sampling density.
    pub d_dsv_refined: f64,
}
