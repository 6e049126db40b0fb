//! Off-axis field from equivalent magnetic surface charges.
//!
//! A uniformly axially magnetised ring is equivalent to two annular sheets of
//! magnetic charge `±B_r/µ0` on its end faces (the cylindrical walls carry none).
//! Outside the material `B = (B_r/4π) Σ ±∫∫ (r − r')/|r − r'|³ dA'`, integrated with
//! Gauss–Legendre nodes in the radius and the periodic trapezoid rule in the azimuth.
//! The rule is refined by doubling both orders until the field changes by less than
//! the relative tolerance.

use std::f64::consts::PI;

use super::quadrature::gauss_legendre;
use super::{MagnetAssembly, MagneticsError, RingMagnet, Vec3};

#[derive(Debug, Clone, Copy)]
struct Face {
    z: f64,
    inner: f64,
    outer: f64,
    /// ±B_r/(4π), sign of the surface charge times magnetisation sign.
    strength: f64,
}

fn faces(ring: &RingMagnet) -> [Face; 2] {
    let k = ring.magnetisation_sign * ring.remanence / (4.0 * PI);
    [
        Face {
            z: ring.axial_offset + ring.thickness,
            inner: ring.inner_radius,
            outer: ring.outer_radius,
            strength: k,
        },
        Face {
            z: ring.axial_offset,
            inner: ring.inner_radius,
            outer: ring.outer_radius,
            strength: -k,
        },
    ]
}

struct Rule {
    radial: Vec<(f64, f64)>,
    azimuth_cos: Vec<f64>,
}

impl Rule {
    fn new(n_radial: usize, n_azimuth: usize) -> Self {
        let (x, w) = gauss_legendre(n_radial);
        let radial = x.into_iter().zip(w).collect();
        let azimuth_cos = (0..n_azimuth)
            .map(|k| (2.0 * PI * (k as f64 + 0.5) / n_azimuth as f64).cos())
            .collect();
        Rule { radial, azimuth_cos }
    }

    /// (B_rho, B_z) of one face at cylindrical (rho, z).
    fn face_field(&self, face: &Face, rho: f64, z: f64) -> (f64, f64) {
        let half = 0.5 * (face.outer - face.inner);
        let mid = 0.5 * (face.outer + face.inner);
        let dz = z - face.z;
        let dz2 = dz * dz;
        let dphi = 2.0 * PI / self.azimuth_cos.len() as f64;
        let (mut b_rho, mut b_z) = (0.0, 0.0);
        for &(x, w) in &self.radial {
            let rp = mid + half * x;
            let base = rho * rho + rp * rp + dz2;
            let (mut sr, mut sz) = (0.0, 0.0);
            for &c in &self.azimuth_cos {
                let r2 = base - 2.0 * rho * rp * c;
                let inv3 = 1.0 / (r2 * r2.sqrt());
                sr += (rho - rp * c) * inv3;
                sz += inv3;
            }
            let jac = w * half * rp * dphi;
            b_rho += jac * sr;
            b_z += jac * sz * dz;
        }
        (face.strength * b_rho, face.strength * b_z)
    }
}

/// Surface-charge field evaluator with adaptive quadrature order.
#[derive(Debug, Clone)]
pub struct SurfaceChargeSolver {
    faces: Vec<Face>,
    assembly: MagnetAssembly,
    pub rel_tol: f64,
    pub initial_order: (usize, usize),
    pub max_doublings: u32,
}

impl SurfaceChargeSolver {
    pub fn new(assembly: &MagnetAssembly) -> Self {
        let faces = assembly.rings().iter().flat_map(faces).collect();
        SurfaceChargeSolver {
            faces,
            assembly: assembly.clone(),
            rel_tol: 1e-13,
            initial_order: (16, 32),
            max_doublings: 6,
        }
    }

    pub fn assembly(&self) -> &MagnetAssembly {
        &self.assembly
    }

    fn evaluate(&self, rule: &Rule, rho: f64, z: f64) -> (f64, f64) {
        self.faces.iter().fold((0.0, 0.0), |(br, bz), face| {
            let (r, zc) = rule.face_field(face, rho, z);
            (br + r, bz + zc)
        })
    }

    /// Field at `r` (T). Errors if `r` lies inside magnet material.
    pub fn field(&self, r: &Vec3) -> Result<Vec3, MagneticsError> {
        if self.assembly.material_at(r).is_some() {
            return Err(MagneticsError::PositionInsideMagnet(r.x, r.y, r.z));
        }
        let rho = r.x.hypot(r.y);
        let (mut nr, mut na) = self.initial_order;
        let mut prev = self.evaluate(&Rule::new(nr, na), rho, r.z);
        for _ in 0..self.max_doublings {
            nr *= 2;
            na *= 2;
            let next = self.evaluate(&Rule::new(nr, na), rho, r.z);
            let scale = next.0.hypot(next.1).max(1e-300);
            let change = (next.0 - prev.0).hypot(next.1 - prev.1);
            prev = next;
            if change <= self.rel_tol * scale {
                break;
            }
        }
        let (b_rho, b_z) = prev;
        let (cos, sin) = if rho > 0.0 {
            (r.x / rho, r.y / rho)
        } else {
            (0.0, 0.0)
        };
        Ok(Vec3::new(b_rho * cos, b_rho * sin, b_z))
    }

    /// |B| at `r`.
    pub fn magnitude(&self, r: &Vec3) -> Result<f64, MagneticsError> {
        self.field(r).map(|b| b.norm())
    }

    /// Central-difference gradient of |B| with step `h` (T/m).
    pub fn magnitude_gradient(&self, r: &Vec3, h: f64) -> Result<Vec3, MagneticsError> {
        let mut g = Vec3::zeros();
        for axis in 0..3 {
            let mut e = Vec3::zeros();
            e[axis] = h;
            g[axis] = (self.magnitude(&(r + e))? - self.magnitude(&(r - e))?) / (2.0 * h);
        }
        Ok(g)
    }
}

/// Field of the assembly at an arbitrary point.
pub fn assembly_field_3d(r: &Vec3, assembly: &MagnetAssembly) -> Result<Vec3, MagneticsError> {
    SurfaceChargeSolver::new(assembly).field(r)
}
