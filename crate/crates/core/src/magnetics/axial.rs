use super::{MagnetAssembly, MagneticsError, RingMagnet};

/// `a/√(R²+a²) − b/√(R²+b²)` without cancellation when `a` and `b` share a sign.
fn solid_angle_difference(a: f64, b: f64, radius: f64) -> f64 {
    let r2 = radius * radius;
    let sa = (r2 + a * a).sqrt();
    let sb = (r2 + b * b).sqrt();
    if a * b > 0.0 {
        r2 * (a - b) * (a + b) / ((a * sb + b * sa) * sa * sb)
    } else {
        a / sa - b / sb
    }
}

/// On-axis field of one ring at axial position `z` (T).
///
/// `B = B_r/2 · [(u/√(R_o²+u²) − (u−D)/√(R_o²+(u−D)²)) − (same with R_i)]`
/// with `u = z − axial_offset`.
pub fn axial_ring_field(z: f64, ring: &RingMagnet) -> f64 {
    let u = z - ring.axial_offset;
    let w = u - ring.thickness;
    let outer = solid_angle_difference(u, w, ring.outer_radius);
    let inner = solid_angle_difference(u, w, ring.inner_radius);
    ring.magnetisation_sign * 0.5 * ring.remanence * (outer - inner)
}

/// Superposition of [`axial_ring_field`] over every ring in the assembly.
pub fn assembly_axial_field(z: f64, assembly: &MagnetAssembly) -> f64 {
    assembly
        .rings()
        .iter()
        .map(|ring| axial_ring_field(z, ring))
        .sum()
}

/// d|B(0)|/dd, the change of centre-field strength per unit change of the face
/// distance when both stacks move symmetrically (T/m).
pub fn tuning_slope(assembly: &MagnetAssembly) -> Result<f64, MagneticsError> {
    let d = assembly.face_distance();
    let h = 1e-4 * d;
    let plus = assembly.with_face_distance(d + h)?;
    let minus = assembly.with_face_distance(d - h)?;
    Ok((assembly_axial_field(0.0, &plus).abs() - assembly_axial_field(0.0, &minus).abs())
        / (2.0 * h))
}
