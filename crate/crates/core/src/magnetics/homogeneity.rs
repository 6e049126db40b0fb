//! Spherical-volume homogeneity search and gradient bounds.

use rayon::prelude::*;

use super::{HomogeneityReport, MagnetAssembly, MagneticsError, SurfaceChargeSolver, Vec3};

/// `n` nearly uniform unit vectors on the sphere (golden-angle spiral).
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Sampling of a trial sphere: `shells` concentric shells at radii `k/shells · R`,
/// each with `points_per_shell` Fibonacci directions plus the six axis directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DsvSampling {
    pub shells: usize,
    pub points_per_shell: usize,
    /// Upper bound of the diameter search (m).
    pub search_bound: f64,
    /// Bisection stops when the bracket is narrower than this (m).
    pub diameter_resolution: f64,
    /// Number of density doublings tried before giving up on convergence.
    pub max_refinements: usize,
}

impl Default for DsvSampling {
    fn default() -> Self {
        DsvSampling {
            shells: 4,
            points_per_shell: 96,
            search_bound: 10e-3,
            diameter_resolution: 1e-6,
            max_refinements: 3,
        }
    }
}

impl DsvSampling {
    fn doubled(self) -> Self {
        DsvSampling {
            shells: 2 * self.shells,
            points_per_shell: 2 * self.points_per_shell,
            ..self
        }
    }

    fn unit_points(&self) -> Vec<Vec3> {
        let mut dirs = fibonacci_sphere(self.points_per_shell);
        for axis in 0..3 {
            for sign in [-1.0, 1.0] {
                let mut e = Vec3::zeros();
                e[axis] = sign;
                dirs.push(e);
            }
        }
        let mut pts = Vec::with_capacity(self.shells * dirs.len());
        for k in 1..=self.shells {
            let scale = k as f64 / self.shells as f64;
            pts.extend(dirs.iter().map(|d| d * scale));
        }
        pts
    }
}

fn max_relative_deviation(
    solver: &SurfaceChargeSolver,
    unit_points: &[Vec3],
    radius: f64,
    center: f64,
) -> Result<f64, MagneticsError> {
    unit_points
        .par_iter()
        .map(|p| {
            solver
                .magnitude(&(p * radius))
                .map(|b| ((b - center) / center).abs())
        })
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

fn bisect_diameter(
    solver: &SurfaceChargeSolver,
    sampling: &DsvSampling,
    tolerance: f64,
    center: f64,
) -> Result<f64, MagneticsError> {
    let pts = sampling.unit_points();
    let feasible = |d: f64| -> Result<bool, MagneticsError> {
        Ok(max_relative_deviation(solver, &pts, 0.5 * d, center)? <= tolerance)
    };
    let (mut lo, mut hi) = (0.0, sampling.search_bound);
    if feasible(hi)? {
        return Ok(hi);
    }
    while hi - lo > sampling.diameter_resolution {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Largest sphere diameter around the centre within which the relative deviation of
/// |B| from |B(0)| stays below `tolerance`, with the default sampling.
pub fn homogeneity_dsv(
    assembly: &MagnetAssembly,
    tolerance: f64,
) -> Result<HomogeneityReport, MagneticsError> {
    homogeneity_dsv_with(assembly, tolerance, DsvSampling::default())
}

/// As [`homogeneity_dsv`] with explicit sampling. The diameter is recomputed with
/// doubled density until two successive results agree within 5 %.
pub fn homogeneity_dsv_with(
    assembly: &MagnetAssembly,
    tolerance: f64,
    sampling: DsvSampling,
) -> Result<HomogeneityReport, MagneticsError> {
    if !(tolerance > 0.0) {
        return Err(MagneticsError::InvalidArgument(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    let solver = SurfaceChargeSolver::new(assembly);
    let center = solver.magnitude(&Vec3::zeros())?;
    let mut current = sampling;
    let mut d = bisect_diameter(&solver, &current, tolerance, center)?;
    for _ in 0..=sampling.max_refinements {
        let next = current.doubled();
        let d_next = bisect_diameter(&solver, &next, tolerance, center)?;
        let converged = if d_next == 0.0 && d == 0.0 {
            true
        } else {
            (d_next - d).abs() <= 0.05 * d.max(d_next)
        };
        if converged {
            let max_gradient = if d_next > 0.0 {
                max_gradient_in_ball(&solver, 0.5 * d_next, 2)?
            } else {
                0.0
            };
            return Ok(HomogeneityReport {
                d_dsv: d,
                tolerance,
                center_field: center,
                max_gradient,
                d_dsv_refined: d_next,
            });
        }
        current = next;
        d = d_next;
    }
    Err(MagneticsError::NonConvergent(format!(
        "diameter still changing after {} density doublings",
        sampling.max_refinements + 1
    )))
}

fn max_gradient_in_ball(
    solver: &SurfaceChargeSolver,
    radius: f64,
    shells: usize,
) -> Result<f64, MagneticsError> {
    let sampling = DsvSampling {
        shells,
        points_per_shell: 48,
        ..DsvSampling::default()
    };
    let mut pts: Vec<Vec3> = sampling.unit_points().iter().map(|p| p * radius).collect();
    pts.push(Vec3::zeros());
    let h = (1e-3 * radius).clamp(1e-7, 1e-5);
    pts.par_iter()
        .map(|p| solver.magnitude_gradient(p, h).map(|g| g.norm()))
        .try_reduce(|| 0.0, |a, b| Ok(a.max(b)))
}

/// Maximum |∇|B|| over a ball of radius `displacement_bound` around the centre (T/m).
pub fn gradient_bound(
    assembly: &MagnetAssembly,
    displacement_bound: f64,
) -> Result<f64, MagneticsError> {
    if !(displacement_bound >= 0.0) {
        return Err(MagneticsError::InvalidArgument(format!(
            "displacement bound must be non-negative, got {displacement_bound}"
        )));
    }
    let solver = SurfaceChargeSolver::new(assembly);
    if displacement_bound == 0.0 {
        return solver
            .magnitude_gradient(&Vec3::zeros(), 1e-6)
            .map(|g| g.norm());
    }
    max_gradient_in_ball(&solver, displacement_bound, 4)
}

/// Spatial curvature of a clock frequency caused by a field gradient:
/// `quadratic_coefficient · gradient²` (Hz/m² for Hz/T² and T/m inputs).
pub fn clock_spatial_curvature(quadratic_coefficient: f64, gradient: f64) -> f64 {
    quadratic_coefficient * gradient * gradient
}
