//! Weighted least-squares fits for phase scans, contrast decay and sensing data.
//!
//! Models that are linear in a reparametrisation are solved in closed form through
//! the normal equations; the exponential decay uses damped Gauss–Newton seeded by
//! a log-linear fit. Uncertainties are taken from the supplied σ without rescaling
//! by the reduced χ².

mod lm;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("fit failed: {0}")]
    FitFailure(String),
    #[error("invalid fit input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitParameter {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
}

/// Fitted parameters with 1σ uncertainties.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub parameters: Vec<FitParameter>,
    /// Σ ((y − model)/σ)².
    pub rss: f64,
    pub converged: bool,
    pub iterations: usize,
    pub points: usize,
}

impl FitResult {
    fn new(
        names: &[&str],
        values: Vec<f64>,
        sigmas: Vec<f64>,
        rss: f64,
        converged: bool,
        iterations: usize,
        points: usize,
    ) -> Self {
        FitResult {
            parameters: names
                .iter()
                .zip(values.into_iter().zip(sigmas))
                .map(|(n, (value, sigma))| FitParameter {
                    name: (*n).to_string(),
                    value,
                    sigma,
                })
                .collect(),
            rss,
            converged,
            iterations,
            points,
        }
    }

    pub fn get(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Value of a parameter; panics on an unknown name.
    pub fn value(&self, name: &str) -> f64 {
        self.get(name).unwrap_or_else(|| panic!("no parameter {name}")).value
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.get(name).unwrap_or_else(|| panic!("no parameter {name}")).sigma
    }

    /// Converged fit with finite parameters.
    pub fn usable(&self) -> bool {
        self.converged
            && self
                .parameters
                .iter()
                .all(|p| p.value.is_finite() && p.sigma.is_finite())
    }

    pub fn degrees_of_freedom(&self) -> usize {
        self.points.saturating_sub(self.parameters.len())
    }
}

fn check_inputs(x: &[f64], y: &[f64], sigma: &[f64], min_points: usize) -> Result<(), AnalysisError> {
    if x.len() != y.len() || x.len() != sigma.len() {
        return Err(AnalysisError::InvalidInput(format!(
            "length mismatch: {} x, {} y, {} σ",
            x.len(),
            y.len(),
            sigma.len()
        )));
    }
    if x.len() < min_points {
        return Err(AnalysisError::InvalidInput(format!(
            "need at least {min_points} points, got {}",
            x.len()
        )));
    }
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(AnalysisError::InvalidInput(format!("σ must be positive, got {s}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(AnalysisError::InvalidInput("non-finite data".into()));
    }
    Ok(())
}

/// Solution and covariance of a weighted linear model `y ≈ X β`.
fn weighted_linear(
    design: &DMatrix<f64>,
    y: &[f64],
    sigma: &[f64],
) -> Result<(DVector<f64>, DMatrix<f64>, f64), AnalysisError> {
    let n = y.len();
    let mut a = design.clone();
    let mut b = DVector::zeros(n);
    for i in 0..n {
        a.row_mut(i).scale_mut(1.0 / sigma[i]);
        b[i] = y[i] / sigma[i];
    }
    // column scaling keeps the normal equations well conditioned
    let scales: Vec<f64> = (0..a.ncols())
        .map(|c| a.column(c).norm().max(1e-300))
        .collect();
    for (c, s) in scales.iter().enumerate() {
        a.column_mut(c).scale_mut(1.0 / s);
    }
    let ata = a.transpose() * &a;
    let chol = ata
        .clone()
        .cholesky()
        .ok_or_else(|| AnalysisError::FitFailure("singular normal equations".into()))?;
    let rcond = {
        let d = ata.symmetric_eigenvalues();
        d.min() / d.max()
    };
    if !(rcond > 1e-14) {
        return Err(AnalysisError::FitFailure("singular normal equations".into()));
    }
    let beta_s = chol.solve(&(a.transpose() * &b));
    let inv_s = chol.inverse();
    let rss = (&b - &a * &beta_s).norm_squared();
    let k = scales.len();
    let beta = DVector::from_fn(k, |i, _| beta_s[i] / scales[i]);
    let cov = DMatrix::from_fn(k, k, |i, j| inv_s[(i, j)] / (scales[i] * scales[j]));
    Ok((beta, cov, rss))
}

/// Fits `P = c₀ − (C/2) cos(Δφ − φ₀)` to a phase scan. With `float_baseline = false`
/// the baseline is fixed at 1/2.
pub fn fit_sinusoid(
    phase: &[f64],
    p: &[f64],
    sigma: &[f64],
    float_baseline: bool,
) -> Result<FitResult, AnalysisError> {
    check_inputs(phase, p, sigma, 5)?;
    let lo = phase.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = phase.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > std::f64::consts::PI) {
        return Err(AnalysisError::InvalidInput(format!(
            "phases span {} rad, need more than π",
            hi - lo
        )));
    }
    let n = phase.len();
    let cols = if float_baseline { 3 } else { 2 };
    let design = DMatrix::from_fn(n, cols, |i, c| match (c, float_baseline) {
        (0, _) => phase[i].cos(),
        (1, _) => phase[i].sin(),
        _ => 1.0,
    });
    let target: Vec<f64> = if float_baseline {
        p.to_vec()
    } else {
        p.iter().map(|v| v - 0.5).collect()
    };
    let (beta, cov, rss) = weighted_linear(&design, &target, sigma)?;
    let (a, b) = (beta[0], beta[1]);
    let r = a.hypot(b);
    let contrast = 2.0 * r;
    let phi0 = (-b).atan2(-a);
    let (var_c, var_phi) = if r > 0.0 {
        let (ga, gb) = (a / r, b / r);
        let vc = 4.0
            * (ga * ga * cov[(0, 0)] + 2.0 * ga * gb * cov[(0, 1)] + gb * gb * cov[(1, 1)]);
        let (pa, pb) = (-b / (r * r), a / (r * r));
        let vp = pa * pa * cov[(0, 0)] + 2.0 * pa * pb * cov[(0, 1)] + pb * pb * cov[(1, 1)];
        (vc, vp)
    } else {
        (2.0 * (cov[(0, 0)] + cov[(1, 1)]), f64::INFINITY)
    };
    let sigma_c = var_c.max(0.0).sqrt();
    let (c0, sigma_c0) = if float_baseline {
        (beta[2], cov[(2, 2)].max(0.0).sqrt())
    } else {
        (0.5, 0.0)
    };
    if contrast > 1.0 + 3.0 * sigma_c + 1e-12 {
        return Err(AnalysisError::FitFailure(format!(
            "contrast {contrast} exceeds 1 by more than 3σ ({sigma_c})"
        )));
    }
    Ok(FitResult::new(
        &["contrast", "phase", "baseline"],
        vec![contrast, phi0, c0],
        vec![sigma_c, var_phi.sqrt(), sigma_c0],
        rss,
        true,
        1,
        n,
    ))
}

/// Sinusoid fit to binomial shot data: the weights are refined from the fitted
/// probabilities so that they do not correlate with the sampling noise.
pub fn fit_sinusoid_binomial(
    phase: &[f64],
    p: &[f64],
    shots: u64,
    float_baseline: bool,
) -> Result<FitResult, AnalysisError> {
    if shots == 0 {
        return Err(AnalysisError::InvalidInput("shot count must be positive".into()));
    }
    let n = shots as f64;
    let floor = 0.5 / n;
    let sigma_at = |q: f64| {
        let q = q.clamp(floor, 1.0 - floor);
        (q * (1.0 - q) / n).sqrt()
    };
    let mut sigma = vec![sigma_at(0.5); phase.len()];
    let mut fit = fit_sinusoid(phase, p, &sigma, float_baseline)?;
    for _ in 0..3 {
        let (c, phi0, c0) = (fit.value("contrast"), fit.value("phase"), fit.value("baseline"));
        for (s, &x) in sigma.iter_mut().zip(phase) {
            *s = sigma_at(c0 - 0.5 * c * (x - phi0).cos());
        }
        fit = fit_sinusoid(phase, p, &sigma, float_baseline)?;
    }
    Ok(fit)
}

fn exp_model(t: f64, p: &[f64], grad: &mut [f64]) -> f64 {
    let e = (-t / p[1]).exp();
    grad[0] = e;
    grad[1] = p[0] * e * t / (p[1] * p[1]);
    p[0] * e
}

/// Fits `C(T) = C₀ exp(−T/τ)`.
pub fn fit_exp_decay(t: &[f64], c: &[f64], sigma: &[f64]) -> Result<FitResult, AnalysisError> {
    check_inputs(t, c, sigma, 2)?;
    // log-linear seed over the positive points
    let pos: Vec<usize> = (0..t.len()).filter(|&i| c[i] > 0.0).collect();
    if pos.len() < 2 {
        return Err(AnalysisError::FitFailure(
            "fewer than two positive contrasts".into(),
        ));
    }
    let design = DMatrix::from_fn(pos.len(), 2, |i, col| if col == 0 { 1.0 } else { t[pos[i]] });
    let ly: Vec<f64> = pos.iter().map(|&i| c[i].ln()).collect();
    let ls: Vec<f64> = pos.iter().map(|&i| sigma[i] / c[i]).collect();
    let (seed, _, _) = weighted_linear(&design, &ly, &ls)?;
    let slope = seed[1];
    if !(slope < 0.0) {
        return Err(AnalysisError::FitFailure(format!(
            "contrast does not decay (log slope {slope})"
        )));
    }
    let problem = lm::Problem {
        x: t,
        y: c,
        sigma,
        model: exp_model,
        admissible: |p| p[1] > 0.0 && p[1].is_finite(),
    };
    let fit = lm::solve(&problem, &["c0", "tau"], &[seed[0].exp(), -1.0 / slope])?;
    if !fit.converged {
        return Err(AnalysisError::FitFailure(format!(
            "no convergence after {} iterations",
            fit.iterations
        )));
    }
    Ok(fit)
}

/// Fits `y = a x²`, plus a constant when `with_offset`.
pub fn fit_quadratic_origin(
    x: &[f64],
    y: &[f64],
    sigma: &[f64],
    with_offset: bool,
) -> Result<FitResult, AnalysisError> {
    check_inputs(x, y, sigma, 3)?;
    let cols = if with_offset { 2 } else { 1 };
    let design = DMatrix::from_fn(x.len(), cols, |i, c| if c == 0 { x[i] * x[i] } else { 1.0 });
    let (beta, cov, rss) = weighted_linear(&design, y, sigma)?;
    let (off, s_off) = if with_offset {
        (beta[1], cov[(1, 1)].sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(FitResult::new(
        &["a", "offset"],
        vec![beta[0], off],
        vec![cov[(0, 0)].sqrt(), s_off],
        rss,
        true,
        1,
        x.len(),
    ))
}

/// Fits `y = m x`, plus an intercept when `with_intercept`.
pub fn fit_line(
    x: &[f64],
    y: &[f64],
    sigma: &[f64],
    with_intercept: bool,
) -> Result<FitResult, AnalysisError> {
    check_inputs(x, y, sigma, 2)?;
    let cols = if with_intercept { 2 } else { 1 };
    let design = DMatrix::from_fn(x.len(), cols, |i, c| if c == 0 { x[i] } else { 1.0 });
    let (beta, cov, rss) = weighted_linear(&design, y, sigma)?;
    let (c, s_c) = if with_intercept {
        (beta[1], cov[(1, 1)].sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(FitResult::new(
        &["slope", "intercept"],
        vec![beta[0], c],
        vec![cov[(0, 0)].sqrt(), s_c],
        rss,
        true,
        1,
        x.len(),
    ))
}

/// Fits `B = B₀ + k √y`.
pub fn fit_sqrt_law(y: &[f64], b: &[f64], sigma: &[f64]) -> Result<FitResult, AnalysisError> {
    check_inputs(y, b, sigma, 3)?;
    if let Some(v) = y.iter().find(|v| **v < 0.0) {
        return Err(AnalysisError::InvalidInput(format!(
            "displacement {v} is negative"
        )));
    }
    let design = DMatrix::from_fn(y.len(), 2, |i, c| if c == 0 { y[i].sqrt() } else { 1.0 });
    let (beta, cov, rss) = weighted_linear(&design, b, sigma)?;
    Ok(FitResult::new(
        &["k", "offset"],
        vec![beta[0], beta[1]],
        vec![cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt()],
        rss,
        true,
        1,
        y.len(),
    ))
}
