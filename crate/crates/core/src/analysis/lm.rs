//! Damped Gauss–Newton (Levenberg–Marquardt) for small weighted problems.

use nalgebra::{DMatrix, DVector};

use super::{AnalysisError, FitResult};

pub struct Problem<'a, M>
where
    M: Fn(f64, &[f64], &mut [f64]) -> f64,
{
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub sigma: &'a [f64],
    /// Returns the model value at `x` and writes ∂model/∂p into the slice.
    pub model: M,
    /// Parameter vectors rejected by this predicate are treated as failed steps.
    pub admissible: fn(&[f64]) -> bool,
}

const MAX_ITER: usize = 500;

fn residuals<M>(p: &Problem<'_, M>, params: &[f64]) -> (DVector<f64>, DMatrix<f64>)
where
    M: Fn(f64, &[f64], &mut [f64]) -> f64,
{
    let n = p.x.len();
    let k = params.len();
    let mut r = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, k);
    let mut grad = vec![0.0; k];
    for i in 0..n {
        let v = (p.model)(p.x[i], params, &mut grad);
        r[i] = (p.y[i] - v) / p.sigma[i];
        for c in 0..k {
            j[(i, c)] = grad[c] / p.sigma[i];
        }
    }
    (r, j)
}

pub fn solve<M>(
    problem: &Problem<'_, M>,
    names: &[&str],
    start: &[f64],
) -> Result<FitResult, AnalysisError>
where
    M: Fn(f64, &[f64], &mut [f64]) -> f64,
{
    let k = start.len();
    let mut params = start.to_vec();
    let (mut r, mut j) = residuals(problem, &params);
    let mut rss = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITER {
        iterations += 1;
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * &r;
        if jtr.amax() <= 1e-14 * (1.0 + rss.sqrt()) * jtj.diagonal().amax().sqrt() {
            converged = true;
            break;
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for d in 0..k {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
            if !(problem.admissible)(&trial) {
                lambda *= 10.0;
                continue;
            }
            let (r_new, j_new) = residuals(problem, &trial);
            let rss_new = r_new.norm_squared();
            if rss_new <= rss {
                let small_step = step
                    .iter()
                    .zip(&trial)
                    .all(|(s, p)| s.abs() <= 1e-14 * (p.abs() + 1e-300));
                let small_gain = rss - rss_new <= 1e-15 * rss;
                params = trial;
                r = r_new;
                j = j_new;
                rss = rss_new;
                lambda = (lambda * 0.1).max(1e-12);
                improved = true;
                if small_step || (small_gain && rss_new > 0.0) || rss_new == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !improved {
            // no descent direction left: at a minimum to working precision
            converged = true;
            break;
        }
    }

    let cov = (j.transpose() * &j)
        .try_inverse()
        .ok_or_else(|| AnalysisError::FitFailure("singular curvature matrix at solution".into()))?;
    let sigmas = (0..k).map(|d| cov[(d, d)].max(0.0).sqrt()).collect();
    Ok(FitResult::new(names, params, sigmas, rss, converged, iterations, problem.x.len()))
}
