//! Damped least squares (Levenberg–Marquardt with Marquardt diagonal
//! scaling) over a residual function, with a central-difference Jacobian.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged once `‖δ‖ ≤ tol·(‖x‖ + tol)`.
    pub step_tolerance: f64,
    /// Relative central-difference step.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 500, step_tolerance: 1e-8, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Jacobian of the residuals at `params`.
    pub jacobian: DMatrix<f64>,
    /// `Σ rᵢ²`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LmOutcome {
    /// `(JᵀJ)⁻¹`, or `None` when singular.
    pub fn unscaled_covariance(&self) -> Option<DMatrix<f64>> {
        let jtj = self.jacobian.transpose() * &self.jacobian;
        jtj.try_inverse()
    }
}

fn jacobian<F>(f: &F, x: &[f64], r0: &[f64], h_rel: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let (m, n) = (r0.len(), x.len());
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    for j in 0..n {
        let h = h_rel * x[j].abs().max(1e-3);
        xp[j] = x[j] + h;
        let rp = f(&xp)?;
        xp[j] = x[j] - h;
        let rm = f(&xp)?;
        xp[j] = x[j];
        for i in 0..m {
            jac[(i, j)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimizes `Σ rᵢ(x)²` from `x0`. Non-finite residuals at a trial point
/// are treated as a rejected step.
pub fn levenberg_marquardt<F>(f: F, x0: &[f64], opts: LmOptions) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = f(&x)?;
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence { iterations: 0, residual: f64::INFINITY });
    }
    let mut cost = sum_sq(&r);
    let mut jac = jacobian(&f, &x, &r, opts.fd_step)?;
    let mut lambda = {
        let jtj = jac.transpose() * &jac;
        1e-3 * (0..n).map(|i| jtj[(i, i)]).fold(0.0, f64::max).max(1e-12)
    };
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * DVector::from_column_slice(&r);
        if grad.amax() <= 1e-300 || cost == 0.0 {
            converged = true;
            break;
        }
        let mut accepted = false;
        while lambda < 1e20 {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = a.lu().solve(&(-&grad)) else {
                lambda *= 4.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let rt = match f(&trial) {
                Ok(v) if v.iter().all(|e| e.is_finite()) => v,
                _ => {
                    lambda *= 4.0;
                    continue;
                }
            };
            let ct = sum_sq(&rt);
            if ct <= cost {
                let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let small_step = step.norm() <= opts.step_tolerance * (xnorm + opts.step_tolerance);
                let small_gain = cost - ct <= 1e-15 * cost;
                x = trial;
                r = rt;
                cost = ct;
                lambda = (lambda / 3.0).max(1e-15);
                accepted = true;
                if small_step || small_gain {
                    converged = true;
                }
                break;
            }
            lambda *= 2.0;
        }
        if !accepted {
            // no descent direction left: local minimum to working precision
            converged = true;
            break;
        }
        jac = jacobian(&f, &x, &r, opts.fd_step)?;
        if converged {
            break;
        }
    }
    Ok(LmOutcome { params: x, residuals: r, jacobian: jac, cost, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_linear_model_exactly() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.5 * x - 1.0).collect();
        let out = levenberg_marquardt(
            |p| Ok(xs.iter().zip(&ys).map(|(x, y)| p[0] * x + p[1] - y).collect()),
            &[0.0, 0.0],
            LmOptions::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert!((out.params[0] - 2.5).abs() < 1e-8);
        assert!((out.params[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn rosenbrock_minimum() {
        let out = levenberg_marquardt(
            |p| Ok(vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]),
            &[-1.2, 1.0],
            LmOptions::default(),
        )
        .unwrap();
        assert!((out.params[0] - 1.0).abs() < 1e-6);
        assert!((out.params[1] - 1.0).abs() < 1e-6);
    }
}
