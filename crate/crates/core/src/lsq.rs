//! Least-squares building blocks shared by the fitting routines.
//!
//! - [`levenberg_marquardt`]: trust-region nonlinear least squares with an
//!   analytic Jacobian supplied by the caller.
//! - [`nnls`]: small non-negative linear least squares by active-set
//!   enumeration.
//! - [`linear_regression`]: ordinary least-squares line with standard errors.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LsqError {
    #[error("no convergence after {iterations} iterations (final cost {final_cost:e}); cost trace: {trace:?}")]
    NonConvergence {
        iterations: usize,
        final_cost: f64,
        trace: Vec<f64>,
    },
    #[error("normal matrix is singular")]
    Singular,
    #[error("residuals are not finite at the initial guess")]
    NonFinite,
    #[error("need at least {needed} data points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
}

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Relative cost decrease below which an accepted step counts as converged.
    pub ftol: f64,
    /// Relative parameter step below which the iteration stops.
    pub xtol: f64,
    /// Infinity norm of the gradient below which the iteration stops.
    pub gtol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iterations: 200,
            ftol: 1e-12,
            xtol: 1e-10,
            gtol: 1e-30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: DVector<f64>,
    /// Half the squared residual norm at the solution.
    pub cost: f64,
    pub iterations: usize,
    /// Parameter covariance `s²·(JᵀJ)⁻¹` with `s² = |r|²/(n−p)`.
    pub covariance: Option<DMatrix<f64>>,
    pub dof: usize,
    pub trace: Vec<f64>,
}

impl LmResult {
    pub fn residual_norm(&self) -> f64 {
        (2.0 * self.cost).sqrt()
    }

    pub fn std_error(&self, i: usize) -> Option<f64> {
        self.covariance.as_ref().map(|c| c[(i, i)].max(0.0).sqrt())
    }
}

fn half_sq(r: &DVector<f64>) -> f64 {
    0.5 * r.norm_squared()
}

/// Minimise `½|r(p)|²` starting at `initial`.
///
/// `residuals` may return non-finite values for parameters outside the model's
/// domain; such trial steps are rejected and the damping raised.
pub fn levenberg_marquardt<R, J>(
    initial: DVector<f64>,
    residuals: R,
    jacobian: J,
    opts: &LmOptions,
) -> Result<LmResult, LsqError>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let mut p = initial;
    let mut r = residuals(&p);
    if r.iter().any(|v| !v.is_finite()) {
        return Err(LsqError::NonFinite);
    }
    let n = r.len();
    let np = p.len();
    if n < np {
        return Err(LsqError::TooFewPoints { needed: np, got: n });
    }
    let mut cost = half_sq(&r);
    let mut jac = jacobian(&p);
    let mut a = jac.transpose() * &jac;
    let mut g = jac.transpose() * &r;
    let mut mu = 1e-3 * (0..np).map(|i| a[(i, i)]).fold(0.0_f64, f64::max).max(1e-300);
    let mut nu = 2.0;
    let mut trace = vec![cost];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        if g.amax() <= opts.gtol || cost == 0.0 {
            converged = true;
            break;
        }
        let mut damped = a.clone();
        for i in 0..np {
            let d = a[(i, i)].max(1e-12 * a.diagonal().amax()).max(f64::MIN_POSITIVE);
            damped[(i, i)] += mu * d;
        }
        let step = match damped.clone().cholesky() {
            Some(ch) => ch.solve(&(-&g)),
            None => match damped.lu().solve(&(-&g)) {
                Some(s) => s,
                None => {
                    mu *= nu;
                    nu *= 2.0;
                    continue;
                }
            },
        };
        if step.norm() <= opts.xtol * (p.norm() + opts.xtol) {
            converged = true;
            break;
        }
        let p_new = &p + &step;
        let r_new = residuals(&p_new);
        let cost_new = if r_new.iter().all(|v| v.is_finite()) {
            half_sq(&r_new)
        } else {
            f64::INFINITY
        };
        // predicted decrease of the local quadratic model
        let predicted = -(step.dot(&g) + 0.5 * step.dot(&(&a * &step)));
        let rho = if predicted > 0.0 {
            (cost - cost_new) / predicted
        } else {
            -1.0
        };
        if rho > 0.0 && cost_new.is_finite() {
            let rel = (cost - cost_new) / cost.max(f64::MIN_POSITIVE);
            p = p_new;
            r = r_new;
            cost = cost_new;
            jac = jacobian(&p);
            a = jac.transpose() * &jac;
            g = jac.transpose() * &r;
            mu *= (1.0_f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
            nu = 2.0;
            trace.push(cost);
            if rel <= opts.ftol {
                converged = true;
                break;
            }
        } else {
            mu *= nu;
            nu *= 2.0;
            if !mu.is_finite() || mu > 1e300 {
                // damping saturated: no further decrease is possible
                converged = true;
                break;
            }
        }
    }

    if !converged {
        return Err(LsqError::NonConvergence {
            iterations,
            final_cost: cost,
            trace,
        });
    }

    let dof = n.saturating_sub(np);
    let covariance = a.try_inverse().map(|inv| {
        let s2 = if dof > 0 { 2.0 * cost / dof as f64 } else { 0.0 };
        inv * s2
    });
    let _ = r;
    Ok(LmResult {
        params: p,
        cost,
        iterations,
        covariance,
        dof,
        trace,
    })
}

#[derive(Debug, Clone)]
pub struct NnlsResult {
    pub x: DVector<f64>,
    pub residual_norm: f64,
    /// Unscaled `(AᵀA)⁻¹` restricted to the free variables (zero rows/columns
    /// for variables pinned at the bound).
    pub normal_inverse: DMatrix<f64>,
}

/// Solve `min |A x − b|` subject to `x ≥ 0` for a handful of columns.
///
/// Enumerates every passive set, which is exact and cheap for the two- and
/// three-column problems this crate needs.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<NnlsResult, LsqError> {
    let n = a.ncols();
    assert!(n <= 12, "nnls enumeration is meant for small problems");
    if a.nrows() < n {
        return Err(LsqError::TooFewPoints {
            needed: n,
            got: a.nrows(),
        });
    }
    let mut best: Option<NnlsResult> = None;
    for mask in 0u32..(1 << n) {
        let free: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut x = DVector::zeros(n);
        let mut inv_full = DMatrix::zeros(n, n);
        if !free.is_empty() {
            let sub = a.select_columns(&free);
            let ata = sub.transpose() * &sub;
            let Some(inv) = ata.try_inverse() else { continue };
            let xs = &inv * (sub.transpose() * b);
            if xs.iter().any(|v| *v < 0.0) {
                continue;
            }
            for (k, &i) in free.iter().enumerate() {
                x[i] = xs[k];
                for (l, &j) in free.iter().enumerate() {
                    inv_full[(i, j)] = inv[(k, l)];
                }
            }
        }
        let res = (a * &x - b).norm();
        if best.as_ref().is_none_or(|bst| res < bst.residual_norm) {
            best = Some(NnlsResult {
                x,
                residual_norm: res,
                normal_inverse: inv_full,
            });
        }
    }
    best.ok_or(LsqError::Singular)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    pub n: usize,
}

/// Ordinary least-squares fit of `y = slope·x + intercept`.
pub fn linear_regression(x: &[f64], y: &[f64]) -> Result<LineFit, LsqError> {
    let n = x.len().min(y.len());
    if n < 3 {
        return Err(LsqError::TooFewPoints { needed: 3, got: n });
    }
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let sxx: f64 = x[..n].iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(LsqError::Singular);
    }
    let sxy: f64 = x[..n].iter().zip(&y[..n]).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x[..n]
        .iter()
        .zip(&y[..n])
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let s2 = rss / (nf - 2.0);
    let slope_stderr = (s2 / sxx).sqrt();
    let intercept_stderr = (s2 * (1.0 / nf + mx * mx / sxx)).sqrt();
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr,
        intercept_stderr,
        n,
    })
}

/// Two-sided Student-t quantile for a `level` confidence interval.
pub fn t_quantile(level: f64, dof: usize) -> f64 {
    use statrs::distribution::{ContinuousCDF, StudentsT};
    let p = 0.5 + level / 2.0;
    match StudentsT::new(0.0, 1.0, dof.max(1) as f64) {
        Ok(t) => t.inverse_cdf(p),
        Err(_) => 1.959_963_984_540_054,
    }
}
