//! Per-node penalized regressions.
//!
//! Gaussian objective: `|y - X theta|^2 + theta' P theta`.
//! Logistic objective: `-loglik(theta) + theta' P theta / 2`.
//! Both are strictly convex once `X' W X + P` is positive definite, so the
//! minimizer found here is the global one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub coefficients: Vec<f64>,
    /// Maximum-likelihood precision `N / RSS`.
    pub precision: f64,
    pub rss: f64,
    pub objective: f64,
    /// Trace of the hat matrix `X (X'X + P)^-1 X'`.
    pub edf: f64,
    pub log_likelihood: f64,
    pub standard_errors: Vec<f64>,
    pub condition_estimate: f64,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitFit {
    pub coefficients: Vec<f64>,
    pub objective: f64,
    pub edf: f64,
    pub log_likelihood: f64,
    pub standard_errors: Vec<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub condition_estimate: f64,
    pub rows: usize,
}

fn check_shapes(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    penalty: &DMatrix<f64>,
) -> Result<()> {
    let p = design.ncols();
    if design.nrows() != response.len() {
        return Err(Error::InvalidParameter(format!(
            "design has {} rows but response has {}",
            design.nrows(),
            response.len()
        )));
    }
    if penalty.nrows() != p || penalty.ncols() != p {
        return Err(Error::InvalidParameter(format!(
            "penalty must be {p}x{p}, got {}x{}",
            penalty.nrows(),
            penalty.ncols()
        )));
    }
    if design.nrows() == 0 {
        return Err(Error::Data("regression has no rows".into()));
    }
    if design.iter().chain(response.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("regression contains non-finite values".into()));
    }
    Ok(())
}

/// Square root `S` with `S'S = P` for a symmetric PSD penalty.
fn penalty_root(penalty: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = penalty.nrows();
    let diagonal = (0..p).all(|i| (0..p).all(|j| i == j || penalty[(i, j)] == 0.0));
    if diagonal {
        if (0..p).any(|i| penalty[(i, i)] < 0.0) {
            return Err(Error::InvalidParameter(
                "penalty has negative entries".into(),
            ));
        }
        return Ok(DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                penalty[(i, i)].sqrt()
            } else {
                0.0
            }
        }));
    }
    let eig = penalty.clone().symmetric_eigen();
    if eig
        .eigenvalues
        .iter()
        .any(|&v| v < -1e-10 * eig.eigenvalues.amax().max(1.0))
    {
        return Err(Error::InvalidParameter(
            "penalty is not positive semidefinite".into(),
        ));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    Ok(d * eig.eigenvectors.transpose())
}

/// Penalized least squares by QR of `[X; S] D^-1` with unit-norm column
/// scaling `D`. Returns coefficients and the scaled triangular factor.
struct PlsSolution {
    theta: DVector<f64>,
    r: DMatrix<f64>,
    scale: DVector<f64>,
    condition: f64,
}

fn solve_pls(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    penalty: &DMatrix<f64>,
) -> Result<PlsSolution> {
    let (n, p) = design.shape();
    let root = penalty_root(penalty)?;
    let mut aug = DMatrix::zeros(n + p, p);
    aug.rows_mut(0, n).copy_from(design);
    aug.rows_mut(n, p).copy_from(&root);
    let scale = DVector::from_fn(p, |j, _| {
        let norm = aug.column(j).norm();
        if norm > 0.0 {
            norm
        } else {
            1.0
        }
    });
    for j in 0..p {
        let s = scale[j];
        aug.column_mut(j).scale_mut(1.0 / s);
    }
    let mut rhs = DVector::zeros(n + p);
    rhs.rows_mut(0, n).copy_from(response);
    let qr = aug.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..p).map(|i| r[(i, i)].abs()).collect();
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if p > 0 && (dmax == 0.0 || dmin <= RANK_TOL * dmax) {
        return Err(Error::SingularDesign);
    }
    qr.q_tr_mul(&mut rhs);
    let top = rhs.rows(0, p).into_owned();
    let theta_scaled = r
        .solve_upper_triangular(&top)
        .ok_or(Error::SingularDesign)?;
    let theta = theta_scaled.component_div(&scale);
    Ok(PlsSolution {
        theta,
        r,
        scale,
        condition: if p > 0 { dmax / dmin } else { 1.0 },
    })
}

/// Coefficients minimizing `|y - X theta|^2 + theta' P theta` (no precision).
pub fn penalized_least_squares(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    penalty: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    check_shapes(design, response, penalty)?;
    Ok(solve_pls(design, response, penalty)?
        .theta
        .iter()
        .copied()
        .collect())
}

pub fn gaussian_objective(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    penalty: &DMatrix<f64>,
    theta: &[f64],
) -> f64 {
    let t = DVector::from_column_slice(theta);
    let r = response - design * &t;
    r.norm_squared() + t.dot(&(penalty * &t))
}

pub fn fit_gaussian(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    penalty: &DMatrix<f64>,
) -> Result<GaussianFit> {
    check_shapes(design, response, penalty)?;
    let n = design.nrows();
    let sol = solve_pls(design, response, penalty)?;
    let resid = response - design * &sol.theta;
    let rss = resid.norm_squared();
    if rss <= 1e-20 * response.norm_squared().max(f64::MIN_POSITIVE) {
        return Err(Error::ZeroResidual);
    }
    let precision = n as f64 / rss;

    // B = X D^-1 R^-1, so hat = B B' and (X'X + P)^-1 = D^-1 R^-1 R^-T D^-1
    let mut xs = design.clone();
    for j in 0..xs.ncols() {
        let s = sol.scale[j];
        xs.column_mut(j).scale_mut(1.0 / s);
    }
    let bt = sol
        .r
        .transpose()
        .solve_lower_triangular(&xs.transpose())
        .ok_or(Error::SingularDesign)?;
    let edf = bt.norm_squared();
    let p = design.ncols();
    let rinv = sol
        .r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or(Error::SingularDesign)?;
    // sandwich (X'X+P)^-1 X'X (X'X+P)^-1 in scaled coordinates
    let inner = &bt * bt.transpose();
    let cov_scaled = &rinv * inner * rinv.transpose();
    let dof = (n as f64 - edf).max(1.0);
    let sigma2 = rss / dof;
    let standard_errors = (0..p)
        .map(|j| (sigma2 * cov_scaled[(j, j)]).max(0.0).sqrt() / sol.scale[j])
        .collect();
    let theta: Vec<f64> = sol.theta.iter().copied().collect();
    let objective = gaussian_objective(design, response, penalty, &theta);
    let log_likelihood =
        0.5 * n as f64 * (precision.ln() - (2.0 * std::f64::consts::PI).ln() - 1.0);
    Ok(GaussianFit {
        coefficients: theta,
        precision,
        rss,
        objective,
        edf,
        log_likelihood,
        standard_errors,
        condition_estimate: sol.condition,
        rows: n,
    })
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub(crate) fn log1pexp(x: f64) -> f64 {
    if x > 35.0 {
        x
    } else if x < -35.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn bernoulli_log_mass(y: f64, eta: f64) -> f64 {
    y * eta - log1pexp(eta)
}

pub fn logit_objective(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    penalty: &DMatrix<f64>,
    theta: &[f64],
) -> f64 {
    let t = DVector::from_column_slice(theta);
    let eta = design * &t;
    let ll: f64 = eta
        .iter()
        .zip(response.iter())
        .map(|(&e, &y)| bernoulli_log_mass(y, e))
        .sum();
    -ll + 0.5 * t.dot(&(penalty * &t))
}

const LOGIT_MAX_ITER: usize = 200;
const LOGIT_GRAD_TOL: f64 = 1e-8;

pub fn fit_logit(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    penalty: &DMatrix<f64>,
) -> Result<LogitFit> {
    check_shapes(design, response, penalty)?;
    if response.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidParameter(
            "logistic responses must be 0 or 1".into(),
        ));
    }
    let (n, p) = design.shape();
    let mut theta = DVector::zeros(p);
    let mut f = logit_objective(design, response, penalty, theta.as_slice());
    let mut grad_norm = f64::INFINITY;
    for iter in 0..LOGIT_MAX_ITER {
        let eta = design * &theta;
        let mu = eta.map(sigmoid);
        let grad = design.transpose() * (response - &mu) - penalty * &theta;
        grad_norm = grad.amax();
        if grad_norm <= LOGIT_GRAD_TOL {
            return finish_logit(design, response, penalty, theta, f, grad_norm, iter);
        }
        if eta.amax() > 40.0 && separated(&eta, response) {
            return Err(Error::Separation);
        }
        let w = mu.map(|m| (m * (1.0 - m)).max(1e-300));
        let hess = weighted_gram(design, &w) + penalty;
        let step = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                if separated(&eta, response) {
                    return Err(Error::Separation);
                }
                return Err(Error::SingularDesign);
            }
        };
        // backtracking on the objective along the Newton direction
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &theta + &step * t;
            let fc = logit_objective(design, response, penalty, cand.as_slice());
            if fc <= f - 1e-4 * t * slope || (fc - f).abs() <= 1e-15 * f.abs().max(1.0) {
                theta = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no further decrease representable; accept if gradient is tiny
            // relative to the data scale
            if grad_norm <= 1e-6 {
                return finish_logit(design, response, penalty, theta, f, grad_norm, iter + 1);
            }
            return Err(Error::NotConverged {
                iterations: iter + 1,
                gradient_norm: grad_norm,
            });
        }
        let _ = n;
    }
    Err(Error::NotConverged {
        iterations: LOGIT_MAX_ITER,
        gradient_norm: grad_norm,
    })
}

fn separated(eta: &DVector<f64>, response: &DVector<f64>) -> bool {
    eta.iter()
        .zip(response.iter())
        .all(|(&e, &y)| if y == 1.0 { e >= 0.0 } else { e <= 0.0 })
}

fn weighted_gram(design: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut xw = design.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    design.transpose() * xw
}

fn finish_logit(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    penalty: &DMatrix<f64>,
    theta: DVector<f64>,
    objective: f64,
    gradient_norm: f64,
    iterations: usize,
) -> Result<LogitFit> {
    let eta = design * &theta;
    let mu = eta.map(sigmoid);
    let w = mu.map(|m| m * (1.0 - m));
    let info = weighted_gram(design, &w);
    let hess = &info + penalty;
    let inv = hess
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numeric("logistic Hessian is singular at the optimum".into()))?;
    let edf = (&inv * &info).trace();
    let p = theta.len();
    let eig = hess.symmetric_eigen().eigenvalues;
    let condition = if p > 0 {
        eig.amax()
            / eig
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min)
                .max(f64::MIN_POSITIVE)
    } else {
        1.0
    };
    let log_likelihood = eta
        .iter()
        .zip(response.iter())
        .map(|(&e, &y)| bernoulli_log_mass(y, e))
        .sum();
    Ok(LogitFit {
        standard_errors: (0..p).map(|j| inv[(j, j)].max(0.0).sqrt()).collect(),
        coefficients: theta.iter().copied().collect(),
        objective,
        edf,
        log_likelihood,
        gradient_norm,
        iterations,
        condition_estimate: condition,
        rows: design.nrows(),
    })
}
