use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::FitError;
use crate::{sigmoid, softplus};

pub const INTERCEPT: &str = "(intercept)";

/// Coefficients beyond this magnitude are treated as diverging.
const DIVERGENCE: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrlsOptions {
    pub max_iter: usize,
    /// Convergence on `max_j |Δβ_j| / max(|β_j|, 1)`.
    pub tol: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            max_iter: 50,
            tol: 1e-8,
        }
    }
}

/// Wald inference for one coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRecord {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
    pub odds_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStep {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub max_relative_change: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrlsFit {
    /// Intercept first, then one per column.
    pub coefficients: Vec<f64>,
    pub records: Vec<CoefficientRecord>,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// `‖Xᵀ(y − p)‖∞` at the returned coefficients.
    pub gradient_norm: f64,
    pub n: usize,
}

fn design(columns: &[&[f64]], n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(
        n,
        columns.len() + 1,
        |i, j| if j == 0 { 1.0 } else { columns[j - 1][i] },
    )
}

fn log_likelihood(eta: &DVector<f64>, y: &DVector<f64>) -> f64 {
    eta.iter().zip(y.iter()).map(|(&e, &t)| t * e - softplus(e)).sum()
}

/// Newton (IRLS) fit of a logistic model with an implicit intercept.
///
/// `columns` holds one slice per term, all of length `y.len()`, with no
/// missing cells. Standard errors come from the inverse observed information
/// at the solution.
pub fn fit_irls(names: &[String], columns: &[&[f64]], y: &[bool], opts: &IrlsOptions) -> Result<IrlsFit, FitError> {
    let n = y.len();
    let k = columns.len() + 1;
    if names.len() != columns.len() {
        return Err(FitError::Shape(format!(
            "{} names for {} columns",
            names.len(),
            columns.len()
        )));
    }
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(FitError::Shape(format!("column of length {} for {n} labels", c.len())));
    }
    if n <= k {
        return Err(FitError::TooFewRows { rows: n, params: k });
    }
    if columns.iter().any(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(FitError::Shape("non-finite design value".into()));
    }
    let x = design(columns, n);
    let yv = DVector::from_iterator(n, y.iter().map(|&b| f64::from(u8::from(b))));
    let term_name = |j: usize| {
        if j == 0 {
            INTERCEPT.to_string()
        } else {
            names[j - 1].clone()
        }
    };
    let largest = |beta: &DVector<f64>| term_name(beta.iamax());

    let mut beta = DVector::zeros(k);
    let mut trace = Vec::new();
    let mut converged = false;
    for iteration in 1..=opts.max_iter {
        let eta = &x * &beta;
        let p = eta.map(sigmoid);
        let w = p.map(|p| p * (1.0 - p));
        let grad = x.transpose() * (&yv - &p);
        let xtw = DMatrix::from_fn(k, n, |r, i| x[(i, r)] * w[i]);
        let info = &xtw * &x;
        let Some(chol) = info.cholesky() else {
            if beta.amax() > 10.0 {
                return Err(FitError::Separation { term: largest(&beta) });
            }
            return Err(FitError::Singular);
        };
        let delta = chol.solve(&grad);
        beta += &delta;
        let change = delta
            .iter()
            .zip(beta.iter())
            .map(|(d, b)| d.abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        trace.push(IterationStep {
            iteration,
            log_likelihood: log_likelihood(&(&x * &beta), &yv),
            max_relative_change: change,
        });
        if beta.amax() > DIVERGENCE {
            return Err(FitError::Separation { term: largest(&beta) });
        }
        if !change.is_finite() {
            return Err(FitError::NotConverged { trace });
        }
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        if beta.amax() > 10.0 {
            return Err(FitError::Separation { term: largest(&beta) });
        }
        return Err(FitError::NotConverged { trace });
    }

    let eta = &x * &beta;
    let p = eta.map(sigmoid);
    let w = p.map(|p| p * (1.0 - p));
    let gradient_norm = (x.transpose() * (&yv - &p)).amax();
    let xtw = DMatrix::from_fn(k, n, |r, i| x[(i, r)] * w[i]);
    let cov = (&xtw * &x).try_inverse().ok_or(FitError::Singular)?;
    let records = (0..k)
        .map(|j| {
            let estimate = beta[j];
            let std_error = cov[(j, j)].sqrt();
            let z = estimate / std_error;
            CoefficientRecord {
                term: term_name(j),
                estimate,
                std_error,
                z,
                p_value: erfc(z.abs() / std::f64::consts::SQRT_2),
                odds_ratio: estimate.exp(),
            }
        })
        .collect();
    Ok(IrlsFit {
        coefficients: beta.iter().copied().collect(),
        records,
        log_likelihood: log_likelihood(&eta, &yv),
        iterations: trace.len(),
        gradient_norm,
        n,
    })
}
