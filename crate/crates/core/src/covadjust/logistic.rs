use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Result, WrError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    /// Convergence threshold on the largest absolute score component.
    pub tol: f64,
    pub max_iter: usize,
    /// Coefficient Euclidean norm beyond which the fit is declared separated.
    pub beta_cap: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        LogisticOptions {
            tol: 1e-8,
            max_iter: 50,
            beta_cap: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticFit {
    /// Intercept first.
    pub beta: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_abs_score: f64,
}

impl LogisticFit {
    /// Fitted probability for one covariate vector (without the intercept column).
    pub fn predict(&self, x: &[f64]) -> f64 {
        let eta = self.beta[0] + self.beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
        sigmoid(eta)
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// `sum r*eta - log(1 + exp(eta))`, computed stably.
fn log_lik(x: &DMatrix<f64>, r: &[bool], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(r)
        .map(|(&e, &ri)| {
            let log1pexp = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            if ri {
                e - log1pexp
            } else {
                -log1pexp
            }
        })
        .sum()
}

/// Maximum-likelihood logistic regression by Newton's method with step halving.
///
/// `x` must already contain the intercept column.
pub fn fit_logistic(x: &DMatrix<f64>, r: &[bool], opts: LogisticOptions) -> Result<LogisticFit> {
    let (n, p) = x.shape();
    if n != r.len() {
        return Err(WrError::InvalidArgument(format!(
            "design has {n} rows but {} responses",
            r.len()
        )));
    }
    if n == 0 || p == 0 {
        return Err(WrError::EmptyInput);
    }
    let y = DVector::from_iterator(n, r.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    let mut beta = DVector::zeros(p);
    let mut ll = log_lik(x, r, &beta);
    let mut iterations = 0;
    loop {
        let prob = (x * &beta).map(sigmoid);
        let score = x.transpose() * (&y - &prob);
        let max_abs_score = score.amax();
        if max_abs_score <= opts.tol {
            return Ok(LogisticFit {
                beta: beta.iter().copied().collect(),
                converged: true,
                iterations,
                max_abs_score,
            });
        }
        if iterations >= opts.max_iter {
            log::warn!("logistic fit stopped after {iterations} iterations, max |score| = {max_abs_score:e}");
            return Ok(LogisticFit {
                beta: beta.iter().copied().collect(),
                converged: false,
                iterations,
                max_abs_score,
            });
        }
        let w = prob.map(|q| q * (1.0 - q));
        let mut xw = x.clone();
        for (mut row, wi) in xw.row_iter_mut().zip(w.iter()) {
            row *= *wi;
        }
        let info = x.transpose() * xw;
        let step = info
            .cholesky()
            .ok_or(WrError::SingularInformation)?
            .solve(&score);
        let mut t = 1.0;
        let mut candidate = &beta + &step;
        let mut cand_ll = log_lik(x, r, &candidate);
        // rounding near the optimum can lower the likelihood by a few ulps
        while cand_ll < ll - 1e-12 * (1.0 + ll.abs()) && t > 1e-10 {
            t *= 0.5;
            candidate = &beta + &step * t;
            cand_ll = log_lik(x, r, &candidate);
        }
        beta = candidate;
        ll = cand_ll;
        iterations += 1;
        if beta.norm() > opts.beta_cap {
            return Err(WrError::Separation { cap: opts.beta_cap });
        }
    }
}
