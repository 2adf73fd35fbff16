//! Covariate-adjusted S-score estimation when the second endpoint is missing
//! at random given baseline covariates among horizon survivors.
//!
//! Per arm, a logistic model for the observed-indicator is fitted to the
//! survivors. The second-endpoint CDF is then the inverse-probability-weighted
//! empirical CDF of the observed values, and it is spliced onto the
//! Kaplan–Meier CDF of the first endpoint at the horizon.

mod logistic;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::data::{AnalysisDataset, Arm, StudyConfig, SubjectRecord};
use crate::error::{Result, WrError};
use crate::estimators::{win_probabilities, Method, WrEstimate};
use crate::inference::{if_engine, wald_ci, CiKind, IfDecomposition};
use crate::survfit::{km_fit, StepCdf};

pub use logistic::{fit_logistic, LogisticFit, LogisticOptions};

/// Smallest fitted observation probability accepted for a survivor.
pub const PROPENSITY_FLOOR: f64 = 0.01;

/// Normalized weighted empirical CDF of `(value, weight)` pairs.
pub fn weighted_ecdf(items: &[(f64, f64)]) -> Result<StepCdf> {
    if items.is_empty() {
        return Err(WrError::EmptyInput);
    }
    let mut v = items.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = v.iter().map(|p| p.1).sum();
    let mut grid = Vec::new();
    let mut vals = Vec::new();
    let mut acc = 0.0;
    for (k, &(x, w)) in v.iter().enumerate() {
        acc += w;
        if k + 1 == v.len() || v[k + 1].0 != x {
            grid.push(x);
            vals.push((acc / total).min(1.0));
        }
    }
    *vals.last_mut().unwrap() = 1.0;
    StepCdf::from_steps(grid, vals)
}

/// IPW CDF of the second endpoint among one arm's horizon survivors.
///
/// `survivors` must all belong to `arm`; indices in a propensity error refer
/// to positions in that slice.
pub fn ipw_cdf(arm: Arm, survivors: &[&SubjectRecord], fit: &LogisticFit, covariates: &[usize]) -> Result<StepCdf> {
    let items: Vec<(usize, Option<f64>, f64)> = survivors
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r.y2, fit.predict(&select(&r.covariates, covariates))))
        .collect();
    ipw_from_propensities(arm, &items, PROPENSITY_FLOOR)
}

fn ipw_from_propensities(arm: Arm, items: &[(usize, Option<f64>, f64)], floor: f64) -> Result<StepCdf> {
    if items.iter().all(|it| it.1.is_none()) {
        return Err(WrError::NoObservedOutcomes(arm));
    }
    let bad: Vec<usize> = items.iter().filter(|it| !(it.2 >= floor)).map(|it| it.0).collect();
    if !bad.is_empty() {
        return Err(WrError::ExtremePropensity {
            arm,
            floor,
            indices: bad,
        });
    }
    let weighted: Vec<(f64, f64)> = items
        .iter()
        .filter_map(|it| it.1.map(|y| (y, 1.0 / it.2)))
        .collect();
    weighted_ecdf(&weighted)
}

fn select(x: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&j| x[j]).collect()
}

/// CDF of the S-score assembled from the first-endpoint CDF on `[0, h]` and
/// the second-endpoint CDF of survivors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjustedCdf {
    pub f1: StepCdf,
    /// `1 - F1(h)`.
    pub p_survive_h: f64,
    pub f2: StepCdf,
    pub h: f64,
}

impl AdjustedCdf {
    pub fn eval(&self, s: f64) -> f64 {
        let f1h = 1.0 - self.p_survive_h;
        if s <= self.h {
            self.f1.eval(s)
        } else if s < self.h + 1.0 {
            f1h
        } else {
            f1h + self.p_survive_h * self.f2.eval(s - self.h - 1.0)
        }
    }

    /// The same distribution as one step function on the S scale.
    pub fn to_step_cdf(&self) -> Result<StepCdf> {
        let mut grid: Vec<f64> = self.f1.grid().to_vec();
        let mut vals: Vec<f64> = self.f1.cdf_values().to_vec();
        if self.p_survive_h > 0.0 {
            let f1h = 1.0 - self.p_survive_h;
            for (&y, &f) in self.f2.grid().iter().zip(self.f2.cdf_values()) {
                grid.push(self.h + 1.0 + y);
                vals.push((f1h + self.p_survive_h * f).min(1.0));
            }
        }
        StepCdf::from_steps(grid, vals)
    }
}

pub fn combined_cdf(f1: &StepCdf, f2: &StepCdf, config: &StudyConfig) -> AdjustedCdf {
    AdjustedCdf {
        f1: f1.clone(),
        p_survive_h: 1.0 - f1.eval(config.h),
        f2: f2.clone(),
        h: config.h,
    }
}

/// Missingness model and fitted observation probabilities for one arm.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmPropensity {
    pub arm: Arm,
    /// `None` when no model was needed: no survivors, or none missing.
    pub fit: Option<LogisticFit>,
    /// `(record index, fitted probability)` for every survivor of the arm.
    pub pi: Vec<(usize, f64)>,
}

fn fit_arm(ds: &AnalysisDataset, arm: Arm, covariates: &[usize], opts: LogisticOptions) -> Result<ArmPropensity> {
    let cfg = ds.config();
    let surv: Vec<(usize, &SubjectRecord)> = ds
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.arm == arm && r.is_survivor(cfg))
        .collect();
    let n_obs = surv.iter().filter(|(_, r)| r.r2()).count();
    if surv.is_empty() {
        return Ok(ArmPropensity {
            arm,
            fit: None,
            pi: Vec::new(),
        });
    }
    if n_obs == 0 {
        return Err(WrError::NoObservedOutcomes(arm));
    }
    if n_obs == surv.len() {
        return Ok(ArmPropensity {
            arm,
            fit: None,
            pi: surv.iter().map(|(i, _)| (*i, 1.0)).collect(),
        });
    }
    let p = covariates.len() + 1;
    let x = DMatrix::from_fn(surv.len(), p, |i, j| {
        if j == 0 {
            1.0
        } else {
            surv[i].1.covariates[covariates[j - 1]]
        }
    });
    let r: Vec<bool> = surv.iter().map(|(_, rec)| rec.r2()).collect();
    let fit = fit_logistic(&x, &r, opts)?;
    let pi = surv
        .iter()
        .map(|(i, rec)| (*i, fit.predict(&select(&rec.covariates, covariates))))
        .collect();
    Ok(ArmPropensity {
        arm,
        fit: Some(fit),
        pi,
    })
}

/// Everything the adjusted estimator computes for one dataset.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjustedFit {
    pub estimate: WrEstimate,
    pub cdfs: [AdjustedCdf; 2],
    pub propensity: [ArmPropensity; 2],
}

impl AdjustedFit {
    /// `1 / pi` for survivors and 1 for everyone else, in record order.
    pub fn inverse_weights(&self, n: usize) -> Vec<f64> {
        let mut w = vec![1.0; n];
        for p in &self.propensity {
            for &(i, pi) in &p.pi {
                w[i] = 1.0 / pi;
            }
        }
        w
    }
}

/// Fit the adjusted estimator using the covariate columns `covariates`
/// (indices into each record's covariate vector; empty means intercept only).
pub fn fit_adjusted(ds: &AnalysisDataset, covariates: &[usize]) -> Result<AdjustedFit> {
    let dim = ds.covariate_dim();
    if let Some(&bad) = covariates.iter().find(|&&j| j >= dim) {
        return Err(WrError::InvalidArgument(format!(
            "covariate index {bad} out of range; the dataset has {dim} covariate column(s)"
        )));
    }
    let cfg = ds.config();
    let opts = LogisticOptions::default();
    let mut cdfs = Vec::with_capacity(2);
    let mut props = Vec::with_capacity(2);
    for arm in [Arm::A, Arm::B] {
        let prop = fit_arm(ds, arm, covariates, opts)?;
        let y1: Vec<(f64, bool)> = ds
            .records()
            .iter()
            .filter(|r| r.arm == arm)
            .map(|r| (r.y1_obs, r.delta1 && r.y1_obs <= cfg.h))
            .collect();
        let f1 = km_fit(&y1)?;
        let f2 = if prop.pi.is_empty() {
            StepCdf::zero()
        } else {
            let items: Vec<(usize, Option<f64>, f64)> = prop
                .pi
                .iter()
                .map(|&(i, pi)| (i, ds.records()[i].y2, pi))
                .collect();
            ipw_from_propensities(arm, &items, PROPENSITY_FLOOR)?
        };
        cdfs.push(combined_cdf(&f1, &f2, cfg));
        props.push(prop);
    }
    let fa = cdfs[0].to_step_cdf()?;
    let fb = cdfs[1].to_step_cdf()?;
    let (n, d) = win_probabilities(&fa, &fb);
    let estimate = WrEstimate::from_probabilities(n, d, Method::Adjusted)?;
    let [pa, pb]: [ArmPropensity; 2] = props.try_into().expect("two arms");
    let [ca, cb]: [AdjustedCdf; 2] = cdfs.try_into().expect("two arms");
    Ok(AdjustedFit {
        estimate,
        cdfs: [ca, cb],
        propensity: [pa, pb],
    })
}

pub fn wr_adjusted(ds: &AnalysisDataset, covariates: &[usize]) -> Result<WrEstimate> {
    fit_adjusted(ds, covariates).map(|f| f.estimate)
}

/// Influence-function variance of the adjusted estimator, treating the fitted
/// propensities as known.
pub fn adjusted_if_variance(ds: &AnalysisDataset, covariates: &[usize]) -> Result<IfDecomposition> {
    let fit = fit_adjusted(ds, covariates)?;
    adjusted_engine(ds, &fit)
}

fn adjusted_engine(ds: &AnalysisDataset, fit: &AdjustedFit) -> Result<IfDecomposition> {
    let w = fit.inverse_weights(ds.n());
    if_engine(&ds.score_observations(), Some(&w), ds.config().h, &[])
}

/// Adjusted estimate with its influence-function variance and Wald CI.
pub fn adjusted_if_wald(
    ds: &AnalysisDataset,
    covariates: &[usize],
    log_scale: bool,
) -> Result<(WrEstimate, IfDecomposition)> {
    let fit = fit_adjusted(ds, covariates)?;
    let dec = adjusted_engine(ds, &fit)?;
    let mut est = fit.estimate;
    est.variance = Some(dec.se().powi(2));
    est.ci = Some(wald_ci(est.theta, dec.se(), ds.config().alpha, CiKind::IfWald, log_scale));
    Ok((est, dec))
}
