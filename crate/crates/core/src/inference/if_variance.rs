use serde::Serialize;

use super::{wald_ci, CiKind};
use crate::data::{AnalysisDataset, ScoreObservation};
use crate::error::{Result, WrError};
use crate::estimators::{wr_sscore, WrEstimate};

/// Influence-function decomposition of the plug-in win ratio.
///
/// Arrays indexed by arm hold arm A at position 0. Grid quantities have one
/// entry per pooled grid point, except `surv`, which starts with the value 1
/// just before the first point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IfDecomposition {
    pub grid: Vec<f64>,
    /// Conditional survival `q_k = 1 - events_k / at_risk_k` (1 where nobody is at risk).
    pub q: [Vec<f64>; 2],
    pub surv: [Vec<f64>; 2],
    /// Coefficient of a subject's centered at-risk/event contribution at each grid point.
    pub coef: [Vec<f64>; 2],
    /// Influence value per record, in dataset order.
    pub phi: Vec<f64>,
    pub variance: f64,
    pub theta: f64,
    pub p_win: f64,
    pub p_loss: f64,
}

impl IfDecomposition {
    pub fn n(&self) -> usize {
        self.phi.len()
    }

    /// `sqrt(V / n)`.
    pub fn se(&self) -> f64 {
        (self.variance / self.n() as f64).sqrt()
    }
}

/// Influence values of `N / D` computed from per-arm product-limit fits on
/// the pooled grid of observed scores (plus any `extra_grid` points).
///
/// `inv_pi[i]` multiplies subject `i`'s at-risk and event contributions at
/// grid points above `h`; `None` means all ones.
pub(crate) fn if_engine(
    obs: &[ScoreObservation],
    inv_pi: Option<&[f64]>,
    h: f64,
    extra_grid: &[f64],
) -> Result<IfDecomposition> {
    let n = obs.len();
    if n == 0 {
        return Err(WrError::EmptyInput);
    }
    let mut grid: Vec<f64> = obs.iter().map(|o| o.s).chain(extra_grid.iter().copied()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let m = grid.len();
    let weight = |i: usize| inv_pi.map_or(1.0, |w| w[i]);
    let idx: Vec<usize> = obs
        .iter()
        .map(|o| grid.partition_point(|&g| g < o.s))
        .collect();

    let mut q: [Vec<f64>; 2] = [vec![1.0; m], vec![1.0; m]];
    let mut risk: [Vec<f64>; 2] = [vec![0.0; m], vec![0.0; m]];
    for z in 0..2 {
        // totals of subjects whose score equals grid[k]; `hi` uses the weights
        let mut exit_lo = vec![0.0; m];
        let mut exit_hi = vec![0.0; m];
        let mut ev_lo = vec![0.0; m];
        let mut ev_hi = vec![0.0; m];
        for (i, o) in obs.iter().enumerate() {
            if o.arm.index() != z {
                continue;
            }
            let k = idx[i];
            exit_lo[k] += 1.0;
            exit_hi[k] += weight(i);
            if o.delta_s {
                ev_lo[k] += 1.0;
                ev_hi[k] += weight(i);
            }
        }
        let (mut acc_lo, mut acc_hi) = (0.0, 0.0);
        for k in (0..m).rev() {
            acc_lo += exit_lo[k];
            acc_hi += exit_hi[k];
            let (r, e) = if grid[k] <= h {
                (acc_lo, ev_lo[k])
            } else {
                (acc_hi, ev_hi[k])
            };
            risk[z][k] = r;
            if r > 0.0 {
                q[z][k] = 1.0 - e / r;
            }
        }
    }

    let mut surv: [Vec<f64>; 2] = [vec![1.0; m + 1], vec![1.0; m + 1]];
    for z in 0..2 {
        for k in 0..m {
            surv[z][k + 1] = surv[z][k] * q[z][k];
        }
    }
    let (fa, fb) = (&surv[0], &surv[1]);
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 1..=m {
        num += (fb[k - 1] - fb[k]) * fa[k];
        den += (fa[k - 1] - fa[k]) * fb[k];
    }
    if den <= 0.0 {
        return Err(WrError::DegenerateDenominator);
    }
    let d2 = den * den;
    // survival one step past the last grid point is taken as 0
    let next = |f: &[f64], k: usize| if k < m { f[k + 1] } else { 0.0 };

    let mut coef: [Vec<f64>; 2] = [vec![0.0; m], vec![0.0; m]];
    for z in 0..2 {
        let mut h_next = 0.0;
        for k in (1..=m).rev() {
            let g = if z == 0 {
                (den * (fb[k - 1] - fb[k]) + num * (fb[k] - next(fb, k))) / d2
            } else {
                (-den * (fa[k] - next(fa, k)) - num * (fa[k - 1] - fa[k])) / d2
            };
            let q_next = if k < m { q[z][k] } else { 0.0 };
            let hk = g + q_next * h_next;
            h_next = hk;
            let r = risk[z][k - 1];
            if r > 0.0 {
                coef[z][k - 1] = surv[z][k - 1] * hk / (r / n as f64);
            }
        }
    }

    // prefix sums of coef * (1 - q), split by the side of h
    let mut pre_lo: [Vec<f64>; 2] = [vec![0.0; m + 1], vec![0.0; m + 1]];
    let mut pre_hi: [Vec<f64>; 2] = [vec![0.0; m + 1], vec![0.0; m + 1]];
    for z in 0..2 {
        for k in 0..m {
            let t = coef[z][k] * (1.0 - q[z][k]);
            let (lo, hi) = if grid[k] <= h { (t, 0.0) } else { (0.0, t) };
            pre_lo[z][k + 1] = pre_lo[z][k] + lo;
            pre_hi[z][k + 1] = pre_hi[z][k] + hi;
        }
    }
    let phi: Vec<f64> = obs
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let z = o.arm.index();
            let k = idx[i];
            let w = weight(i);
            let wk = if grid[k] <= h { 1.0 } else { w };
            let d = if o.delta_s { 1.0 } else { 0.0 };
            pre_lo[z][k] + w * pre_hi[z][k] + coef[z][k] * wk * (1.0 - d - q[z][k])
        })
        .collect();
    let variance = phi.iter().map(|p| p * p).sum::<f64>() / n as f64;

    Ok(IfDecomposition {
        grid,
        q,
        surv,
        coef,
        phi,
        variance,
        theta: num / den,
        p_win: num,
        p_loss: den,
    })
}

/// Influence-function variance of the unadjusted S-score estimator.
pub fn if_variance(ds: &AnalysisDataset) -> Result<IfDecomposition> {
    wr_sscore(ds)?;
    if_engine(&ds.score_observations(), None, ds.config().h, &[])
}

/// S-score estimate with the influence-function variance and Wald CI attached.
pub fn sscore_if_wald(ds: &AnalysisDataset, log_scale: bool) -> Result<(WrEstimate, IfDecomposition)> {
    let mut est = wr_sscore(ds)?;
    let dec = if_engine(&ds.score_observations(), None, ds.config().h, &[])?;
    est.variance = Some(dec.se().powi(2));
    est.ci = Some(wald_ci(est.theta, dec.se(), ds.config().alpha, CiKind::IfWald, log_scale));
    Ok((est, dec))
}
