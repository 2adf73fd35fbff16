use super::{wald_ci, CiKind};
use crate::data::AnalysisDataset;
use crate::error::Result;
use crate::estimators::{pair_counts, pocock_estimate, split_arms, WinLossTally, WrEstimate};

/// Two-sample U-statistic variance of Pocock's win ratio by the delta method.
pub fn pocock_ustat_variance(ds: &AnalysisDataset) -> Result<f64> {
    let (est, _) = pocock_estimate(ds)?;
    Ok(ustat_var(ds, est.p_win, est.p_loss))
}

/// Pocock estimate with the U-statistic variance and Wald CI attached.
pub fn pocock_ustat_wald(ds: &AnalysisDataset, log_scale: bool) -> Result<(WrEstimate, WinLossTally)> {
    let (mut est, tally) = pocock_estimate(ds)?;
    let var = ustat_var(ds, est.p_win, est.p_loss);
    est.variance = Some(var);
    est.ci = Some(wald_ci(est.theta, var.sqrt(), ds.config().alpha, CiKind::UstatWald, log_scale));
    Ok((est, tally))
}

fn ustat_var(ds: &AnalysisDataset, p_win: f64, p_loss: f64) -> f64 {
    let (a, b) = split_arms(ds);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    // per-subject win/loss proportions from arm A's point of view
    let proj_a: Vec<(f64, f64)> = pair_counts(&a, &b)
        .into_iter()
        .map(|(w, l)| (w as f64 / nb, l as f64 / nb))
        .collect();
    let proj_b: Vec<(f64, f64)> = pair_counts(&b, &a)
        .into_iter()
        .map(|(w, l)| (l as f64 / na, w as f64 / na))
        .collect();
    let ca = cov2(&proj_a);
    let cb = cov2(&proj_b);
    let s = [
        ca[0] / na + cb[0] / nb,
        ca[1] / na + cb[1] / nb,
        ca[2] / na + cb[2] / nb,
    ];
    if p_loss <= 0.0 {
        return f64::NAN;
    }
    let g = [1.0 / p_loss, -p_win / (p_loss * p_loss)];
    (g[0] * g[0] * s[0] + 2.0 * g[0] * g[1] * s[1] + g[1] * g[1] * s[2]).max(0.0)
}

/// `[var(x), cov(x, y), var(y)]` with divisor `n - 1` (zeros when `n < 2`).
fn cov2(v: &[(f64, f64)]) -> [f64; 3] {
    let n = v.len() as f64;
    if v.len() < 2 {
        return [0.0; 3];
    }
    let mx = v.iter().map(|p| p.0).sum::<f64>() / n;
    let my = v.iter().map(|p| p.1).sum::<f64>() / n;
    let mut out = [0.0; 3];
    for &(x, y) in v {
        out[0] += (x - mx) * (x - mx);
        out[1] += (x - mx) * (y - my);
        out[2] += (y - my) * (y - my);
    }
    out.map(|s| s / (n - 1.0))
}
