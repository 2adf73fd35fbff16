use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{z_crit, CiKind, ConfidenceInterval};
use crate::data::{AnalysisDataset, Arm, SubjectRecord};
use crate::error::{Result, WrError};

/// Replicates may fail on at most this fraction of draws.
pub const MAX_FAILED_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    /// Successful replicate estimates, in replicate order.
    pub replicates: Vec<f64>,
    pub failed: usize,
    pub requested: usize,
}

impl BootstrapResult {
    pub fn sd(&self) -> f64 {
        sample_sd(&self.replicates)
    }
}

/// Resample each arm with replacement `b` times and apply `estimator`.
///
/// Replicate `r` draws from a ChaCha8 stream `r` keyed by `seed`, so the
/// output does not depend on how replicates are scheduled across threads.
/// Replicates whose estimator fails are dropped and counted.
pub fn bootstrap<F>(ds: &AnalysisDataset, estimator: F, b: usize, seed: u64) -> Result<BootstrapResult>
where
    F: Fn(&AnalysisDataset) -> Result<f64> + Sync,
{
    if b < 2 {
        return Err(WrError::InvalidArgument(format!("bootstrap needs B >= 2, got {b}")));
    }
    let by_arm: [Vec<&SubjectRecord>; 2] = [Arm::A, Arm::B]
        .map(|arm| ds.records().iter().filter(|r| r.arm == arm).collect());
    let draws: Vec<Option<f64>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut recs = Vec::with_capacity(ds.n());
            for arm in &by_arm {
                for _ in 0..arm.len() {
                    recs.push(arm[rng.random_range(0..arm.len())].clone());
                }
            }
            let resampled = AnalysisDataset::from_trusted(*ds.config(), recs);
            estimator(&resampled).ok().filter(|t| t.is_finite())
        })
        .collect();
    let replicates: Vec<f64> = draws.iter().flatten().copied().collect();
    let failed = b - replicates.len();
    if failed as f64 > MAX_FAILED_FRACTION * b as f64 {
        return Err(WrError::TooManyDegenerateReplicates { failed, total: b });
    }
    if failed > 0 {
        log::warn!("{failed} of {b} bootstrap replicates were degenerate and dropped");
    }
    Ok(BootstrapResult {
        replicates,
        failed,
        requested: b,
    })
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// `theta_hat ± z * sd(replicates)`.
pub fn bt_wald_ci(replicates: &[f64], theta_hat: f64, alpha: f64) -> Result<ConfidenceInterval> {
    if replicates.len() < 2 {
        return Err(WrError::InsufficientReplicates(replicates.len()));
    }
    let half = z_crit(alpha) * sample_sd(replicates);
    Ok(ConfidenceInterval {
        lower: theta_hat - half,
        upper: theta_hat + half,
        level: 1.0 - alpha,
        kind: CiKind::BtWald,
    })
}

/// Percentile interval from linearly interpolated order statistics.
pub fn bt_qt_ci(replicates: &[f64], alpha: f64) -> Result<ConfidenceInterval> {
    if replicates.len() < 2 {
        return Err(WrError::InsufficientReplicates(replicates.len()));
    }
    let mut x = replicates.to_vec();
    x.sort_by(f64::total_cmp);
    Ok(ConfidenceInterval {
        lower: quantile_type7(&x, alpha / 2.0),
        upper: quantile_type7(&x, 1.0 - alpha / 2.0),
        level: 1.0 - alpha,
        kind: CiKind::BtQt,
    })
}

/// Quantile of sorted data: `x[floor(g)] + frac(g) * (x[floor(g)+1] - x[floor(g)])`
/// with `g = (n - 1) p`.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let g = (sorted.len() - 1) as f64 * p;
    let lo = g.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (g - lo as f64) * (sorted[hi] - sorted[lo])
}
