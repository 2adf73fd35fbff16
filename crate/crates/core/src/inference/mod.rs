//! Variance estimation and confidence intervals.

mod bootstrap;
mod if_variance;
mod ustat;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Result, WrError};

pub use bootstrap::{bootstrap, bt_qt_ci, bt_wald_ci, quantile_type7, BootstrapResult, MAX_FAILED_FRACTION};
pub use if_variance::{if_variance, sscore_if_wald, IfDecomposition};
pub(crate) use if_variance::if_engine;
pub use ustat::{pocock_ustat_variance, pocock_ustat_wald};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CiKind {
    /// Wald interval from the influence-function variance.
    IfWald,
    /// Wald interval from the bootstrap standard deviation.
    BtWald,
    /// Bootstrap percentile interval.
    BtQt,
    /// Wald interval from the two-sample U-statistic variance (Pocock).
    UstatWald,
}

impl CiKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CiKind::IfWald => "if-wald",
            CiKind::BtWald => "bt-wald",
            CiKind::BtQt => "bt-qt",
            CiKind::UstatWald => "ustat-wald",
        }
    }
}

impl std::str::FromStr for CiKind {
    type Err = WrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "if" | "if-wald" => Ok(CiKind::IfWald),
            "bt-wald" => Ok(CiKind::BtWald),
            "bt-qt" => Ok(CiKind::BtQt),
            "ustat" | "ustat-wald" => Ok(CiKind::UstatWald),
            other => Err(WrError::InvalidArgument(format!("unknown CI kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    /// Nominal coverage `1 - alpha`.
    pub level: f64,
    pub kind: CiKind,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Two-sided standard normal critical value `z_{1 - alpha/2}`.
pub fn z_crit(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

/// Wald interval `theta ± z * se`, or on the log scale
/// `exp(log theta ± z * se / theta)` when `log_scale` is set.
pub fn wald_ci(theta: f64, se: f64, alpha: f64, kind: CiKind, log_scale: bool) -> ConfidenceInterval {
    let z = z_crit(alpha);
    let (lower, upper) = if log_scale && theta > 0.0 {
        let half = z * se / theta;
        ((theta.ln() - half).exp(), (theta.ln() + half).exp())
    } else {
        (theta - z * se, theta + z * se)
    };
    ConfidenceInterval {
        lower,
        upper,
        level: 1.0 - alpha,
        kind,
    }
}
