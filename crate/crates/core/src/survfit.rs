//! Kaplan–Meier product-limit estimation and right-continuous step CDFs.

use serde::Serialize;

use crate::data::ScoreObservation;
use crate::error::{Result, WrError};

/// A right-continuous step-function CDF.
///
/// `cdf_values[i]` is the CDF at and after `grid[i]` until the next grid
/// point; below `grid[0]` the CDF is zero. The risk-set and event counts are
/// filled by [`km_fit`] and left empty for CDFs built from explicit steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepCdf {
    grid: Vec<f64>,
    cdf_values: Vec<f64>,
    n_at_risk: Vec<usize>,
    n_events: Vec<usize>,
}

impl StepCdf {
    /// Build from explicit jump points and CDF values.
    pub fn from_steps(grid: Vec<f64>, cdf_values: Vec<f64>) -> Result<Self> {
        if grid.len() != cdf_values.len() {
            return Err(WrError::InvalidArgument(
                "grid and cdf_values differ in length".into(),
            ));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(WrError::InvalidArgument("grid must be strictly increasing".into()));
        }
        if cdf_values.windows(2).any(|w| w[1] < w[0])
            || cdf_values.iter().any(|v| !(0.0..=1.0).contains(v))
        {
            return Err(WrError::InvalidArgument(
                "cdf values must be non-decreasing within [0, 1]".into(),
            ));
        }
        Ok(StepCdf {
            grid,
            cdf_values,
            n_at_risk: Vec::new(),
            n_events: Vec::new(),
        })
    }

    /// A CDF with no jumps (identically zero).
    pub fn zero() -> Self {
        StepCdf {
            grid: Vec::new(),
            cdf_values: Vec::new(),
            n_at_risk: Vec::new(),
            n_events: Vec::new(),
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn cdf_values(&self) -> &[f64] {
        &self.cdf_values
    }

    pub fn n_at_risk(&self) -> &[usize] {
        &self.n_at_risk
    }

    pub fn n_events(&self) -> &[usize] {
        &self.n_events
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// CDF at `s` (right-continuous).
    pub fn eval(&self, s: f64) -> f64 {
        cdf_eval(self, s)
    }

    /// Left limit `F(s-)`.
    pub fn eval_left(&self, s: f64) -> f64 {
        let k = self.grid.partition_point(|&g| g < s);
        if k == 0 {
            0.0
        } else {
            self.cdf_values[k - 1]
        }
    }

    /// Iterator over `(atom, probability mass)` pairs.
    pub fn atoms(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.iter().enumerate().map(move |(i, &g)| {
            let prev = if i == 0 { 0.0 } else { self.cdf_values[i - 1] };
            (g, self.cdf_values[i] - prev)
        })
    }

    /// Mass the fit leaves beyond its last jump (nonzero when the largest
    /// observation is censored).
    pub fn residual_mass(&self) -> f64 {
        1.0 - self.cdf_values.last().copied().unwrap_or(0.0)
    }
}

/// Kaplan–Meier fit of the CDF from `(value, event)` pairs.
///
/// The grid holds only values with at least one event. At a tied value,
/// censored observations are still in the risk set when the events there are
/// processed.
pub fn km_fit(obs: &[(f64, bool)]) -> Result<StepCdf> {
    if obs.is_empty() {
        return Err(WrError::EmptyInput);
    }
    let mut sorted: Vec<(f64, bool)> = obs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut grid = Vec::new();
    let mut cdf_values = Vec::new();
    let mut n_at_risk = Vec::new();
    let mut n_events = Vec::new();

    let mut at_risk = sorted.len();
    let mut surv = 1.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let mut j = i;
        let mut d = 0usize;
        while j < sorted.len() && sorted[j].0 == t {
            d += usize::from(sorted[j].1);
            j += 1;
        }
        if d > 0 {
            surv *= 1.0 - d as f64 / at_risk as f64;
            grid.push(t);
            cdf_values.push(1.0 - surv);
            n_at_risk.push(at_risk);
            n_events.push(d);
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(StepCdf {
        grid,
        cdf_values,
        n_at_risk,
        n_events,
    })
}

/// Kaplan–Meier fit of the score distribution for the given observations.
pub fn km_fit_scores<'a>(obs: impl IntoIterator<Item = &'a ScoreObservation>) -> Result<StepCdf> {
    let pairs: Vec<(f64, bool)> = obs.into_iter().map(|o| (o.s, o.delta_s)).collect();
    km_fit(&pairs)
}

/// Right-continuous evaluation of a step CDF.
pub fn cdf_eval(f: &StepCdf, s: f64) -> f64 {
    let k = f.grid.partition_point(|&g| g <= s);
    if k == 0 {
        0.0
    } else {
        f.cdf_values[k - 1]
    }
}

/// Sorted, deduplicated union of the score values of both arms.
pub fn pooled_grid(obs_a: &[ScoreObservation], obs_b: &[ScoreObservation]) -> Vec<f64> {
    let mut v: Vec<f64> = obs_a.iter().chain(obs_b).map(|o| o.s).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}
