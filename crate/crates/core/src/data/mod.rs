//! Trial data model: study configuration, subject records, validation, the
//! score transform that folds both endpoints into one right-censored variable,
//! and the best/worst-case censoring transforms.
//!
//! Conventions:
//! - A subject whose terminal event happens after the horizon `h` (and who is
//!   followed at least to `h`) is recorded with `y1_obs = h + 1` and
//!   `delta1 = true`.
//! - The second endpoint can only be observed for such survivors.

mod csv_io;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, ValidationReport, Violation, WrError};

pub use csv_io::{covariate_names, read_csv, read_csv_from_reader, CsvOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    A,
    B,
}

impl Arm {
    pub fn other(self) -> Arm {
        match self {
            Arm::A => Arm::B,
            Arm::B => Arm::A,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Arm::A => 0,
            Arm::B => 1,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::A => "a",
            Arm::B => "b",
        })
    }
}

/// Horizon, second-endpoint bound and CI level shared by a whole analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub h: f64,
    pub tau: f64,
    pub alpha: f64,
}

impl StudyConfig {
    pub const DEFAULT_ALPHA: f64 = 0.05;

    pub fn new(h: f64, tau: f64, alpha: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(WrError::Config(format!("h must be finite and > 0, got {h}")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(WrError::Config(format!(
                "tau must be finite and > 0, got {tau}"
            )));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(WrError::Config(format!("alpha must be in (0, 1), got {alpha}")));
        }
        Ok(StudyConfig { h, tau, alpha })
    }

    /// Recorded first-endpoint value for subjects event-free at the horizon.
    pub fn survivor_time(&self) -> f64 {
        self.h + 1.0
    }

    /// Score value at which a survivor with a missing second endpoint leaves
    /// the risk set. It sits strictly between `h` and `h + 1`, so such a
    /// subject is never at risk for a survivor atom (including `y2 = 0`).
    pub fn survivor_censor_point(&self) -> f64 {
        self.h + 0.5
    }

    /// Parse `h`, `tau` and optionally `alpha` from a `key = value` text file.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            h: f64,
            tau: f64,
            alpha: Option<f64>,
        }
        let raw: Raw = toml::from_str(text).map_err(|e| WrError::Config(e.to_string()))?;
        StudyConfig::new(raw.h, raw.tau, raw.alpha.unwrap_or(Self::DEFAULT_ALPHA))
    }
}

/// One trial participant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub arm: Arm,
    /// Observed first-endpoint time, in `(0, h]` or exactly `h + 1`.
    pub y1_obs: f64,
    /// Event indicator for the first endpoint (true for survivors at `h + 1`).
    pub delta1: bool,
    /// Second endpoint; `None` when not observed.
    pub y2: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub covariates: Vec<f64>,
}

impl SubjectRecord {
    pub fn new(arm: Arm, y1_obs: f64, delta1: bool, y2: Option<f64>) -> Self {
        SubjectRecord {
            arm,
            y1_obs,
            delta1,
            y2,
            covariates: Vec::new(),
        }
    }

    pub fn with_covariates(mut self, covariates: Vec<f64>) -> Self {
        self.covariates = covariates;
        self
    }

    /// Whether the second endpoint was observed.
    pub fn r2(&self) -> bool {
        self.y2.is_some()
    }

    pub fn is_survivor(&self, config: &StudyConfig) -> bool {
        self.delta1 && self.y1_obs == config.survivor_time()
    }

    pub fn is_censored(&self, config: &StudyConfig) -> bool {
        !self.delta1 && self.y1_obs < config.survivor_time()
    }

    fn check(&self, config: &StudyConfig) -> Vec<String> {
        let mut out = Vec::new();
        let surv = config.survivor_time();
        if !self.y1_obs.is_finite() || self.y1_obs <= 0.0 {
            out.push(format!("y1_obs must be positive and finite, got {}", self.y1_obs));
        } else if self.y1_obs > config.h && self.y1_obs != surv {
            out.push(format!(
                "y1_obs = {} lies above the horizon h = {} but is not the survivor value {}",
                self.y1_obs, config.h, surv
            ));
        } else if self.y1_obs == surv && !self.delta1 {
            out.push(format!(
                "y1_obs = h+1 = {surv} encodes survival past the horizon and needs event = 1"
            ));
        }
        if let Some(y2) = self.y2 {
            if !(self.y1_obs == surv && self.delta1) {
                out.push(format!(
                    "second endpoint observed (y2 = {y2}) but y1_obs = {} is not the survivor value {surv}",
                    self.y1_obs
                ));
            }
            if !y2.is_finite() || y2 < 0.0 || y2 > config.tau {
                out.push(format!("y2 = {y2} outside [0, tau = {}]", config.tau));
            }
        }
        if self.covariates.iter().any(|x| !x.is_finite()) {
            out.push("covariates must be finite".to_string());
        }
        out
    }
}

/// The coarsened score and its event flag for one subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreObservation {
    pub arm: Arm,
    pub s: f64,
    pub delta_s: bool,
}

/// A validated set of records for both arms.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisDataset {
    config: StudyConfig,
    records: Vec<SubjectRecord>,
    n_a: usize,
    n_b: usize,
}

impl AnalysisDataset {
    /// Build without checking invariants. Callers must only pass records that
    /// came out of a validated dataset with the same config.
    pub(crate) fn from_trusted(config: StudyConfig, records: Vec<SubjectRecord>) -> Self {
        let n_a = records.iter().filter(|r| r.arm == Arm::A).count();
        let n_b = records.len() - n_a;
        AnalysisDataset {
            config,
            records,
            n_a,
            n_b,
        }
    }

    pub fn config(&self) -> &StudyConfig {
        &self.config
    }

    pub fn records(&self) -> &[SubjectRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<SubjectRecord> {
        self.records
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }

    pub fn n_b(&self) -> usize {
        self.n_b
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn n_arm(&self, arm: Arm) -> usize {
        match arm {
            Arm::A => self.n_a,
            Arm::B => self.n_b,
        }
    }

    /// Number of covariates per record (0 when none were supplied).
    pub fn covariate_dim(&self) -> usize {
        self.records.first().map_or(0, |r| r.covariates.len())
    }

    pub fn with_config(&self, config: StudyConfig) -> Result<AnalysisDataset> {
        validate_dataset(config, self.records.clone())
    }

    pub fn score_observations(&self) -> Vec<ScoreObservation> {
        to_score_observations(self)
    }

    /// Percentage of records censored before the horizon.
    pub fn censored_pct(&self) -> f64 {
        let c = self.records.iter().filter(|r| r.is_censored(&self.config)).count();
        100.0 * c as f64 / self.n() as f64
    }

    /// Percentage of horizon survivors whose second endpoint is missing.
    pub fn missing_among_survivors_pct(&self) -> f64 {
        let surv: Vec<_> = self
            .records
            .iter()
            .filter(|r| r.is_survivor(&self.config))
            .collect();
        if surv.is_empty() {
            return 0.0;
        }
        let miss = surv.iter().filter(|r| !r.r2()).count();
        100.0 * miss as f64 / surv.len() as f64
    }
}

/// Check every invariant and return either the dataset or the complete list
/// of violations.
pub fn validate_dataset(config: StudyConfig, records: Vec<SubjectRecord>) -> Result<AnalysisDataset> {
    let mut violations = Vec::new();
    for arm in [Arm::A, Arm::B] {
        if !records.iter().any(|r| r.arm == arm) {
            violations.push(Violation::EmptyArm(arm));
        }
    }
    let dim = records.first().map_or(0, |r| r.covariates.len());
    for (index, rec) in records.iter().enumerate() {
        for reason in rec.check(&config) {
            violations.push(Violation::Invariant { index, reason });
        }
        if rec.covariates.len() != dim {
            violations.push(Violation::CovariateLengthMismatch {
                index,
                expected: dim,
                found: rec.covariates.len(),
            });
        }
    }
    if violations.is_empty() {
        Ok(AnalysisDataset::from_trusted(config, records))
    } else {
        Err(WrError::Validation(ValidationReport(violations)))
    }
}

/// Map each record to `(arm, s, delta_s)`, preserving order.
///
/// - event before or at `h`: `s = y1_obs`, event
/// - censored before `h`: `s = y1_obs`, censored
/// - survivor with observed `y2`: `s = h + 1 + y2`, event
/// - survivor with missing `y2`: censored at [`StudyConfig::survivor_censor_point`]
pub fn to_score_observations(ds: &AnalysisDataset) -> Vec<ScoreObservation> {
    let cfg = ds.config();
    ds.records()
        .iter()
        .map(|r| score_of(r, cfg))
        .collect()
}

pub(crate) fn score_of(r: &SubjectRecord, cfg: &StudyConfig) -> ScoreObservation {
    let (s, delta_s) = if r.is_survivor(cfg) {
        match r.y2 {
            Some(y2) => (cfg.survivor_time() + y2, true),
            None => (cfg.survivor_censor_point(), false),
        }
    } else {
        (r.y1_obs, r.delta1)
    };
    ScoreObservation {
        arm: r.arm,
        s,
        delta_s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SensitivityMode {
    /// Censored subjects in arm A survive the horizon; censored subjects in arm
    /// B die `epsilon` after their censoring time.
    BestCase,
    /// The same with the arms swapped.
    WorstCase,
}

/// Replace every censored record by an extreme outcome. `epsilon` is the
/// "next day" offset in the dataset's time unit; the shifted death time is
/// capped at `h` so it remains an in-horizon event.
pub fn apply_sensitivity_transform(
    ds: &AnalysisDataset,
    mode: SensitivityMode,
    epsilon: f64,
) -> AnalysisDataset {
    let cfg = *ds.config();
    let survives = match mode {
        SensitivityMode::BestCase => Arm::A,
        SensitivityMode::WorstCase => Arm::B,
    };
    let records = ds
        .records()
        .iter()
        .map(|r| {
            if !r.is_censored(&cfg) {
                return r.clone();
            }
            let mut out = r.clone();
            out.delta1 = true;
            out.y2 = None;
            if r.arm == survives {
                out.y1_obs = cfg.survivor_time();
            } else {
                out.y1_obs = (r.y1_obs + epsilon).min(cfg.h);
            }
            out
        })
        .collect();
    AnalysisDataset::from_trusted(cfg, records)
}
