use std::fmt;

use crate::data::Arm;

/// One failed invariant found while validating a dataset.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// An arm has no records.
    EmptyArm(Arm),
    /// A record breaks one of the per-record invariants.
    Invariant { index: usize, reason: String },
    /// A record's covariate vector differs in length from the first record's.
    CovariateLengthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyArm(arm) => write!(f, "arm {arm} has no records"),
            Violation::Invariant { index, reason } => write!(f, "record {index}: {reason}"),
            Violation::CovariateLengthMismatch {
                index,
                expected,
                found,
            } => write!(
                f,
                "record {index}: expected {expected} covariates, found {found}"
            ),
        }
    }
}

/// The full list of violations found in a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport(pub Vec<Violation>);

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} violation(s)", self.0.len())?;
        for v in self.0.iter().take(20) {
            write!(f, "\n  - {v}")?;
        }
        if self.0.len() > 20 {
            write!(f, "\n  ... and {} more", self.0.len() - 20)?;
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WrError {
    #[error("dataset failed validation: {0}")]
    Validation(ValidationReport),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input")]
    EmptyInput,

    #[error("probability of a loss is zero; the win ratio is infinite or undefined")]
    DegenerateDenominator,

    #[error("every pair is tied; the win ratio is undefined")]
    AllTies,

    #[error("arm {0} has no observed events after the score transform")]
    NoEvents(Arm),

    #[error("arm {0}: no survivor has an observed second endpoint")]
    NoObservedOutcomes(Arm),

    #[error(
        "arm {arm}: fitted propensity below {floor} for records {indices:?}; \
         positivity looks violated"
    )]
    ExtremePropensity {
        arm: Arm,
        floor: f64,
        indices: Vec<usize>,
    },

    #[error(
        "logistic fit diverged (|beta| > {cap}); the missingness indicator looks separated. \
         Try an intercept-only model or the unadjusted estimator"
    )]
    Separation { cap: f64 },

    #[error("logistic information matrix is singular")]
    SingularInformation,

    #[error("{failed} of {total} bootstrap replicates were degenerate")]
    TooManyDegenerateReplicates { failed: usize, total: usize },

    #[error("need at least 2 successful replicates, got {0}")]
    InsufficientReplicates(usize),

    #[error("true win ratio unavailable: {0}")]
    TruthUnavailable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl WrError {
    /// True for failures of the estimator on valid input, as opposed to bad input.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            WrError::DegenerateDenominator
                | WrError::AllTies
                | WrError::NoEvents(_)
                | WrError::NoObservedOutcomes(_)
                | WrError::ExtremePropensity { .. }
                | WrError::Separation { .. }
                | WrError::SingularInformation
                | WrError::TooManyDegenerateReplicates { .. }
                | WrError::InsufficientReplicates(_)
        )
    }

    /// A copy for reporting one failure in several places. Variants holding
    /// an I/O error or a validation report keep only their message.
    pub(crate) fn duplicate(&self) -> WrError {
        match self {
            WrError::Validation(r) => WrError::Validation(r.clone()),
            WrError::Parse { row, column, message } => WrError::Parse {
                row: *row,
                column: column.clone(),
                message: message.clone(),
            },
            WrError::Config(m) => WrError::Config(m.clone()),
            WrError::InvalidArgument(m) => WrError::InvalidArgument(m.clone()),
            WrError::EmptyInput => WrError::EmptyInput,
            WrError::DegenerateDenominator => WrError::DegenerateDenominator,
            WrError::AllTies => WrError::AllTies,
            WrError::NoEvents(a) => WrError::NoEvents(*a),
            WrError::NoObservedOutcomes(a) => WrError::NoObservedOutcomes(*a),
            WrError::ExtremePropensity { arm, floor, indices } => WrError::ExtremePropensity {
                arm: *arm,
                floor: *floor,
                indices: indices.clone(),
            },
            WrError::Separation { cap } => WrError::Separation { cap: *cap },
            WrError::SingularInformation => WrError::SingularInformation,
            WrError::TooManyDegenerateReplicates { failed, total } => WrError::TooManyDegenerateReplicates {
                failed: *failed,
                total: *total,
            },
            WrError::InsufficientReplicates(k) => WrError::InsufficientReplicates(*k),
            WrError::TruthUnavailable(m) => WrError::TruthUnavailable(m.clone()),
            WrError::Io(e) => WrError::Io(std::io::Error::new(e.kind(), e.to_string())),
        }
    }
}

pub type Result<T, E = WrError> = std::result::Result<T, E>;
