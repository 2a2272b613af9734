use thiserror::Error;

use crate::lpr::Side;

pub type Result<T> = std::result::Result<T, Error>;

/// Stage of the estimation pipeline an error surfaced from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Pilot,
    Selector,
    Fit,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Pilot => "pilot",
            Stage::Selector => "selector",
            Stage::Fit => "fit",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("insufficient data on the {side} side: need {needed} points, found {found}")]
    InsufficientData {
        side: Side,
        needed: usize,
        found: usize,
    },

    #[error("singular design on the {side} side (condition number {condition:.3e})")]
    SingularDesign { side: Side, condition: f64 },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("estimated fourth derivative is zero on the {side} side")]
    ZeroFourthDerivative { side: Side },

    #[error("second derivative at the cutoff is zero (m1'' = {m2_right}, m0'' = {m2_left})")]
    ZeroSecondDerivative { m2_right: f64, m2_left: f64 },

    #[error("first- and second-order bias terms vanish together")]
    BiasCancellation,

    #[error("no optimizer start converged; best grid point <{h1}, {h0}>")]
    OptimizerFailure { h1: f64, h0: f64 },

    #[error("kernel {0} is not a second-order weight kernel")]
    UnsupportedKernel(&'static str),

    #[error("pilot step {step}{}: {source}", side.map(|s| format!(" ({s} side)")).unwrap_or_default())]
    Pilot {
        step: u8,
        side: Option<Side>,
        source: Box<Error>,
    },

    #[error("{stage} stage: {source}")]
    Stage { stage: Stage, source: Box<Error> },

    #[error("{failures} of {reps} replications failed for {selector} (limit 5%)")]
    TooManyFailures {
        selector: String,
        failures: usize,
        reps: usize,
    },
}

impl Error {
    pub(crate) fn at_stage(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn at_pilot_step(self, step: u8, side: Option<Side>) -> Self {
        Error::Pilot {
            step,
            side,
            source: Box::new(self),
        }
    }

    /// The innermost error once stage and step tags are stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Pilot { source, .. } | Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
