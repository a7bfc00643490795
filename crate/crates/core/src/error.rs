use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants are grouped by the CLI exit code they map to: usage problems,
/// data problems (bad files, incomplete observations) and numeric failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("timeline has no gaps (need at least two time-points)")]
    NoGaps,

    #[error("invalid timeline: {0}")]
    InvalidTimeline(String),

    #[error("degenerate knots: {count} quantile knots collide; try fewer knots")]
    DegenerateKnots { count: usize },

    #[error("structure is invalid: {}", join_violations(.0))]
    InvalidStructure(Vec<Violation>),

    #[error("delay out of range: process `{process}` at slice {slice} needs a parent value at time {time}, before the first time-point")]
    DelayOutOfRange {
        process: String,
        slice: usize,
        time: f64,
    },

    #[error("not fully observed: {0}")]
    NotFullyObserved(String),

    #[error("singular design: the regression is rank deficient; use lambda > 0 or fewer knots")]
    SingularDesign,

    #[error("zero residual: the fit interpolates the data, precision would be infinite")]
    ZeroResidual,

    #[error("complete separation detected in logistic fit")]
    Separation,

    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NotConverged {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("network is not all-Gaussian (node for process `{0}` is Bernoulli)")]
    NotAllGaussian(String),

    #[error("network is not chain-structured: {0}")]
    NotChainStructured(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("evidence incompatible: every sample has zero weight")]
    EvidenceIncompatible,

    #[error("no bracketed root: no sign change of m(t) - x found on a {scan_points}-point scan")]
    NoBracketedRoot { scan_points: usize },

    #[error("root finding hit the iteration cap ({iterations}) with bracket [{lo}, {hi}]")]
    IterationLimit { iterations: usize, lo: f64, hi: f64 },

    #[error("process `{process}`: {source}")]
    Process {
        process: String,
        #[source]
        source: Box<Error>,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn in_process(self, process: &str) -> Error {
        Error::Process {
            process: process.to_string(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::NoGaps => "no-gaps",
            Error::InvalidTimeline(_) => "invalid-timeline",
            Error::DegenerateKnots { .. } => "degenerate-knots",
            Error::InvalidStructure(_) => "invalid-structure",
            Error::DelayOutOfRange { .. } => "delay-out-of-range",
            Error::NotFullyObserved(_) => "not-fully-observed",
            Error::SingularDesign => "singular-design",
            Error::ZeroResidual => "zero-residual",
            Error::Separation => "separation",
            Error::NotConverged { .. } => "not-converged",
            Error::NotAllGaussian(_) => "not-all-gaussian",
            Error::NotChainStructured(_) => "not-chain-structured",
            Error::Numeric(_) => "numeric",
            Error::EvidenceIncompatible => "evidence-incompatible",
            Error::NoBracketedRoot { .. } => "no-bracketed-root",
            Error::IterationLimit { .. } => "iteration-limit",
            Error::Process { source, .. } => source.kind(),
            Error::Data(_) => "data",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// CLI exit code: 1 usage, 2 data error, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) => 1,
            Error::Process { source, .. } => source.exit_code(),
            Error::SingularDesign
            | Error::ZeroResidual
            | Error::Separation
            | Error::NotConverged { .. }
            | Error::Numeric(_)
            | Error::EvidenceIncompatible
            | Error::NoBracketedRoot { .. }
            | Error::IterationLimit { .. } => 3,
            _ => 2,
        }
    }
}
