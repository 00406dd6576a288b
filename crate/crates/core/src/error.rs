use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate two-level Hamiltonian (lambda = delta = 0): mixing angle undefined")]
    DegenerateHamiltonian,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("protocol evaluation failed at t = {t:e} s: {reason}")]
    ProtocolEvaluation { t: f64, reason: String },

    #[error("singular protocol at t = {t:e} s: {reason}")]
    SingularProtocol { t: f64, reason: String },

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("eigensolver failed for level {level}: residual {residual:e} after {iterations} iterations")]
    EigenNonConvergence {
        level: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("two-level model breakdown: lambda from R ({lambda_r:e} rad/s) and L ({lambda_l:e} rad/s) disagree")]
    TwoLevelBreakdown { lambda_r: f64, lambda_l: f64 },

    #[error("simplex did not converge in {iterations} iterations (best value {best_value:e} at {best:?})")]
    SimplexNotConverged {
        best: [f64; 2],
        best_value: f64,
        iterations: usize,
    },

    #[error("unreachable target at slice {slice} (t = {t:e} s): residual {residual:e}")]
    UnreachableTarget { slice: usize, t: f64, residual: f64 },

    #[error("time step too large: potential phase per step {phase:.3} rad exceeds pi/4, refine dt")]
    TimeStepTooLarge { phase: f64 },

    #[error("density {density:e} reached the box edge; enlarge the grid")]
    BoundaryLeak { density: f64 },

    #[error("ground-state relaxation did not converge in {steps} steps (last relative change {change:e})")]
    GroundStateNonConvergence { steps: usize, change: f64 },

    #[error("amplitude vanishes inside its support at x = {x:e} m")]
    VanishingAmplitude { x: f64 },

    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
