use thiserror::Error;

/// Errors raised by the core library.
///
/// Variants are grouped by how the CLI maps them to exit codes: configuration
/// problems, numerical findings (a bound or invariant failed), and
/// convergence/resource failures.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("unsatisfiable (u,v): {0}")]
    Unsatisfiable(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("scale-range error: cube at level {level} has no witness {r} levels above k_min = {k_min}")]
    ScaleRange { level: i32, r: u32, k_min: i32 },
    #[error("no containing ancestor in window for cubes at levels {level_i} and {level_j}")]
    NoContainingAncestor { level_i: i32, level_j: i32 },

    #[error("filter invalid: {0}")]
    FilterInvalid(String),
    #[error("insufficient smoothness: empirical u = {u} < {required}")]
    InsufficientSmoothness { u: u32, required: u32 },
    #[error("insufficient moments: v = {v} < {required}")]
    InsufficientMoments { v: i32, required: i32 },
    #[error("not differentiable at order {order}: refinement ratio {ratio:.3}")]
    NotDifferentiable { order: u32, ratio: f64 },

    #[error("diagonal singularity: x = y")]
    DiagonalSingularity,
    #[error("unknown seminorm (empirical lower bound {lower_bound})")]
    UnknownSeminorm { lower_bound: f64 },
    #[error("no application path for kernel {0}")]
    NoApplicationPath(String),
    #[error("cross-validation failure: primary {primary}, oracle {oracle}")]
    CrossValidation { primary: f64, oracle: f64 },

    #[error("normalization violated: |a|·|K|/sqrt(|I||J|) = {ratio} for {detail}")]
    NormalizationViolated { ratio: f64, detail: String },
    #[error("pi_good too small: Lemma bound {bound} leaves no certified good mass")]
    PiGoodTooSmall { bound: f64 },
    #[error("finding: {0}")]
    Finding(String),

    #[error("power iteration did not converge after {iterations} iterations")]
    PowerIterationDiverged { iterations: usize },
    #[error("curve dominated by noise")]
    CurveDominatedByNoise,
    #[error("cascade did not converge: residual {residual}")]
    CascadeDiverged { residual: f64 },
    #[error("resource limit: {0}")]
    Resource(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Exit-code class: 2 for configuration, 3 for numerical findings, 4 for
    /// convergence or resource failures.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            InvalidConfig(_) | Unsatisfiable(_) | InvalidArgument(_) | FilterInvalid(_)
            | InsufficientSmoothness { .. } | InsufficientMoments { .. } | Io(_) => 2,
            ScaleRange { .. } | NoContainingAncestor { .. } | NotDifferentiable { .. }
            | DiagonalSingularity | UnknownSeminorm { .. } | NoApplicationPath(_)
            | CrossValidation { .. } | NormalizationViolated { .. } | PiGoodTooSmall { .. }
            | Finding(_) => 3,
            PowerIterationDiverged { .. } | CurveDominatedByNoise | CascadeDiverged { .. }
            | Resource(_) => 4,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
