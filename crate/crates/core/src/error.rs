use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("unstable pole specification: pole {pole} is not strictly negative")]
    UnstableSpecification { pole: f64 },

    #[error("closed-loop matrix is not Hurwitz: {0}")]
    NotHurwitz(String),

    #[error("singular linear system")]
    Singular,

    #[error("input channel g(x) vanishes")]
    DegenerateInputChannel,

    #[error("non-finite value at component {index}")]
    NumericOverflow { index: usize },

    #[error("relative degree violated at sample {sample} (k = {k}): |value| = {magnitude:e}")]
    RelativeDegreeViolation {
        sample: usize,
        k: usize,
        magnitude: f64,
    },

    #[error("matched uncertainty produced unmatched transformed component at sample {sample}: |phi_u| = {magnitude:e}")]
    TheoremViolation { sample: usize, magnitude: f64 },

    #[error("gain infeasible: uncertainty bound delta3 = {delta3} must be < 1")]
    GainInfeasible { delta3: f64 },

    #[error("control coefficient vanishes at t = {t}")]
    DegenerateControl { t: f64 },

    #[error("state diverged after t = {t}")]
    Divergence { t: f64 },

    #[error("uncertainty bound violated at t = {t}: {detail}")]
    BoundViolation { t: f64, detail: String },

    #[error("differentiator state became non-finite at t = {t}")]
    DifferentiatorDivergence { t: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
