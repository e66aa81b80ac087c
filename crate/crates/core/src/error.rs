use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point ({re}, {im}) lies inside the exclusion disk of radius {radius}")]
    SingularInput { re: f64, im: f64, radius: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("observed hidden range [{lo}, {hi}] is degenerate")]
    DegenerateRange { lo: f64, hi: f64 },

    #[error("candidate {0} is constant over the fitted range")]
    DegenerateFit(&'static str),

    #[error("reference field variance {0:e} is too small")]
    DegenerateVariance(f64),

    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: usize, reason: String },

    #[error("resolution mismatch: {left:?} vs {right:?}")]
    ResolutionMismatch { left: (usize, usize), right: (usize, usize) },

    #[error("parameter vector has {found} entries, expected {expected}")]
    ParameterCount { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
