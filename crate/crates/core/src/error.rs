use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not skew-symmetric (asymmetry {asymmetry:.3e})")]
    NonSkewInput { asymmetry: f64 },

    #[error("matrix does not have the zero pattern of its Lie algebra")]
    MalformedAlgebra,

    #[error("rotation angle {angle:.9} rad is too close to pi for the logarithm")]
    NearPiRotation { angle: f64 },

    #[error("matrix is not a rotation (orthonormality defect {orthogonality:.3e}, det {det:.9})")]
    NotARotation { orthogonality: f64, det: f64 },

    #[error("thigh vector has no usable projection onto the shank frame")]
    DegenerateProjection,

    #[error("filter state or covariance became non-finite")]
    NonFiniteState,

    #[error("innovation covariance is numerically singular (condition {condition:.3e})")]
    SingularInnovation { condition: f64 },

    #[error("constraint Gram matrix is numerically singular (condition {condition:.3e})")]
    SingularConstraintGram { condition: f64 },

    #[error("infeasible gait: {0}")]
    InfeasibleGait(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("frame {index}: {source}")]
    AtFrame { index: usize, source: Box<Error> },
}

impl Error {
    /// Attaches the index of the frame being processed.
    pub fn at_frame(self, index: usize) -> Self {
        Error::AtFrame {
            index,
            source: Box::new(self),
        }
    }

    /// The innermost error, with any frame context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtFrame { source, .. } => source.root(),
            other => other,
        }
    }
}
