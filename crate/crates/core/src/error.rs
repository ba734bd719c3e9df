use thiserror::Error;

/// Errors raised by the numerical layers and the batch driver.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("fiber-count mismatch: {left} vs {right}")]
    FiberMismatch { left: usize, right: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("fiber {fiber} is numerically singular (pivot magnitude {pivot:e})")]
    SingularFiber { fiber: usize, pivot: f64 },
    #[error("division by a vanishing fiber ({fiber})")]
    ZeroFiber { fiber: usize },
    #[error("frame is rank deficient in fiber {fiber}")]
    RankDeficient { fiber: usize },
    #[error("frames are not complementary")]
    NotComplementary,
    #[error("matrix is not an idempotent of the required rank: {0}")]
    NotIdempotent(String),
    #[error("point lies outside the retraction neighbourhood (g(p, x) singular)")]
    OutsideNeighborhood,
    #[error("degenerate cross-ratio input: {0}")]
    DegeneratePair(&'static str),
    #[error("degenerate polarization pair: {0}")]
    DegeneratePolarizations(&'static str),
    #[error("frames span different subspaces (residual {residual:e})")]
    DifferentSpans { residual: f64 },
    #[error("block `{0}` is singular")]
    SingularBlock(&'static str),
    #[error("symbol not holomorphic and nonvanishing on the closed disk: {0}")]
    SymbolDomain(String),
    #[error("transversality lost: {0}")]
    TransversalityLost(String),
    #[error("shift parameter |z| = {0} is outside the unit disk")]
    ShiftOutOfRange(f64),
    #[error("first derivative is not invertible")]
    NonInvertibleDerivative,
    #[error("derivatives do not commute (commutator norm {0:e})")]
    Hol3Violation(f64),
    #[error("Moebius coefficients do not commute")]
    NonCommutingCoefficients,
    #[error("Moebius denominator is singular")]
    SingularDenominator,
    #[error("pseudodifferential operator has the wrong shape: {0}")]
    ShapeViolation(String),
    #[error("theta series tail {tail:e} exceeds the bound {bound:e}")]
    TailBoundViolated { tail: f64, bound: f64 },
    #[error("theta characteristic is singular (theta[xi](0) = 0)")]
    SingularCharacteristic,
    #[error("points coincide modulo the lattice")]
    CoincidentPoints,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
