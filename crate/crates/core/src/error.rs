use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("generator letter {letter} out of range for rank {rank}")]
    GeneratorOutOfRange { letter: i64, rank: usize },

    #[error("the model cannot decide whether a word is the identity; ask inside a quotient")]
    UndecidableIdentity,

    #[error("operands belong to different group models")]
    ModelMismatch,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid quotient `{name}`: {reason}")]
    InvalidQuotient { name: String, reason: String },

    #[error("quotient closure exceeded the cap of {cap} elements")]
    ClosureCap { cap: usize },

    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),

    #[error("chain condition fails: (d_{}·d_{})[{row},{col}] = {residual}", .j - 1, .j)]
    ChainCondition { j: usize, row: usize, col: usize, residual: String },

    #[error("expected integral coefficients: {0}")]
    NonIntegral(String),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("dimension {j} out of range 0..={max}")]
    DimensionOutOfRange { j: usize, max: usize },

    #[error("matrix of size {size} exceeds the dense cap of {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("operation requires a free abelian model")]
    NonAbelian,

    #[error("matrix is not self-adjoint")]
    NotSelfAdjoint,

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("no certified sandwich polynomial up to degree {cap}")]
    DegreeCap { cap: usize },

    #[error("invalid spectral density: {0}")]
    InvalidDensity(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
