use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("structure constant ({i}, {j}, {k}) has imaginary part {imag:e}")]
    NonRealStructureConstant { i: usize, j: usize, k: usize, imag: f64 },

    #[error("coherence vector has v_1 = {0}, expected 1/2")]
    BadNormalization(f64),

    #[error("Kossakowski matrix is not Hermitian (deviation {0:e})")]
    NonHermitianKossakowski(f64),

    #[error("dense evolution limited to {max} spins, got {requested}")]
    DenseTooLarge { requested: usize, max: usize },

    #[error("discarded weight {weight:e} in one step exceeds {limit:e}; increase chi_max")]
    TruncationOverflow { weight: f64, limit: f64 },

    #[error("state yields negative outcome probability {0:e}")]
    NonPhysicalState(f64),

    #[error("training loss became non-finite at epoch {0}")]
    DivergedLoss(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
