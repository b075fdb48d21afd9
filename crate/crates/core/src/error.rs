use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("gradient is rank-deficient (|ξ₁∧ξ₂| = {0:e}); field is not in Aff_*")]
    RankDeficient(f64),

    #[error("degenerate triangle {cell} (area {area:e})")]
    DegenerateCell { cell: usize, area: f64 },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("test field does not vanish on the boundary (max boundary value {0:e})")]
    NotAff0(f64),

    #[error("construction undefined: {0}")]
    Undefined(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("gradient stretch ({s1:.4}, {s2:.4}) leaves the tabulated envelope box [0, {max:.4}]")]
    OutsideTable { s1: f64, s2: f64, max: f64 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
