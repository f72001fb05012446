use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("template file: {0}")]
    Format(String),

    #[error(transparent)]
    Diff(#[from] hoitg_diffcore::DiffError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MeshError>;
