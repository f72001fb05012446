use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset: {0}")]
    Data(String),

    #[error(transparent)]
    Mesh(#[from] hoitg_meshkit::MeshError),

    #[error(transparent)]
    Diff(#[from] hoitg_diffcore::DiffError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SceneError>;
