use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error(transparent)]
    Diff(#[from] hoitg_diffcore::DiffError),

    #[error(transparent)]
    Mesh(#[from] hoitg_meshkit::MeshError),

    #[error(transparent)]
    Scene(#[from] hoitg_scenegen::SceneError),
}

pub type Result<T> = std::result::Result<T, ModelError>;
