use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("non-finite loss at step {step} (batch samples {batch:?}): {detail}")]
    Numeric { step: usize, batch: Vec<usize>, detail: String },

    #[error(transparent)]
    Model(#[from] hoitg_core::ModelError),

    #[error(transparent)]
    Scene(#[from] hoitg_scenegen::SceneError),

    #[error(transparent)]
    Diff(#[from] hoitg_diffcore::DiffError),

    #[error(transparent)]
    Mesh(#[from] hoitg_meshkit::MeshError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Process exit code: 2 configuration, 3 data, 4 numeric abort.
    pub fn exit_code(&self) -> i32 {
        use hoitg_core::ModelError;
        use hoitg_scenegen::SceneError;
        match self {
            HarnessError::Config(_) | HarnessError::Parameter(_) | HarnessError::Json(_) => 2,
            HarnessError::Model(ModelError::Config(_) | ModelError::Parameter(_)) => 2,
            HarnessError::Scene(SceneError::Config(_)) => 2,
            HarnessError::Numeric { .. } => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
