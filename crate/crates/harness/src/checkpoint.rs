use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use hoitg_core::{HoiModel, ModelAssets, ParamStore};
use hoitg_diffcore::checkpoint::{read_params, write_params};
use hoitg_scenegen::WorldConfig;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{HarnessError, Result};

pub const CHECKPOINT_FORMAT: &str = "hoitg-checkpoint/1";

/// Metadata stored next to the parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub train_config: TrainConfig,
    pub world: WorldConfig,
    pub steps: usize,
    #[serde(default)]
    pub metrics: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ParamStore<f32>,
}

impl Checkpoint {
    pub fn from_model(model: &HoiModel<f32>, meta: CheckpointMeta) -> Self {
        Self {
            meta,
            params: model.params.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("partial");
        {
            let w = BufWriter::new(File::create(&tmp)?);
            let list: Vec<(String, &hoitg_diffcore::Tensor<f32>)> =
                self.params.names().iter().cloned().zip(self.params.tensors()).collect();
            write_params(w, &list, serde_json::to_value(&self.meta)?)?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| HarnessError::Data(format!("cannot open {}: {e}", path.display())))?;
        let (manifest, tensors) = read_params(BufReader::new(file))?;
        let meta: CheckpointMeta = serde_json::from_value(manifest.extra)
            .map_err(|e| HarnessError::Config(format!("{}: checkpoint metadata: {e}", path.display())))?;
        if meta.format != CHECKPOINT_FORMAT {
            return Err(HarnessError::Config(format!("unsupported checkpoint format {}", meta.format)));
        }
        let mut params = ParamStore::default();
        for (entry, t) in manifest.params.iter().zip(tensors) {
            params.insert(entry.name.clone(), t)?;
        }
        Ok(Self { meta, params })
    }

    /// Model over `assets`; fails with a configuration error when the layout differs.
    pub fn model(&self, assets: Arc<ModelAssets>) -> Result<HoiModel<f32>> {
        HoiModel::with_params(self.meta.train_config.model.clone(), assets, self.params.clone()).map_err(|e| {
            HarnessError::Config(format!("checkpoint incompatible with its model configuration: {e}"))
        })
    }
}
