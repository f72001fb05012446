use hoitg_meshkit::{
    build_sampling_operators, coarse_edges, edge_graph_adjacency, EdgeWeighting, SamplingOperators, SparseAdjacency,
};
use serde::{Deserialize, Serialize};

use crate::body::ToyBodyModel;
use crate::error::{Result, SceneError};
use crate::objects::{ObjectTemplate, TemplateId, DEFAULT_KNN};

/// Fixed assets shared by generation, training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub body_seed: u64,
    pub sampling_seed: u64,
    /// Coarse human vertex count.
    pub v0: usize,
    /// Mid human vertex count.
    pub v1: usize,
    pub object_knn: usize,
    pub knn_weighting: EdgeWeighting,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self { body_seed: 7, sampling_seed: 11, v0: 96, v1: 384, object_knn: DEFAULT_KNN, knn_weighting: EdgeWeighting::Distance }
    }
}

#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub body: ToyBodyModel,
    pub sampling: SamplingOperators,
    /// Row-normalized edge graph over the coarse human vertices.
    pub human_adjacency: SparseAdjacency,
    pub objects: Vec<ObjectTemplate>,
}

impl World {
    pub fn new(config: WorldConfig) -> Result<Self> {
        let body = ToyBodyModel::new(config.body_seed);
        let sampling = build_sampling_operators(body.template(), config.v0, config.v1, config.sampling_seed)?;
        let edges = coarse_edges(body.template(), sampling.coarse_indices())?;
        let human_adjacency = edge_graph_adjacency(config.v0, &edges)?;
        if human_adjacency.row_sums().iter().any(|&s| s == 0.0) {
            return Err(SceneError::Config("coarse human graph has an isolated vertex".into()));
        }
        let objects = TemplateId::ALL
            .into_iter()
            .map(|id| ObjectTemplate::with_knn(id, config.object_knn, config.knn_weighting))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config, body, sampling, human_adjacency, objects })
    }

    pub fn object(&self, id: TemplateId) -> &ObjectTemplate {
        &self.objects[id.index()]
    }
}
