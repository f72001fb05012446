//! Mesh containers, KNN graphs, farthest-point resampling operators and Kabsch alignment.

pub mod adjacency;
mod error;
pub mod mesh;
pub mod rigid;
pub mod sampling;

pub use adjacency::{edge_graph_adjacency, knn_adjacency, knn_lists, normalize_adjacency, EdgeWeighting, SparseAdjacency};
pub use error::{MeshError, Result};
pub use mesh::{edge_list, read_template, write_template, Mesh, Point, TemplateHeader};
pub use rigid::{rigid_fit, RigidPose};
pub use sampling::{
    apply_sampling, apply_sampling_points, build_sampling_operators, coarse_edges, farthest_point_sample,
    farthest_point_sample_from, SamplingOperators,
};
