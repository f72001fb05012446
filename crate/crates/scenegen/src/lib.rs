//! Synthetic human-object scenes: a seeded linear toy body, extruded object templates,
//! contact-biased placement, weak-perspective projection and splat rendering.

pub mod body;
pub mod camera;
pub mod dataset;
mod error;
pub mod objects;
pub mod render;
pub mod scene;
mod vec3;
pub mod world;

pub use body::{LinearBody, ToyBodyModel, JOINT_COUNT, PARAM_DIM, POSE_DIM, SHAPE_DIM};
pub use camera::{project, to_pixel, Camera};
pub use dataset::{Dataset, DatasetConfig, Manifest};
pub use error::{Result, SceneError};
pub use objects::{ObjectTemplate, TemplateId, OBJECT_VERTICES};
pub use render::{render_channels, Splats, CHANNELS};
pub use scene::{contact_map_gt, mix_seed, sample_scene, SceneConfig, SceneSample, CONTACT_THRESHOLD};
pub use world::{World, WorldConfig};
