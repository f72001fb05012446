use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hoitg_diffcore::{map_indexed, Exec};
use hoitg_meshkit::{Point, RigidPose};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::body::{JOINT_COUNT, POSE_DIM, SHAPE_DIM};
use crate::camera::Camera;
use crate::error::{Result, SceneError};
use crate::objects::{TemplateId, OBJECT_VERTICES};
use crate::render::CHANNELS;
use crate::scene::{mix_seed, sample_scene, SceneConfig, SceneSample};
use crate::world::{World, WorldConfig};

pub const MANIFEST: &str = "manifest.json";
const FORMAT: &str = "hoitg-scenes/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub num: usize,
    pub seed: u64,
    pub templates: Vec<TemplateId>,
    pub scene: SceneConfig,
    pub world: WorldConfig,
    /// One held-out sample per this many samples.
    pub split_ratio: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            num: 288,
            seed: 0,
            templates: TemplateId::ALL.to_vec(),
            scene: SceneConfig::default(),
            world: WorldConfig::default(),
            split_ratio: 9,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num == 0 {
            return Err(SceneError::Config("dataset must contain at least one scene".into()));
        }
        if self.templates.is_empty() {
            return Err(SceneError::Config("no object templates selected".into()));
        }
        if self.split_ratio < 2 {
            return Err(SceneError::Config("split ratio must be at least 2".into()));
        }
        self.scene.validate()
    }

    pub fn template_for(&self, i: usize) -> TemplateId {
        self.templates[i % self.templates.len()]
    }
}

/// Named `f32` block of a sample record, in file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config: DatasetConfig,
    pub count: usize,
    pub seeds: Vec<u64>,
    pub templates: Vec<TemplateId>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub fields: Vec<FieldSpec>,
}

impl Manifest {
    pub fn record_floats(&self) -> usize {
        self.fields.iter().map(|f| f.len).sum()
    }
}

pub fn record_fields(res: usize, world: &WorldConfig, full: usize) -> Vec<FieldSpec> {
    let f = |name: &str, len| FieldSpec { name: name.into(), len };
    vec![
        f("channels", CHANNELS * res * res),
        f("theta", POSE_DIM),
        f("beta", SHAPE_DIM),
        f("human_coarse", world.v0 * 3),
        f("human_mid", world.v1 * 3),
        f("human_full", full * 3),
        f("joints", JOINT_COUNT * 3),
        f("object_rotation", 9),
        f("object_translation", 3),
        f("object_vertices", OBJECT_VERTICES * 3),
        f("template", 1),
        f("contact", full),
        f("camera", 3),
    ]
}

/// Seeded split: shuffled indices, the first `num / ratio` held out. Both lists are sorted.
pub fn split_indices(num: usize, ratio: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..num).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(seed, u64::MAX)));
    let n_test = num / ratio;
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

pub fn generate_samples(world: &World, cfg: &DatasetConfig, exec: Exec) -> Result<Vec<SceneSample>> {
    cfg.validate()?;
    map_indexed(exec, cfg.num, |i| sample_scene(world, mix_seed(cfg.seed, i as u64), cfg.template_for(i), &cfg.scene))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub samples: Vec<SceneSample>,
}

impl Dataset {
    pub fn generate(cfg: &DatasetConfig, exec: Exec) -> Result<(World, Dataset)> {
        let world = World::new(cfg.world)?;
        let samples = generate_samples(&world, cfg, exec)?;
        let (train, test) = split_indices(cfg.num, cfg.split_ratio, cfg.seed);
        let manifest = Manifest {
            format: FORMAT.into(),
            config: cfg.clone(),
            count: cfg.num,
            seeds: samples.iter().map(|s| s.seed).collect(),
            templates: samples.iter().map(|s| s.template).collect(),
            train,
            test,
            fields: record_fields(cfg.scene.res, &cfg.world, world.body.vertex_count()),
        };
        Ok((world, Dataset { manifest, samples }))
    }

    pub fn train(&self) -> Vec<&SceneSample> {
        self.manifest.train.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn test(&self) -> Vec<&SceneSample> {
        self.manifest.test.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn sample_path(dir: &Path, i: usize) -> PathBuf {
        dir.join(format!("sample_{i:06}.bin"))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        for (i, s) in self.samples.iter().enumerate() {
            let mut w = BufWriter::new(fs::File::create(Self::sample_path(dir, i))?);
            for v in encode(s) {
                w.write_all(&v.to_le_bytes())?;
            }
            w.flush()?;
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Dataset> {
        let text = fs::read_to_string(dir.join(MANIFEST))
            .map_err(|e| SceneError::Data(format!("{}: {e}", dir.join(MANIFEST).display())))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format != FORMAT {
            return Err(SceneError::Data(format!("unsupported dataset format `{}`", manifest.format)));
        }
        if manifest.seeds.len() != manifest.count || manifest.templates.len() != manifest.count {
            return Err(SceneError::Data("manifest seed/template lists disagree with count".into()));
        }
        let mut samples = Vec::with_capacity(manifest.count);
        for i in 0..manifest.count {
            let bytes = fs::read(Self::sample_path(dir, i))
                .map_err(|e| SceneError::Data(format!("{}: {e}", Self::sample_path(dir, i).display())))?;
            if bytes.len() != manifest.record_floats() * 4 {
                return Err(SceneError::Data(format!(
                    "sample {i}: {} bytes, expected {}",
                    bytes.len(),
                    manifest.record_floats() * 4
                )));
            }
            let floats: Vec<f32> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            samples.push(decode(&manifest, i, &floats)?);
        }
        Ok(Dataset { manifest, samples })
    }
}

fn encode(s: &SceneSample) -> Vec<f32> {
    let mut out = s.channels.clone();
    let pts = |out: &mut Vec<f32>, p: &[Point]| out.extend(p.iter().flatten().map(|&v| v as f32));
    out.extend(s.theta.iter().map(|&v| v as f32));
    out.extend(s.beta.iter().map(|&v| v as f32));
    pts(&mut out, &s.human_coarse);
    pts(&mut out, &s.human_mid);
    pts(&mut out, &s.human_full);
    pts(&mut out, &s.joints);
    out.extend(s.object_pose.rotation.iter().flatten().map(|&v| v as f32));
    out.extend(s.object_pose.translation.iter().map(|&v| v as f32));
    pts(&mut out, &s.object_vertices);
    out.push(s.template.index() as f32);
    out.extend(s.contact.iter().map(|&c| if c { 1.0 } else { 0.0 }));
    out.extend(s.camera.to_array().iter().map(|&v| v as f32));
    out
}

fn decode(m: &Manifest, i: usize, floats: &[f32]) -> Result<SceneSample> {
    let mut at = 0;
    let mut blocks = Vec::with_capacity(m.fields.len());
    for f in &m.fields {
        blocks.push(&floats[at..at + f.len]);
        at += f.len;
    }
    let get = |name: &str| -> Result<&[f32]> {
        m.fields
            .iter()
            .position(|f| f.name == name)
            .map(|k| blocks[k])
            .ok_or_else(|| SceneError::Data(format!("record field `{name}` missing")))
    };
    let f64s = |b: &[f32]| b.iter().map(|&v| v as f64).collect::<Vec<f64>>();
    let points = |b: &[f32]| b.chunks_exact(3).map(|c| [c[0] as f64, c[1] as f64, c[2] as f64]).collect::<Vec<Point>>();
    let rot = get("object_rotation")?;
    let tr = get("object_translation")?;
    let cam = get("camera")?;
    let template = TemplateId::from_index(get("template")?[0] as usize)
        .ok_or_else(|| SceneError::Data(format!("sample {i}: bad template index")))?;
    if template != m.templates[i] {
        return Err(SceneError::Data(format!("sample {i}: template disagrees with manifest")));
    }
    let channels = get("channels")?.to_vec();
    let res = ((channels.len() / CHANNELS) as f64).sqrt() as usize;
    Ok(SceneSample {
        seed: m.seeds[i],
        res,
        channels,
        theta: f64s(get("theta")?),
        beta: f64s(get("beta")?),
        human_coarse: points(get("human_coarse")?),
        human_mid: points(get("human_mid")?),
        human_full: points(get("human_full")?),
        joints: points(get("joints")?),
        object_pose: RigidPose {
            rotation: std::array::from_fn(|r| std::array::from_fn(|c| rot[r * 3 + c] as f64)),
            translation: [tr[0] as f64, tr[1] as f64, tr[2] as f64],
        },
        template,
        object_vertices: points(get("object_vertices")?),
        contact: get("contact")?.iter().map(|&v| v != 0.0).collect(),
        camera: Camera::from_array([cam[0] as f64, cam[1] as f64, cam[2] as f64]),
    })
}
