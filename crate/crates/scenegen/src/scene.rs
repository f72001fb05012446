use hoitg_meshkit::mesh::dist2;
use hoitg_meshkit::{apply_sampling_points, Point, RigidPose};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::body::{PARAM_LIMIT, POSE_DIM, SHAPE_DIM};
use crate::camera::{in_frame, project, Camera};
use crate::error::{Result, SceneError};
use crate::objects::TemplateId;
use crate::render::{render_channels, Splats};
use crate::vec3::{add, dot, scale, sub};
use crate::world::World;

pub const CONTACT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub res: usize,
    pub contact_probability: f64,
    pub max_gap: f64,
    pub placement_retries: usize,
    pub camera_scale: [f64; 2],
    pub camera_shift: f64,
    pub max_object_angle: f64,
    /// Projected object centroid must fall inside `[-frame_margin, frame_margin]²`.
    pub frame_margin: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            res: 64,
            contact_probability: 0.8,
            max_gap: 0.04,
            placement_retries: 50,
            camera_scale: [0.85, 1.05],
            camera_shift: 0.08,
            max_object_angle: std::f64::consts::FRAC_PI_2,
            frame_margin: 0.85,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.res >= 8
            && (0.0..=1.0).contains(&self.contact_probability)
            && self.max_gap >= 0.0
            && self.max_gap < CONTACT_THRESHOLD
            && self.camera_scale[0] > 0.0
            && self.camera_scale[0] <= self.camera_scale[1]
            && self.camera_shift >= 0.0
            && self.frame_margin > 0.0;
        if ok {
            Ok(())
        } else {
            Err(SceneError::Config(format!("scene configuration out of range: {self:?}")))
        }
    }
}

/// One synthetic capture with all supervision targets.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    pub seed: u64,
    pub res: usize,
    /// `5 x res x res`.
    pub channels: Vec<f32>,
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    pub human_coarse: Vec<Point>,
    pub human_mid: Vec<Point>,
    pub human_full: Vec<Point>,
    pub joints: Vec<Point>,
    pub object_pose: RigidPose,
    pub template: TemplateId,
    pub object_vertices: Vec<Point>,
    pub contact: Vec<bool>,
    pub camera: Camera,
}

impl SceneSample {
    /// `[θ; β]`.
    pub fn params(&self) -> Vec<f64> {
        self.theta.iter().chain(&self.beta).copied().collect()
    }

    pub fn contact_count(&self) -> usize {
        self.contact.iter().filter(|&&c| c).count()
    }
}

/// Splitmix64 finalizer applied to `seed + (i + 1)·golden`; gives independent per-sample streams.
pub fn mix_seed(seed: u64, i: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `true` for human vertices within `threshold` of any object vertex.
pub fn contact_map_gt(human: &[Point], object: &[Point], threshold: f64) -> Vec<bool> {
    let t2 = threshold * threshold;
    human.iter().map(|h| object.iter().any(|o| dist2(h, o) <= t2)).collect()
}

fn f32_round(x: f64) -> f64 {
    x as f32 as f64
}

fn gaussian_clipped(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            f32_round(z.clamp(-PARAM_LIMIT, PARAM_LIMIT))
        })
        .collect()
}

fn random_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> [f64; 3] {
    let axis = loop {
        let v: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = dot(v, v).sqrt();
        if n > 1e-9 {
            break scale(v, 1.0 / n);
        }
    };
    scale(axis, rng.random_range(0.0..=max_angle))
}

fn placement_violation(cam: &Camera, centroid: &Point, margin: f64) -> f64 {
    let p = cam.project_point(centroid);
    (p[0].abs() - margin).max(0.0) + (p[1].abs() - margin).max(0.0)
}

/// Seeded scene draw; deterministic in `(seed, template, config, world)`.
pub fn sample_scene(world: &World, seed: u64, template: TemplateId, cfg: &SceneConfig) -> Result<SceneSample> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = gaussian_clipped(&mut rng, POSE_DIM);
    let beta = gaussian_clipped(&mut rng, SHAPE_DIM);
    let camera = Camera {
        scale: f32_round(rng.random_range(cfg.camera_scale[0]..=cfg.camera_scale[1])),
        translation: [
            f32_round(rng.random_range(-cfg.camera_shift..=cfg.camera_shift)),
            f32_round(rng.random_range(-cfg.camera_shift..=cfg.camera_shift)),
        ],
    };
    let (human_full, joints) = world.body.forward(&theta, &beta)?;
    let human_mesh = world.body.template().with_vertices(human_full.clone())?;
    let human_normals = human_mesh.vertex_normals();

    let obj = world.object(template);
    let aa = random_rotation(&mut rng, cfg.max_object_angle).map(f32_round);
    let rot = RigidPose::from_axis_angle(aa, [0.0; 3]);
    let rotated = rot.apply_all(obj.vertices());

    let wants_contact = rng.random_bool(cfg.contact_probability);
    let projected = project(&human_full, &camera);
    let visible: Vec<usize> = (0..human_full.len()).filter(|&i| in_frame(projected[i])).collect();
    let mut best: Option<(f64, Point)> = None;
    for _ in 0..cfg.placement_retries.max(1) {
        let t = if wants_contact && !visible.is_empty() {
            let a = visible[rng.random_range(0..visible.len())];
            let n = human_normals[a];
            let support = rotated
                .iter()
                .min_by(|p, q| dot(**p, n).total_cmp(&dot(**q, n)))
                .expect("templates are non-empty");
            let gap = rng.random_range(0.0..=cfg.max_gap);
            sub(add(human_full[a], scale(n, gap)), *support)
        } else {
            let u = [rng.random_range(-0.7..0.7), rng.random_range(-0.7..0.7)];
            let z = rng.random_range(-0.3..0.3);
            let t = [(u[0] - camera.translation[0]) / camera.scale, (u[1] - camera.translation[1]) / camera.scale, z];
            let placed: Vec<Point> = rotated.iter().map(|p| add(*p, t)).collect();
            if !wants_contact && contact_map_gt(&human_full, &placed, CONTACT_THRESHOLD).contains(&true) {
                let v = 1.0 + placement_violation(&camera, &t, cfg.frame_margin);
                if best.as_ref().is_none_or(|b| v < b.0) {
                    best = Some((v, t));
                }
                continue;
            }
            t
        };
        let v = placement_violation(&camera, &t, cfg.frame_margin);
        if best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, t));
        }
        if v == 0.0 {
            break;
        }
    }
    let translation = best.expect("at least one placement attempt").1.map(f32_round);
    let object_pose = RigidPose::from_axis_angle(aa, translation);
    let object_vertices = object_pose.apply_all(obj.vertices());
    let contact = contact_map_gt(&human_full, &object_vertices, CONTACT_THRESHOLD);

    let object_normals = obj.mesh.with_vertices(object_vertices.clone())?.vertex_normals();
    let channels = render_channels(
        Splats { points: &human_full, normals: &human_normals },
        Splats { points: &object_vertices, normals: &object_normals },
        &camera,
        cfg.res,
        cfg.res,
    );
    let human_coarse = apply_sampling_points(world.sampling.down(), &human_full)?;
    let human_mid = apply_sampling_points(world.sampling.down_mid(), &human_full)?;
    let q = |v: Vec<Point>| -> Vec<Point> { v.into_iter().map(|p| p.map(f32_round)).collect() };
    let object_pose = RigidPose { rotation: object_pose.rotation.map(|r| r.map(f32_round)), translation };
    Ok(SceneSample {
        seed,
        res: cfg.res,
        channels,
        theta,
        beta,
        human_coarse: q(human_coarse),
        human_mid: q(human_mid),
        human_full: q(human_full),
        joints: q(joints),
        object_pose,
        template,
        object_vertices: q(object_vertices),
        contact,
        camera,
    })
}
