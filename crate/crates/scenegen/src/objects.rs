use std::fmt;
use std::str::FromStr;

use hoitg_meshkit::{knn_adjacency, normalize_adjacency, EdgeWeighting, Mesh, Point, SparseAdjacency};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SceneError};
use crate::vec3::{cross, dot, sub};

pub const OBJECT_VERTICES: usize = 64;
pub const DEFAULT_KNN: usize = 10;
const STATIONS: usize = 8;
const SECTION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Box,
    Chair,
    Tube,
}

impl TemplateId {
    pub const ALL: [TemplateId; 3] = [TemplateId::Box, TemplateId::Chair, TemplateId::Tube];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            TemplateId::Box => "box",
            TemplateId::Chair => "chair",
            TemplateId::Tube => "tube",
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateId {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s.trim())
            .ok_or_else(|| SceneError::Config(format!("unknown object template `{s}` (box, chair, tube)")))
    }
}

/// Canonical object mesh centered on its vertex centroid, with its KNN graph.
#[derive(Debug, Clone)]
pub struct ObjectTemplate {
    pub id: TemplateId,
    pub mesh: Mesh,
    pub adjacency: SparseAdjacency,
}

impl ObjectTemplate {
    pub fn new(id: TemplateId) -> Self {
        Self::with_knn(id, DEFAULT_KNN, EdgeWeighting::Distance).expect("default K is valid for 64 vertices")
    }

    pub fn with_knn(id: TemplateId, k: usize, weighting: EdgeWeighting) -> Result<Self> {
        let mesh = template_mesh(id);
        let adjacency = normalize_adjacency(&knn_adjacency(mesh.vertices(), k, weighting)?);
        Ok(Self { id, mesh, adjacency })
    }

    pub fn vertices(&self) -> &[Point] {
        self.mesh.vertices()
    }
}

/// 2D cross-section (8 points, counter-clockwise), fan apex index, and extrusion length.
fn section(id: TemplateId) -> (Vec<[f64; 2]>, usize, f64) {
    match id {
        TemplateId::Box => {
            let h = 0.2;
            (vec![[-h, -h], [0.0, -h], [h, -h], [h, 0.0], [h, h], [0.0, h], [-h, h], [-h, 0.0]], 1, 0.45)
        }
        TemplateId::Chair => (
            // Seat along x, backrest rising at x = -0.22; reflex corner at (-0.12, -0.05).
            vec![
                [-0.22, -0.25],
                [0.0, -0.25],
                [0.22, -0.25],
                [0.22, -0.05],
                [-0.12, -0.05],
                [-0.12, 0.35],
                [-0.22, 0.35],
                [-0.22, 0.05],
            ],
            4,
            0.42,
        ),
        TemplateId::Tube => {
            let r = 0.05;
            let pts = (0..SECTION)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / SECTION as f64;
                    [r * a.cos(), r * a.sin()]
                })
                .collect();
            (pts, 0, 0.6)
        }
    }
}

fn template_mesh(id: TemplateId) -> Mesh {
    let (sec, apex, length) = section(id);
    let mut verts: Vec<Point> = Vec::with_capacity(OBJECT_VERTICES);
    for s in 0..STATIONS {
        let z = length * (s as f64 / (STATIONS - 1) as f64 - 0.5);
        verts.extend(sec.iter().map(|p| [p[0], p[1], z]));
    }
    let c = hoitg_meshkit::mesh::centroid(&verts);
    for v in &mut verts {
        *v = sub(*v, c);
    }
    let id_of = |s: usize, k: usize| (s * SECTION + k % SECTION) as u32;
    let mut faces = Vec::with_capacity(2 * (STATIONS - 1) * SECTION + 2 * (SECTION - 2));
    for s in 0..STATIONS - 1 {
        for k in 0..SECTION {
            faces.push([id_of(s, k), id_of(s, k + 1), id_of(s + 1, k)]);
            faces.push([id_of(s, k + 1), id_of(s + 1, k + 1), id_of(s + 1, k)]);
        }
    }
    for k in 1..SECTION - 1 {
        let (a, b) = ((apex + k) % SECTION, (apex + k + 1) % SECTION);
        faces.push([id_of(0, apex), id_of(0, b), id_of(0, a)]);
        faces.push([id_of(STATIONS - 1, apex), id_of(STATIONS - 1, a), id_of(STATIONS - 1, b)]);
    }
    // Outward check on a side face: counter-clockwise sections give outward sides already.
    let f = faces[0];
    let p = |i: u32| verts[i as usize];
    let n = cross(sub(p(f[1]), p(f[0])), sub(p(f[2]), p(f[0])));
    let mid: Point = std::array::from_fn(|k| (p(f[0])[k] + p(f[1])[k] + p(f[2])[k]) / 3.0);
    let outward = [mid[0], mid[1], 0.0];
    if dot(n, outward) < 0.0 {
        for t in &mut faces {
            t.swap(1, 2);
        }
    }
    Mesh::new(verts, faces).expect("extruded templates are valid")
}

pub fn all_templates() -> Vec<ObjectTemplate> {
    TemplateId::ALL.into_iter().map(ObjectTemplate::new).collect()
}
