use hoitg_diffcore::{Graph, Scalar, SparseMatrix, Tensor, Var};
use hoitg_meshkit::{Mesh, Point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SceneError};
use crate::vec3::{add, cross, dot, norm, normalize, scale, smoothstep, sub};

pub const POSE_DIM: usize = 24;
pub const SHAPE_DIM: usize = 4;
pub const PARAM_DIM: usize = POSE_DIM + SHAPE_DIM;
pub const JOINT_COUNT: usize = 12;
pub const BODY_VERTICES: usize = 1536;
pub const PARAM_LIMIT: f64 = 3.0;

pub const JOINT_NAMES: [&str; JOINT_COUNT] = [
    "head", "neck", "chest", "pelvis", "l_elbow", "r_elbow", "l_hand", "r_hand", "l_knee", "r_knee", "l_foot",
    "r_foot",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PartKind {
    Head,
    Torso,
    LeftArm,
    RightArm,
    LeftLeg,
    RightLeg,
}

impl PartKind {
    fn is_limb(self) -> bool {
        !matches!(self, PartKind::Head | PartKind::Torso)
    }
}

#[derive(Debug, Clone)]
pub struct Part {
    pub kind: PartKind,
    pub start: usize,
    pub len: usize,
    pub center: Point,
    /// Limb root and tip; for head and torso the two poles.
    pub root: Point,
    pub tip: Point,
}

impl Part {
    fn axis(&self) -> Point {
        normalize(sub(self.tip, self.root))
    }

    /// Position along root → tip in `[0, 1]`.
    fn along(&self, v: Point) -> f64 {
        let d = sub(self.tip, self.root);
        (dot(sub(v, self.root), d) / dot(d, d)).clamp(0.0, 1.0)
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

// ── Template geometry ──

struct Ellipsoid {
    center: Point,
    axis: Point,
    side: Point,
    radii: [f64; 3],
    rings: usize,
    seg: usize,
}

fn ellipsoid_mesh(e: &Ellipsoid, offset: u32, verts: &mut Vec<Point>, faces: &mut Vec<[u32; 3]>) {
    let u = normalize(e.axis);
    let e1 = normalize(sub(e.side, scale(u, dot(e.side, u))));
    let e2 = cross(u, e1);
    let [ru, r1, r2] = e.radii;
    let first = verts.len();
    verts.push(add(e.center, scale(u, ru)));
    for r in 1..=e.rings {
        let phi = std::f64::consts::PI * r as f64 / (e.rings + 1) as f64;
        for s in 0..e.seg {
            let th = 2.0 * std::f64::consts::PI * s as f64 / e.seg as f64;
            let radial = add(scale(e1, r1 * th.cos()), scale(e2, r2 * th.sin()));
            verts.push(add(e.center, add(scale(u, ru * phi.cos()), scale(radial, phi.sin()))));
        }
    }
    verts.push(sub(e.center, scale(u, ru)));

    let seg = e.seg;
    let id = |r: usize, s: usize| offset + (1 + (r - 1) * seg + s % seg) as u32;
    let south = offset + (1 + e.rings * seg) as u32;
    let mut local = Vec::new();
    for s in 0..seg {
        local.push([offset, id(1, s), id(1, s + 1)]);
        local.push([south, id(e.rings, s + 1), id(e.rings, s)]);
    }
    for r in 1..e.rings {
        for s in 0..seg {
            local.push([id(r, s), id(r + 1, s), id(r, s + 1)]);
            local.push([id(r, s + 1), id(r + 1, s), id(r + 1, s + 1)]);
        }
    }
    // Orient outward.
    let f = local[2 * seg];
    let p = |i: u32| verts[i as usize];
    let n = cross(sub(p(f[1]), p(f[0])), sub(p(f[2]), p(f[0])));
    let c = scale(add(add(p(f[0]), p(f[1])), p(f[2])), 1.0 / 3.0);
    if dot(n, sub(c, e.center)) < 0.0 {
        for t in &mut local {
            t.swap(1, 2);
        }
    }
    debug_assert_eq!(verts.len() - first, e.rings * e.seg + 2);
    faces.extend(local);
}

fn build_template() -> (Mesh, Vec<Part>) {
    let mut verts = Vec::with_capacity(BODY_VERTICES);
    let mut faces = Vec::new();
    let mut parts = Vec::new();
    let z = [0.0, 0.0, 1.0];
    let mut push = |kind, root: Point, tip: Point, radii: [f64; 2], rings, seg, side: Point| {
        let center = scale(add(root, tip), 0.5);
        let start = verts.len();
        let e = Ellipsoid {
            center,
            axis: sub(root, tip),
            side,
            radii: [norm(sub(tip, root)) / 2.0, radii[0], radii[1]],
            rings,
            seg,
        };
        ellipsoid_mesh(&e, start as u32, &mut verts, &mut faces);
        parts.push(Part { kind, start, len: verts.len() - start, center, root, tip });
    };
    push(PartKind::Head, [0.0, 0.83, 0.0], [0.0, 0.61, 0.0], [0.11, 0.11], 10, 16, [1.0, 0.0, 0.0]);
    push(PartKind::Torso, [0.0, 0.63, 0.0], [0.0, 0.03, 0.0], [0.17, 0.11], 20, 23, [1.0, 0.0, 0.0]);
    push(PartKind::LeftArm, [0.2, 0.58, 0.0], [0.28, 0.0, 0.0], [0.05, 0.05], 15, 12, z);
    push(PartKind::RightArm, [-0.2, 0.58, 0.0], [-0.28, 0.0, 0.0], [0.05, 0.05], 15, 12, z);
    push(PartKind::LeftLeg, [0.09, 0.05, 0.0], [0.11, -0.82, 0.0], [0.07, 0.07], 17, 16, z);
    push(PartKind::RightLeg, [-0.09, 0.05, 0.0], [-0.11, -0.82, 0.0], [0.07, 0.07], 17, 16, z);
    (Mesh::new(verts, faces).expect("toy body faces are valid"), parts)
}

// ── Bases ──

struct Articulation {
    pivot: Point,
    axis: Point,
    weights: Vec<(usize, f64)>,
}

fn jittered(rng: &mut ChaCha8Rng, axis: Point) -> Point {
    let jitter = Normal::new(0.0, 0.15).expect("valid sigma");
    normalize([axis[0] + jitter.sample(rng), axis[1] + jitter.sample(rng), axis[2] + jitter.sample(rng)])
}

fn articulations(verts: &[Point], parts: &[Part]) -> Vec<(Point, Point, Vec<(usize, f64)>)> {
    let part = |k: PartKind| parts.iter().find(|p| p.kind == k).expect("all parts built");
    let xyz = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let all = |p: &Part| p.range().map(|i| (i, 1.0)).collect::<Vec<_>>();
    let mut out = Vec::with_capacity(POSE_DIM);

    let head = part(PartKind::Head);
    for a in xyz {
        out.push(([0.0, 0.61, 0.0], a, all(head)));
    }
    let torso = part(PartKind::Torso);
    let mut upper: Vec<(usize, f64)> =
        torso.range().map(|i| (i, smoothstep(verts[i][1], 0.05, 0.5))).filter(|e| e.1 > 0.0).collect();
    for k in [PartKind::Head, PartKind::LeftArm, PartKind::RightArm] {
        upper.extend(all(part(k)));
    }
    for a in xyz {
        out.push(([0.0, 0.05, 0.0], a, upper.clone()));
    }
    for k in [PartKind::LeftArm, PartKind::RightArm, PartKind::LeftLeg, PartKind::RightLeg] {
        let p = part(k);
        for a in xyz {
            out.push((p.root, a, all(p)));
        }
        let bend: Vec<(usize, f64)> =
            p.range().map(|i| (i, smoothstep(p.along(verts[i]), 0.4, 0.6))).filter(|e| e.1 > 0.0).collect();
        out.push((scale(add(p.root, p.tip), 0.5), xyz[0], bend));
    }
    let everything: Vec<(usize, f64)> = (0..verts.len()).map(|i| (i, 1.0)).collect();
    out.push(([0.0; 3], xyz[1], everything.clone()));
    out.push(([0.0; 3], xyz[2], everything));
    debug_assert_eq!(out.len(), POSE_DIM);
    out
}

fn build_pose_basis(verts: &[Point], parts: &[Part], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = verts.len();
    let mut basis = vec![0.0; n * 3 * POSE_DIM];
    for (p, (pivot, axis, weights)) in articulations(verts, parts).into_iter().enumerate() {
        let art = Articulation { pivot, axis: jittered(rng, axis), weights };
        let amp = rng.random_range(0.12..0.2);
        for &(i, w) in &art.weights {
            // Linearized rotation: ω × (v − pivot).
            let d = scale(cross(art.axis, sub(verts[i], art.pivot)), amp * w);
            for c in 0..3 {
                basis[(i * 3 + c) * POSE_DIM + p] = d[c];
            }
        }
    }
    basis
}

fn build_shape_basis(verts: &[Point], parts: &[Part], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = verts.len();
    let mut basis = vec![0.0; n * 3 * SHAPE_DIM];
    let amps = [
        rng.random_range(0.03..0.05),
        rng.random_range(0.08..0.12),
        rng.random_range(0.06..0.1),
        rng.random_range(0.08..0.12),
    ];
    let mut set = |i: usize, s: usize, d: Point| {
        for c in 0..3 {
            basis[(i * 3 + c) * SHAPE_DIM + s] = d[c];
        }
    };
    for part in parts {
        let axis = part.axis();
        let len = norm(sub(part.tip, part.root));
        for i in part.range() {
            let v = verts[i];
            set(i, 0, [0.0, v[1] * amps[0], 0.0]);
            let rel = sub(v, part.center);
            let perp = if part.kind == PartKind::Head { rel } else { sub(rel, scale(axis, dot(rel, axis))) };
            set(i, 1, scale(perp, amps[1]));
            if part.kind.is_limb() {
                set(i, 2, scale(axis, part.along(v) * len * amps[2]));
            }
            match part.kind {
                PartKind::Torso => set(i, 3, [v[0] * amps[3], 0.0, 0.0]),
                PartKind::LeftArm | PartKind::RightArm => set(i, 3, [part.root[0] * amps[3], 0.0, 0.0]),
                _ => {}
            }
        }
    }
    basis
}

fn build_regressor(verts: &[Point], parts: &[Part]) -> Vec<f64> {
    use PartKind::*;
    let part = |k: PartKind| parts.iter().find(|p| p.kind == k).expect("all parts built");
    let mid = |k: PartKind| scale(add(part(k).root, part(k).tip), 0.5);
    let hand = |k: PartKind| add(scale(part(k).tip, 0.9), scale(part(k).root, 0.1));
    let specs: [(Point, &[PartKind]); JOINT_COUNT] = [
        ([0.0, 0.72, 0.0], &[Head]),
        ([0.0, 0.61, 0.0], &[Head, Torso]),
        ([0.0, 0.40, 0.0], &[Torso]),
        ([0.0, 0.07, 0.0], &[Torso, LeftLeg, RightLeg]),
        (mid(LeftArm), &[LeftArm]),
        (mid(RightArm), &[RightArm]),
        (hand(LeftArm), &[LeftArm]),
        (hand(RightArm), &[RightArm]),
        (mid(LeftLeg), &[LeftLeg]),
        (mid(RightLeg), &[RightLeg]),
        (hand(LeftLeg), &[LeftLeg]),
        (hand(RightLeg), &[RightLeg]),
    ];
    let n = verts.len();
    let sigma2 = 2.0 * 0.06f64.powi(2);
    let mut reg = vec![0.0; JOINT_COUNT * n];
    for (j, (at, kinds)) in specs.iter().enumerate() {
        let row = &mut reg[j * n..(j + 1) * n];
        for &k in kinds.iter() {
            for i in part(k).range() {
                row[i] = (-(crate::vec3::dot(sub(verts[i], *at), sub(verts[i], *at))) / sigma2).exp();
            }
        }
        let max = row.iter().copied().fold(0.0, f64::max);
        for w in row.iter_mut() {
            if *w < max * 1e-4 {
                *w = 0.0;
            }
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= total);
    }
    reg
}

// ── Model ──

/// Linear blendshape body: `vertices = T + B_pose·θ + B_shape·β`, `joints = R·vertices`.
#[derive(Debug, Clone)]
pub struct ToyBodyModel {
    seed: u64,
    template: Mesh,
    parts: Vec<Part>,
    pose_basis: Vec<f64>,
    shape_basis: Vec<f64>,
    regressor: Vec<f64>,
}

impl ToyBodyModel {
    pub fn new(seed: u64) -> Self {
        let (template, parts) = build_template();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pose_basis = build_pose_basis(template.vertices(), &parts, &mut rng);
        let shape_basis = build_shape_basis(template.vertices(), &parts, &mut rng);
        let regressor = build_regressor(template.vertices(), &parts);
        Self { seed, template, parts, pose_basis, shape_basis, regressor }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn template(&self) -> &Mesh {
        &self.template
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    pub fn vertex_count(&self) -> usize {
        self.template.vertex_count()
    }

    /// `∂ vertex[v][c] / ∂ θ[p]`.
    pub fn pose_entry(&self, v: usize, c: usize, p: usize) -> f64 {
        self.pose_basis[(v * 3 + c) * POSE_DIM + p]
    }

    /// `∂ vertex[v][c] / ∂ β[s]`.
    pub fn shape_entry(&self, v: usize, c: usize, s: usize) -> f64 {
        self.shape_basis[(v * 3 + c) * SHAPE_DIM + s]
    }

    /// `J x V` row of the joint regressor.
    pub fn regressor_row(&self, j: usize) -> &[f64] {
        let n = self.vertex_count();
        &self.regressor[j * n..(j + 1) * n]
    }

    pub fn vertices(&self, theta: &[f64], beta: &[f64]) -> Result<Vec<Point>> {
        check_params(theta, beta)?;
        let t = self.template.vertices();
        Ok((0..t.len())
            .map(|v| {
                std::array::from_fn(|c| {
                    let row = v * 3 + c;
                    let pose: f64 = (0..POSE_DIM).map(|p| self.pose_basis[row * POSE_DIM + p] * theta[p]).sum();
                    let shape: f64 =
                        (0..SHAPE_DIM).map(|s| self.shape_basis[row * SHAPE_DIM + s] * beta[s]).sum();
                    t[v][c] + pose + shape
                })
            })
            .collect())
    }

    pub fn regress_joints(&self, vertices: &[Point]) -> Vec<Point> {
        (0..JOINT_COUNT)
            .map(|j| {
                let row = self.regressor_row(j);
                let mut acc = [0.0; 3];
                for (w, v) in row.iter().zip(vertices) {
                    if *w != 0.0 {
                        for c in 0..3 {
                            acc[c] += w * v[c];
                        }
                    }
                }
                acc
            })
            .collect()
    }

    /// Full-resolution mesh vertices and joints.
    pub fn forward(&self, theta: &[f64], beta: &[f64]) -> Result<(Vec<Point>, Vec<Point>)> {
        let v = self.vertices(theta, beta)?;
        let j = self.regress_joints(&v);
        Ok((v, j))
    }

    /// Affine map from `[θ; β]` to the vertices picked (or mixed) by `rows`.
    pub fn linear_vertices(&self, rows: Option<&SparseMatrix>) -> Result<LinearBody> {
        let n = self.vertex_count();
        let full = LinearBody::from_parts(
            self.template.vertices().iter().flatten().copied().collect(),
            (0..n * 3)
                .flat_map(|row| {
                    (0..POSE_DIM)
                        .map(move |p| self.pose_basis[row * POSE_DIM + p])
                        .chain((0..SHAPE_DIM).map(move |s| self.shape_basis[row * SHAPE_DIM + s]))
                })
                .collect(),
        );
        match rows {
            None => Ok(full),
            Some(m) => full.mixed(m),
        }
    }

    /// Affine map from `[θ; β]` to the joints.
    pub fn linear_joints(&self) -> Result<LinearBody> {
        let n = self.vertex_count();
        let mut t = Vec::new();
        for j in 0..JOINT_COUNT {
            for (i, &w) in self.regressor_row(j).iter().enumerate() {
                if w != 0.0 {
                    t.push((j, i, w));
                }
            }
        }
        self.linear_vertices(Some(&SparseMatrix::from_triplets(JOINT_COUNT, n, &t)?))
    }
}

fn check_params(theta: &[f64], beta: &[f64]) -> Result<()> {
    if theta.len() != POSE_DIM || beta.len() != SHAPE_DIM {
        return Err(SceneError::Config(format!(
            "expected {POSE_DIM} pose and {SHAPE_DIM} shape parameters, got {} and {}",
            theta.len(),
            beta.len()
        )));
    }
    Ok(())
}

/// `points = mean + basis·params`, `n` points with `PARAM_DIM` parameters.
#[derive(Debug, Clone)]
pub struct LinearBody {
    points: usize,
    mean: Vec<f64>,
    basis: Vec<f64>,
}

impl LinearBody {
    fn from_parts(mean: Vec<f64>, basis: Vec<f64>) -> Self {
        Self { points: mean.len() / 3, mean, basis }
    }

    fn mixed(&self, m: &SparseMatrix) -> Result<LinearBody> {
        if m.cols() != self.points {
            return Err(SceneError::Config(format!("mixing matrix has {} columns for {} points", m.cols(), self.points)));
        }
        let mut mean = vec![0.0; m.rows() * 3];
        let mut basis = vec![0.0; m.rows() * 3 * PARAM_DIM];
        for r in 0..m.rows() {
            for (c, w) in m.row(r) {
                for k in 0..3 {
                    mean[r * 3 + k] += w * self.mean[c * 3 + k];
                    let dst = &mut basis[(r * 3 + k) * PARAM_DIM..(r * 3 + k + 1) * PARAM_DIM];
                    let src = &self.basis[(c * 3 + k) * PARAM_DIM..(c * 3 + k + 1) * PARAM_DIM];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += w * s;
                    }
                }
            }
        }
        Ok(Self { points: m.rows(), mean, basis })
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn evaluate(&self, params: &[f64]) -> Vec<Point> {
        assert_eq!(params.len(), PARAM_DIM, "parameter vector length");
        (0..self.points)
            .map(|i| {
                std::array::from_fn(|k| {
                    let row = i * 3 + k;
                    let b = &self.basis[row * PARAM_DIM..(row + 1) * PARAM_DIM];
                    self.mean[row] + b.iter().zip(params).map(|(a, p)| a * p).sum::<f64>()
                })
            })
            .collect()
    }

    /// `(mean [n, 3], basis [3n, PARAM_DIM])` in the graph scalar type.
    pub fn tensors<S: Scalar>(&self) -> (Tensor<S>, Tensor<S>) {
        let cast = |v: &[f64]| v.iter().map(|&x| S::lit(x)).collect();
        (
            Tensor::new(vec![self.points, 3], cast(&self.mean)).expect("sizes agree"),
            Tensor::new(vec![self.points * 3, PARAM_DIM], cast(&self.basis)).expect("sizes agree"),
        )
    }

    /// Differentiable evaluation; `params` is a `[PARAM_DIM]` (or `[1, PARAM_DIM]`) node.
    pub fn forward_graph<S: Scalar>(
        &self,
        g: &mut Graph<S>,
        tensors: &(Tensor<S>, Tensor<S>),
        params: Var,
    ) -> Result<Var> {
        let mean = g.constant(tensors.0.clone());
        let basis = g.constant(tensors.1.clone());
        let p = g.reshape(params, vec![PARAM_DIM, 1])?;
        let d = g.matmul(basis, p)?;
        let d = g.reshape(d, vec![self.points, 3])?;
        Ok(g.add(mean, d)?)
    }
}
