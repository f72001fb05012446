//! Training objective. Every term is an L1 mean over elements, except the
//! multi-scale vertex term, which averages per-vertex L1 distances.

use std::sync::Arc;

use hoitg_diffcore::{Graph, Scalar, Tensor, Var};
use hoitg_meshkit::Point;
use hoitg_scenegen::{SceneSample, PARAM_DIM, POSE_DIM, SHAPE_DIM};
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::model::{project_graph, ForwardVars};

pub const TERM_NAMES: [&str; 9] = [
    "ms_vertex",
    "human_param",
    "joint_init_3d",
    "joint_init_2d",
    "joint_refined_3d",
    "joint_refined_2d",
    "edge",
    "object_vertex",
    "object_param",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub ms_vertex: f64,
    pub human_param: f64,
    pub joint_init_3d: f64,
    pub joint_init_2d: f64,
    pub joint_refined_3d: f64,
    pub joint_refined_2d: f64,
    pub edge: f64,
    pub object_vertex: f64,
    pub object_param: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self::from_array([1.0; 9])
    }
}

impl LossWeights {
    pub fn to_array(&self) -> [f64; 9] {
        [
            self.ms_vertex,
            self.human_param,
            self.joint_init_3d,
            self.joint_init_2d,
            self.joint_refined_3d,
            self.joint_refined_2d,
            self.edge,
            self.object_vertex,
            self.object_param,
        ]
    }

    pub fn from_array(w: [f64; 9]) -> Self {
        Self {
            ms_vertex: w[0],
            human_param: w[1],
            joint_init_3d: w[2],
            joint_init_2d: w[3],
            joint_refined_3d: w[4],
            joint_refined_2d: w[5],
            edge: w[6],
            object_vertex: w[7],
            object_param: w[8],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in TERM_NAMES.iter().zip(self.to_array()) {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(ModelError::Config(format!("loss weight {name} = {w} must be finite and non-negative")));
            }
        }
        Ok(())
    }
}

/// Per-term values and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossReport {
    pub ms_vertex: f64,
    pub human_param: f64,
    pub joint_init_3d: f64,
    pub joint_init_2d: f64,
    pub joint_refined_3d: f64,
    pub joint_refined_2d: f64,
    pub edge: f64,
    pub object_vertex: f64,
    pub object_param: f64,
    pub total: f64,
}

impl LossReport {
    pub fn from_terms(terms: [f64; 9], weights: &LossWeights) -> Self {
        let w = LossWeights::from_array(terms);
        let total = terms.iter().zip(weights.to_array()).map(|(t, w)| t * w).sum();
        Self {
            ms_vertex: w.ms_vertex,
            human_param: w.human_param,
            joint_init_3d: w.joint_init_3d,
            joint_init_2d: w.joint_init_2d,
            joint_refined_3d: w.joint_refined_3d,
            joint_refined_2d: w.joint_refined_2d,
            edge: w.edge,
            object_vertex: w.object_vertex,
            object_param: w.object_param,
            total,
        }
    }

    pub fn terms(&self) -> [f64; 9] {
        [
            self.ms_vertex,
            self.human_param,
            self.joint_init_3d,
            self.joint_init_2d,
            self.joint_refined_3d,
            self.joint_refined_2d,
            self.edge,
            self.object_vertex,
            self.object_param,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.terms().iter().all(|t| t.is_finite())
    }
}

// ── individual terms ─────────────────────────────────────────────────

fn same_shape<S: Scalar>(g: &Graph<S>, op: &str, a: Var, b: Var) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(ModelError::Parameter(format!(
            "{op}: prediction {:?} vs target {:?}",
            g.shape(a),
            g.shape(b)
        )));
    }
    Ok(())
}

/// Mean of `|a − b|` over all elements.
pub fn l1_mean<S: Scalar>(g: &mut Graph<S>, a: Var, b: Var) -> Result<Var> {
    same_shape(g, "l1_mean", a, b)?;
    let d = g.sub(a, b)?;
    let d = g.abs(d)?;
    Ok(g.mean(d)?)
}

/// Sum over scales of the mean per-vertex L1 distance.
pub fn multiscale_vertex_loss<S: Scalar>(g: &mut Graph<S>, pred: &[Var], gt: &[Var]) -> Result<Var> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(ModelError::Parameter(format!("{} predicted scales for {} targets", pred.len(), gt.len())));
    }
    let mut total: Option<Var> = None;
    for (&p, &t) in pred.iter().zip(gt) {
        let cols = g.shape(p).last().copied().unwrap_or(1);
        let m = l1_mean(g, p, t)?;
        let per_vertex = g.scale(m, cols as f64)?;
        total = Some(match total {
            None => per_vertex,
            Some(acc) => g.add(acc, per_vertex)?,
        });
    }
    Ok(total.expect("at least one scale"))
}

/// Weak-perspective camera as graph nodes: scale `[1]` and shift `[2]`.
#[derive(Debug, Clone, Copy)]
pub struct CameraVars {
    pub scale: Var,
    pub shift: Var,
}

/// `[init 3d, init 2d, refined 3d, refined 2d]`. Predictions are projected with the
/// predicted camera and ground truth with the ground-truth camera.
pub fn joint_loss<S: Scalar>(
    g: &mut Graph<S>,
    init: Var,
    refined: Var,
    gt: Var,
    pred_cam: CameraVars,
    gt_cam: CameraVars,
) -> Result<[Var; 4]> {
    same_shape(g, "joint_loss", init, gt)?;
    same_shape(g, "joint_loss", refined, gt)?;
    let gt2 = project_graph(g, gt, gt_cam.scale, gt_cam.shift)?;
    let i3 = l1_mean(g, init, gt)?;
    let i2 = project_graph(g, init, pred_cam.scale, pred_cam.shift)?;
    let i2 = l1_mean(g, i2, gt2)?;
    let r3 = l1_mean(g, refined, gt)?;
    let r2 = project_graph(g, refined, pred_cam.scale, pred_cam.shift)?;
    let r2 = l1_mean(g, r2, gt2)?;
    Ok([i3, i2, r3, r2])
}

/// Mean over edges of `| ‖pred edge‖ − ‖gt edge‖ |`.
pub fn edge_loss<S: Scalar>(g: &mut Graph<S>, pred: Var, gt: Var, a: &Arc<[usize]>, b: &Arc<[usize]>) -> Result<Var> {
    same_shape(g, "edge_loss", pred, gt)?;
    let n = g.shape(pred)[0];
    if a.len() != b.len() || a.is_empty() {
        return Err(ModelError::Parameter("edge endpoint lists differ in length or are empty".into()));
    }
    if let Some(bad) = a.iter().chain(b.iter()).find(|&&i| i >= n) {
        return Err(ModelError::Parameter(format!("edge index {bad} out of range for {n} vertices")));
    }
    let lengths = |g: &mut Graph<S>, x: Var| -> Result<Var> {
        let pa = g.gather_rows(x, Arc::clone(a))?;
        let pb = g.gather_rows(x, Arc::clone(b))?;
        let d = g.sub(pa, pb)?;
        Ok(g.row_norms(d)?)
    };
    let lp = lengths(g, pred)?;
    let lg = lengths(g, gt)?;
    l1_mean(g, lp, lg)
}

/// `(human, object)`: L1 means of `θ` and `β` summed, and of axis-angle and translation summed.
pub fn param_losses<S: Scalar>(
    g: &mut Graph<S>,
    params: Var,
    gt_params: Var,
    aa: Var,
    gt_aa: Var,
    trans: Var,
    gt_trans: Var,
) -> Result<(Var, Var)> {
    same_shape(g, "param_losses", params, gt_params)?;
    if g.shape(params).iter().product::<usize>() != PARAM_DIM {
        return Err(ModelError::Parameter(format!("body parameter shape {:?}", g.shape(params))));
    }
    let row = |g: &mut Graph<S>, v: Var| g.reshape(v, vec![1, PARAM_DIM]);
    let p = row(g, params)?;
    let t = row(g, gt_params)?;
    let pt = g.slice_cols(p, 0, POSE_DIM)?;
    let tt = g.slice_cols(t, 0, POSE_DIM)?;
    let pb = g.slice_cols(p, POSE_DIM, SHAPE_DIM)?;
    let tb = g.slice_cols(t, POSE_DIM, SHAPE_DIM)?;
    let lt = l1_mean(g, pt, tt)?;
    let lb = l1_mean(g, pb, tb)?;
    let human = g.add(lt, lb)?;
    let la = l1_mean(g, aa, gt_aa)?;
    let lt = l1_mean(g, trans, gt_trans)?;
    let object = g.add(la, lt)?;
    Ok((human, object))
}

pub fn object_vertex_loss<S: Scalar>(g: &mut Graph<S>, pred: Var, gt: Var) -> Result<Var> {
    l1_mean(g, pred, gt)
}

// ── assembled objective ──────────────────────────────────────────────

/// Quantities the objective compares against ground truth.
#[derive(Debug, Clone, Copy)]
pub struct PredictionVars {
    pub body_params: Var,
    pub camera: CameraVars,
    pub object_aa: Var,
    pub object_trans: Var,
    pub init_joints: Var,
    pub joints: Var,
    pub human: [Var; 3],
    pub object: Var,
}

impl From<&ForwardVars> for PredictionVars {
    fn from(f: &ForwardVars) -> Self {
        Self {
            body_params: f.body_params,
            camera: CameraVars {
                scale: f.cam_scale,
                shift: f.cam_shift,
            },
            object_aa: f.object_aa,
            object_trans: f.object_trans,
            init_joints: f.init_joints,
            joints: f.joints,
            human: f.human,
            object: f.object,
        }
    }
}

/// Ground truth of one scene as graph constants.
#[derive(Debug, Clone, Copy)]
pub struct TargetVars {
    pub params: Var,
    pub camera: CameraVars,
    pub object_aa: Var,
    pub object_trans: Var,
    pub joints: Var,
    pub human: [Var; 3],
    pub object: Var,
}

fn points_const<S: Scalar>(g: &mut Graph<S>, pts: &[Point]) -> Result<Var> {
    let data = pts.iter().flatten().map(|&v| S::lit(v)).collect();
    Ok(g.constant(Tensor::new(vec![pts.len(), 3], data)?))
}

fn vec_const<S: Scalar>(g: &mut Graph<S>, v: &[f64]) -> Result<Var> {
    Ok(g.constant(Tensor::new(vec![v.len()], v.iter().map(|&x| S::lit(x)).collect())?))
}

impl TargetVars {
    pub fn new<S: Scalar>(g: &mut Graph<S>, s: &SceneSample) -> Result<Self> {
        Ok(Self {
            params: vec_const(g, &s.params())?,
            camera: CameraVars {
                scale: vec_const(g, &[s.camera.scale])?,
                shift: vec_const(g, &s.camera.translation)?,
            },
            object_aa: vec_const(g, &s.object_pose.axis_angle())?,
            object_trans: vec_const(g, &s.object_pose.translation)?,
            joints: points_const(g, &s.joints)?,
            human: [
                points_const(g, &s.human_coarse)?,
                points_const(g, &s.human_mid)?,
                points_const(g, &s.human_full)?,
            ],
            object: points_const(g, &s.object_vertices)?,
        })
    }

    /// Ground truth standing in for every prediction.
    pub fn as_prediction(&self) -> PredictionVars {
        PredictionVars {
            body_params: self.params,
            camera: self.camera,
            object_aa: self.object_aa,
            object_trans: self.object_trans,
            init_joints: self.joints,
            joints: self.joints,
            human: self.human,
            object: self.object,
        }
    }
}

/// Weighted objective plus a handle to each term, in [`TERM_NAMES`] order.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub terms: [Var; 9],
}

impl LossVars {
    pub fn report<S: Scalar>(&self, g: &Graph<S>, weights: &LossWeights) -> LossReport {
        LossReport::from_terms(self.terms.map(|t| g.scalar(t).as_f64()), weights)
    }
}

pub fn total_loss<S: Scalar>(
    g: &mut Graph<S>,
    pred: &PredictionVars,
    gt: &TargetVars,
    edge_a: &Arc<[usize]>,
    edge_b: &Arc<[usize]>,
    weights: &LossWeights,
) -> Result<LossVars> {
    weights.validate()?;
    let ms = multiscale_vertex_loss(g, &pred.human, &gt.human)?;
    let (hp, op) = param_losses(
        g,
        pred.body_params,
        gt.params,
        pred.object_aa,
        gt.object_aa,
        pred.object_trans,
        gt.object_trans,
    )?;
    let [i3, i2, r3, r2] = joint_loss(g, pred.init_joints, pred.joints, gt.joints, pred.camera, gt.camera)?;
    let edge = edge_loss(g, pred.human[2], gt.human[2], edge_a, edge_b)?;
    let ov = object_vertex_loss(g, pred.object, gt.object)?;
    let terms = [ms, hp, i3, i2, r3, r2, edge, ov, op];
    let mut total: Option<Var> = None;
    for (&t, w) in terms.iter().zip(weights.to_array()) {
        let wt = g.scale(t, w)?;
        total = Some(match total {
            None => wt,
            Some(acc) => g.add(acc, wt)?,
        });
    }
    Ok(LossVars {
        total: total.expect("nine terms"),
        terms,
    })
}
