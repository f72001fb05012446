//! The reconstruction network: init head, query tokens, three encoder blocks,
//! per-partition coordinate heads, mesh upsampling and the rigid read-out.

use std::sync::Arc;

use hoitg_diffcore::{Graph, Scalar, SparseMatrix, Tensor, Var};
use hoitg_meshkit::{rigid_fit, Point, RigidPose};
use hoitg_scenegen::{Camera, LinearBody, TemplateId, World, JOINT_COUNT, OBJECT_VERTICES, PARAM_DIM};

use crate::config::ModelConfig;
use crate::custom::{axis_angle_matrix, grid_sample, rodrigues};
use crate::error::{ModelError, Result};
use crate::layers::{encoder_block, layer_norm, linear, register_encoder_block, Adjacencies, Partition};
use crate::params::{Bound, Initializer, ParamStore};

const CONV_STRIDES: [usize; 4] = [2, 2, 2, 1];
const CONV_KERNEL: usize = 3;
const CONV_GAIN: f64 = 2.449_489_742_783_178;

// ── fixed assets ─────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct ObjectAsset {
    pub id: TemplateId,
    pub template: Vec<Point>,
    pub adjacency: Arc<SparseMatrix>,
}

/// Everything the network needs from the scene world, independent of weights.
#[derive(Debug, Clone)]
pub struct ModelAssets {
    pub partition: Partition,
    /// Coarse, mid and full human vertex counts.
    pub sizes: [usize; 3],
    pub coarse_body: LinearBody,
    pub joint_body: LinearBody,
    pub full_body: LinearBody,
    pub up_mid: Arc<SparseMatrix>,
    pub up_full: Arc<SparseMatrix>,
    pub human_adjacency: Arc<SparseMatrix>,
    /// Indexed by [`TemplateId::index`].
    pub objects: Vec<ObjectAsset>,
    /// Endpoints of every full-mesh edge.
    pub edge_a: Arc<[usize]>,
    pub edge_b: Arc<[usize]>,
}

impl ModelAssets {
    pub fn from_world(world: &World) -> Result<Self> {
        let sizes = world.sampling.sizes();
        let edges = world.body.template().edges();
        let objects = world
            .objects
            .iter()
            .map(|o| ObjectAsset {
                id: o.id,
                template: o.vertices().to_vec(),
                adjacency: o.adjacency.to_matrix(),
            })
            .collect();
        Ok(Self {
            partition: Partition {
                joints: JOINT_COUNT,
                human: sizes[0],
                object: OBJECT_VERTICES,
            },
            sizes,
            coarse_body: world.body.linear_vertices(Some(world.sampling.down()))?,
            joint_body: world.body.linear_joints()?,
            full_body: world.body.linear_vertices(None)?,
            up_mid: Arc::clone(world.sampling.up_mid()),
            up_full: Arc::clone(world.sampling.up_full()),
            human_adjacency: world.human_adjacency.to_matrix(),
            objects,
            edge_a: edges.iter().map(|e| e.0).collect(),
            edge_b: edges.iter().map(|e| e.1).collect(),
        })
    }

    pub fn object(&self, id: TemplateId) -> &ObjectAsset {
        &self.objects[id.index()]
    }
}

// ── graph outputs ────────────────────────────────────────────────────

/// Graph handles of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardVars {
    /// `[C, h, w]`.
    pub features: Var,
    /// `[N, C + 3]`.
    pub tokens: Var,
    /// `[PARAM_DIM]`, pose then shape.
    pub body_params: Var,
    pub cam_scale: Var,
    pub cam_shift: Var,
    pub object_aa: Var,
    pub object_trans: Var,
    pub init_joints: Var,
    pub init_human: Var,
    pub init_object: Var,
    pub joints: Var,
    /// Coarse, mid and full.
    pub human: [Var; 3],
    pub object: Var,
    /// `[block][layer][head]`, each `[N, N]`.
    pub attention: Vec<Vec<Vec<Var>>>,
}

// ── read-out values ──────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub struct InitEstimates {
    pub params: Vec<f64>,
    pub camera: Camera,
    pub object_aa: [f64; 3],
    pub object_trans: [f64; 3],
    pub joints: Vec<Point>,
    pub human: Vec<Point>,
    /// Coarse init mesh carried to full resolution by the same two upsampling stages as the refined mesh.
    pub human_full: Vec<Point>,
    pub object: Vec<Point>,
}

impl InitEstimates {
    pub fn object_pose(&self) -> RigidPose {
        RigidPose::from_axis_angle(self.object_aa, self.object_trans)
    }
}

/// Head-averaged attention is `mean over heads` of `data[h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionMap {
    pub heads: usize,
    pub tokens: usize,
    /// `heads × tokens × tokens`, row-major.
    pub data: Vec<f64>,
}

impl AttentionMap {
    pub fn head_mean(&self) -> Vec<f64> {
        let nn = self.tokens * self.tokens;
        let mut out = vec![0.0; nn];
        for h in 0..self.heads {
            for (o, v) in out.iter_mut().zip(&self.data[h * nn..(h + 1) * nn]) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= self.heads as f64);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub joints: Vec<Point>,
    pub human: [Vec<Point>; 3],
    pub object: Vec<Point>,
    pub pose: RigidPose,
    pub init: InitEstimates,
    /// `[block][layer]` when retained.
    pub attention: Option<Vec<Vec<AttentionMap>>>,
}

impl Reconstruction {
    /// Fitted object pose applied to the canonical template.
    pub fn object_mesh(&self, template: &[Point]) -> Vec<Point> {
        self.pose.apply_all(template)
    }
}

fn points_of<S: Scalar>(data: &[S]) -> Vec<Point> {
    data.chunks_exact(3)
        .map(|c| [c[0].as_f64(), c[1].as_f64(), c[2].as_f64()])
        .collect()
}

fn tensor_of<S: Scalar>(points: &[Point]) -> Tensor<S> {
    Tensor::new(
        vec![points.len(), 3],
        points.iter().flatten().map(|&v| S::lit(v)).collect(),
    )
    .expect("sizes agree")
}

/// `s·(x, y) + t` for every row of `coords` `[n, 3]`.
pub fn project_graph<S: Scalar>(g: &mut Graph<S>, coords: Var, scale: Var, shift: Var) -> Result<Var> {
    let xy = g.slice_cols(coords, 0, 2)?;
    let xy = g.mul_scalar(xy, scale)?;
    Ok(g.add_bias(xy, shift)?)
}

// ── network ──────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct HoiModel<S: Scalar> {
    pub config: ModelConfig,
    pub assets: Arc<ModelAssets>,
    pub params: ParamStore<S>,
    coarse_t: (Tensor<S>, Tensor<S>),
    joint_t: (Tensor<S>, Tensor<S>),
    templates_t: Vec<Tensor<S>>,
}

impl<S: Scalar> HoiModel<S> {
    /// Freshly initialized weights from `config.seed`.
    pub fn new(config: ModelConfig, assets: Arc<ModelAssets>) -> Result<Self> {
        let params = Self::init_params(&config)?;
        Self::with_params(config, assets, params)
    }

    pub fn with_params(config: ModelConfig, assets: Arc<ModelAssets>, params: ParamStore<S>) -> Result<Self> {
        config.validate()?;
        let fresh = Self::init_params(&config)?;
        if fresh.names() != params.names()
            || fresh.tensors().iter().zip(params.tensors()).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(ModelError::Config("parameter layout does not match the model configuration".into()));
        }
        Ok(Self {
            coarse_t: assets.coarse_body.tensors(),
            joint_t: assets.joint_body.tensors(),
            templates_t: assets.objects.iter().map(|o| tensor_of(&o.template)).collect(),
            config,
            assets,
            params,
        })
    }

    pub fn cast<T: Scalar>(&self) -> Result<HoiModel<T>> {
        HoiModel::with_params(self.config.clone(), Arc::clone(&self.assets), self.params.cast())
    }

    fn init_params(config: &ModelConfig) -> Result<ParamStore<S>> {
        config.validate()?;
        let mut init = Initializer::new(config.seed);
        let mut cin = config.in_channels;
        for (i, &cout) in config.conv_channels.iter().enumerate() {
            let fan = cin * CONV_KERNEL * CONV_KERNEL;
            init.uniform_gain(&format!("init.conv{i}.w"), vec![cout, fan], fan, CONV_GAIN)?;
            init.fill(&format!("init.conv{i}.b"), vec![cout], 0.0)?;
            cin = cout;
        }
        let c = config.feature_channels();
        init.layer_norm("init.pool_ln", c)?;
        init.linear("init.head.params", c, PARAM_DIM)?;
        init.linear("init.head.camera", c, 3)?;
        init.linear("init.head.rot", c, 3)?;
        init.linear("init.head.trans", c, 3)?;
        let enc = &config.encoder;
        let mut din = c + 3;
        for b in 0..3 {
            register_encoder_block(&mut init, b, din, enc)?;
            din = enc.dims[b];
        }
        init.layer_norm("final_ln", din)?;
        for head in ["head_j", "head_h", "head_o"] {
            init.linear_zero(head, din, 3)?;
        }
        Ok(init.finish())
    }

    pub fn partition(&self) -> Partition {
        self.assets.partition
    }

    /// Input channels as a graph constant `[channels, res, res]`.
    pub fn input(&self, g: &mut Graph<S>, channels: &[f32]) -> Result<Var> {
        let r = self.config.res;
        let c = self.config.in_channels;
        if channels.len() != c * r * r {
            return Err(ModelError::Parameter(format!(
                "input has {} values, expected {c}x{r}x{r}",
                channels.len()
            )));
        }
        let data = channels.iter().map(|&v| S::lit(f64::from(v))).collect();
        Ok(g.constant(Tensor::new(vec![c, r, r], data)?))
    }

    /// Backbone features and the four init heads.
    fn init_head(&self, g: &mut Graph<S>, p: &Bound, input: Var) -> Result<(Var, Var, Var, Var, Var, Var)> {
        let shape = g.shape(input).to_vec();
        let r = self.config.res;
        if shape != [self.config.in_channels, r, r] {
            return Err(ModelError::Parameter(format!(
                "input shape {shape:?}, expected [{}, {r}, {r}]",
                self.config.in_channels
            )));
        }
        let mut x = input;
        for (i, &stride) in CONV_STRIDES.iter().enumerate() {
            let w = p.var(&format!("init.conv{i}.w"))?;
            let b = p.var(&format!("init.conv{i}.b"))?;
            x = g.conv2d(x, w, b, CONV_KERNEL, stride, CONV_KERNEL / 2)?;
            x = g.gelu(x)?;
        }
        let features = x;
        let fs = g.shape(features).to_vec();
        let flat = g.reshape(features, vec![fs[0], fs[1] * fs[2]])?;
        let pooled = g.mean_cols(flat)?;
        let pooled = g.reshape(pooled, vec![1, fs[0]])?;
        let pooled = layer_norm(g, p, "init.pool_ln", pooled)?;
        let params = linear(g, p, "init.head.params", pooled)?;
        let params = g.reshape(params, vec![PARAM_DIM])?;
        let cam = linear(g, p, "init.head.camera", pooled)?;
        let raw_scale = g.slice_cols(cam, 0, 1)?;
        let raw_scale = g.reshape(raw_scale, vec![1])?;
        let scale = g.exp(raw_scale)?;
        let shift = g.slice_cols(cam, 1, 2)?;
        let shift = g.reshape(shift, vec![2])?;
        let aa = linear(g, p, "init.head.rot", pooled)?;
        let aa = g.reshape(aa, vec![3])?;
        let trans = linear(g, p, "init.head.trans", pooled)?;
        let trans = g.reshape(trans, vec![3])?;
        Ok((features, params, scale, shift, aa, trans))
    }

    /// Sampled features concatenated with the coordinates themselves.
    fn queries(&self, g: &mut Graph<S>, features: Var, coords: Var, scale: Var, shift: Var) -> Result<Var> {
        let xy = project_graph(g, coords, scale, shift)?;
        let sampled = grid_sample(g, features, xy)?;
        Ok(g.concat_cols(&[sampled, coords])?)
    }

    pub fn forward(&self, g: &mut Graph<S>, p: &Bound, input: Var, template: TemplateId) -> Result<ForwardVars> {
        let part = self.partition();
        let asset = self.assets.object(template);
        let (features, body_params, cam_scale, cam_shift, object_aa, object_trans) = self.init_head(g, p, input)?;

        let init_joints = self.assets.joint_body.forward_graph(g, &self.joint_t, body_params)?;
        let init_human = self.assets.coarse_body.forward_graph(g, &self.coarse_t, body_params)?;
        let rot = rodrigues(g, object_aa)?;
        let tmpl = g.constant(self.templates_t[template.index()].clone());
        let rotated = g.matmul_t(tmpl, rot, false, true)?;
        let init_object = g.add_bias(rotated, object_trans)?;

        let qj = self.queries(g, features, init_joints, cam_scale, cam_shift)?;
        let qh = self.queries(g, features, init_human, cam_scale, cam_shift)?;
        let qo = self.queries(g, features, init_object, cam_scale, cam_shift)?;
        let tokens = g.concat_rows(&[qj, qh, qo])?;

        let adj = Adjacencies {
            human: Arc::clone(&self.assets.human_adjacency),
            object: Arc::clone(&asset.adjacency),
        };
        let mut x = tokens;
        let mut attention = Vec::with_capacity(3);
        for b in 0..3 {
            let out = encoder_block(g, p, x, b, &self.config.encoder, part, &adj)?;
            x = out.tokens;
            attention.push(out.attention);
        }
        let x = layer_norm(g, p, "final_ln", x)?;
        let xj = g.slice_rows(x, 0, part.joints)?;
        let xh = g.slice_rows(x, part.joints, part.human)?;
        let xo = g.slice_rows(x, part.joints + part.human, part.object)?;
        let dj = linear(g, p, "head_j", xj)?;
        let dh = linear(g, p, "head_h", xh)?;
        let dob = linear(g, p, "head_o", xo)?;
        let joints = g.add(init_joints, dj)?;
        let coarse = g.add(init_human, dh)?;
        let object = g.add(init_object, dob)?;
        let mid = g.spmm(Arc::clone(&self.assets.up_mid), coarse)?;
        let full = g.spmm(Arc::clone(&self.assets.up_full), mid)?;

        Ok(ForwardVars {
            features,
            tokens,
            body_params,
            cam_scale,
            cam_shift,
            object_aa,
            object_trans,
            init_joints,
            init_human,
            init_object,
            joints,
            human: [coarse, mid, full],
            object,
            attention,
        })
    }

    /// Coarse vertices carried through both upsampling stages.
    pub fn upsample(&self, coarse: &[Point]) -> Result<Vec<Point>> {
        let flat: Vec<f64> = coarse.iter().flatten().copied().collect();
        let mid = self.assets.up_mid.apply_f64(&flat, 3)?;
        let full = self.assets.up_full.apply_f64(&mid, 3)?;
        Ok(points_of(&full))
    }

    /// Inference without gradients; the object pose is fitted to the predicted vertices.
    pub fn reconstruct(&self, channels: &[f32], template: TemplateId, retain_attention: bool) -> Result<Reconstruction> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let input = self.input(&mut g, channels)?;
        let fv = self.forward(&mut g, &p, input, template)?;
        self.read_out(&g, &fv, template, retain_attention)
    }

    pub fn read_out(&self, g: &Graph<S>, fv: &ForwardVars, template: TemplateId, retain_attention: bool) -> Result<Reconstruction> {
        let vals = |v: Var| g.value(v).iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
        let params = vals(fv.body_params);
        let scale = vals(fv.cam_scale)[0];
        let shift = vals(fv.cam_shift);
        let aa = vals(fv.object_aa);
        let trans = vals(fv.object_trans);
        let object_aa = [aa[0], aa[1], aa[2]];
        let object_trans = [trans[0], trans[1], trans[2]];
        let tmpl = &self.assets.object(template).template;
        let r = axis_angle_matrix(object_aa);
        let init_object = tmpl
            .iter()
            .map(|v| std::array::from_fn(|i| (0..3).map(|k| r[i][k] * v[k]).sum::<f64>() + object_trans[i]))
            .collect();
        let init_human = points_of(g.value(fv.init_human));
        let init = InitEstimates {
            human_full: self.upsample(&init_human)?,
            params,
            camera: Camera {
                scale,
                translation: [shift[0], shift[1]],
            },
            object_aa,
            object_trans,
            joints: points_of(g.value(fv.init_joints)),
            human: init_human,
            object: init_object,
        };
        let object = points_of(g.value(fv.object));
        let pose = rigid_fit(tmpl, &object)?;
        let attention = retain_attention.then(|| {
            fv.attention
                .iter()
                .map(|block| {
                    block
                        .iter()
                        .map(|heads| AttentionMap {
                            heads: heads.len(),
                            tokens: self.partition().total(),
                            data: heads.iter().flat_map(|&h| g.value(h).iter().map(|x| x.as_f64())).collect(),
                        })
                        .collect()
                })
                .collect()
        });
        Ok(Reconstruction {
            joints: points_of(g.value(fv.joints)),
            human: [
                points_of(g.value(fv.human[0])),
                points_of(g.value(fv.human[1])),
                points_of(g.value(fv.human[2])),
            ],
            object,
            pose,
            init,
            attention,
        })
    }
}
