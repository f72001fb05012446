//! Transformer layers and the graph residual block, each paired with the
//! parameter registration that names its weights.

use std::sync::Arc;

use hoitg_diffcore::{Graph, Scalar, SparseMatrix, Var};

use crate::config::{EncoderConfig, PlainPath};
use crate::error::{ModelError, Result};
use crate::params::{Bound, Initializer};

/// Token counts of the joint, human-vertex and object-vertex partitions, in that order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Partition {
    pub joints: usize,
    pub human: usize,
    pub object: usize,
}

impl Partition {
    pub fn total(&self) -> usize {
        self.joints + self.human + self.object
    }
}

/// Normalized adjacencies of the human coarse mesh and the object template.
#[derive(Debug, Clone)]
pub struct Adjacencies {
    pub human: Arc<SparseMatrix>,
    pub object: Arc<SparseMatrix>,
}

// ── primitives ───────────────────────────────────────────────────────

pub fn linear<S: Scalar>(g: &mut Graph<S>, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let w = p.var(&format!("{name}.w"))?;
    let b = p.var(&format!("{name}.b"))?;
    let y = g.matmul(x, w)?;
    Ok(g.add_bias(y, b)?)
}

pub fn layer_norm<S: Scalar>(g: &mut Graph<S>, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let gain = p.var(&format!("{name}.g"))?;
    let bias = p.var(&format!("{name}.b"))?;
    Ok(g.layer_norm(x, gain, bias)?)
}

/// `x + fc2(gelu(fc1(LN(x))))`.
pub fn mlp_residual<S: Scalar>(g: &mut Graph<S>, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let h = layer_norm(g, p, &format!("{name}.ln"), x)?;
    let h = linear(g, p, &format!("{name}.fc1"), h)?;
    let h = g.gelu(h)?;
    let h = linear(g, p, &format!("{name}.fc2"), h)?;
    Ok(g.add(x, h)?)
}

pub fn register_mlp<S: Scalar>(init: &mut Initializer<S>, name: &str, d: usize, ratio: usize) -> Result<()> {
    init.layer_norm(&format!("{name}.ln"), d)?;
    init.linear(&format!("{name}.fc1"), d, d * ratio)?;
    init.linear(&format!("{name}.fc2"), d * ratio, d)
}

/// `x + gelu(Ā·x·W_G)`.
pub fn graph_residual_block<S: Scalar>(g: &mut Graph<S>, x: Var, adj: &Arc<SparseMatrix>, wg: Var) -> Result<Var> {
    let xs = g.shape(x).to_vec();
    let ws = g.shape(wg).to_vec();
    if xs.len() != 2 || adj.rows() != xs[0] || adj.cols() != xs[0] {
        return Err(ModelError::Parameter(format!(
            "graph block on {xs:?} tokens with a {}x{} adjacency",
            adj.rows(),
            adj.cols()
        )));
    }
    if ws != [xs[1], xs[1]] {
        return Err(ModelError::Parameter(format!("W_G shape {ws:?} for width {}", xs[1])));
    }
    let mixed = g.spmm(Arc::clone(adj), x)?;
    let h = g.matmul(mixed, wg)?;
    let h = g.gelu(h)?;
    Ok(g.add(x, h)?)
}

/// Pre-norm multi-head self-attention with residual. Returns the output and
/// the `[N, N]` attention matrix of every head.
pub fn self_attention<S: Scalar>(
    g: &mut Graph<S>,
    p: &Bound,
    name: &str,
    x: Var,
    heads: usize,
) -> Result<(Var, Vec<Var>)> {
    let d = g.shape(x)[1];
    if heads == 0 || d % heads != 0 {
        return Err(ModelError::Parameter(format!("width {d} not divisible by {heads} heads")));
    }
    let dh = d / heads;
    let h = layer_norm(g, p, &format!("{name}.ln1"), x)?;
    let qkv = linear(g, p, &format!("{name}.qkv"), h)?;
    let mut outs = Vec::with_capacity(heads);
    let mut maps = Vec::with_capacity(heads);
    for k in 0..heads {
        let q = g.slice_cols(qkv, k * dh, dh)?;
        let kk = g.slice_cols(qkv, d + k * dh, dh)?;
        let v = g.slice_cols(qkv, 2 * d + k * dh, dh)?;
        let s = g.matmul_t(q, kk, false, true)?;
        let s = g.scale(s, 1.0 / (dh as f64).sqrt())?;
        let a = g.softmax(s, 1)?;
        outs.push(g.matmul(a, v)?);
        maps.push(a);
    }
    let o = g.concat_cols(&outs)?;
    let o = linear(g, p, &format!("{name}.out"), o)?;
    Ok((g.add(x, o)?, maps))
}

// ── encoder block ────────────────────────────────────────────────────

/// Output of one encoder block.
#[derive(Debug, Clone)]
pub struct BlockOutput {
    pub tokens: Var,
    /// `attention[layer][head]`, each `[N, N]`.
    pub attention: Vec<Vec<Var>>,
}

fn plain<S: Scalar>(g: &mut Graph<S>, p: &Bound, name: &str, x: Var, path: PlainPath) -> Result<Var> {
    match path {
        PlainPath::Mlp => mlp_residual(g, p, name, x),
        PlainPath::Identity => Ok(x),
    }
}

/// Entry projection to the block width, then `cfg.layers` layers of attention
/// over all tokens followed by the partition-wise sub-blocks.
pub fn encoder_block<S: Scalar>(
    g: &mut Graph<S>,
    p: &Bound,
    x: Var,
    block: usize,
    cfg: &EncoderConfig,
    part: Partition,
    adj: &Adjacencies,
) -> Result<BlockOutput> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 2 || shape[0] != part.total() {
        return Err(ModelError::Parameter(format!(
            "block {block} expects {} tokens, got {shape:?}",
            part.total()
        )));
    }
    let placement = cfg.placement();
    let mut x = linear(g, p, &format!("block{block}.entry"), x)?;
    let mut attention = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let name = format!("block{block}.layer{l}");
        let (y, maps) = self_attention(g, p, &name, x, cfg.heads)?;
        attention.push(maps);
        let j = g.slice_rows(y, 0, part.joints)?;
        let h = g.slice_rows(y, part.joints, part.human)?;
        let o = g.slice_rows(y, part.joints + part.human, part.object)?;
        let j = plain(g, p, &format!("{name}.mlp_j"), j, cfg.plain_path)?;
        let h = if placement.human[block] {
            let wg = p.var(&format!("{name}.wg_h"))?;
            graph_residual_block(g, h, &adj.human, wg)?
        } else {
            plain(g, p, &format!("{name}.mlp_h"), h, cfg.plain_path)?
        };
        let o = if placement.object[block] {
            let wg = p.var(&format!("{name}.wg_o"))?;
            graph_residual_block(g, o, &adj.object, wg)?
        } else {
            plain(g, p, &format!("{name}.mlp_o"), o, cfg.plain_path)?
        };
        x = g.concat_rows(&[j, h, o])?;
    }
    Ok(BlockOutput { tokens: x, attention })
}

pub fn register_encoder_block<S: Scalar>(init: &mut Initializer<S>, block: usize, din: usize, cfg: &EncoderConfig) -> Result<()> {
    let d = cfg.dims[block];
    let placement = cfg.placement();
    init.linear(&format!("block{block}.entry"), din, d)?;
    for l in 0..cfg.layers {
        let name = format!("block{block}.layer{l}");
        init.layer_norm(&format!("{name}.ln1"), d)?;
        init.linear(&format!("{name}.qkv"), d, 3 * d)?;
        init.linear(&format!("{name}.out"), d, d)?;
        let plain = cfg.plain_path == PlainPath::Mlp;
        if plain {
            register_mlp(init, &format!("{name}.mlp_j"), d, cfg.mlp_ratio)?;
        }
        if placement.human[block] {
            init.fill(&format!("{name}.wg_h"), vec![d, d], 0.0)?;
        } else if plain {
            register_mlp(init, &format!("{name}.mlp_h"), d, cfg.mlp_ratio)?;
        }
        if placement.object[block] {
            init.fill(&format!("{name}.wg_o"), vec![d, d], 0.0)?;
        } else if plain {
            register_mlp(init, &format!("{name}.mlp_o"), d, cfg.mlp_ratio)?;
        }
    }
    Ok(())
}
