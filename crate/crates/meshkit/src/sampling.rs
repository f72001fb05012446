use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::sync::Arc;

use hoitg_diffcore::{Graph, Scalar, SparseMatrix, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MeshError, Result};
use crate::mesh::{dist, dist2, Mesh, Point};

// ── Farthest-point sampling ──

/// Greedy FPS from a seeded random start.
pub fn farthest_point_sample(points: &[Point], m: usize, seed: u64) -> Result<Vec<usize>> {
    if points.is_empty() {
        return if m == 0 { Ok(Vec::new()) } else { Err(MeshError::Parameter("empty point set".into())) };
    }
    let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..points.len());
    farthest_point_sample_from(points, m, start)
}

/// Greedy FPS from a fixed start; the next pick maximizes the distance to the picked set,
/// ties going to the lowest index.
pub fn farthest_point_sample_from(points: &[Point], m: usize, start: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if m > n {
        return Err(MeshError::Parameter(format!("cannot pick {m} of {n} points")));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    if start >= n {
        return Err(MeshError::Parameter(format!("start {start} outside {n} points")));
    }
    let mut picked = Vec::with_capacity(m);
    let mut taken = vec![false; n];
    let mut nearest = vec![f64::INFINITY; n];
    let mut cur = start;
    loop {
        picked.push(cur);
        taken[cur] = true;
        if picked.len() == m {
            return Ok(picked);
        }
        let mut best = usize::MAX;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..n {
            let d = dist2(&points[i], &points[cur]);
            if d < nearest[i] {
                nearest[i] = d;
            }
            if !taken[i] && nearest[i] > best_d {
                best_d = nearest[i];
                best = i;
            }
        }
        cur = best;
    }
}

// ── Up/down operators ──

/// Fixed resampling matrices between the three mesh scales. Coarse vertices are a prefix
/// of the mid vertices, which are a subset of the full template.
#[derive(Debug, Clone)]
pub struct SamplingOperators {
    sizes: [usize; 3],
    coarse_idx: Vec<usize>,
    mid_idx: Vec<usize>,
    down: Arc<SparseMatrix>,
    down_mid: Arc<SparseMatrix>,
    up_mid: Arc<SparseMatrix>,
    up_full: Arc<SparseMatrix>,
    up: Arc<SparseMatrix>,
}

impl SamplingOperators {
    /// `[V0, V1, V2]`.
    pub fn sizes(&self) -> [usize; 3] {
        self.sizes
    }

    /// Full-mesh indices of the coarse vertices.
    pub fn coarse_indices(&self) -> &[usize] {
        &self.coarse_idx
    }

    /// Full-mesh indices of the mid vertices.
    pub fn mid_indices(&self) -> &[usize] {
        &self.mid_idx
    }

    /// `V0 x V2` selection.
    pub fn down(&self) -> &Arc<SparseMatrix> {
        &self.down
    }

    /// `V1 x V2` selection.
    pub fn down_mid(&self) -> &Arc<SparseMatrix> {
        &self.down_mid
    }

    /// `V1 x V0` interpolation.
    pub fn up_mid(&self) -> &Arc<SparseMatrix> {
        &self.up_mid
    }

    /// `V2 x V1` interpolation.
    pub fn up_full(&self) -> &Arc<SparseMatrix> {
        &self.up_full
    }

    /// `V2 x V0`, the two upsampling stages composed.
    pub fn up(&self) -> &Arc<SparseMatrix> {
        &self.up
    }
}

pub fn build_sampling_operators(full: &Mesh, v0: usize, v1: usize, seed: u64) -> Result<SamplingOperators> {
    let v2 = full.vertex_count();
    if !(0 < v0 && v0 < v1 && v1 < v2) {
        return Err(MeshError::Parameter(format!("scale sizes must satisfy 0 < {v0} < {v1} < {v2}")));
    }
    let pts = full.vertices();
    let mid_idx = farthest_point_sample(pts, v1, seed)?;
    let coarse_idx = mid_idx[..v0].to_vec();
    let mid_pts: Vec<Point> = mid_idx.iter().map(|&i| pts[i]).collect();
    let coarse_pts: Vec<Point> = coarse_idx.iter().map(|&i| pts[i]).collect();

    let down = Arc::new(selection(&coarse_idx, v2)?);
    let down_mid = Arc::new(selection(&mid_idx, v2)?);
    let up_mid = interpolation(&mid_pts, &coarse_pts)?;
    let up_full = interpolation(pts, &mid_pts)?;
    let up = Arc::new(up_full.compose(&up_mid)?);
    Ok(SamplingOperators {
        sizes: [v0, v1, v2],
        coarse_idx,
        mid_idx,
        down,
        down_mid,
        up_mid: Arc::new(up_mid),
        up_full: Arc::new(up_full),
        up,
    })
}

fn selection(idx: &[usize], cols: usize) -> Result<SparseMatrix> {
    let t: Vec<_> = idx.iter().enumerate().map(|(r, &c)| (r, c, 1.0)).collect();
    Ok(SparseMatrix::from_triplets(idx.len(), cols, &t)?)
}

/// Inverse-distance weights over the 3 nearest sources (fewer when there are fewer sources).
/// A target coinciding with a source gets a one-hot row.
fn interpolation(targets: &[Point], sources: &[Point]) -> Result<SparseMatrix> {
    let k = sources.len().min(3);
    let mut t = Vec::with_capacity(targets.len() * k);
    for (r, p) in targets.iter().enumerate() {
        let mut cand: Vec<(f64, usize)> = sources.iter().enumerate().map(|(j, s)| (dist(p, s), j)).collect();
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let near = &cand[..k];
        if near[0].0 <= f64::EPSILON {
            t.push((r, near[0].1, 1.0));
            continue;
        }
        let total: f64 = near.iter().map(|c| 1.0 / c.0).sum();
        t.extend(near.iter().map(|c| (r, c.1, (1.0 / c.0) / total)));
    }
    Ok(SparseMatrix::from_triplets(targets.len(), sources.len(), &t)?)
}

/// Differentiable `op · vertices` for an `n x 3` (or any width) node.
pub fn apply_sampling<S: Scalar>(g: &mut Graph<S>, op: &Arc<SparseMatrix>, vertices: Var) -> Result<Var> {
    Ok(g.spmm(Arc::clone(op), vertices)?)
}

/// `op · vertices` on plain points.
pub fn apply_sampling_points(op: &SparseMatrix, vertices: &[Point]) -> Result<Vec<Point>> {
    let flat: Vec<f64> = vertices.iter().flatten().copied().collect();
    let out = op.apply_f64(&flat, 3)?;
    Ok(out.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())
}

// ── Coarse graph ──

#[derive(PartialEq)]
struct Frontier {
    d: f64,
    label: usize,
    v: usize,
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // Reversed for a min-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.d.total_cmp(&self.d).then(other.label.cmp(&self.label)).then(other.v.cmp(&self.v))
    }
}

/// Edges between selected vertices whose geodesic Voronoi cells on `mesh` touch.
/// Returned pairs index into `seeds`.
pub fn coarse_edges(mesh: &Mesh, seeds: &[usize]) -> Result<Vec<(usize, usize)>> {
    let n = mesh.vertex_count();
    if seeds.iter().any(|&s| s >= n) {
        return Err(MeshError::Parameter("seed index outside mesh".into()));
    }
    let edges = mesh.edges();
    let mut nbrs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let v = mesh.vertices();
    for &(a, b) in &edges {
        let d = dist(&v[a], &v[b]);
        nbrs[a].push((b, d));
        nbrs[b].push((a, d));
    }
    let mut label = vec![usize::MAX; n];
    let mut best = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for (l, &s) in seeds.iter().enumerate() {
        if best[s] > 0.0 {
            best[s] = 0.0;
            heap.push(Frontier { d: 0.0, label: l, v: s });
        }
    }
    while let Some(Frontier { d, label: l, v: u }) = heap.pop() {
        if label[u] != usize::MAX {
            continue;
        }
        label[u] = l;
        for &(w, len) in &nbrs[u] {
            let nd = d + len;
            if label[w] == usize::MAX && nd < best[w] {
                best[w] = nd;
                heap.push(Frontier { d: nd, label: l, v: w });
            } else if label[w] == usize::MAX && nd == best[w] {
                heap.push(Frontier { d: nd, label: l, v: w });
            }
        }
    }
    let mut out = BTreeSet::new();
    for &(a, b) in &edges {
        let (la, lb) = (label[a], label[b]);
        if la != usize::MAX && lb != usize::MAX && la != lb {
            out.insert((la.min(lb), la.max(lb)));
        }
    }
    Ok(out.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_center_then_corner() {
        let p = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.5, 0.5, 0.0]];
        assert_eq!(farthest_point_sample_from(&p, 2, 4).unwrap(), vec![4, 0]);
    }

    #[test]
    fn full_sample_is_permutation() {
        let p: Vec<Point> = (0..20).map(|i| [(i as f64 * 0.37).sin(), i as f64 * 0.1, 0.0]).collect();
        let mut s = farthest_point_sample(&p, 20, 3).unwrap();
        s.sort_unstable();
        assert_eq!(s, (0..20).collect::<Vec<_>>());
        assert!(farthest_point_sample(&p, 21, 3).is_err());
    }
}
