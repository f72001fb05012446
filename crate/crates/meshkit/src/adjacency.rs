use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::sync::Arc;

use hoitg_diffcore::SparseMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};
use crate::mesh::{dist, Point};

/// Weight given to a KNN edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeWeighting {
    /// The neighbor's Euclidean distance, as in the object-graph construction.
    #[default]
    Distance,
    /// `1 / distance`, closer neighbors weigh more.
    InverseDistance,
}

/// `n x n` matrix stored as `(row, col, weight)` triples, sorted by `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseAdjacency {
    pub fn new(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, w) in &entries {
            if r >= n || c >= n {
                return Err(MeshError::Parameter(format!("entry ({r}, {c}) outside size {n}")));
            }
            if w.is_nan() || w < 0.0 {
                return Err(MeshError::Parameter(format!("negative weight {w} at ({r}, {c})")));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        Ok(Self { n, entries })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = &(usize, usize, f64)> {
        self.entries.iter().filter(move |e| e.0 == r)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n];
        for &(r, _, w) in &self.entries {
            s[r] += w;
        }
        s
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries
            .binary_search_by(|e| (e.0, e.1).cmp(&(r, c)))
            .map_or(0.0, |i| self.entries[i].2)
    }

    pub fn to_matrix(&self) -> Arc<SparseMatrix> {
        Arc::new(SparseMatrix::from_triplets(self.n, self.n, &self.entries).expect("indices validated"))
    }

    /// Same matrix with rows and columns relabelled: entry `(r, c)` moves to `(perm[r], perm[c])`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(MeshError::Parameter("permutation length".into()));
        }
        Self::new(self.n, self.entries.iter().map(|&(r, c, w)| (perm[r], perm[c], w)).collect())
    }
}

#[derive(PartialEq)]
struct Candidate {
    d: f64,
    j: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Max-heap on (distance, index): the root is the worst neighbor kept so far.
    fn cmp(&self, other: &Self) -> Ordering {
        self.d.total_cmp(&other.d).then(self.j.cmp(&other.j))
    }
}

/// `K` nearest distinct points of every point, ties resolved toward the lower index.
/// Returns per-point neighbor lists ordered by increasing `(distance, index)`.
pub fn knn_lists(points: &[Point], k: usize) -> Result<Vec<Vec<(usize, f64)>>> {
    let n = points.len();
    if k == 0 || k >= n {
        return Err(MeshError::Parameter(format!("K = {k} needs 1 <= K < n = {n}")));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(MeshError::Parameter("non-finite point".into()));
    }
    let mut lists = Vec::with_capacity(n);
    let mut heap = BinaryHeap::with_capacity(k + 1);
    for (i, p) in points.iter().enumerate() {
        heap.clear();
        for (j, q) in points.iter().enumerate() {
            if j == i {
                continue;
            }
            let c = Candidate { d: dist(p, q), j };
            if heap.len() < k {
                heap.push(c);
            } else if c < *heap.peek().expect("k > 0") {
                heap.pop();
                heap.push(c);
            }
        }
        let mut row: Vec<(usize, f64)> = heap.drain().map(|c| (c.j, c.d)).collect();
        row.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        lists.push(row);
    }
    Ok(lists)
}

/// Unnormalized KNN adjacency: row `i` holds its `K` nearest points with the chosen weight.
pub fn knn_adjacency(points: &[Point], k: usize, weighting: EdgeWeighting) -> Result<SparseAdjacency> {
    let lists = knn_lists(points, k)?;
    let mut entries = Vec::with_capacity(points.len() * k);
    for (i, row) in lists.into_iter().enumerate() {
        for (j, d) in row {
            let w = match weighting {
                EdgeWeighting::Distance => d,
                EdgeWeighting::InverseDistance => {
                    if d > 0.0 {
                        1.0 / d
                    } else {
                        0.0
                    }
                }
            };
            entries.push((i, j, w));
        }
    }
    SparseAdjacency::new(points.len(), entries)
}

/// Symmetrizes by elementwise maximum with the transpose, then scales every row to
/// sum to one. Rows with zero sum stay zero.
pub fn normalize_adjacency(raw: &SparseAdjacency) -> SparseAdjacency {
    let mut sym: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(r, c, w) in raw.entries() {
        for key in [(r, c), (c, r)] {
            let slot = sym.entry(key).or_insert(0.0);
            *slot = slot.max(w);
        }
    }
    let mut sums = vec![0.0; raw.size()];
    for (&(r, _), &w) in &sym {
        sums[r] += w;
    }
    let entries = sym
        .into_iter()
        .filter(|&((r, _), _)| sums[r] > 0.0)
        .map(|((r, c), w)| (r, c, w / sums[r]))
        .collect();
    SparseAdjacency::new(raw.size(), entries).expect("weights stay non-negative")
}

/// Unit-weight graph of undirected edges, row-normalized.
pub fn edge_graph_adjacency(n: usize, edges: &[(usize, usize)]) -> Result<SparseAdjacency> {
    let entries = edges.iter().map(|&(a, b)| (a, b, 1.0)).collect();
    Ok(normalize_adjacency(&SparseAdjacency::new(n, entries)?))
}
