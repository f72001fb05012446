use crate::error::{dim_err, Result};

/// Constant compressed-sparse-row matrix. Weights are held in `f64` and cast at
/// use so one operator serves both the training and the gradient-check graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    /// Builds from `(row, col, weight)` triples. Duplicate coordinates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        for &(r, c, _) in &sorted {
            if r >= rows || c >= cols {
                return dim_err(
                    "sparse",
                    format!("entry ({r}, {c}) outside {rows}x{cols}"),
                );
            }
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, w) in sorted {
            if last == Some((r, c)) {
                *vals.last_mut().expect("nonempty") += w;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            col_idx.push(c);
            vals.push(w);
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            vals,
        })
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t).expect("in range")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(col, weight)` pairs of one row, in ascending column order.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).map(|(_, w)| w).sum()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.rows)
            .flat_map(|r| self.row(r).map(move |(c, w)| (r, c, w)))
            .collect()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for (r, c, w) in self.triplets() {
            out[r * self.cols + c] = w;
        }
        out
    }

    /// Product of two sparse operators, `self * rhs`.
    pub fn compose(&self, rhs: &SparseMatrix) -> Result<SparseMatrix> {
        if self.cols != rhs.rows {
            return dim_err(
                "sparse compose",
                format!("{}x{} * {}x{}", self.rows, self.cols, rhs.rows, rhs.cols),
            );
        }
        let mut trip = Vec::new();
        for r in 0..self.rows {
            for (k, w) in self.row(r) {
                for (c, v) in rhs.row(k) {
                    trip.push((r, c, w * v));
                }
            }
        }
        SparseMatrix::from_triplets(self.rows, rhs.cols, &trip)
    }

    /// Dense apply on `f64` rows: `out = self * x` for `x` of shape `cols x width`.
    pub fn apply_f64(&self, x: &[f64], width: usize) -> Result<Vec<f64>> {
        if x.len() != self.cols * width {
            return dim_err(
                "sparse apply",
                format!("matrix has {} cols, input has {} rows", self.cols, x.len() / width.max(1)),
            );
        }
        let mut out = vec![0.0; self.rows * width];
        for r in 0..self.rows {
            for (c, w) in self.row(r) {
                for j in 0..width {
                    out[r * width + j] += w * x[c * width + j];
                }
            }
        }
        Ok(out)
    }
}
