//! Forward constructors and vector-Jacobian products for every graph operation.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use crate::error::{dim_err, Result};
use crate::graph::{Graph, Var};
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

/// Epsilon added to the variance in [`Graph::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Differentiable operation defined outside this crate.
pub trait CustomOp<S: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;

    /// Returns one gradient per input; entries whose `needs` flag is false may be `None`.
    fn vjp(&self, inputs: &[&[S]], output: &[S], out_grad: &[S], needs: &[bool]) -> Vec<Option<Vec<S>>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.pad - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.pad - self.kernel) / self.stride + 1
    }

    fn patch(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
}

pub(crate) enum Op<S: Scalar> {
    Leaf,
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias { x: Var, b: Var },
    Scale { x: Var, c: S },
    MulScalar { x: Var, s: Var },
    Gelu(Var),
    Exp(Var),
    Abs(Var),
    Softmax { x: Var, outer: usize, len: usize, inner: usize },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<S>, rstd: Vec<S> },
    Reshape(Var),
    Transpose(Var),
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows { x: Var, idx: Arc<[usize]> },
    SpMM { mat: Arc<SparseMatrix>, x: Var },
    RowNorms(Var),
    Sum(Var),
    Mean(Var),
    MeanCols(Var),
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeometry, cols: Vec<S> },
    Custom { inputs: Vec<Var>, op: Box<dyn CustomOp<S>> },
}

// ── small dense helpers ──────────────────────────────────────────────

/// Row-major `m x n` product of `op(a)` (`m x k`) and `op(b)` (`k x n`), given strides.
#[allow(clippy::too_many_arguments)]
fn gemm_new<S: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[S],
    rsa: usize,
    csa: usize,
    b: &[S],
    rsb: usize,
    csb: usize,
) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    if k == 0 {
        return c;
    }
    S::gemm(
        m,
        k,
        n,
        S::one(),
        a,
        rsa as isize,
        csa as isize,
        b,
        rsb as isize,
        csb as isize,
        S::zero(),
        &mut c,
        n as isize,
        1,
    );
    c
}

fn dims2(shape: &[usize], op: &'static str) -> Result<(usize, usize)> {
    match shape {
        [r, c] => Ok((*r, *c)),
        _ => dim_err(op, format!("expected a 2-d tensor, got {shape:?}")),
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

impl<S: Scalar> Graph<S> {
    fn any_grad(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        self.check(a, op)?;
        self.check(b, op)?;
        if self.shape(a) != self.shape(b) {
            return dim_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    // ── linear algebra ───────────────────────────────────────────────

    /// `a [m x k] * b [k x n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// `op(a) * op(b)` where `op` transposes when the matching flag is set.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        self.check(a, "matmul")?;
        self.check(b, "matmul")?;
        let (ra, ca) = dims2(self.shape(a), "matmul")?;
        let (rb, cb) = dims2(self.shape(b), "matmul")?;
        let (m, k, rsa, csa) = if ta { (ca, ra, 1, ca) } else { (ra, ca, ca, 1) };
        let (k2, n, rsb, csb) = if tb { (cb, rb, 1, cb) } else { (rb, cb, cb, 1) };
        if k != k2 {
            return dim_err(
                "matmul",
                format!(
                    "inner dimensions disagree: {:?}{} x {:?}{}",
                    self.shape(a),
                    if ta { "^T" } else { "" },
                    self.shape(b),
                    if tb { "^T" } else { "" }
                ),
            );
        }
        let data = gemm_new(m, k, n, self.value(a), rsa, csa, self.value(b), rsb, csb);
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(vec![m, n], data, Op::MatMul { a, b, ta, tb }, rg))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        self.check(x, "transpose")?;
        let (r, c) = dims2(self.shape(x), "transpose")?;
        let src = self.value(x);
        let mut out = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(vec![c, r], out, Op::Transpose(x), rg))
    }

    /// Constant sparse operator applied to the rows of `x`: `mat [r x n] * x [n x d]`.
    pub fn spmm(&mut self, mat: Arc<SparseMatrix>, x: Var) -> Result<Var> {
        self.check(x, "spmm")?;
        let (n, d) = dims2(self.shape(x), "spmm")?;
        if mat.cols() != n {
            return dim_err(
                "spmm",
                format!("operator is {}x{}, input is {n}x{d}", mat.rows(), mat.cols()),
            );
        }
        let src = self.value(x);
        let mut out = vec![S::zero(); mat.rows() * d];
        for r in 0..mat.rows() {
            let dst = &mut out[r * d..(r + 1) * d];
            for (c, w) in mat.row(r) {
                let w = S::lit(w);
                for (o, &v) in dst.iter_mut().zip(&src[c * d..(c + 1) * d]) {
                    *o += w * v;
                }
            }
        }
        let rg = self.any_grad(&[x]);
        let rows = mat.rows();
        Ok(self.push(vec![rows, d], out, Op::SpMM { mat, x }, rg))
    }

    // ── elementwise ──────────────────────────────────────────────────

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let data = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x + *y).collect();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), data, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "sub")?;
        let data = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x - *y).collect();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), data, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x * *y).collect();
        let rg = self.any_grad(&[a, b]);
        Ok(self.push(self.shape(a).to_vec(), data, Op::Mul(a, b), rg))
    }

    /// Adds a vector `b [n]` to every length-`n` row of `x`. The only broadcast supported.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        self.check(x, "add_bias")?;
        self.check(b, "add_bias")?;
        let n = self.shape(b).iter().product::<usize>();
        let last = self.shape(x).last().copied().unwrap_or(0);
        if self.shape(b).len() != 1 || n != last {
            return dim_err(
                "add_bias",
                format!("bias {:?} does not match rows of {:?}", self.shape(b), self.shape(x)),
            );
        }
        let bias = self.value(b);
        let data = self
            .value(x)
            .chunks(n)
            .flat_map(|row| row.iter().zip(bias).map(|(v, w)| *v + *w))
            .collect();
        let rg = self.any_grad(&[x, b]);
        Ok(self.push(self.shape(x).to_vec(), data, Op::AddBias { x, b }, rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        self.check(x, "scale")?;
        let c = S::lit(c);
        let data = self.value(x).iter().map(|v| *v * c).collect();
        let rg = self.any_grad(&[x]);
        Ok(self.push(self.shape(x).to_vec(), data, Op::Scale { x, c }, rg))
    }

    /// Multiplies every element of `x` by the single value held in `s` (shape `[1]`).
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        self.check(x, "mul_scalar")?;
        self.check(s, "mul_scalar")?;
        if self.shape(s) != [1] {
            return dim_err("mul_scalar", format!("scale must be [1], got {:?}", self.shape(s)));
        }
        let c = self.scalar(s);
        let data = self.value(x).iter().map(|v| *v * c).collect();
        let rg = self.any_grad(&[x, s]);
        Ok(self.push(self.shape(x).to_vec(), data, Op::MulScalar { x, s }, rg))
    }

    /// Exact GeLU, `x * Phi(x)`.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.check(x, "gelu")?;
        let data = self
            .value(x)
            .iter()
            .map(|v| {
                let t = v.as_f64();
                // Half-precision erf would lose bits here; Phi in f64 then cast.
                S::lit(t * std_normal_cdf(t))
            })
            .collect();
        let rg = self.any_grad(&[x]);
        Ok(self.push(self.shape(x).to_vec(), data, Op::Gelu(x), rg))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var> {
        self.check(x, "exp")?;
        let data = self.value(x).iter().map(|v| v.exp()).collect();
        let rg = self.any_grad(&[x]);
        Ok(self.push(self.shape(x).to_vec(), data, Op::Exp(x), rg))
    }

    /// Elementwise absolute value; the subgradient at zero is taken as zero.
    pub fn abs(&mut self, x: Var) -> Result<Var> {
        self.check(x, "abs")?;
        let data = self.value(x).iter().map(|v| v.abs()).collect();
        let rg = self.any_grad(&[x]);
        Ok(self.push(self.shape(x).to_vec(), data, Op::Abs(x), rg))
    }

    // ── normalization ────────────────────────────────────────────────

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.check(x, "softmax")?;
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return dim_err("softmax", format!("axis {axis} invalid for shape {shape:?}"));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let src = self.value(x);
        let mut out = vec![S::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * len * inner + k * inner + i;
                let mut max = S::neg_infinity();
                for k in 0..len {
                    max = max.max(src[at(k)]);
                }
                let mut total = S::zero();
                for k in 0..len {
                    let e = (src[at(k)] - max).exp();
                    out[at(k)] = e;
                    total += e;
                }
                for k in 0..len {
                    out[at(k)] = out[at(k)] / total;
                }
            }
        }
        let rg = self.any_grad(&[x]);
        Ok(self.push(shape, out, Op::Softmax { x, outer, len, inner }, rg))
    }

    /// Normalizes each length-`n` row of `x` to zero mean and unit variance, then
    /// applies `gain [n]` and `bias [n]`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        self.check(x, "layer_norm")?;
        self.check(gain, "layer_norm")?;
        self.check(bias, "layer_norm")?;
        let n = self.shape(x).last().copied().unwrap_or(0);
        if self.shape(gain) != [n] || self.shape(bias) != [n] || n == 0 {
            return dim_err(
                "layer_norm",
                format!(
                    "gain {:?} / bias {:?} must match last dim of {:?}",
                    self.shape(gain),
                    self.shape(bias),
                    self.shape(x)
                ),
            );
        }
        let src = self.value(x);
        let g = self.value(gain);
        let b = self.value(bias);
        let rows = src.len() / n;
        let nf = S::lit(n as f64);
        let eps = S::lit(LAYER_NORM_EPS);
        let mut xhat = vec![S::zero(); src.len()];
        let mut rstd = vec![S::zero(); rows];
        let mut out = vec![S::zero(); src.len()];
        for r in 0..rows {
            let row = &src[r * n..(r + 1) * n];
            let mean = row.iter().copied().sum::<S>() / nf;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<S>() / nf;
            let rs = S::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..n {
                let h = (row[j] - mean) * rs;
                xhat[r * n + j] = h;
                out[r * n + j] = h * g[j] + b[j];
            }
        }
        let rg = self.any_grad(&[x, gain, bias]);
        Ok(self.push(
            self.shape(x).to_vec(),
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    // ── structure ────────────────────────────────────────────────────

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        self.check(x, "reshape")?;
        if shape.iter().product::<usize>() != self.value(x).len() {
            return dim_err("reshape", format!("{:?} -> {shape:?}", self.shape(x)));
        }
        let data = self.value(x).to_vec();
        let rg = self.any_grad(&[x]);
        Ok(self.push(shape, data, Op::Reshape(x), rg))
    }

    /// Columns `start..start + len` of a 2-d tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.check(x, "slice_cols")?;
        let (r, c) = dims2(self.shape(x), "slice_cols")?;
        if start + len > c {
            return dim_err("slice_cols", format!("cols {start}..{} of {c}", start + len));
        }
        let src = self.value(x);
        let data = (0..r)
            .flat_map(|i| src[i * c + start..i * c + start + len].iter().copied())
            .collect();
        let rg = self.any_grad(&[x]);
        Ok(self.push(vec![r, len], data, Op::SliceCols { x, start }, rg))
    }

    /// Rows `start..start + len` of a 2-d tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.check(x, "slice_rows")?;
        let (r, c) = dims2(self.shape(x), "slice_rows")?;
        if start + len > r {
            return dim_err("slice_rows", format!("rows {start}..{} of {r}", start + len));
        }
        let data = self.value(x)[start * c..(start + len) * c].to_vec();
        let rg = self.any_grad(&[x]);
        Ok(self.push(vec![len, c], data, Op::SliceRows { x, start }, rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return dim_err("concat_cols", "no inputs");
        }
        let mut rows = None;
        let mut total = 0;
        for &p in parts {
            self.check(p, "concat_cols")?;
            let (r, c) = dims2(self.shape(p), "concat_cols")?;
            if *rows.get_or_insert(r) != r {
                return dim_err("concat_cols", "row counts differ");
            }
            total += c;
        }
        let r = rows.unwrap_or(0);
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                let c = self.shape(p)[1];
                data.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        let rg = self.any_grad(parts);
        Ok(self.push(vec![r, total], data, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return dim_err("concat_rows", "no inputs");
        }
        let mut cols = None;
        let mut total = 0;
        for &p in parts {
            self.check(p, "concat_rows")?;
            let (r, c) = dims2(self.shape(p), "concat_rows")?;
            if *cols.get_or_insert(c) != c {
                return dim_err("concat_rows", "column counts differ");
            }
            total += r;
        }
        let mut data = Vec::with_capacity(total * cols.unwrap_or(0));
        for &p in parts {
            data.extend_from_slice(self.value(p));
        }
        let rg = self.any_grad(parts);
        Ok(self.push(vec![total, cols.unwrap_or(0)], data, Op::ConcatRows(parts.to_vec()), rg))
    }

    /// Row selection `out[k] = x[idx[k]]`; indices may repeat.
    pub fn gather_rows(&mut self, x: Var, idx: Arc<[usize]>) -> Result<Var> {
        self.check(x, "gather_rows")?;
        let (r, c) = dims2(self.shape(x), "gather_rows")?;
        if let Some(bad) = idx.iter().find(|&&i| i >= r) {
            return dim_err("gather_rows", format!("row {bad} of {r}"));
        }
        let src = self.value(x);
        let data = idx
            .iter()
            .flat_map(|&i| src[i * c..(i + 1) * c].iter().copied())
            .collect();
        let rg = self.any_grad(&[x]);
        Ok(self.push(vec![idx.len(), c], data, Op::GatherRows { x, idx }, rg))
    }

    // ── reductions ───────────────────────────────────────────────────

    /// Euclidean norm of every row: `[m x n] -> [m]`.
    pub fn row_norms(&mut self, x: Var) -> Result<Var> {
        self.check(x, "row_norms")?;
        let (r, c) = dims2(self.shape(x), "row_norms")?;
        let data = self
            .value(x)
            .chunks(c.max(1))
            .take(r)
            .map(|row| row.iter().map(|v| *v * *v).sum::<S>().sqrt())
            .collect();
        let rg = self.any_grad(&[x]);
        Ok(self.push(vec![r], data, Op::RowNorms(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        self.check(x, "sum")?;
        let s = self.value(x).iter().copied().sum();
        let rg = self.any_grad(&[x]);
        Ok(self.push(vec![1], vec![s], Op::Sum(x), rg))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        self.check(x, "mean")?;
        let n = self.value(x).len();
        if n == 0 {
            return dim_err("mean", "empty tensor");
        }
        let s = self.value(x).iter().copied().sum::<S>() / S::lit(n as f64);
        let rg = self.any_grad(&[x]);
        Ok(self.push(vec![1], vec![s], Op::Mean(x), rg))
    }

    /// Mean over the columns of every row: `[m x n] -> [m]`.
    pub fn mean_cols(&mut self, x: Var) -> Result<Var> {
        self.check(x, "mean_cols")?;
        let (r, c) = dims2(self.shape(x), "mean_cols")?;
        if c == 0 {
            return dim_err("mean_cols", "no columns");
        }
        let cf = S::lit(c as f64);
        let data = self
            .value(x)
            .chunks(c)
            .take(r)
            .map(|row| row.iter().copied().sum::<S>() / cf)
            .collect();
        let rg = self.any_grad(&[x]);
        Ok(self.push(vec![r], data, Op::MeanCols(x), rg))
    }

    // ── convolution ──────────────────────────────────────────────────

    /// 2-d convolution of `x [c x h x w]` with `w [o x c*k*k]` and `b [o]`, zero padded.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, kernel: usize, stride: usize, pad: usize) -> Result<Var> {
        self.check(x, "conv2d")?;
        self.check(w, "conv2d")?;
        self.check(b, "conv2d")?;
        let [c, h, wd] = self.shape(x) else {
            return dim_err("conv2d", format!("input must be c x h x w, got {:?}", self.shape(x)));
        };
        let geom = ConvGeometry {
            in_channels: *c,
            height: *h,
            width: *wd,
            kernel,
            stride,
            pad,
        };
        if stride == 0 || kernel == 0 || h + 2 * pad < kernel || wd + 2 * pad < kernel {
            return dim_err("conv2d", format!("bad geometry {geom:?}"));
        }
        let (o, patch) = dims2(self.shape(w), "conv2d")?;
        if patch != geom.patch() || self.shape(b) != [o] {
            return dim_err(
                "conv2d",
                format!(
                    "weight {:?} / bias {:?} incompatible with {} input channels, kernel {kernel}",
                    self.shape(w),
                    self.shape(b),
                    c
                ),
            );
        }
        let cols = im2col(self.value(x), &geom);
        let npix = geom.out_height() * geom.out_width();
        let mut out = gemm_new(o, patch, npix, self.value(w), patch, 1, &cols, npix, 1);
        let bias = self.value(b);
        for (ch, row) in out.chunks_mut(npix).enumerate() {
            row.iter_mut().for_each(|v| *v += bias[ch]);
        }
        let rg = self.any_grad(&[x, w, b]);
        let shape = vec![o, geom.out_height(), geom.out_width()];
        // Columns are only needed for the weight gradient.
        let cols = if self.requires_grad(w) { cols } else { Vec::new() };
        Ok(self.push(shape, out, Op::Conv2d { x, w, b, geom, cols }, rg))
    }

    // ── extension ────────────────────────────────────────────────────

    /// Records an externally computed value with its own backward rule.
    pub fn custom(&mut self, inputs: &[Var], shape: Vec<usize>, data: Vec<S>, op: Box<dyn CustomOp<S>>) -> Result<Var> {
        for &v in inputs {
            self.check(v, "custom")?;
        }
        if shape.iter().product::<usize>() != data.len() {
            return dim_err("custom", format!("{} produced {} values for {shape:?}", op.name(), data.len()));
        }
        let rg = self.any_grad(inputs);
        Ok(self.push(
            shape,
            data,
            Op::Custom {
                inputs: inputs.to_vec(),
                op,
            },
            rg,
        ))
    }

    // ── backward rules ───────────────────────────────────────────────

    pub(crate) fn vjp(&self, i: usize, g: &[S]) -> Vec<(usize, Vec<S>)> {
        let node = &self.nodes[i];
        let need = |v: &Var| self.nodes[v.0].requires_grad;
        let val = |v: &Var| self.nodes[v.0].data.as_slice();
        let shp = |v: &Var| self.nodes[v.0].shape.as_slice();
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, ta, tb } => {
                let (ra, ca) = (shp(a)[0], shp(a)[1]);
                let (rb, cb) = (shp(b)[0], shp(b)[1]);
                let (m, k, rsa, csa) = if *ta { (ca, ra, 1, ca) } else { (ra, ca, ca, 1) };
                let (n, rsb, csb) = if *tb { (rb, 1, cb) } else { (cb, cb, 1) };
                if need(a) {
                    let da = if *ta {
                        // dA = op(B) * G^T  (k x m)
                        gemm_new(k, n, m, val(b), rsb, csb, g, 1, n)
                    } else {
                        // dA = G * op(B)^T  (m x k)
                        gemm_new(m, n, k, g, n, 1, val(b), csb, rsb)
                    };
                    out.push((a.0, da));
                }
                if need(b) {
                    let db = if *tb {
                        // dB = G^T * op(A)  (n x k)
                        gemm_new(n, m, k, g, 1, n, val(a), rsa, csa)
                    } else {
                        // dB = op(A)^T * G  (k x n)
                        gemm_new(k, m, n, val(a), csa, rsa, g, n, 1)
                    };
                    out.push((b.0, db));
                }
            }
            Op::Transpose(x) => {
                if need(x) {
                    let (r, c) = (shp(x)[0], shp(x)[1]);
                    let mut dx = vec![S::zero(); r * c];
                    for i in 0..r {
                        for j in 0..c {
                            dx[i * c + j] = g[j * r + i];
                        }
                    }
                    out.push((x.0, dx));
                }
            }
            Op::SpMM { mat, x } => {
                if need(x) {
                    let d = shp(x)[1];
                    let mut dx = vec![S::zero(); val(x).len()];
                    for r in 0..mat.rows() {
                        let gr = &g[r * d..(r + 1) * d];
                        for (c, w) in mat.row(r) {
                            let w = S::lit(w);
                            for (o, &v) in dx[c * d..(c + 1) * d].iter_mut().zip(gr) {
                                *o += w * v;
                            }
                        }
                    }
                    out.push((x.0, dx));
                }
            }
            Op::Add(a, b) => {
                if need(a) {
                    out.push((a.0, g.to_vec()));
                }
                if need(b) {
                    out.push((b.0, g.to_vec()));
                }
            }
            Op::Sub(a, b) => {
                if need(a) {
                    out.push((a.0, g.to_vec()));
                }
                if need(b) {
                    out.push((b.0, g.iter().map(|v| -*v).collect()));
                }
            }
            Op::Mul(a, b) => {
                if need(a) {
                    out.push((a.0, g.iter().zip(val(b)).map(|(u, v)| *u * *v).collect()));
                }
                if need(b) {
                    out.push((b.0, g.iter().zip(val(a)).map(|(u, v)| *u * *v).collect()));
                }
            }
            Op::AddBias { x, b } => {
                if need(x) {
                    out.push((x.0, g.to_vec()));
                }
                if need(b) {
                    let n = val(b).len();
                    let mut db = vec![S::zero(); n];
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += *v);
                    }
                    out.push((b.0, db));
                }
            }
            Op::Scale { x, c } => {
                if need(x) {
                    out.push((x.0, g.iter().map(|v| *v * *c).collect()));
                }
            }
            Op::MulScalar { x, s } => {
                let c = val(s)[0];
                if need(x) {
                    out.push((x.0, g.iter().map(|v| *v * c).collect()));
                }
                if need(s) {
                    let ds = g.iter().zip(val(x)).map(|(u, v)| *u * *v).sum();
                    out.push((s.0, vec![ds]));
                }
            }
            Op::Gelu(x) => {
                if need(x) {
                    let dx = g
                        .iter()
                        .zip(val(x))
                        .map(|(u, v)| {
                            let t = v.as_f64();
                            *u * S::lit(std_normal_cdf(t) + t * std_normal_pdf(t))
                        })
                        .collect();
                    out.push((x.0, dx));
                }
            }
            Op::Exp(x) => {
                if need(x) {
                    out.push((x.0, g.iter().zip(&node.data).map(|(u, y)| *u * *y).collect()));
                }
            }
            Op::Abs(x) => {
                if need(x) {
                    let dx = g
                        .iter()
                        .zip(val(x))
                        .map(|(u, v)| {
                            if *v > S::zero() {
                                *u
                            } else if *v < S::zero() {
                                -*u
                            } else {
                                S::zero()
                            }
                        })
                        .collect();
                    out.push((x.0, dx));
                }
            }
            Op::Softmax { x, outer, len, inner } => {
                if need(x) {
                    let y = &node.data;
                    let mut dx = vec![S::zero(); y.len()];
                    for o in 0..*outer {
                        for i in 0..*inner {
                            let at = |k: usize| o * len * inner + k * inner + i;
                            let dot: S = (0..*len).map(|k| g[at(k)] * y[at(k)]).sum();
                            for k in 0..*len {
                                dx[at(k)] = y[at(k)] * (g[at(k)] - dot);
                            }
                        }
                    }
                    out.push((x.0, dx));
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let n = val(gain).len();
                let gn = val(gain);
                if need(x) {
                    let nf = S::lit(n as f64);
                    let mut dx = vec![S::zero(); xhat.len()];
                    for (r, rs) in rstd.iter().enumerate() {
                        let span = r * n..(r + 1) * n;
                        let gr = &g[span.clone()];
                        let hr = &xhat[span.clone()];
                        let mut mean_d = S::zero();
                        let mut mean_dh = S::zero();
                        for j in 0..n {
                            let dh = gr[j] * gn[j];
                            mean_d += dh;
                            mean_dh += dh * hr[j];
                        }
                        mean_d = mean_d / nf;
                        mean_dh = mean_dh / nf;
                        for j in 0..n {
                            let dh = gr[j] * gn[j];
                            dx[r * n + j] = *rs * (dh - mean_d - hr[j] * mean_dh);
                        }
                    }
                    out.push((x.0, dx));
                }
                if need(gain) {
                    let mut dg = vec![S::zero(); n];
                    for (row_g, row_h) in g.chunks(n).zip(xhat.chunks(n)) {
                        for j in 0..n {
                            dg[j] += row_g[j] * row_h[j];
                        }
                    }
                    out.push((gain.0, dg));
                }
                if need(bias) {
                    let mut db = vec![S::zero(); n];
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += *v);
                    }
                    out.push((bias.0, db));
                }
            }
            Op::Reshape(x) => {
                if need(x) {
                    out.push((x.0, g.to_vec()));
                }
            }
            Op::SliceCols { x, start } => {
                if need(x) {
                    let (r, c) = (shp(x)[0], shp(x)[1]);
                    let len = node.shape[1];
                    let mut dx = vec![S::zero(); r * c];
                    for i in 0..r {
                        dx[i * c + start..i * c + start + len].copy_from_slice(&g[i * len..(i + 1) * len]);
                    }
                    out.push((x.0, dx));
                }
            }
            Op::SliceRows { x, start } => {
                if need(x) {
                    let c = shp(x)[1];
                    let mut dx = vec![S::zero(); val(x).len()];
                    dx[start * c..start * c + g.len()].copy_from_slice(g);
                    out.push((x.0, dx));
                }
            }
            Op::ConcatCols(parts) => {
                let r = node.shape[0];
                let total = node.shape[1];
                let mut off = 0;
                for p in parts {
                    let c = shp(p)[1];
                    if need(p) {
                        let mut dp = Vec::with_capacity(r * c);
                        for i in 0..r {
                            dp.extend_from_slice(&g[i * total + off..i * total + off + c]);
                        }
                        out.push((p.0, dp));
                    }
                    off += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = val(p).len();
                    if need(p) {
                        out.push((p.0, g[off..off + len].to_vec()));
                    }
                    off += len;
                }
            }
            Op::GatherRows { x, idx } => {
                if need(x) {
                    let c = shp(x)[1];
                    let mut dx = vec![S::zero(); val(x).len()];
                    for (k, &src) in idx.iter().enumerate() {
                        for j in 0..c {
                            dx[src * c + j] += g[k * c + j];
                        }
                    }
                    out.push((x.0, dx));
                }
            }
            Op::RowNorms(x) => {
                if need(x) {
                    let c = shp(x)[1];
                    let mut dx = vec![S::zero(); val(x).len()];
                    for (r, norm) in node.data.iter().enumerate() {
                        if *norm > S::zero() {
                            let k = g[r] / *norm;
                            for j in 0..c {
                                dx[r * c + j] = val(x)[r * c + j] * k;
                            }
                        }
                    }
                    out.push((x.0, dx));
                }
            }
            Op::Sum(x) => {
                if need(x) {
                    out.push((x.0, vec![g[0]; val(x).len()]));
                }
            }
            Op::Mean(x) => {
                if need(x) {
                    let n = val(x).len();
                    out.push((x.0, vec![g[0] / S::lit(n as f64); n]));
                }
            }
            Op::MeanCols(x) => {
                if need(x) {
                    let c = shp(x)[1];
                    let cf = S::lit(c as f64);
                    out.push((x.0, g.iter().flat_map(|v| std::iter::repeat_n(*v / cf, c)).collect()));
                }
            }
            Op::Conv2d { x, w, b, geom, cols } => {
                let o = shp(w)[0];
                let patch = geom.patch();
                let npix = geom.out_height() * geom.out_width();
                if need(w) {
                    // dW = G * cols^T
                    out.push((w.0, gemm_new(o, npix, patch, g, npix, 1, cols, 1, npix)));
                }
                if need(b) {
                    out.push((b.0, g.chunks(npix).map(|row| row.iter().copied().sum()).collect()));
                }
                if need(x) {
                    // dcols = W^T * G
                    let dcols = gemm_new(patch, o, npix, val(w), 1, patch, g, npix, 1);
                    out.push((x.0, col2im(&dcols, geom)));
                }
            }
            Op::Custom { inputs, op } => {
                let ins: Vec<&[S]> = inputs.iter().map(val).collect();
                let needs: Vec<bool> = inputs.iter().map(need).collect();
                let grads = op.vjp(&ins, &node.data, g, &needs);
                for ((v, gi), nd) in inputs.iter().zip(grads).zip(needs) {
                    if let (Some(gi), true) = (gi, nd) {
                        debug_assert_eq!(gi.len(), val(v).len(), "{} gradient size", op.name());
                        out.push((v.0, gi));
                    }
                }
            }
        }
        out
    }
}

fn im2col<S: Scalar>(x: &[S], geom: &ConvGeometry) -> Vec<S> {
    let (oh, ow) = (geom.out_height(), geom.out_width());
    let k = geom.kernel;
    let mut cols = vec![S::zero(); geom.patch() * oh * ow];
    for c in 0..geom.in_channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * geom.stride + ky) as isize - geom.pad as isize;
                    if iy < 0 || iy >= geom.height as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * geom.stride + kx) as isize - geom.pad as isize;
                        if ix < 0 || ix >= geom.width as isize {
                            continue;
                        }
                        dst[oy * ow + ox] = x[(c * geom.height + iy as usize) * geom.width + ix as usize];
                    }
                }
            }
        }
    }
    cols
}

fn col2im<S: Scalar>(cols: &[S], geom: &ConvGeometry) -> Vec<S> {
    let (oh, ow) = (geom.out_height(), geom.out_width());
    let k = geom.kernel;
    let mut x = vec![S::zero(); geom.in_channels * geom.height * geom.width];
    for c in 0..geom.in_channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * geom.stride + ky) as isize - geom.pad as isize;
                    if iy < 0 || iy >= geom.height as isize {
                        continue;
                    }
                    for ox in 0..ow {
                        let ix = (ox * geom.stride + kx) as isize - geom.pad as isize;
                        if ix < 0 || ix >= geom.width as isize {
                            continue;
                        }
                        x[(c * geom.height + iy as usize) * geom.width + ix as usize] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
    x
}
