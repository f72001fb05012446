//! Graph operations that live outside the substrate: bilinear feature sampling
//! and the axis-angle to rotation map.

use hoitg_diffcore::{CustomOp, Graph, Scalar, Var};

use crate::error::{ModelError, Result};

// ── grid sampling ────────────────────────────────────────────────────

/// Corner indices and weights of one bilinear lookup.
#[derive(Debug, Clone, Copy)]
struct Tap {
    r0: usize,
    r1: usize,
    c0: usize,
    c1: usize,
    fy: f64,
    fx: f64,
    /// d(row)/dy and d(col)/dx; zero where the coordinate was clamped.
    drow: f64,
    dcol: f64,
}

fn axis_tap(v: f64, size: usize, sign: f64) -> (usize, usize, f64, f64) {
    if size == 1 {
        return (0, 0, 0.0, 0.0);
    }
    let span = (size - 1) as f64;
    let p = (sign * v + 1.0) * 0.5 * span;
    let (p, d) = if p <= 0.0 {
        (0.0, 0.0)
    } else if p >= span {
        (span, 0.0)
    } else {
        (p, sign * 0.5 * span)
    };
    let i0 = (p.floor() as usize).min(size - 2);
    (i0, i0 + 1, p - i0 as f64, d)
}

fn tap(x: f64, y: f64, h: usize, w: usize) -> Tap {
    let (c0, c1, fx, dcol) = axis_tap(x, w, 1.0);
    // Image rows grow downward while y grows upward.
    let (r0, r1, fy, drow) = axis_tap(y, h, -1.0);
    Tap {
        r0,
        r1,
        c0,
        c1,
        fy,
        fx,
        drow,
        dcol,
    }
}

struct GridSample {
    channels: usize,
    h: usize,
    w: usize,
    taps: Vec<Tap>,
}

impl<S: Scalar> CustomOp<S> for GridSample {
    fn name(&self) -> &'static str {
        "grid_sample"
    }

    fn vjp(&self, inputs: &[&[S]], _output: &[S], out_grad: &[S], needs: &[bool]) -> Vec<Option<Vec<S>>> {
        let feat = inputs[0];
        let (c, hw, w) = (self.channels, self.h * self.w, self.w);
        let mut df = needs[0].then(|| vec![S::zero(); feat.len()]);
        let mut dp = needs[1].then(|| vec![S::zero(); 2 * self.taps.len()]);
        for (i, t) in self.taps.iter().enumerate() {
            let g = &out_grad[i * c..(i + 1) * c];
            let (i00, i01, i10, i11) = (t.r0 * w + t.c0, t.r0 * w + t.c1, t.r1 * w + t.c0, t.r1 * w + t.c1);
            if let Some(df) = df.as_mut() {
                let w00 = S::lit((1.0 - t.fy) * (1.0 - t.fx));
                let w01 = S::lit((1.0 - t.fy) * t.fx);
                let w10 = S::lit(t.fy * (1.0 - t.fx));
                let w11 = S::lit(t.fy * t.fx);
                for (ch, &gc) in g.iter().enumerate() {
                    let base = ch * hw;
                    df[base + i00] += w00 * gc;
                    df[base + i01] += w01 * gc;
                    df[base + i10] += w10 * gc;
                    df[base + i11] += w11 * gc;
                }
            }
            if let Some(dp) = dp.as_mut() {
                let (mut gx, mut gy) = (0.0, 0.0);
                for (ch, &gc) in g.iter().enumerate() {
                    let f = &feat[ch * hw..(ch + 1) * hw];
                    let (v00, v01, v10, v11) = (f[i00].as_f64(), f[i01].as_f64(), f[i10].as_f64(), f[i11].as_f64());
                    let gc = gc.as_f64();
                    gx += gc * ((1.0 - t.fy) * (v01 - v00) + t.fy * (v11 - v10));
                    gy += gc * ((1.0 - t.fx) * (v10 - v00) + t.fx * (v11 - v01));
                }
                dp[2 * i] = S::lit(gx * t.dcol);
                dp[2 * i + 1] = S::lit(gy * t.drow);
            }
        }
        vec![df, dp]
    }
}

/// Bilinearly samples `feat` (`[C, h, w]`) at normalized points `pts` (`[n, 2]`, x right,
/// y up, corners at ±1). Points outside the square are clamped to the border.
pub fn grid_sample<S: Scalar>(g: &mut Graph<S>, feat: Var, pts: Var) -> Result<Var> {
    let fs = g.shape(feat).to_vec();
    let ps = g.shape(pts).to_vec();
    if fs.len() != 3 || ps.len() != 2 || ps[1] != 2 {
        return Err(ModelError::Parameter(format!(
            "grid_sample expects [C,h,w] features and [n,2] points, got {fs:?} and {ps:?}"
        )));
    }
    let (c, h, w) = (fs[0], fs[1], fs[2]);
    let n = ps[0];
    let hw = h * w;
    let taps: Vec<Tap> = g
        .value(pts)
        .chunks_exact(2)
        .map(|p| tap(p[0].as_f64(), p[1].as_f64(), h, w))
        .collect();
    let fv = g.value(feat);
    let mut out = vec![S::zero(); n * c];
    for (i, t) in taps.iter().enumerate() {
        let w00 = S::lit((1.0 - t.fy) * (1.0 - t.fx));
        let w01 = S::lit((1.0 - t.fy) * t.fx);
        let w10 = S::lit(t.fy * (1.0 - t.fx));
        let w11 = S::lit(t.fy * t.fx);
        let (i00, i01, i10, i11) = (t.r0 * w + t.c0, t.r0 * w + t.c1, t.r1 * w + t.c0, t.r1 * w + t.c1);
        for ch in 0..c {
            let f = &fv[ch * hw..(ch + 1) * hw];
            out[i * c + ch] = w00 * f[i00] + w01 * f[i01] + w10 * f[i10] + w11 * f[i11];
        }
    }
    let op = GridSample { channels: c, h, w, taps };
    Ok(g.custom(&[feat, pts], vec![n, c], out, Box::new(op))?)
}

// ── axis-angle rotation ──────────────────────────────────────────────

/// Coefficients of `R = I + a K + b K²` and their derivatives divided by θ.
fn rodrigues_coeffs(theta: f64) -> (f64, f64, f64, f64) {
    let t = theta * theta;
    if theta < 1e-2 {
        let a = 1.0 - t / 6.0 + t * t / 120.0;
        let b = 0.5 - t / 24.0 + t * t / 720.0;
        let da = -1.0 / 3.0 + t / 30.0 - t * t / 840.0;
        let db = -1.0 / 12.0 + t / 180.0 - t * t / 6720.0;
        (a, b, da, db)
    } else {
        let (s, c) = theta.sin_cos();
        let a = s / theta;
        let b = (1.0 - c) / t;
        let da = (theta * c - s) / (t * theta);
        let db = (theta * s - 2.0 * (1.0 - c)) / (t * t);
        (a, b, da, db)
    }
}

fn skew(v: [f64; 3]) -> [[f64; 3]; 3] {
    [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

/// Rotation matrix of an axis-angle vector, row-major.
pub fn axis_angle_matrix(v: [f64; 3]) -> [[f64; 3]; 3] {
    let theta = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let (a, b, _, _) = rodrigues_coeffs(theta);
    let k = skew(v);
    let k2 = mat_mul(&k, &k);
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = f64::from(u8::from(i == j)) + a * k[i][j] + b * k2[i][j];
        }
    }
    r
}

struct Rodrigues;

impl<S: Scalar> CustomOp<S> for Rodrigues {
    fn name(&self) -> &'static str {
        "rodrigues"
    }

    fn vjp(&self, inputs: &[&[S]], _output: &[S], out_grad: &[S], needs: &[bool]) -> Vec<Option<Vec<S>>> {
        if !needs[0] {
            return vec![None];
        }
        let v = [inputs[0][0].as_f64(), inputs[0][1].as_f64(), inputs[0][2].as_f64()];
        let theta = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let (a, b, da, db) = rodrigues_coeffs(theta);
        let k = skew(v);
        let k2 = mat_mul(&k, &k);
        let mut grad = vec![S::zero(); 3];
        for (i, gi) in grad.iter_mut().enumerate() {
            let mut e = [0.0; 3];
            e[i] = 1.0;
            let ei = skew(e);
            let ek = mat_mul(&ei, &k);
            let ke = mat_mul(&k, &ei);
            let mut acc = 0.0;
            for r in 0..3 {
                for c in 0..3 {
                    let d = a * ei[r][c] + b * (ek[r][c] + ke[r][c]) + v[i] * (da * k[r][c] + db * k2[r][c]);
                    acc += d * out_grad[3 * r + c].as_f64();
                }
            }
            *gi = S::lit(acc);
        }
        vec![Some(grad)]
    }
}

/// Differentiable axis-angle (`[3]`) to rotation matrix (`[3, 3]`).
pub fn rodrigues<S: Scalar>(g: &mut Graph<S>, aa: Var) -> Result<Var> {
    if g.shape(aa).iter().product::<usize>() != 3 {
        return Err(ModelError::Parameter(format!(
            "rodrigues expects 3 values, got shape {:?}",
            g.shape(aa)
        )));
    }
    let v = g.value(aa);
    let v = [v[0].as_f64(), v[1].as_f64(), v[2].as_f64()];
    let r = axis_angle_matrix(v);
    let data = r.iter().flatten().map(|&x| S::lit(x)).collect();
    Ok(g.custom(&[aa], vec![3, 3], data, Box::new(Rodrigues))?)
}
