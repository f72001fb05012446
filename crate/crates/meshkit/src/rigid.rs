use nalgebra::{Matrix3, Rotation3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};
use crate::mesh::{centroid, Point};

/// Rotation and translation acting as `p = R·t + T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidPose {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Default for RigidPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidPose {
    pub fn identity() -> Self {
        Self { rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], translation: [0.0; 3] }
    }

    pub fn from_matrix(r: &Matrix3<f64>, t: &Vector3<f64>) -> Self {
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = r[(i, j)];
            }
        }
        Self { rotation, translation: [t.x, t.y, t.z] }
    }

    /// Rodrigues map from an axis-angle vector (angle = norm).
    pub fn from_axis_angle(aa: [f64; 3], translation: [f64; 3]) -> Self {
        let r = Rotation3::from_scaled_axis(Vector3::from(aa));
        Self::from_matrix(r.matrix(), &Vector3::from(translation))
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    pub fn translation_vector(&self) -> Vector3<f64> {
        Vector3::from(self.translation)
    }

    /// Axis-angle vector of the rotation, angle in `[0, π]`.
    pub fn axis_angle(&self) -> [f64; 3] {
        let v = Rotation3::from_matrix_unchecked(self.matrix()).scaled_axis();
        [v.x, v.y, v.z]
    }

    pub fn apply(&self, p: &Point) -> Point {
        let q = self.matrix() * Vector3::from(*p) + self.translation_vector();
        [q.x, q.y, q.z]
    }

    pub fn apply_all(&self, pts: &[Point]) -> Vec<Point> {
        pts.iter().map(|p| self.apply(p)).collect()
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidPose) -> RigidPose {
        let r = self.matrix() * other.matrix();
        let t = self.matrix() * other.translation_vector() + self.translation_vector();
        Self::from_matrix(&r, &t)
    }

    pub fn inverse(&self) -> RigidPose {
        let rt = self.matrix().transpose();
        Self::from_matrix(&rt, &(-(rt * self.translation_vector())))
    }

    /// Rotation angle between the two poses, in radians.
    pub fn rotation_error(&self, other: &RigidPose) -> f64 {
        geodesic_distance(&self.matrix(), &other.matrix())
    }

    pub fn translation_error(&self, other: &RigidPose) -> f64 {
        (self.translation_vector() - other.translation_vector()).norm()
    }

    pub fn determinant(&self) -> f64 {
        self.matrix().determinant()
    }
}

/// Angle of `aᵀb`, computed from the chordal distance to stay accurate near zero.
pub fn geodesic_distance(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let chord = (a - b).norm() / (2.0 * std::f64::consts::SQRT_2);
    2.0 * chord.clamp(0.0, 1.0).asin()
}

/// Least-squares rigid transform taking `template` onto `predicted`.
pub fn rigid_fit(template: &[Point], predicted: &[Point]) -> Result<RigidPose> {
    let n = template.len();
    if n != predicted.len() {
        return Err(MeshError::Parameter(format!("{n} template points vs {} predicted", predicted.len())));
    }
    if n < 3 {
        return Err(MeshError::Degenerate(format!("rigid fit needs at least 3 points, got {n}")));
    }
    if template.iter().chain(predicted).flatten().any(|v| !v.is_finite()) {
        return Err(MeshError::Parameter("non-finite point".into()));
    }
    let ct = Vector3::from(centroid(template));
    let cp = Vector3::from(centroid(predicted));

    let mut h = Matrix3::zeros();
    let mut cov = Matrix3::zeros();
    for (t, p) in template.iter().zip(predicted) {
        let a = Vector3::from(*t) - ct;
        let b = Vector3::from(*p) - cp;
        h += a * b.transpose();
        cov += a * a.transpose();
    }
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] <= 0.0 || ev[1] <= ev[0] * 1e-12 {
        return Err(MeshError::Degenerate("template points are collinear".into()));
    }

    let svd = h.svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let t = cp - r * ct;
    Ok(RigidPose::from_matrix(&r, &t))
}
