use hoitg_meshkit::Point;
use serde::{Deserialize, Serialize};

/// Weak-perspective camera: `(x, y) = s·(X, Y) + t` in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub scale: f64,
    pub translation: [f64; 2],
}

impl Default for Camera {
    fn default() -> Self {
        Self { scale: 1.0, translation: [0.0; 2] }
    }
}

impl Camera {
    pub fn to_array(self) -> [f64; 3] {
        [self.scale, self.translation[0], self.translation[1]]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self { scale: a[0], translation: [a[1], a[2]] }
    }

    pub fn project_point(&self, p: &Point) -> [f64; 2] {
        [self.scale * p[0] + self.translation[0], self.scale * p[1] + self.translation[1]]
    }
}

pub fn project(points: &[Point], cam: &Camera) -> Vec<[f64; 2]> {
    points.iter().map(|p| cam.project_point(p)).collect()
}

/// Continuous `(col, row)` of a normalized image point; `(-1, 1)` is the top-left pixel
/// center and `(1, -1)` the bottom-right one.
pub fn to_pixel(xy: [f64; 2], h: usize, w: usize) -> [f64; 2] {
    [(xy[0] + 1.0) * 0.5 * (w as f64 - 1.0), (1.0 - xy[1]) * 0.5 * (h as f64 - 1.0)]
}

pub fn in_frame(xy: [f64; 2]) -> bool {
    xy[0].abs() <= 1.0 && xy[1].abs() <= 1.0
}
