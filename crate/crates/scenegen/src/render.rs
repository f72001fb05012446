use hoitg_meshkit::Point;

use crate::camera::{to_pixel, Camera};
use crate::vec3::{dot, normalize};

pub const CHANNELS: usize = 5;
pub const HUMAN_DEPTH: usize = 0;
pub const OBJECT_DEPTH: usize = 1;
pub const SHADING: usize = 2;
pub const HUMAN_MASK: usize = 3;
pub const OBJECT_MASK: usize = 4;

const LIGHT: Point = [0.3, 0.5, 1.0];

/// Points with per-point normals, one entity of the scene.
#[derive(Debug, Clone, Copy)]
pub struct Splats<'a> {
    pub points: &'a [Point],
    pub normals: &'a [Point],
}

impl<'a> Splats<'a> {
    pub const EMPTY: Splats<'static> = Splats { points: &[], normals: &[] };
}

/// Camera looks down −Z; larger Z is nearer. Stored as `1 − clamp((1 − Z)/2, 0, 0.95)`.
fn nearness(z: f64) -> f32 {
    (1.0 - ((1.0 - z) * 0.5).clamp(0.0, 0.95)) as f32
}

fn shade(n: &Point) -> f32 {
    (0.15 + 0.85 * dot(normalize(*n), normalize(LIGHT)).max(0.0)) as f32
}

/// Rasterizes `[human depth, object depth, shading, human mask, object mask]`, `5 x H x W`
/// row-major. Each point covers the 3×3 block around its nearest pixel.
pub fn render_channels(human: Splats<'_>, object: Splats<'_>, cam: &Camera, h: usize, w: usize) -> Vec<f32> {
    let plane = h * w;
    let mut img = vec![0.0f32; CHANNELS * plane];
    let mut nearest = vec![f64::NEG_INFINITY; plane];
    for (entity, splats) in [(0usize, human), (1, object)] {
        let (depth_ch, mask_ch) = if entity == 0 { (HUMAN_DEPTH, HUMAN_MASK) } else { (OBJECT_DEPTH, OBJECT_MASK) };
        let mut own = vec![f64::NEG_INFINITY; plane];
        for (p, n) in splats.points.iter().zip(splats.normals) {
            let [c, r] = to_pixel(cam.project_point(p), h, w);
            let (c, r) = (c.round() as i64, r.round() as i64);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    let (rr, cc) = (r + dr, c + dc);
                    if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                        continue;
                    }
                    let px = rr as usize * w + cc as usize;
                    img[mask_ch * plane + px] = 1.0;
                    if p[2] > own[px] {
                        own[px] = p[2];
                        img[depth_ch * plane + px] = nearness(p[2]);
                    }
                    if p[2] > nearest[px] {
                        nearest[px] = p[2];
                        img[SHADING * plane + px] = shade(n);
                    }
                }
            }
        }
    }
    img
}
