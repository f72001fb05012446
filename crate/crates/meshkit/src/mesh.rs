use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{MeshError, Result};

pub type Point = [f64; 3];

pub fn dist(a: &Point, b: &Point) -> f64 {
    dist2(a, b).sqrt()
}

pub fn dist2(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

pub fn centroid(points: &[Point]) -> Point {
    let n = points.len().max(1) as f64;
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    c.map(|v| v / n)
}

/// Triangle mesh, coordinates in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    faces: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Point>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v as usize >= n) {
                return Err(MeshError::InvalidMesh(format!("face {i} {f:?} indexes past {n} vertices")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::InvalidMesh(format!("face {i} {f:?} is degenerate")));
            }
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(MeshError::InvalidMesh("non-finite vertex".into()));
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn with_vertices(&self, vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::Parameter(format!(
                "{} vertices for a mesh of {}",
                vertices.len(),
                self.vertices.len()
            )));
        }
        Self::new(vertices, self.faces.clone())
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        edge_list(&self.faces)
    }

    pub fn mean_edge_length(&self) -> f64 {
        let e = self.edges();
        if e.is_empty() {
            return 0.0;
        }
        e.iter().map(|&(a, b)| dist(&self.vertices[a], &self.vertices[b])).sum::<f64>() / e.len() as f64
    }

    /// Area-weighted unit vertex normals; isolated vertices get a zero normal.
    pub fn vertex_normals(&self) -> Vec<Point> {
        let mut acc = vec![[0.0; 3]; self.vertices.len()];
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.vertices[i as usize]);
            let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
            let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
            let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
            for &i in f {
                for k in 0..3 {
                    acc[i as usize][k] += n[k];
                }
            }
        }
        acc.into_iter()
            .map(|n| {
                let l = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
                if l > 0.0 {
                    n.map(|v| v / l)
                } else {
                    [0.0; 3]
                }
            })
            .collect()
    }
}

/// Unique undirected edges as sorted `(min, max)` pairs.
pub fn edge_list(faces: &[[u32; 3]]) -> Vec<(usize, usize)> {
    let mut set = BTreeSet::new();
    for f in faces {
        for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
            let (a, b) = (a as usize, b as usize);
            set.insert((a.min(b), a.max(b)));
        }
    }
    set.into_iter().collect()
}

// ── template file ────────────────────────────────────────────────────
//
// One line of JSON (`TemplateHeader`) and `\n`, then `vertex_count * 3` f32 LE
// coordinates, then `face_count * 3` u32 LE indices.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateHeader {
    pub name: String,
    pub vertex_count: usize,
    pub face_count: usize,
    /// Coarse, mid and full vertex counts when the template carries a sampling hierarchy.
    #[serde(default)]
    pub scale_sizes: Option<[usize; 3]>,
}

pub fn write_template<W: Write>(mut w: W, name: &str, mesh: &Mesh, scale_sizes: Option<[usize; 3]>) -> Result<()> {
    let header = TemplateHeader {
        name: name.to_string(),
        vertex_count: mesh.vertex_count(),
        face_count: mesh.faces().len(),
        scale_sizes,
    };
    w.write_all(serde_json::to_string(&header)?.as_bytes())?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(12 * (mesh.vertex_count() + mesh.faces().len()));
    for v in mesh.vertices() {
        for c in v {
            buf.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    for f in mesh.faces() {
        for i in f {
            buf.extend_from_slice(&i.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_template<R: BufRead>(mut r: R) -> Result<(TemplateHeader, Mesh)> {
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.pop() != Some(b'\n') {
        return Err(MeshError::Format("missing header terminator".into()));
    }
    let header: TemplateHeader = serde_json::from_slice(&line)?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let need = 12 * (header.vertex_count + header.face_count);
    if body.len() != need {
        return Err(MeshError::Format(format!("expected {need} payload bytes, found {}", body.len())));
    }
    let words: Vec<[u8; 4]> = body.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
    let (vw, fw) = words.split_at(3 * header.vertex_count);
    let vertices = vw
        .chunks_exact(3)
        .map(|c| [0, 1, 2].map(|k| f32::from_le_bytes(c[k]) as f64))
        .collect();
    let faces = fw
        .chunks_exact(3)
        .map(|c| [0, 1, 2].map(|k| u32::from_le_bytes(c[k])))
        .collect();
    Ok((header, Mesh::new(vertices, faces)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_faces() {
        let v = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(Mesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(Mesh::new(v.clone(), vec![[0, 1, 1]]).is_err());
        assert!(Mesh::new(v, vec![[0, 1, 2]]).is_ok());
    }

    #[test]
    fn edges_of_one_and_two_triangles() {
        assert_eq!(edge_list(&[[0, 1, 2]]), vec![(0, 1), (0, 2), (1, 2)]);
        assert_eq!(edge_list(&[[0, 1, 2], [2, 1, 3]]).len(), 5);
    }

    #[test]
    fn template_round_trip() {
        let m = Mesh::new(
            vec![[0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [0.0, -2.0, 0.25], [0.0, 0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3], [0, 3, 1], [1, 3, 2]],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_template(&mut buf, "tet", &m, Some([1, 2, 4])).unwrap();
        let (h, back) = read_template(&buf[..]).unwrap();
        assert_eq!(h.vertex_count, 4);
        assert_eq!(h.face_count, 4);
        assert_eq!(h.scale_sizes, Some([1, 2, 4]));
        assert_eq!(back, m);
        assert!(read_template(&buf[..buf.len() - 1]).is_err());
    }
}
