//! Triangle meshes, their file formats, graph operators and distance fields.

mod distance;
mod io;
mod laplacian;
pub mod primitives;

pub use distance::{vertex_distance_field, DistanceField};
pub use io::{load_obj, read_obj, save_obj, write_obj, write_ply_colored};
pub use laplacian::{adjacency, laplacian_bundle, LambdaEstimate, LaplacianBundle};

use crate::error::{ensure, Result};
use crate::linalg::DenseMatrix;

pub type Point = [f64; 3];
pub type Face = [usize; 3];

/// Vertex positions plus triangles indexing into them.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    vertices: Vec<Point>,
    faces: Vec<Face>,
}

impl Mesh {
    pub fn new(vertices: Vec<Point>, faces: Vec<Face>) -> Result<Self> {
        let n = vertices.len();
        ensure!(n >= 3, "mesh needs at least 3 vertices, got {n}");
        ensure!(
            vertices.iter().flatten().all(|v| v.is_finite()),
            "mesh has non-finite vertex coordinates"
        );
        for (i, f) in faces.iter().enumerate() {
            ensure!(f.iter().all(|&v| v < n), "face {i} {f:?} indexes past {n} vertices");
            ensure!(
                f[0] != f[1] && f[1] != f[2] && f[0] != f[2],
                "face {i} {f:?} is degenerate"
            );
        }
        Ok(Self { vertices, faces })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Positions as an `N x 3` matrix.
    pub fn vertex_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_vec(
            self.vertices.len(),
            3,
            self.vertices.iter().flatten().copied().collect(),
        )
    }

    /// Same connectivity, new positions from an `N x 3` matrix.
    pub fn with_positions(&self, positions: &DenseMatrix) -> Result<Self> {
        ensure!(
            positions.shape() == (self.vertices.len(), 3),
            "positions {:?} do not fit a mesh with {} vertices",
            positions.shape(),
            self.vertices.len()
        );
        ensure!(positions.is_finite(), "positions contain non-finite values");
        let vertices = (0..positions.rows())
            .map(|r| {
                let row = positions.row(r);
                [row[0], row[1], row[2]]
            })
            .collect();
        Ok(Self {
            vertices,
            faces: self.faces.clone(),
        })
    }

    /// True when both meshes share a vertex count and face list.
    pub fn same_topology(&self, other: &Mesh) -> bool {
        self.vertices.len() == other.vertices.len() && self.faces == other.faces
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        (lo, hi)
    }

    pub fn bounding_box_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        norm(sub(hi, lo))
    }

    /// Area-weighted unit vertex normals; isolated vertices get `[0, 0, 0]`.
    pub fn vertex_normals(&self) -> Vec<Point> {
        let mut normals = vec![[0.0; 3]; self.vertices.len()];
        for f in &self.faces {
            let [a, b, c] = f.map(|i| self.vertices[i]);
            let n = cross(sub(b, a), sub(c, a));
            for &i in f {
                for k in 0..3 {
                    normals[i][k] += n[k];
                }
            }
        }
        for n in &mut normals {
            let len = norm(*n);
            if len > 0.0 {
                *n = n.map(|x| x / len);
            }
        }
        normals
    }
}

#[inline]
pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Mesh {
        Mesh::new(vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn rejects_invalid_meshes() {
        let v = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(Mesh::new(v[..2].to_vec(), vec![]).is_err());
        assert!(Mesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        assert!(Mesh::new(v, vec![[0, 1, 1]]).is_err());
    }

    #[test]
    fn normals_of_flat_triangle_point_up() {
        for n in triangle().vertex_normals() {
            assert_eq!(n, [0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn positions_round_trip_through_matrix() {
        let m = triangle();
        let moved = m.with_positions(&m.vertex_matrix().scaled(2.0)).unwrap();
        assert_eq!(moved.vertices()[1], [2.0, 0.0, 0.0]);
        assert!(moved.same_topology(&m));
        assert!(m.with_positions(&DenseMatrix::zeros(2, 3)).is_err());
    }
}
