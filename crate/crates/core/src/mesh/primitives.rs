//! Procedural meshes: icospheres for tests and a face-like height field that
//! stands in for a registered face template.

use std::collections::BTreeMap;

use super::{Face, Mesh, Point};

/// Unit icosphere; `subdivisions` 0..=4 give 12, 42, 162, 642, 2562 vertices.
pub fn icosphere(subdivisions: usize) -> Mesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Point> = vec![
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let mut faces: Vec<Face> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for v in &mut vertices {
        *v = unit(*v);
    }
    for _ in 0..subdivisions {
        let mut midpoints: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push(unit([(p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0, (p[2] + q[2]) / 2.0]));
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    Mesh::new(vertices, faces).expect("icosphere is valid")
}

fn unit(p: Point) -> Point {
    let len = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / len, p[1] / len, p[2] / len]
}

/// Regular grid over `[-0.8, 0.8] x [-1, 1]` whose heights follow a
/// stylized face: a domed base, brow ridge, eye sockets, nose and lips.
/// Vertex `row * columns + col`; `face_template(40, 32)` has 1280 vertices.
pub fn face_template(columns: usize, rows: usize) -> Mesh {
    assert!(columns >= 2 && rows >= 2, "face template needs a 2x2 grid at least");
    let mut vertices = Vec::with_capacity(columns * rows);
    for r in 0..rows {
        let y = -1.0 + 2.0 * r as f64 / (rows - 1) as f64;
        for c in 0..columns {
            let x = -0.8 + 1.6 * c as f64 / (columns - 1) as f64;
            vertices.push([x, y, face_height(x, y)]);
        }
    }
    let mut faces = Vec::with_capacity(2 * (columns - 1) * (rows - 1));
    for r in 0..rows - 1 {
        for c in 0..columns - 1 {
            let a = r * columns + c;
            let b = a + 1;
            let d = a + columns;
            let e = d + 1;
            // alternate diagonals so the triangulation is mirror-symmetric-ish
            if (r + c) % 2 == 0 {
                faces.push([a, b, e]);
                faces.push([a, e, d]);
            } else {
                faces.push([a, b, d]);
                faces.push([b, e, d]);
            }
        }
    }
    Mesh::new(vertices, faces).expect("grid is valid")
}

fn bump(x: f64, y: f64, cx: f64, cy: f64, sx: f64, sy: f64) -> f64 {
    (-((x - cx).powi(2) / (2.0 * sx * sx) + (y - cy).powi(2) / (2.0 * sy * sy))).exp()
}

fn face_height(x: f64, y: f64) -> f64 {
    let dome = 0.45 * (1.0 - (x / 1.1).powi(2) - (y / 1.4).powi(2)).max(0.0).sqrt();
    let brow = 0.06 * bump(x, y, 0.0, 0.38, 0.45, 0.06);
    let eyes = -0.07 * (bump(x, y, -0.3, 0.22, 0.11, 0.08) + bump(x, y, 0.3, 0.22, 0.11, 0.08));
    let nose = 0.22 * bump(x, y, 0.0, -0.05, 0.07, 0.22);
    let lips = 0.05 * bump(x, y, 0.0, -0.48, 0.2, 0.05);
    let chin = 0.04 * bump(x, y, 0.0, -0.8, 0.2, 0.1);
    dome + brow + eyes + nose + lips + chin
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        let expected = [(12, 20), (42, 80), (162, 320), (642, 1280)];
        for (s, &(v, f)) in expected.iter().enumerate() {
            let m = icosphere(s);
            assert_eq!((m.vertex_count(), m.face_count()), (v, f));
            for p in m.vertices() {
                assert!(((p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn face_template_size_and_orientation() {
        let m = face_template(40, 32);
        assert_eq!(m.vertex_count(), 1280);
        assert_eq!(m.face_count(), 2 * 39 * 31);
        // all faces wind counter-clockwise seen from +z
        for f in m.faces() {
            let [a, b, c] = f.map(|i| m.vertices()[i]);
            let z = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
            assert!(z > 0.0);
        }
    }
}
